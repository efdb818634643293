"""
Minimum Volume Ellipsoid
========================

Resampling search for the sample minimum volume ellipsoid, enlargement to a
target coverage and the trimming partition fed to the likelihood estimators.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .config import MveConfig
from .elliptical import Ellipsoid, RadialFamily, mve_radius
from .exceptions import DegenerateDataError, InsufficientDataError

logger = logging.getLogger(__name__)

SINGULAR_COND = 1e12
MAX_ATTEMPT_FACTOR = 10


@dataclass
class TrimmedSample:
    """Partition of a sample into the points inside a region and the censored rest."""
    inside: np.ndarray
    n_outside: int
    n_total: int
    region: Ellipsoid
    inside_index: np.ndarray
    outside_index: np.ndarray

    def __post_init__(self):
        if len(self.inside) + self.n_outside != self.n_total:
            raise ValueError("Inside and outside counts do not add up to the sample size")

    @property
    def m(self) -> int:
        return len(self.inside)

    @property
    def p(self) -> int:
        return self.region.p

    @property
    def empirical_inside_fraction(self) -> float:
        """P_n(A)."""
        return self.m / self.n_total if self.n_total else 0.0


def _as_data(data) -> np.ndarray:
    array = np.asarray(data, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise ValueError(f"Data must be a 2-D array of observations, got shape {array.shape}")
    return array


def _candidate(data: np.ndarray, center: np.ndarray, cov: np.ndarray,
               h: int) -> Optional[Tuple[float, float, np.ndarray]]:
    """Inflate (center, cov) to cover h points; returns (log volume, radius, distances)."""
    if np.linalg.cond(cov) > SINGULAR_COND:
        return None
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return None
    z = np.linalg.solve(chol, (data - center).T)
    d2 = np.sum(z * z, axis=0)
    r2 = float(np.partition(d2, h - 1)[h - 1])
    if r2 <= 0:
        return None
    p = data.shape[1]
    log_volume = float(np.sum(np.log(np.diag(chol))) + 0.5 * p * math.log(r2))
    return log_volume, math.sqrt(r2), d2


def sample_mve(data, cfg: Optional[MveConfig] = None) -> Ellipsoid:
    """
    Approximate sample MVE by random (p+1)-subsets.

    Args:
        data: n x p array of observations
        cfg: Resampling settings (subset count, coverage count h, seed, refinement)

    Returns:
        Ellipsoid covering h points with the smallest volume found
    """
    cfg = cfg or MveConfig()
    data = _as_data(data)
    n, p = data.shape
    if n < p + 1:
        raise InsufficientDataError(f"Need at least {p + 1} observations for an MVE in dimension {p}, got {n}")
    cfg.validate(n, p)
    h = cfg.resolve_coverage(n, p)

    rng = np.random.default_rng(cfg.seed)
    best = None
    accepted = 0
    attempts = 0
    max_attempts = MAX_ATTEMPT_FACTOR * cfg.n_subsets

    while accepted < cfg.n_subsets and attempts < max_attempts:
        attempts += 1
        subset = data[rng.choice(n, p + 1, replace=False)]
        center = subset.mean(axis=0)
        cov = np.atleast_2d(np.cov(subset, rowvar=False))
        candidate = _candidate(data, center, cov, h)
        if candidate is None:
            continue
        accepted += 1
        log_volume, radius, d2 = candidate
        if best is None or log_volume < best[0]:
            best = (log_volume, center, cov, radius, d2)

    if best is None:
        raise DegenerateDataError(
            f"All {attempts} drawn subsets were singular; data are not in general position"
        )
    if accepted < cfg.n_subsets:
        logger.warning(f"Only {accepted} of {cfg.n_subsets} subsets were nonsingular")

    log_volume, center, cov, radius, d2 = best
    if cfg.refine:
        covered = data[np.argsort(d2, kind="stable")[:h]]
        refined_center = covered.mean(axis=0)
        refined_cov = np.atleast_2d(np.cov(covered, rowvar=False))
        candidate = _candidate(data, refined_center, refined_cov, h)
        if candidate is not None and candidate[0] < log_volume:
            logger.debug(f"Refinement lowered log volume {log_volume:.4f} -> {candidate[0]:.4f}")
            log_volume, radius = candidate[0], candidate[1]
            center, cov = refined_center, refined_cov

    region = Ellipsoid(center, cov, radius)
    logger.info(f"MVE search: n={n}, p={p}, h={h}, {accepted} subsets, log volume {region.log_volume:.4f}")
    return region


def enlarge(region: Ellipsoid, family: RadialFamily, target_coverage: float) -> Ellipsoid:
    """Scale an MVE (coverage 1/2 under the family) up to target_coverage."""
    if not 0.5 <= target_coverage < 1.0:
        raise ValueError(f"Target coverage must lie in [0.5, 1), got {target_coverage}")
    p = region.p
    factor = mve_radius(family, p, target_coverage) / mve_radius(family, p, 0.5)
    return region.scaled(factor)


def trim(data, region: Ellipsoid) -> TrimmedSample:
    """Split data by closed membership in region."""
    data = _as_data(data)
    n = data.shape[0]
    if n == 0:
        mask = np.zeros(0, dtype=bool)
    else:
        mask = np.asarray(region.contains(data), dtype=bool)
    inside_index = np.flatnonzero(mask)
    outside_index = np.flatnonzero(~mask)
    return TrimmedSample(
        inside=data[inside_index],
        n_outside=int(outside_index.size),
        n_total=n,
        region=region,
        inside_index=inside_index,
        outside_index=outside_index,
    )
