"""
Robustness Lab
==============

Simulation harness for the trimmed-likelihood estimators: breakdown under
replaced outliers, consistency over a sample-size grid, convergence-rate
tables and recovery of the contamination fraction in gross-error samples.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import FitConfig, LabConfig, MveConfig
from .elliptical import (
    EllipticalParams,
    Ellipsoid,
    RadialFamily,
    mve_radius,
    sample,
    standard_draws,
    vech,
    vech_labels,
)
from .estimators import EstimatorVariant, FitResult, fit_pipeline
from .exceptions import ConfigurationError, TrimmedLikelihoodError

logger = logging.getLogger(__name__)

MIN_MAGNITUDE = 1e3
SYMDIFF_DRAWS = 20_000


class ScenarioKind(Enum):
    CLEAN = "clean"
    GEM_RING = "gem"
    REPLACEMENT_OUTLIERS = "breakdown"


class ExperimentKind(Enum):
    BREAKDOWN = "breakdown"
    CONSISTENCY = "consistency"
    RATE = "rate"


def contaminant_floor(family: RadialFamily, p: int, pi0: float) -> float:
    """Mahalanobis radius of the population MVE of a gross-error mixture.

    With every contaminant outside it, the mixture's MVE covers 1/2 of the
    mixture, i.e. 0.5 / (1 - pi0) of the clean component.
    """
    return mve_radius(family, p, 0.5 / (1.0 - pi0))


@dataclass
class ExperimentPlan:
    """What to simulate: scenario, model, sample-size grid and replicate count."""
    scenario: ScenarioKind
    family: RadialFamily
    p: int
    n_grid: List[int]
    replicates: int
    seed: int
    variants: List[EstimatorVariant] = field(default_factory=lambda: [EstimatorVariant.SMART])
    pi0: float = 0.0
    ring_radius: float = 10.0
    count: int = 0
    magnitude: float = 1e6
    coverage: float = 0.975
    alpha_restrict: Optional[float] = None

    @property
    def theta0(self) -> EllipticalParams:
        return EllipticalParams.standard(self.p)

    @property
    def contamination(self) -> float:
        return self.pi0 if self.scenario == ScenarioKind.GEM_RING else 0.0

    def validate(self) -> None:
        errors = []
        if self.p < 1:
            errors.append("p must be at least 1")
        if self.replicates < 1:
            errors.append("replicates must be positive")
        if not self.n_grid:
            errors.append("n_grid must not be empty")
        elif any(n <= self.p + 1 for n in self.n_grid):
            errors.append(f"every sample size must exceed p + 1 = {self.p + 1}")
        elif any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            errors.append("n_grid must be strictly increasing")
        if not self.variants:
            errors.append("at least one estimator variant is required")
        if not 0.5 <= self.coverage < 1.0:
            errors.append(f"coverage must lie in [0.5, 1), got {self.coverage}")

        if self.scenario == ScenarioKind.GEM_RING:
            if not 0.0 <= self.pi0 < 0.5:
                errors.append(f"pi0 must lie in [0, 0.5), got {self.pi0}")
            elif self.p >= 1 and self.ring_radius <= contaminant_floor(self.family, self.p, self.pi0):
                errors.append(
                    f"ring_radius {self.ring_radius} does not clear the mixture MVE radius "
                    f"{contaminant_floor(self.family, self.p, self.pi0):.4f}"
                )
        if self.scenario == ScenarioKind.REPLACEMENT_OUTLIERS:
            if self.count < 0:
                errors.append("count must be non-negative")
            elif self.n_grid and self.count >= min(self.n_grid):
                errors.append("count must be smaller than every sample size")
            if self.magnitude < MIN_MAGNITUDE:
                errors.append(f"magnitude must be at least {MIN_MAGNITUDE:g}")

        if errors:
            raise ConfigurationError(errors)

    def draw(self, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """One data set for this scenario and a mask of its contaminated rows."""
        theta0 = self.theta0
        if self.scenario == ScenarioKind.GEM_RING:
            return sample_gem(self.family, theta0, self.pi0, self.ring_radius, n, seed)
        rng = np.random.default_rng(seed)
        data = theta0.mu + standard_draws(self.family, self.p, n, rng) @ theta0.chol.T
        if self.scenario == ScenarioKind.REPLACEMENT_OUTLIERS:
            return replace_outliers(data, self.count, self.magnitude, rng)
        return data, np.zeros(n, dtype=bool)

    def to_dict(self) -> Dict:
        return {
            "scenario": self.scenario.value,
            "family": self.family.label,
            "p": self.p,
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "seed": self.seed,
            "variants": [v.value for v in self.variants],
            "pi0": self.pi0,
            "ring_radius": self.ring_radius,
            "count": self.count,
            "magnitude": self.magnitude,
            "coverage": self.coverage,
            "alpha_restrict": self.alpha_restrict,
        }


def sample_gem(family: RadialFamily, theta: EllipticalParams, pi: float, ring_radius: float,
               n: int, seed=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw from (1 - pi) P_theta + pi Q with Q uniform on a Mahalanobis sphere.

    Args:
        family: Radial family of the clean component
        theta: Clean-component parameters
        pi: Contamination fraction
        ring_radius: Mahalanobis radius of the contaminating sphere
        n: Sample size
        seed: Seed for numpy's default_rng

    Returns:
        (data, is_contaminant)
    """
    if not 0.0 <= pi < 1.0:
        raise ValueError(f"pi must lie in [0, 1), got {pi}")
    rng = np.random.default_rng(seed)
    p = theta.p
    is_contaminant = rng.random(n) < pi
    data = theta.mu + standard_draws(family, p, n, rng) @ theta.chol.T

    k = int(is_contaminant.sum())
    if k:
        direction = rng.standard_normal((k, p))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        data[is_contaminant] = theta.mu + ring_radius * direction @ theta.chol.T
    return data, is_contaminant


def replace_outliers(data: np.ndarray, count: int, magnitude: float,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Replace count random rows by a unit-noise cluster at magnitude along a random direction."""
    n, p = data.shape
    data = data.copy()
    mask = np.zeros(n, dtype=bool)
    if count == 0:
        return data, mask
    direction = rng.standard_normal(p)
    direction /= np.linalg.norm(direction)
    rows = rng.choice(n, count, replace=False)
    data[rows] = magnitude * direction + rng.standard_normal((count, p))
    mask[rows] = True
    return data, mask


def theoretical_mve(family: RadialFamily, theta: EllipticalParams, pi0: float = 0.0) -> Ellipsoid:
    return Ellipsoid(theta.mu, theta.sigma, contaminant_floor(family, theta.p, pi0))


def symmetric_difference_mass(family: RadialFamily, theta: EllipticalParams, a: Ellipsoid,
                              b: Ellipsoid, draws: int = SYMDIFF_DRAWS, seed=0) -> float:
    """P_theta(A xor B) by Monte Carlo."""
    x = sample(family, theta, draws, seed)
    return float(np.mean(np.asarray(a.contains(x)) != np.asarray(b.contains(x))))


@dataclass
class ReplicateOutcome:
    """One variant's fit on one simulated data set."""
    n: int
    replicate: int
    variant: EstimatorVariant
    seed: int
    mu_hat: Optional[np.ndarray] = None
    sigma_hat: Optional[np.ndarray] = None
    pi_hat: Optional[float] = None
    branch: Optional[str] = None
    converged: bool = False
    failure: Optional[str] = None
    mve_center: Optional[np.ndarray] = None
    mve_symdiff: float = math.nan

    @property
    def completed(self) -> bool:
        return self.failure is None and self.mu_hat is not None

    def broke(self, theta0: EllipticalParams, lab: LabConfig) -> bool:
        """Location beyond lab.location_blowup true-scale units or a near-singular scatter."""
        if not self.completed:
            return False
        shift = float(np.linalg.norm(self.mu_hat - theta0.mu))
        if shift > lab.location_blowup * math.sqrt(theta0.scale):
            return True
        return bool(np.linalg.cond(self.sigma_hat) > lab.blowup_threshold)

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "replicate": self.replicate,
            "variant": self.variant.value,
            "seed": self.seed,
            "mu_hat": None if self.mu_hat is None else self.mu_hat.tolist(),
            "sigma_hat": None if self.sigma_hat is None else self.sigma_hat.tolist(),
            "pi_hat": self.pi_hat,
            "branch": self.branch,
            "converged": self.converged,
            "failure": self.failure,
        }


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if value is not None and math.isfinite(value) else None


@dataclass
class CellSummary:
    """Statistics of one (sample size, variant) cell over its replicates."""
    n: int
    variant: str
    replicates: int
    completed: int
    failures: int
    bias_mu1: float
    variance_mu1: float
    mse_mu1: float
    n_mse_mu1: float
    mean_error: float
    mean_mu_error: float
    mean_sigma_error: float
    mean_pi_hat: float
    mean_pi_error: float
    break_rate: float
    mve_symdiff: float
    mve_n_mse: float
    mve_n23_mse: float
    n_mse: Dict[str, float] = field(default_factory=dict)  # n * MSE per (mu, vech Sigma) component

    def to_dict(self) -> Dict:
        out = {}
        for key, value in self.__dict__.items():
            if key != "n_mse":
                out[key] = _finite_or_none(value) if isinstance(value, float) else value
        for label, value in self.n_mse.items():
            out[f"n_mse_{label}"] = _finite_or_none(value)
        return out


def summarize_cell(n: int, variant: EstimatorVariant, outcomes: List[ReplicateOutcome],
                   theta0: EllipticalParams, pi0: float, lab: LabConfig) -> CellSummary:
    done = [o for o in outcomes if o.completed]
    nan = math.nan
    labels = vech_labels(theta0.p)

    if done:
        mu1 = np.array([o.mu_hat[0] for o in done]) - theta0.mu[0]
        mu_err = np.array([np.linalg.norm(o.mu_hat - theta0.mu) for o in done])
        sigma_err = np.array([np.max(np.abs(o.sigma_hat - theta0.sigma)) for o in done])
        theta_err = np.array([
            math.sqrt(np.sum((o.mu_hat - theta0.mu) ** 2) + np.sum(vech(o.sigma_hat - theta0.sigma) ** 2))
            for o in done
        ])
        component_err = np.array([
            np.concatenate([o.mu_hat - theta0.mu, vech(o.sigma_hat - theta0.sigma)]) for o in done
        ])
        n_mse = dict(zip(labels, (n * np.mean(component_err ** 2, axis=0)).tolist()))
        pis = np.array([o.pi_hat for o in done if o.pi_hat is not None])
        bias, variance, mse = float(mu1.mean()), float(mu1.var()), float(np.mean(mu1 ** 2))
        break_rate = float(np.mean([o.broke(theta0, lab) for o in done]))
    else:
        mu_err = sigma_err = theta_err = pis = np.array([])
        bias = variance = mse = break_rate = nan
        n_mse = {label: nan for label in labels}

    centers = [o.mve_center for o in outcomes if o.mve_center is not None]
    if centers:
        center_sq = np.array([np.sum((c - theta0.mu) ** 2) for c in centers])
        mve_mse = float(center_sq.mean())
    else:
        mve_mse = nan
    symdiffs = [o.mve_symdiff for o in outcomes if math.isfinite(o.mve_symdiff)]

    return CellSummary(
        n=n,
        variant=variant.value,
        replicates=len(outcomes),
        completed=len(done),
        failures=len(outcomes) - len(done),
        bias_mu1=bias,
        variance_mu1=variance,
        mse_mu1=mse,
        n_mse_mu1=n * mse,
        mean_error=float(theta_err.mean()) if theta_err.size else nan,
        mean_mu_error=float(mu_err.mean()) if mu_err.size else nan,
        mean_sigma_error=float(sigma_err.mean()) if sigma_err.size else nan,
        mean_pi_hat=float(pis.mean()) if pis.size else nan,
        mean_pi_error=float(np.mean(np.abs(pis - pi0))) if pis.size else nan,
        break_rate=break_rate,
        mve_symdiff=float(np.mean(symdiffs)) if symdiffs else nan,
        mve_n_mse=n * mve_mse,
        mve_n23_mse=n ** (2.0 / 3.0) * mve_mse,
        n_mse=n_mse,
    )


@dataclass
class ExperimentReport:
    """Per-cell summaries of an experiment, reproducible from (plan, seed)."""
    kind: ExperimentKind
    plan: ExperimentPlan
    cells: List[CellSummary]
    seeds: List[int]
    outcomes: List[ReplicateOutcome] = field(default_factory=list)
    runtimes: Dict[int, float] = field(default_factory=dict)

    def cell(self, n: int, variant: EstimatorVariant) -> CellSummary:
        for cell in self.cells:
            if cell.n == n and cell.variant == variant.value:
                return cell
        raise KeyError(f"No cell for n={n}, variant={variant.value}")

    def rate_ratio(self, variant: EstimatorVariant, component: str = "mu1") -> float:
        """max / min of n * MSE(component) across the sample-size grid.

        component is one of vech_labels(p): mu1, ..., sigma11, sigma21, ...
        """
        if component not in vech_labels(self.plan.p):
            raise KeyError(f"Unknown component '{component}' for p={self.plan.p}")
        values = [self.cell(n, variant).n_mse[component] for n in self.plan.n_grid]
        if any(not math.isfinite(v) for v in values) or min(values) <= 0:
            return math.nan
        return max(values) / min(values)

    def rate_ratios(self) -> Dict[str, Optional[float]]:
        return {v.value: _finite_or_none(self.rate_ratio(v)) for v in self.plan.variants}

    def component_rate_ratios(self) -> Dict[str, Dict[str, Optional[float]]]:
        """rate_ratio for every variant and every (mu, vech Sigma) component."""
        return {
            v.value: {c: _finite_or_none(self.rate_ratio(v, c)) for c in vech_labels(self.plan.p)}
            for v in self.plan.variants
        }

    def break_rate(self, variant: EstimatorVariant) -> float:
        """Break rate pooled over the whole grid."""
        cells = [self.cell(n, variant) for n in self.plan.n_grid]
        completed = sum(c.completed for c in cells)
        if completed == 0:
            return math.nan
        return sum(c.break_rate * c.completed for c in cells if c.completed) / completed

    def to_frame(self) -> pd.DataFrame:
        """One row per (n, variant) cell."""
        if not self.cells:
            return pd.DataFrame()
        return pd.DataFrame([cell.to_dict() for cell in self.cells])

    def replicate_frame(self) -> pd.DataFrame:
        if not self.outcomes:
            return pd.DataFrame()
        return pd.DataFrame([o.to_dict() for o in self.outcomes])

    def to_dict(self) -> Dict:
        # runtimes stay out so that repeated runs serialize identically
        out = {
            "experiment": self.kind.value,
            "plan": self.plan.to_dict(),
            "cells": [cell.to_dict() for cell in self.cells],
            "seeds": list(self.seeds),
        }
        if self.kind == ExperimentKind.RATE:
            out["rate_ratios"] = self.rate_ratios()
            out["component_rate_ratios"] = self.component_rate_ratios()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _replicate(plan: ExperimentPlan, n: int, replicate: int, seed_seq: np.random.SeedSequence,
               fit_cfg: FitConfig, mve_cfg: MveConfig, with_symdiff: bool) -> List[ReplicateOutcome]:
    data_seed, mve_seed, fit_seed = (int(s) for s in seed_seq.generate_state(3))
    data, _ = plan.draw(n, data_seed)
    base = dict(n=n, replicate=replicate, seed=data_seed)

    try:
        result = fit_pipeline(
            data, plan.family, plan.coverage, plan.variants,
            replace(mve_cfg, seed=mve_seed), replace(fit_cfg, seed=fit_seed),
            plan.alpha_restrict,
        )
    except TrimmedLikelihoodError as e:
        logger.error(f"Replicate {replicate} at n={n} failed before fitting: {e}")
        return [ReplicateOutcome(variant=v, failure=str(e), **base) for v in plan.variants]

    symdiff = math.nan
    if with_symdiff:
        reference = theoretical_mve(plan.family, plan.theta0, plan.contamination)
        symdiff = symmetric_difference_mass(plan.family, plan.theta0, result.mve, reference,
                                            SYMDIFF_DRAWS, plan.seed)

    outcomes = []
    for variant in plan.variants:
        shared = dict(mve_center=np.asarray(result.mve.center), mve_symdiff=symdiff, **base)
        fit: Optional[FitResult] = result.fits.get(variant)
        if fit is None:
            outcomes.append(ReplicateOutcome(variant=variant, failure=str(result.failures[variant]), **shared))
            continue
        outcomes.append(ReplicateOutcome(
            variant=variant,
            mu_hat=np.array(fit.theta_hat.mu),
            sigma_hat=np.array(fit.theta_hat.sigma),
            pi_hat=fit.pi_hat,
            branch=fit.branch.label if fit.branch else None,
            converged=fit.converged,
            **shared,
        ))
    return outcomes


def run_experiment(plan: ExperimentPlan, kind: ExperimentKind,
                   lab_cfg: Optional[LabConfig] = None,
                   fit_cfg: Optional[FitConfig] = None,
                   mve_cfg: Optional[MveConfig] = None) -> ExperimentReport:
    """
    Run every (n, replicate) cell of a plan and summarize per (n, variant).

    Replicate seeds are spawned from plan.seed in grid order, so results are
    identical for any worker count.

    Args:
        plan: Validated experiment plan
        kind: Experiment kind recorded in the report
        lab_cfg: Worker count and blow-up thresholds
        fit_cfg: Estimator settings; the seed is replaced per replicate
        mve_cfg: MVE search settings; the seed is replaced per replicate

    Returns:
        ExperimentReport
    """
    plan.validate()
    lab_cfg = lab_cfg or LabConfig()
    fit_cfg = fit_cfg or FitConfig()
    mve_cfg = mve_cfg or MveConfig()
    with_symdiff = plan.scenario != ScenarioKind.REPLACEMENT_OUTLIERS

    tasks = [(n, r) for n in plan.n_grid for r in range(plan.replicates)]
    children = np.random.SeedSequence(plan.seed).spawn(len(tasks))
    logger.info(f"Starting {kind.value} experiment: scenario={plan.scenario.value}, "
                f"n_grid={plan.n_grid}, {plan.replicates} replicates, {lab_cfg.workers} workers")

    started = {n: time.perf_counter() for n in plan.n_grid}
    if lab_cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=lab_cfg.workers) as executor:
            futures = [
                executor.submit(_replicate, plan, n, r, child, fit_cfg, mve_cfg, with_symdiff)
                for (n, r), child in zip(tasks, children)
            ]
            # merged in submission order, i.e. by replicate index
            per_task = [future.result() for future in futures]
    else:
        per_task = [
            _replicate(plan, n, r, child, fit_cfg, mve_cfg, with_symdiff)
            for (n, r), child in zip(tasks, children)
        ]
    runtimes = {n: time.perf_counter() - started[n] for n in plan.n_grid}

    outcomes = [o for batch in per_task for o in batch]
    cells = []
    for n in plan.n_grid:
        for variant in plan.variants:
            group = [o for o in outcomes if o.n == n and o.variant == variant]
            cells.append(summarize_cell(n, variant, group, plan.theta0, plan.contamination, lab_cfg))

    seeds = [int(child.generate_state(1)[0]) for child in children]
    report = ExperimentReport(kind, plan, cells, seeds, outcomes, runtimes)
    for cell in cells:
        logger.info(f"n={cell.n} {cell.variant}: completed {cell.completed}/{cell.replicates}, "
                    f"mean error {cell.mean_error:.4f}, n*MSE(mu1) {cell.n_mse_mu1:.4f}, "
                    f"break rate {cell.break_rate:.3f}")
    return report


def run_breakdown(plan: ExperimentPlan, blowup_threshold: Optional[float] = None,
                  lab_cfg: Optional[LabConfig] = None, fit_cfg: Optional[FitConfig] = None,
                  mve_cfg: Optional[MveConfig] = None) -> ExperimentReport:
    """Replacement-outlier stress test; break_rate per cell is the breakdown frequency."""
    if plan.scenario != ScenarioKind.REPLACEMENT_OUTLIERS:
        raise ConfigurationError(["run_breakdown needs the replacement-outlier scenario"])
    lab_cfg = lab_cfg or LabConfig()
    if blowup_threshold is not None:
        lab_cfg = replace(lab_cfg, blowup_threshold=blowup_threshold)
    return run_experiment(plan, ExperimentKind.BREAKDOWN, lab_cfg, fit_cfg, mve_cfg)


def run_consistency(plan: ExperimentPlan, lab_cfg: Optional[LabConfig] = None,
                    fit_cfg: Optional[FitConfig] = None,
                    mve_cfg: Optional[MveConfig] = None) -> ExperimentReport:
    return run_experiment(plan, ExperimentKind.CONSISTENCY, lab_cfg, fit_cfg, mve_cfg)


def run_rate(plan: ExperimentPlan, lab_cfg: Optional[LabConfig] = None,
             fit_cfg: Optional[FitConfig] = None,
             mve_cfg: Optional[MveConfig] = None) -> ExperimentReport:
    """n * MSE table per component; flat across the grid at the root-n rate.

    The MVE columns carry n and n^(2/3) scaled MSE of the raw MVE center as a
    diagnostic of its slower rate.
    """
    if plan.scenario == ScenarioKind.REPLACEMENT_OUTLIERS:
        raise ConfigurationError(["run_rate needs the clean or gross-error scenario"])
    return run_experiment(plan, ExperimentKind.RATE, lab_cfg, fit_cfg, mve_cfg)
