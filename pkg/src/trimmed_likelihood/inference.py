"""
Information and Influence
=========================

Monte-Carlo information matrices for the full, truncated, censored and
gross-error models, asymptotic efficiencies against the Cramer-Rao bound,
influence functions and the aligned-region gradient check.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import block_diag, null_space

from .elliptical import (
    EllipticalParams,
    Ellipsoid,
    RadialFamily,
    RegionIntegrator,
    mve_radius,
    n_params,
    sample,
    score,
    unvech,
    vech,
    vech_basis,
    vech_labels,
)
from .estimators import Branch, EstimatorVariant, FitResult
from .exceptions import DimensionMismatchError, SingularInformationError

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 50_000
DEFAULT_BATCHES = 10
SINGULAR_COND = 1e12

__all__ = [
    "InfoModel",
    "InfoMatrix",
    "ScoreSample",
    "score",
    "full_information",
    "info_truncated",
    "info_expected_truncated",
    "info_censored",
    "info_gem",
    "profiled_gem_information",
    "shape_scale_transform",
    "efficiency",
    "EfficiencyResult",
    "InfluenceFunction",
    "influence",
    "asymptotic_covariance",
    "standard_errors",
    "region_mass_gradient_fd",
    "MassGradient",
]


class InfoModel(Enum):
    FULL = "full"
    TRUNCATED = "truncated"
    EXPECTED_TRUNCATED = "expected_truncated"
    CENSORED = "censored"
    GEM = "gem"
    PROFILED_GEM = "profiled_gem"


def invert(matrix: np.ndarray, what: str = "information matrix") -> np.ndarray:
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > SINGULAR_COND:
        raise SingularInformationError(f"The {what} is singular or ill-conditioned")
    return np.linalg.inv(matrix)


@dataclass
class InfoMatrix:
    """Information matrix with its coordinates and Monte-Carlo error."""
    matrix: np.ndarray
    model: InfoModel
    region: Optional[Ellipsoid]
    mc_budget: int
    std_error: Optional[np.ndarray] = None
    labels: List[str] = field(default_factory=list)
    coordinates: str = "vech"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def inverse(self) -> np.ndarray:
        return invert(self.matrix)

    def is_psd(self, tol: float = 1e-6) -> bool:
        sym = 0.5 * (self.matrix + self.matrix.T)
        scale = np.linalg.norm(self.matrix)
        return bool(np.allclose(self.matrix, self.matrix.T, atol=tol * scale)
                    and np.min(np.linalg.eigvalsh(sym)) >= -tol * scale)

    def imprecise(self, tol: float = 0.05) -> bool:
        """True when the largest MC standard error exceeds tol times the matrix norm."""
        if self.std_error is None:
            return False
        return bool(np.max(self.std_error) > tol * np.linalg.norm(self.matrix))

    def in_shape_scale(self, theta: EllipticalParams) -> "InfoMatrix":
        """Congruence into (mu, det-one shape tangent, scale) coordinates."""
        jac = shape_scale_transform(theta)
        labels = [f"mu{i + 1}" for i in range(theta.p)]
        labels += [f"shape{i + 1}" for i in range(jac.shape[1] - theta.p - 1)] + ["scale"]
        if self.size == jac.shape[0] + 1:
            jac = block_diag(jac, np.eye(1))
            labels.append("pi")
        elif self.size != jac.shape[0]:
            raise DimensionMismatchError(f"Matrix of size {self.size} does not match dimension {theta.p}")
        return InfoMatrix(jac.T @ self.matrix @ jac, self.model, self.region,
                          self.mc_budget, None, labels, "shape_scale")


class ScoreSample:
    """Scores of draws from P_theta and their region indicators, split into batches."""

    def __init__(self, family: RadialFamily, theta: EllipticalParams,
                 region: Optional[Ellipsoid], budget: int = DEFAULT_BUDGET,
                 seed=0, batches: int = DEFAULT_BATCHES):
        if region is not None and region.p != theta.p:
            raise DimensionMismatchError(f"theta has dimension {theta.p}, region has {region.p}")
        self.family = family
        self.theta = theta
        self.region = region
        self.budget = budget
        self.batches = max(2, batches)
        draws = sample(family, theta, budget, seed)
        self.scores = score(family, theta, draws)
        if region is None:
            self.inside = np.ones(budget, dtype=bool)
        else:
            self.inside = np.asarray(region.contains(draws), dtype=bool)

    def moments(self, index=slice(None)) -> "ScoreMoments":
        """Score moments over the selected draws."""
        s = self.scores[index]
        ind = self.inside[index].astype(float)
        n = s.shape[0]
        return ScoreMoments(
            mass=float(np.mean(ind)),
            d=ind @ s / n,
            m=(s * ind[:, None]).T @ s / n,
            f=s.T @ s / n,
            mean=np.mean(s, axis=0),
        )

    def assemble(self, builder: Callable[["ScoreMoments"], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Full-sample value of builder(moments) and its batch-means standard error."""
        total = np.asarray(builder(self.moments()))
        chunks = np.array_split(np.arange(self.budget), self.batches)
        per_batch = np.array([builder(self.moments(chunk)) for chunk in chunks])
        stderr = np.std(per_batch, axis=0, ddof=1) / math.sqrt(self.batches)
        return total, stderr


class ScoreMoments(NamedTuple):
    mass: float  # P(A)
    d: np.ndarray  # E[1_A s], the gradient of P(A)
    m: np.ndarray  # E[1_A s s^T]
    f: np.ndarray  # E[s s^T]
    mean: np.ndarray  # E[s], zero up to MC error


def _full(mo: ScoreMoments) -> np.ndarray:
    return mo.f


def _truncated(mo: ScoreMoments) -> np.ndarray:
    return mo.m / mo.mass - np.outer(mo.d, mo.d) / mo.mass ** 2


def _expected_truncated(mo: ScoreMoments) -> np.ndarray:
    return mo.m - np.outer(mo.d, mo.d) / mo.mass


def _censored_first(mo: ScoreMoments) -> np.ndarray:
    return mo.mass * _truncated(mo) + np.outer(mo.d, mo.d) / (mo.mass * (1.0 - mo.mass))


def _censored_second(mo: ScoreMoments) -> np.ndarray:
    # I - P(A^c) I_t(A^c) from the complement moments of the same draws
    out_mass = 1.0 - mo.mass
    d_out = mo.mean - mo.d
    m_out = mo.f - mo.m
    return mo.f - out_mass * (m_out / out_mass - np.outer(d_out, d_out) / out_mass ** 2)


def _gem(pi: float) -> Callable[[ScoreMoments], np.ndarray]:
    def build(mo: ScoreMoments) -> np.ndarray:
        outside = (1.0 - pi) * (1.0 - mo.mass) + pi
        k = mo.d.shape[0]
        out = np.zeros((k + 1, k + 1))
        out[:k, :k] = (1.0 - pi) * mo.m + (1.0 - pi) ** 2 * np.outer(mo.d, mo.d) / outside
        out[:k, k] = -mo.d / outside
        out[k, :k] = -mo.d / outside
        out[k, k] = mo.mass / (1.0 - pi) + mo.mass ** 2 / outside
        return out
    return build


def _info(ss: ScoreSample, builder, model: InfoModel, labels: List[str]) -> InfoMatrix:
    matrix, stderr = ss.assemble(builder)
    matrix = 0.5 * (matrix + matrix.T)
    info = InfoMatrix(matrix, model, ss.region, ss.budget, stderr, labels)
    if info.imprecise():
        logger.warning(f"{model.value} information has large MC error at budget {ss.budget}")
    return info


def full_information(family: RadialFamily, theta: EllipticalParams,
                     budget: int = DEFAULT_BUDGET, seed=0,
                     batches: int = DEFAULT_BATCHES) -> InfoMatrix:
    ss = ScoreSample(family, theta, None, budget, seed, batches)
    return _info(ss, _full, InfoModel.FULL, vech_labels(theta.p))


def info_truncated(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                   budget: int = DEFAULT_BUDGET, seed=0,
                   batches: int = DEFAULT_BATCHES) -> InfoMatrix:
    """
    Truncated-model information: conditional second moment of the score over
    A minus the outer product of grad P(A) / P(A).

    The gradient of P(A) is the score integral E[1_A s].
    """
    ss = ScoreSample(family, theta, region, budget, seed, batches)
    return _info(ss, _truncated, InfoModel.TRUNCATED, vech_labels(theta.p))


def info_expected_truncated(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                            budget: int = DEFAULT_BUDGET, seed=0,
                            batches: int = DEFAULT_BATCHES) -> InfoMatrix:
    """P(A) times the truncated information."""
    ss = ScoreSample(family, theta, region, budget, seed, batches)
    return _info(ss, _expected_truncated, InfoModel.EXPECTED_TRUNCATED, vech_labels(theta.p))


def info_censored(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                  budget: int = DEFAULT_BUDGET, seed=0, batches: int = DEFAULT_BATCHES,
                  form: str = "first") -> InfoMatrix:
    """Censored-model information.

    form="first" assembles P I_t + grad P grad P^T / (P (1 - P)); form="second"
    assembles I - P(A^c) I_t(A^c). Both agree up to Monte-Carlo error.
    """
    builders = {"first": _censored_first, "second": _censored_second}
    if form not in builders:
        raise ValueError(f"Unknown form '{form}'")
    ss = ScoreSample(family, theta, region, budget, seed, batches)
    return _info(ss, builders[form], InfoModel.CENSORED, vech_labels(theta.p))


def info_gem(family: RadialFamily, theta: EllipticalParams, pi: float, region: Ellipsoid,
             budget: int = DEFAULT_BUDGET, seed=0,
             batches: int = DEFAULT_BATCHES) -> InfoMatrix:
    """Gross-error-model information over (theta, pi); the last row/column is pi."""
    if not 0.0 <= pi < 1.0:
        raise ValueError(f"pi must lie in [0, 1), got {pi}")
    ss = ScoreSample(family, theta, region, budget, seed, batches)
    return _info(ss, _gem(pi), InfoModel.GEM, vech_labels(theta.p) + ["pi"])


def profiled_gem_information(info: InfoMatrix) -> InfoMatrix:
    """theta-information with pi profiled out (Schur complement of the pi entry)."""
    if info.model != InfoModel.GEM:
        raise ValueError("Profiling needs a GEM information matrix")
    k = info.size - 1
    a = info.matrix[:k, :k]
    b = info.matrix[:k, k]
    c = info.matrix[k, k]
    return InfoMatrix(a - np.outer(b, b) / c, InfoModel.PROFILED_GEM, info.region,
                      info.mc_budget, None, info.labels[:k])


def shape_scale_transform(theta: EllipticalParams) -> np.ndarray:
    """Jacobian from (mu, shape tangent, scale) coordinates to (mu, vech Sigma).

    Shape directions span the tangent space of {|Sigma| = const}; the scale
    column is d Sigma / d varsigma^2 = Xi.
    """
    p = theta.p
    sigma_inv = theta.sigma_inv
    constraint = np.array([[np.trace(sigma_inv @ e) for e in vech_basis(p)]])
    shape_dirs = null_space(constraint)
    scale_dir = vech(theta.shape_matrix)[:, None]
    return block_diag(np.eye(p), np.hstack([shape_dirs, scale_dir]))


def _component_index(p: int, component: str) -> int:
    if component == "mu":
        return 0
    if component == "sigma_diag":
        return p
    if component == "sigma_offdiag":
        if p < 2:
            raise ValueError("Off-diagonal component needs p >= 2")
        return p + 1
    raise ValueError(f"Unknown component '{component}'")


def _variant_builder(variant: EstimatorVariant, pi: float = 0.0):
    if variant == EstimatorVariant.CENSORED:
        return _censored_first
    # truncated information from one observation, (1 - pi) P(A) I_t
    return lambda mo: (1.0 - pi) * _expected_truncated(mo)


@dataclass
class EfficiencyResult:
    family: str
    p: int
    variant: str
    alpha: Optional[float]
    component: str
    efficiency: float
    mc_stderr: float

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "p": self.p,
            "variant": self.variant,
            "alpha": self.alpha,
            "component": self.component,
            "efficiency": self.efficiency,
            "mc_stderr": self.mc_stderr,
        }


def efficiency(family: RadialFamily, p: int, estimator_variant: EstimatorVariant,
               enlargement_alpha: Optional[float], component: str,
               budget: int = DEFAULT_BUDGET, seed=0,
               batches: int = DEFAULT_BATCHES, joint: bool = False) -> EfficiencyResult:
    """
    Information the variant carries about one component relative to the full model.

    By default the component is estimated with the remaining parameters held at
    their values, so the ratio compares single information entries. With
    joint=True it is the Cramer-Rao variance over the variant's asymptotic
    variance with every parameter estimated.

    Args:
        family: Radial family
        p: Dimension; theta is canonical (0, I)
        estimator_variant: t, c, r or s (r and s share the truncated information at pi = 0)
        enlargement_alpha: None for the plain MVE, else the region covers 1 - alpha
        component: 'mu', 'sigma_diag' or 'sigma_offdiag'
        budget: Monte-Carlo draws
        seed: Draw seed
        batches: Batch count for the standard error
        joint: Compare inverse-matrix entries instead of information entries

    Returns:
        EfficiencyResult with the estimate and its batch-means standard error
    """
    index = _component_index(p, component)
    theta = EllipticalParams.standard(p)
    coverage = 0.5 if enlargement_alpha is None else 1.0 - enlargement_alpha
    region = Ellipsoid(np.zeros(p), np.eye(p), mve_radius(family, p, coverage))
    ss = ScoreSample(family, theta, region, budget, seed, batches)
    variant_builder = _variant_builder(estimator_variant)

    def ratio(mo: ScoreMoments) -> float:
        if not joint:
            return variant_builder(mo)[index, index] / mo.f[index, index]
        bound = invert(mo.f, "full information")[index, index]
        variance = invert(variant_builder(mo))[index, index]
        return bound / variance

    value, stderr = ss.assemble(ratio)
    result = EfficiencyResult(family.label, p, estimator_variant.value, enlargement_alpha,
                              component, float(value), float(stderr))
    logger.info(f"Efficiency {family.label} p={p} {estimator_variant.value} alpha={enlargement_alpha} "
                f"{component}: {result.efficiency:.4f} +/- {result.mc_stderr:.4f}")
    return result


class InfluenceFunction:
    """Influence function of a trimmed-likelihood estimator at theta0.

    Built once from a Monte-Carlo score sample; calling it evaluates the
    information-weighted h-function at one point or each row of a matrix.
    For the smart variant the output has an extra pi coordinate.
    """

    def __init__(self, family: RadialFamily, theta0: EllipticalParams, region: Ellipsoid,
                 variant: EstimatorVariant, pi0: float = 0.0,
                 budget: int = DEFAULT_BUDGET, seed=0):
        if not 0.0 <= pi0 < 1.0:
            raise ValueError(f"pi0 must lie in [0, 1), got {pi0}")
        self.family = family
        self.theta0 = theta0
        self.region = region
        self.variant = variant
        self.pi0 = pi0

        ss = ScoreSample(family, theta0, region, budget, seed)
        mo = ss.moments()
        self.mass = mo.mass
        self.d_mass = mo.d
        self.outside = (1.0 - pi0) * (1.0 - mo.mass) + pi0

        if variant == EstimatorVariant.CENSORED:
            matrix = _censored_first(mo)
        elif variant == EstimatorVariant.SMART:
            matrix = _gem(pi0)(mo)
        else:
            matrix = _expected_truncated(mo)
        self.matrix = 0.5 * (matrix + matrix.T)
        self._inverse = invert(self.matrix)

    def h(self, x) -> np.ndarray:
        s = score(self.family, self.theta0, x)
        single = s.ndim == 1
        s = np.atleast_2d(s)
        inside = np.atleast_1d(np.asarray(self.region.contains(x), dtype=float))[:, None]
        d, mass = self.d_mass, self.mass

        if self.variant == EstimatorVariant.CENSORED:
            out = inside * s - (1.0 - inside) * d / (1.0 - mass)
        elif self.variant == EstimatorVariant.SMART:
            pi, q = self.pi0, self.outside
            theta_part = inside * s - (1.0 - inside) * (1.0 - pi) * d / q
            pi_part = -inside / (1.0 - pi) + (1.0 - inside) * mass / q
            out = np.hstack([theta_part, pi_part])
        else:
            out = inside * (s - d / mass)
        return out[0] if single else out

    def __call__(self, x) -> np.ndarray:
        return self.h(x) @ self._inverse.T


def influence(family: RadialFamily, theta0: EllipticalParams, pi0: float, region: Ellipsoid,
              variant: EstimatorVariant, x, budget: int = DEFAULT_BUDGET, seed=0) -> np.ndarray:
    return InfluenceFunction(family, theta0, region, variant, pi0, budget, seed)(x)


def asymptotic_covariance(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                          variant: EstimatorVariant, budget: int = DEFAULT_BUDGET,
                          pi: float = 0.0, seed=0) -> np.ndarray:
    """Inverse of the variant's one-observation information in (mu, vech Sigma)."""
    ss = ScoreSample(family, theta, region, budget, seed)
    matrix = _variant_builder(variant, pi)(ss.moments())
    return invert(0.5 * (matrix + matrix.T))


def standard_errors(fit: FitResult, family: RadialFamily, region: Ellipsoid, n: int,
                    budget: int = DEFAULT_BUDGET, seed=0) -> dict:
    """Asymptotic standard errors of a fit, labelled by coordinate."""
    pi = fit.pi_hat or 0.0
    variant = fit.variant
    if fit.branch == Branch.CENSORED:
        variant = EstimatorVariant.CENSORED
    cov = asymptotic_covariance(family, fit.theta_hat, region, variant, budget, pi, seed)
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None) / n)
    return dict(zip(vech_labels(fit.theta_hat.p), errors.tolist()))


@dataclass
class MassGradient:
    """Finite-difference derivatives of P_theta(A) in (mu, shape, scale) directions."""
    labels: List[str]
    derivative: np.ndarray
    error: np.ndarray

    @property
    def residual(self) -> float:
        """Largest location/shape derivative magnitude."""
        return float(np.max(np.abs(self.derivative[:-1])))

    @property
    def scale_derivative(self) -> float:
        return float(self.derivative[-1])


def region_mass_gradient_fd(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                            h: float = 1e-3, budget: int = 20_000, seed=0) -> MassGradient:
    """Central differences of the region probability along every transformed direction.

    All evaluations share one set of integration directions, so the differences
    carry only the per-direction Monte-Carlo error, reported together with a
    step-halving truncation estimate.
    """
    p = theta.p
    jac = shape_scale_transform(theta)
    integrator = RegionIntegrator(family, region, budget, seed)
    labels = [f"mu{i + 1}" for i in range(p)]
    labels += [f"shape{i + 1}" for i in range(jac.shape[1] - p - 1)] + ["scale"]

    def shifted(direction: np.ndarray, step: float) -> EllipticalParams:
        return EllipticalParams.from_sigma(theta.mu + step * direction[:p],
                                           theta.sigma + step * unvech(direction[p:], p))

    def central(direction: np.ndarray, step: float) -> Tuple[float, float]:
        plus, minus = shifted(direction, step), shifted(direction, -step)
        if integrator.exact:
            return (integrator.mass(plus) - integrator.mass(minus)) / (2.0 * step), 0.0
        contrib = (integrator.contributions(plus) - integrator.contributions(minus)) / (2.0 * step)
        return float(np.mean(contrib)), float(np.std(contrib, ddof=1) / math.sqrt(contrib.size))

    derivative = np.zeros(jac.shape[1])
    error = np.zeros(jac.shape[1])
    for j in range(jac.shape[1]):
        value, mc_error = central(jac[:, j], h)
        value_half, _ = central(jac[:, j], 0.5 * h)
        derivative[j] = value
        error[j] = mc_error + abs(value - value_half) + 1e-10
    return MassGradient(labels, derivative, error)
