"""
Trimmed Likelihood Estimators
=============================

Maximizers for the truncated, censored, restricted and smart likelihoods,
and the MVE -> enlarge -> trim -> fit pipeline.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import EStepMethod, FitConfig, InitKind, MveConfig, OptimizerKind
from .elliptical import (
    EllipticalParams,
    Ellipsoid,
    RadialFamily,
    RegionIntegrator,
    log_density,
    mahalanobis_sq,
    mve_radius,
    standard_draws,
    vech_gradient_to_vector,
)
from .exceptions import (
    ConfigurationError,
    DegenerateDataError,
    DimensionMismatchError,
    EStepStarvationError,
    InfeasibleStartError,
    InsufficientDataError,
    NonExistenceError,
    NotPositiveDefiniteError,
    TrimmedLikelihoodError,
)
from .likelihoods import (
    Objective,
    Variant,
    censored_value_and_gradient,
    loglik_censored,
    loglik_smart,
    loglik_truncated,
    pi_star,
    truncated_value_and_gradient,
)
from .mve import TrimmedSample, enlarge, sample_mve, trim
from .optimizer import maximize

logger = logging.getLogger(__name__)

# Divergence monitor thresholds for declaring that the MLE(t) does not exist.
MIN_EIGENVALUE = 1e-10
MAX_LOCATION = 1e8
MIN_REGION_MASS = 1e-8
ESCAPE_DOUBLINGS = 40

ASCENT_SLACK = 3.0
MIN_ACCEPTANCE = 1e-3
MAX_WIDENINGS = 10
FINAL_BUDGET_FACTOR = 4


class EstimatorVariant(Enum):
    TRUNCATED = "t"
    CENSORED = "c"
    RESTRICTED = "r"
    SMART = "s"


class Branch(Enum):
    TRUNCATED = "TruncatedBranch"
    CENSORED = "CensoredBranch"

    @property
    def label(self) -> str:
        """Short name used in reports: truncated or censored."""
        return self.name.lower()


@dataclass(frozen=True)
class FitResult:
    """Outcome of one trimmed-likelihood fit."""
    theta_hat: EllipticalParams
    variant: EstimatorVariant
    loglik: float
    iterations: int
    converged: bool
    pi_hat: Optional[float] = None
    branch: Optional[Branch] = None
    alpha_used: Optional[float] = None
    region_mass: float = math.nan
    region_mass_stderr: float = 0.0
    boundary: Optional[bool] = None
    history: Tuple[float, ...] = ()
    ascent_violations: int = 0

    def to_dict(self) -> Dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "pi_hat": self.pi_hat,
            "loglik": self.loglik,
            "branch": self.branch.label if self.branch else None,
            "converged": self.converged,
            "iterations": self.iterations,
            "alpha_used": self.alpha_used,
            "region_mass": self.region_mass,
            "boundary": self.boundary,
        }


def _objective(variant: Variant, sample: TrimmedSample, family: RadialFamily,
               cfg: FitConfig) -> Objective:
    return Objective(variant, family, sample, prob_seed=cfg.seed, prob_draws=cfg.prob_draws)


def check_counts(sample: TrimmedSample, family: RadialFamily) -> None:
    """Existence count condition on the inside points plus general position."""
    m, p = sample.m, sample.p
    if family.is_gaussian:
        needed = p + 2
        ok = m >= needed
    elif p == 1:
        needed = 3
        ok = m > 2
    else:
        gamma = family.gp_exponent(p)
        bound = p * gamma / (gamma - 0.5 * p)
        needed = math.floor(bound) + 1
        ok = m > bound
    if not ok:
        raise InsufficientDataError(f"Need at least {needed} points inside the region, got {m}")
    centered = sample.inside - sample.inside.mean(axis=0)
    if np.linalg.matrix_rank(centered) < p:
        raise DegenerateDataError(f"Inside points span fewer than {p} dimensions")


def initial_theta(sample: TrimmedSample, family: RadialFamily, cfg: FitConfig,
                  coverage: Optional[float] = None) -> EllipticalParams:
    """Starting point: user-supplied, or the region's center and shape.

    The region shape is rescaled so the start gives the region probability
    `coverage` (by default the observed inside fraction).
    """
    p = sample.p
    if cfg.init == InitKind.USER_SUPPLIED:
        theta = cfg.init_theta
        if theta is None or theta.p != p:
            raise DimensionMismatchError("init_theta is missing or has the wrong dimension")
        return theta

    if coverage is None:
        coverage = min(max(sample.empirical_inside_fraction, 0.05), 0.995)
    region = sample.region
    factor = (region.radius / mve_radius(family, p, coverage)) ** 2
    return EllipticalParams.from_sigma(region.center, region.shape * factor)


def _vector_objective(fn: Callable, p: int) -> Callable[[np.ndarray], Tuple[float, np.ndarray]]:
    """Wrap a theta-level (value, gradient) function for the vector maximizer."""
    def evaluate(x: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
                theta = EllipticalParams.from_vector(x, p)
                value, grad = fn(theta)
        except (NotPositiveDefiniteError, np.linalg.LinAlgError):
            return -math.inf, np.zeros_like(x)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return -math.inf, np.zeros_like(x)
        return value, grad
    return evaluate


def _boundary_reason(theta: EllipticalParams, obj: Objective, increasing: bool) -> Optional[str]:
    if np.min(np.linalg.eigvalsh(theta.sigma)) < MIN_EIGENVALUE:
        return "min_eigenvalue"
    if np.linalg.norm(theta.mu) > MAX_LOCATION:
        return "location"
    if increasing and math.exp(obj.integrator.log_mass(theta)) < MIN_REGION_MASS:
        return "region_mass"
    return None


class DivergenceMonitor:
    """Optimizer hook that stops when iterates head for the parameter boundary."""

    def __init__(self, obj: Objective):
        self.obj = obj
        self.tripped: Optional[str] = None
        self.last_value = -math.inf
        self.last_x: Optional[np.ndarray] = None

    def __call__(self, x, fx, step) -> bool:
        theta = EllipticalParams.from_vector(x, self.obj.p)
        increasing = fx > self.last_value
        self.last_value = fx
        self.last_x = np.array(x)
        self.tripped = _boundary_reason(theta, self.obj, increasing)
        return self.tripped is None


def escape_ray(evaluate: Callable, obj: Objective, x_hat: np.ndarray, x_start: np.ndarray,
               value_hat: float) -> Optional[str]:
    """Follow the ray from the start through x_hat while the objective does not drop.

    Returns the name of the boundary monitor reached, or None when the
    objective turns down first.
    """
    direction = np.asarray(x_hat) - np.asarray(x_start)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        return None
    direction /= norm
    previous = value_hat
    t = 1.0
    for _ in range(ESCAPE_DOUBLINGS):
        x = x_hat + t * direction
        value, _ = evaluate(x)
        if not np.isfinite(value) or value < previous - 1e-12 * max(1.0, abs(previous)):
            return None
        with np.errstate(over="ignore", under="ignore"):
            reason = _boundary_reason(EllipticalParams.from_vector(x, obj.p), obj, True)
        if reason:
            return reason
        previous = value
        t *= 2.0
    return None


def fit_truncated(sample: TrimmedSample, family: RadialFamily,
                  cfg: Optional[FitConfig] = None) -> FitResult:
    """
    MLE(t): maximize the truncated likelihood by BFGS on (mu, log-Cholesky).

    Args:
        sample: Trimmed sample
        family: Radial family
        cfg: Maximizer settings

    Returns:
        FitResult for variant t

    Raises:
        NonExistenceError: iterates ran to the boundary of the parameter space
    """
    cfg = cfg or FitConfig()
    cfg.validate()
    check_counts(sample, family)
    p = sample.p

    obj = _objective(Variant.TRUNCATED, sample, family, cfg)
    theta0 = initial_theta(sample, family, cfg)
    x0 = theta0.to_vector()
    evaluate = _vector_objective(lambda th: truncated_value_and_gradient(obj, th), p)
    monitor = DivergenceMonitor(obj)

    logger.info(f"Fitting MLE(t): m={sample.m}, n_outside={sample.n_outside}, p={p}, family={family.label}")
    result = maximize(evaluate, x0, cfg.max_iter, cfg.param_tol, monitor=monitor)
    if result.status == 3:
        raise InfeasibleStartError("Truncated likelihood is -inf at the starting point")

    if monitor.tripped:
        raise NonExistenceError(
            f"MLE(t) does not exist: monitor '{monitor.tripped}' tripped after {result.iterations} iterations",
            monitor=monitor.tripped,
            last_theta=EllipticalParams.from_vector(result.x, p),
            iterations=result.iterations,
        )

    escaped = escape_ray(evaluate, obj, result.x, x0, result.value)
    if escaped:
        raise NonExistenceError(
            f"MLE(t) does not exist: likelihood keeps increasing toward the boundary ('{escaped}')",
            monitor=escaped,
            last_theta=EllipticalParams.from_vector(result.x, p),
            iterations=result.iterations,
        )

    theta_hat = EllipticalParams.from_vector(result.x, p)
    mass = obj.region_mass(theta_hat)
    if not result.converged:
        logger.warning(f"MLE(t) stopped without convergence: {result.message}")

    return FitResult(
        theta_hat=theta_hat,
        variant=EstimatorVariant.TRUNCATED,
        loglik=loglik_truncated(obj, theta_hat),
        iterations=result.iterations,
        converged=result.converged,
        region_mass=mass.estimate,
        region_mass_stderr=mass.std_error,
        history=tuple(result.history),
    )


@dataclass
class EStepMoments:
    """Conditional moments E[u], E[uX], E[uXX^T] given X outside the region."""
    e0: float
    e1: np.ndarray
    e2: np.ndarray
    outside_mass: float
    outside_stderr: float
    accepted: int = 0
    widening: float = 1.0


class RejectionEStep:
    """Impute censored points from fixed standardized draws mapped by the current theta."""

    def __init__(self, family: RadialFamily, region: Ellipsoid, draws: int, seed: int):
        self.family = family
        self.region = region
        self.draws = draws
        self.z = standard_draws(family, region.p, draws, np.random.default_rng(seed))

    def moments(self, theta: EllipticalParams) -> EStepMoments:
        widening = 1.0
        for _ in range(MAX_WIDENINGS + 1):
            x = theta.mu + widening * self.z @ theta.chol.T
            outside = ~np.asarray(self.region.contains(x), dtype=bool)
            accepted = int(outside.sum())
            if accepted > 0 and accepted / self.draws >= MIN_ACCEPTANCE:
                break
            widening *= 2.0
        else:
            raise EStepStarvationError(accepted, self.draws, widening / 2.0)

        if widening > 1.0:
            logger.debug(f"E-step proposal widened x{widening:g}, accepted {accepted}/{self.draws}")
            proposal = EllipticalParams(theta.mu, widening * theta.chol)
            log_w = log_density(self.family, theta, x) - log_density(self.family, proposal, x)
            w = np.exp(log_w)
        else:
            w = np.ones(self.draws)

        w_out = w * outside
        x_out = x[outside]
        weights = w_out[outside]
        u = self.family.weight(mahalanobis_sq(theta, x_out), theta.p) * weights
        total = float(np.sum(weights))
        return EStepMoments(
            e0=float(np.sum(u)) / total,
            e1=(u @ x_out) / total,
            e2=(x_out * u[:, None]).T @ x_out / total,
            outside_mass=float(np.mean(w_out)),
            outside_stderr=float(np.std(w_out, ddof=1) / math.sqrt(self.draws)),
            accepted=accepted,
            widening=widening,
        )


class ComplementEStep:
    """Outside moments as full-law moments minus the region integrals."""

    def __init__(self, integrator: RegionIntegrator):
        self.integrator = integrator

    def moments(self, theta: EllipticalParams) -> EStepMoments:
        m0, m1, m2 = self.integrator.weighted_moments(theta)
        estimate = self.integrator.estimate(theta)
        outside = 1.0 - estimate.estimate
        if outside <= 0:
            raise EStepStarvationError(0, self.integrator.n_nodes, 1.0)
        # E[u] = 1, E[uX] = mu, E[u(X - mu)(X - mu)^T] = Sigma for both families
        full2 = theta.sigma + np.outer(theta.mu, theta.mu)
        return EStepMoments(
            e0=(1.0 - m0) / outside,
            e1=(theta.mu - m1) / outside,
            e2=(full2 - m2) / outside,
            outside_mass=outside,
            outside_stderr=estimate.std_error,
        )


def em_update(theta: EllipticalParams, sample: TrimmedSample, family: RadialFamily,
              moments: EStepMoments) -> EllipticalParams:
    """M-step from completed weighted sufficient statistics.

    Gaussian weights are identically one, which gives the closed-form mean
    and covariance update; for Student t this is one fixed-point pass.
    """
    x = sample.inside
    u = family.weight(mahalanobis_sq(theta, x), theta.p) if sample.m else np.zeros(0)
    k = sample.n_outside

    s0 = float(np.sum(u)) + k * moments.e0
    s1 = u @ x + k * moments.e1
    s2 = (x * u[:, None]).T @ x + k * moments.e2

    mu = s1 / s0
    scatter = s2 - np.outer(mu, s1) - np.outer(s1, mu) + s0 * np.outer(mu, mu)
    sigma = scatter / sample.n_total
    return EllipticalParams.from_sigma(mu, 0.5 * (sigma + sigma.T))


def _ascent_value(theta: EllipticalParams, obj: Objective, moments: EStepMoments) -> Tuple[float, float]:
    """Censored log-likelihood with the E-step's own outside mass, and its MC stderr."""
    k = obj.sample.n_outside
    inside = obj.inside_loglik(theta)
    if k == 0:
        return inside, 0.0
    mass = moments.outside_mass
    if mass <= 0:
        return -math.inf, 0.0
    return inside + k * math.log(mass), k * moments.outside_stderr / mass


def _run_em(sample: TrimmedSample, family: RadialFamily, cfg: FitConfig, obj: Objective,
            theta: EllipticalParams) -> Tuple[EllipticalParams, int, bool, List[float], int]:
    if cfg.e_step == EStepMethod.COMPLEMENT:
        e_step = ComplementEStep(obj.integrator)
    else:
        e_step = RejectionEStep(family, sample.region, cfg.em_mc_draws, cfg.seed)

    moments = e_step.moments(theta) if sample.n_outside else None
    history: List[float] = []
    violations = 0
    converged = False
    iterations = 0
    previous = None

    for iterations in range(1, cfg.max_iter + 1):
        if moments is None:
            # nothing censored: one closed-form (Gaussian) or fixed-point (t) update
            moments = EStepMoments(0.0, np.zeros(sample.p), np.zeros((sample.p, sample.p)), 1.0, 0.0)
        new_theta = em_update(theta, sample, family, moments)
        moments = e_step.moments(new_theta) if sample.n_outside else None

        value, stderr = _ascent_value(new_theta, obj, moments) if moments else (obj.inside_loglik(new_theta), 0.0)
        if previous is not None:
            slack = ASCENT_SLACK * (stderr + previous[1]) + 1e-9 * max(1.0, abs(value))
            if value < previous[0] - slack:
                violations += 1
                logger.warning(f"EM ascent violated at iteration {iterations}: {previous[0]:.6f} -> {value:.6f}")
        previous = (value, stderr)
        history.append(value)

        step = float(np.max(np.abs(new_theta.to_vector() - theta.to_vector())))
        theta = new_theta
        logger.debug(f"EM iteration {iterations}: loglik={value:.6f}, step={step:.3g}")
        if step < cfg.param_tol:
            converged = True
            break

    return theta, iterations, converged, history, violations


def fit_censored(sample: TrimmedSample, family: RadialFamily,
                 cfg: Optional[FitConfig] = None) -> FitResult:
    """
    MLE(c): Monte-Carlo EM (default) or direct quasi-Newton maximization.

    Args:
        sample: Trimmed sample
        family: Radial family
        cfg: Maximizer settings, including the E-step method

    Returns:
        FitResult for variant c with the log-likelihood re-evaluated on a
        larger, independent Monte-Carlo budget
    """
    cfg = cfg or FitConfig()
    cfg.validate()
    check_counts(sample, family)
    p = sample.p

    obj = _objective(Variant.CENSORED, sample, family, cfg)
    theta0 = initial_theta(sample, family, cfg)
    logger.info(f"Fitting MLE(c) by {cfg.optimizer.value}: m={sample.m}, n_outside={sample.n_outside}, p={p}")

    violations = 0
    if cfg.optimizer == OptimizerKind.QUASI_NEWTON:
        evaluate = _vector_objective(lambda th: censored_value_and_gradient(obj, th), p)
        result = maximize(evaluate, theta0.to_vector(), cfg.max_iter, cfg.param_tol)
        if result.status == 3:
            raise InfeasibleStartError("Censored likelihood is -inf at the starting point")
        theta_hat = EllipticalParams.from_vector(result.x, p)
        iterations, converged, history = result.iterations, result.converged, result.history
    else:
        theta_hat, iterations, converged, history, violations = _run_em(sample, family, cfg, obj, theta0)
        if violations:
            converged = False

    if not converged:
        logger.warning(f"MLE(c) did not converge in {iterations} iterations")

    final_obj = Objective(Variant.CENSORED, family, sample, prob_seed=cfg.seed + 1,
                          prob_draws=FINAL_BUDGET_FACTOR * cfg.prob_draws)
    mass = final_obj.region_mass(theta_hat)
    return FitResult(
        theta_hat=theta_hat,
        variant=EstimatorVariant.CENSORED,
        loglik=loglik_censored(final_obj, theta_hat),
        iterations=iterations,
        converged=converged,
        region_mass=mass.estimate,
        region_mass_stderr=mass.std_error,
        history=tuple(history),
        ascent_violations=violations,
    )


def _restricted_start(sample: TrimmedSample, family: RadialFamily, cfg: FitConfig,
                      obj: Objective, alpha: float) -> EllipticalParams:
    if cfg.init == InitKind.USER_SUPPLIED:
        theta0 = initial_theta(sample, family, cfg)
        if obj.integrator.mass(theta0) < alpha:
            raise InfeasibleStartError(f"Initial parameter has P(A) below alpha={alpha}")
        return theta0

    coverage = max(min(max(sample.empirical_inside_fraction, 0.05), 0.995), 0.5 * (1.0 + alpha))
    for _ in range(8):
        theta0 = initial_theta(sample, family, cfg, coverage)
        if obj.integrator.mass(theta0) > alpha:
            return theta0
        coverage = 0.5 * (1.0 + coverage)
    raise InfeasibleStartError(f"Could not find a start with P(A) above alpha={alpha}")


def fit_restricted(sample: TrimmedSample, family: RadialFamily, alpha: float,
                   cfg: Optional[FitConfig] = None) -> FitResult:
    """
    MLE(r): truncated likelihood maximized over {P_theta(A) >= alpha}.

    A log barrier with a decreasing weight keeps iterates feasible; the
    returned fit reports whether the constraint is active.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError([f"alpha must lie in (0, 1), got {alpha}"])
    cfg = cfg or FitConfig()
    cfg.validate()
    check_counts(sample, family)
    p = sample.p

    obj = _objective(Variant.TRUNCATED, sample, family, cfg)
    theta = _restricted_start(sample, family, cfg, obj, alpha)

    def barrier(weight: float):
        def fn(th: EllipticalParams):
            value, grad = truncated_value_and_gradient(obj, th)
            mass, d_mass = obj.integrator.mass_and_gradient(th)
            slack = mass - alpha
            if slack <= 0 or not np.isfinite(value):
                return -math.inf, np.zeros_like(grad)
            return (value + weight * math.log(slack),
                    grad + weight * vech_gradient_to_vector(th, d_mass) / slack)
        return fn

    logger.info(f"Fitting MLE(r) with alpha={alpha:.4f}: m={sample.m}, p={p}")
    x = theta.to_vector()
    iterations = 0
    history: List[float] = []
    weight = cfg.barrier_start
    result = None
    while weight >= cfg.barrier_stop:
        result = maximize(_vector_objective(barrier(weight), p), x, cfg.max_iter, cfg.param_tol)
        if result.status == 3:
            raise InfeasibleStartError("Barrier objective is -inf at the stage start")
        x = result.x
        iterations += result.iterations
        history.extend(result.history)
        logger.debug(f"Barrier weight {weight:.1e}: value={result.value:.6f}, {result.message}")
        weight *= cfg.barrier_decay

    theta_hat = EllipticalParams.from_vector(x, p)
    mass = obj.region_mass(theta_hat)
    margin = max(3.0 * obj.integrator.estimate(theta_hat).std_error, 1e-6)
    boundary = mass.estimate <= alpha + margin

    return FitResult(
        theta_hat=theta_hat,
        variant=EstimatorVariant.RESTRICTED,
        loglik=loglik_truncated(obj, theta_hat),
        iterations=iterations,
        converged=bool(result and result.converged),
        alpha_used=alpha,
        region_mass=mass.estimate,
        region_mass_stderr=mass.std_error,
        boundary=boundary,
        history=tuple(history),
    )


def fit_natural_restricted(sample: TrimmedSample, family: RadialFamily,
                           cfg: Optional[FitConfig] = None) -> FitResult:
    """MLE(r) with alpha equal to the observed inside fraction P_n(A)."""
    return fit_restricted(sample, family, sample.empirical_inside_fraction, cfg)


def fit_smart(sample: TrimmedSample, family: RadialFamily,
              cfg: Optional[FitConfig] = None) -> FitResult:
    """
    MLE(s) by the decision rule on pi*.

    A truncated fit (or, when it does not exist, the natural restricted fit)
    with pi* >= 0 gives (theta_t, pi*); otherwise the censored fit with pi = 0.
    """
    cfg = cfg or FitConfig()
    smart_obj = _objective(Variant.SMART, sample, family, cfg)

    candidate: Optional[FitResult] = None
    try:
        candidate = fit_truncated(sample, family, cfg)
    except NonExistenceError as e:
        logger.warning(f"{e}; falling back to the natural restricted fit")
        if sample.empirical_inside_fraction < 1.0:
            candidate = fit_natural_restricted(sample, family, cfg)

    if candidate is not None:
        pi = pi_star(candidate.theta_hat, smart_obj)
        if pi >= 0:
            logger.info(f"MLE(s) takes the truncated branch with pi*={pi:.4f}")
            return replace(
                candidate,
                variant=EstimatorVariant.SMART,
                pi_hat=pi,
                branch=Branch.TRUNCATED,
                loglik=loglik_smart(smart_obj, candidate.theta_hat, pi),
            )
        logger.info(f"pi*={pi:.4f} < 0; MLE(s) takes the censored branch")

    censored = fit_censored(sample, family, cfg)
    return replace(censored, variant=EstimatorVariant.SMART, pi_hat=0.0, branch=Branch.CENSORED)


@dataclass
class PipelineResult:
    """MVE, enlarged region, trimmed sample and the requested fits."""
    mve: Ellipsoid
    region: Ellipsoid
    sample: TrimmedSample
    coverage: float
    fits: Dict[EstimatorVariant, FitResult] = field(default_factory=dict)
    failures: Dict[EstimatorVariant, TrimmedLikelihoodError] = field(default_factory=dict)

    @property
    def nonexistence(self) -> List[EstimatorVariant]:
        return [v for v, e in self.failures.items() if isinstance(e, NonExistenceError)]


def fit_variant(variant: EstimatorVariant, sample: TrimmedSample, family: RadialFamily,
                cfg: FitConfig, alpha_restrict: Optional[float] = None) -> FitResult:
    if variant == EstimatorVariant.TRUNCATED:
        return fit_truncated(sample, family, cfg)
    if variant == EstimatorVariant.CENSORED:
        return fit_censored(sample, family, cfg)
    if variant == EstimatorVariant.RESTRICTED:
        if alpha_restrict is None:
            return fit_natural_restricted(sample, family, cfg)
        return fit_restricted(sample, family, alpha_restrict, cfg)
    return fit_smart(sample, family, cfg)


def fit_pipeline(data, family: RadialFamily, coverage: float,
                 variants: Sequence[EstimatorVariant],
                 mve_cfg: Optional[MveConfig] = None,
                 fit_cfg: Optional[FitConfig] = None,
                 alpha_restrict: Optional[float] = None) -> PipelineResult:
    """
    MVE -> enlarge -> trim -> fit each requested variant.

    Per-variant failures are collected in the result instead of raised.
    """
    fit_cfg = fit_cfg or FitConfig()
    mve_region = sample_mve(data, mve_cfg)
    region = enlarge(mve_region, family, coverage)
    trimmed = trim(data, region)
    logger.info(f"Trimmed sample: {trimmed.m} inside, {trimmed.n_outside} outside (coverage {coverage})")

    result = PipelineResult(mve=mve_region, region=region, sample=trimmed, coverage=coverage)
    for variant in variants:
        try:
            result.fits[variant] = fit_variant(variant, trimmed, family, fit_cfg, alpha_restrict)
        except TrimmedLikelihoodError as e:
            logger.error(f"Variant {variant.value} failed: {e}")
            result.failures[variant] = e
    return result
