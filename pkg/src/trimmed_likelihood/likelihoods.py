"""
Trimmed Likelihoods
===================

Truncated, censored and gross-error ("smart") log-likelihoods on a trimmed
sample, the profiled contamination fraction pi*(theta) and the restricted
feasible set.
"""

import logging
import math
from enum import Enum
from typing import Tuple

import numpy as np

from .elliptical import (
    EllipticalParams,
    IntegrationMethod,
    ProbabilityEstimate,
    RadialFamily,
    RegionIntegrator,
    log_density,
    region_probability,
    score,
    vech_gradient_to_vector,
)
from .exceptions import DimensionMismatchError
from .mve import TrimmedSample

logger = logging.getLogger(__name__)

# Sentinel for the truncated likelihood when P_theta(A) = 0; never NaN.
INFEASIBLE = -math.inf


class Variant(Enum):
    TRUNCATED = "t"
    CENSORED = "c"
    SMART = "s"


class Objective:
    """Trimmed log-likelihood evaluator.

    Region probabilities come from a RegionIntegrator whose directions are fixed by
    prob_seed, so repeated evaluations at the same theta agree exactly.
    Public values use the exact aligned probability when theta happens to be
    aligned with the region; the *_value_and_gradient functions always use the
    integrator so the surface stays smooth for the maximizers.
    """

    def __init__(self, variant: Variant, family: RadialFamily, sample: TrimmedSample,
                 prob_seed: int = 0, prob_draws: int = 20_000):
        self.variant = variant
        self.family = family
        self.sample = sample
        self.prob_seed = prob_seed
        self.prob_draws = prob_draws
        self.integrator = RegionIntegrator(family, sample.region, prob_draws, prob_seed)

    @property
    def p(self) -> int:
        return self.sample.p

    def _check(self, theta: EllipticalParams) -> None:
        if theta.p != self.p:
            raise DimensionMismatchError(f"theta has dimension {theta.p}, sample has {self.p}")

    def region_mass(self, theta: EllipticalParams) -> ProbabilityEstimate:
        self._check(theta)
        if self.sample.region.aligned_radius(theta) is not None:
            return region_probability(self.family, theta, self.sample.region,
                                      self.prob_draws, self.prob_seed, IntegrationMethod.AUTO)
        return self.integrator.estimate(theta)

    def outside_mass(self, theta: EllipticalParams) -> float:
        """P_theta(A^c), exact when theta is aligned with the region."""
        self._check(theta)
        aligned = self.sample.region.aligned_radius(theta)
        if aligned is not None:
            return float(self.family.radius_sf(aligned, self.p))
        return self.integrator.outside_mass(theta)

    def inside_loglik(self, theta: EllipticalParams) -> float:
        if self.sample.m == 0:
            return 0.0
        return float(np.sum(log_density(self.family, theta, self.sample.inside)))

    def inside_score(self, theta: EllipticalParams) -> np.ndarray:
        if self.sample.m == 0:
            return np.zeros(len(theta.to_vector()))
        return np.sum(score(self.family, theta, self.sample.inside), axis=0)

    def evaluate(self, theta: EllipticalParams, pi: float = 0.0) -> float:
        if self.variant == Variant.TRUNCATED:
            return loglik_truncated(self, theta)
        if self.variant == Variant.CENSORED:
            return loglik_censored(self, theta)
        return loglik_smart(self, theta, pi)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _censored_term(n_outside: int, outside_mass: float) -> float:
    # 0 * log(0) is taken as 0
    if n_outside == 0:
        return 0.0
    return n_outside * _log(outside_mass)


def loglik_truncated(obj: Objective, theta: EllipticalParams) -> float:
    """Sum over inside points of log f_theta(x) - log P_theta(A)."""
    mass = obj.region_mass(theta).estimate
    if mass <= 0:
        return INFEASIBLE
    return obj.inside_loglik(theta) - obj.sample.m * math.log(mass)


def loglik_censored(obj: Objective, theta: EllipticalParams) -> float:
    """Inside log-density plus n_outside log P_theta(A^c)."""
    return obj.inside_loglik(theta) + _censored_term(obj.sample.n_outside, obj.outside_mass(theta))


def loglik_smart(obj: Objective, theta: EllipticalParams, pi: float) -> float:
    """Gross-error log-likelihood with the outside mass (1 - pi) P_theta(A^c) + pi."""
    if not 0.0 <= pi < 1.0:
        raise ValueError(f"pi must lie in [0, 1), got {pi}")
    inside = obj.inside_loglik(theta) + obj.sample.m * math.log1p(-pi)
    return inside + _censored_term(obj.sample.n_outside, (1.0 - pi) * obj.outside_mass(theta) + pi)


def pi_star(theta: EllipticalParams, obj: Objective) -> float:
    """(P_theta(A) - P_n(A)) / P_theta(A); negative values are allowed."""
    mass = obj.region_mass(theta).estimate
    if mass <= 0:
        raise ValueError("pi* is undefined when P_theta(A) = 0")
    return (mass - obj.sample.empirical_inside_fraction) / mass


def optimal_pi(theta: EllipticalParams, obj: Objective) -> float:
    """Maximizer of loglik_smart over pi in [0, 1) for fixed theta."""
    return max(0.0, pi_star(theta, obj))


def feasible_restricted(theta: EllipticalParams, obj: Objective, alpha: float) -> bool:
    """theta lies in the closed set {P_theta(A) >= alpha}."""
    return obj.region_mass(theta).estimate >= alpha


def truncated_value_and_gradient(obj: Objective, theta: EllipticalParams) -> Tuple[float, np.ndarray]:
    """Smooth truncated log-likelihood and its gradient in to_vector() coordinates."""
    log_mass, ratio = obj.integrator.log_mass_and_gradient(theta)
    if not np.isfinite(log_mass):
        return INFEASIBLE, np.zeros(len(theta.to_vector()))
    m = obj.sample.m
    value = obj.inside_loglik(theta) - m * log_mass
    grad = obj.inside_score(theta) - m * ratio
    return value, vech_gradient_to_vector(theta, grad)


def _outside_value_and_gradient(obj: Objective, theta: EllipticalParams,
                                pi: float) -> Tuple[float, np.ndarray]:
    """n_outside * log((1 - pi)(1 - P) + pi) and its theta-gradient in vech coordinates."""
    k = len(theta.to_vector())
    n_out = obj.sample.n_outside
    if n_out == 0:
        return 0.0, np.zeros(k)
    complement, d_complement = obj.integrator.outside_mass_and_gradient(theta)
    outside = (1.0 - pi) * complement + pi
    if outside <= 0:
        return INFEASIBLE, np.zeros(k)
    grad = n_out * (1.0 - pi) * d_complement / outside
    return n_out * math.log(outside), grad


def censored_value_and_gradient(obj: Objective, theta: EllipticalParams) -> Tuple[float, np.ndarray]:
    outside, d_outside = _outside_value_and_gradient(obj, theta, 0.0)
    if not np.isfinite(outside):
        return INFEASIBLE, np.zeros(len(theta.to_vector()))
    value = obj.inside_loglik(theta) + outside
    grad = obj.inside_score(theta) + d_outside
    return value, vech_gradient_to_vector(theta, grad)


def smart_value_and_gradient(obj: Objective, theta: EllipticalParams,
                             pi: float) -> Tuple[float, np.ndarray]:
    if not 0.0 <= pi < 1.0:
        raise ValueError(f"pi must lie in [0, 1), got {pi}")
    outside, d_outside = _outside_value_and_gradient(obj, theta, pi)
    if not np.isfinite(outside):
        return INFEASIBLE, np.zeros(len(theta.to_vector()))
    value = obj.inside_loglik(theta) + obj.sample.m * math.log1p(-pi) + outside
    grad = obj.inside_score(theta) + d_outside
    return value, vech_gradient_to_vector(theta, grad)


def smooth_value(obj: Objective, theta: EllipticalParams, pi: float = 0.0) -> float:
    """Objective value through the integrator only (the surface the maximizers see)."""
    if obj.variant == Variant.TRUNCATED:
        return truncated_value_and_gradient(obj, theta)[0]
    if obj.variant == Variant.CENSORED:
        return censored_value_and_gradient(obj, theta)[0]
    return smart_value_and_gradient(obj, theta, pi)[0]
