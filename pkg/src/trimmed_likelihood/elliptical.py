"""
Elliptical Families
===================

Radial density families, parameter containers, ellipsoid geometry, sampling
and region-probability evaluation used by every estimator in the package.
"""

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import betaln, gammaln

from .exceptions import (
    ConfigurationError,
    DegenerateRegionError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
)

logger = logging.getLogger(__name__)

MIN_MC_DRAWS = 1000
ALIGN_TOL = 1e-9
MEMBERSHIP_TOL = 1e-12
GAUSS_LEGENDRE_NODES = 96


class FamilyKind(Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "t"


@dataclass(frozen=True)
class RadialFamily:
    """Radial generator g of an elliptical law, normalized so f_theta is a density.

    The dimension p enters the normalization, so every method takes it
    explicitly.
    """
    kind: FamilyKind
    nu: Optional[float] = None

    def __post_init__(self):
        if self.kind == FamilyKind.STUDENT_T:
            if self.nu is None or not np.isfinite(self.nu) or self.nu <= 0:
                raise ValueError(f"Student t family needs a positive finite nu, got {self.nu}")
        elif self.nu is not None:
            raise ValueError("Gaussian family takes no degrees of freedom")

    @classmethod
    def gaussian(cls) -> "RadialFamily":
        return cls(FamilyKind.GAUSSIAN)

    @classmethod
    def student_t(cls, nu: float) -> "RadialFamily":
        return cls(FamilyKind.STUDENT_T, float(nu))

    @property
    def is_gaussian(self) -> bool:
        return self.kind == FamilyKind.GAUSSIAN

    @property
    def label(self) -> str:
        return "gaussian" if self.is_gaussian else f"t:{self.nu:g}"

    def log_g(self, s, p: int):
        """Log generator at squared Mahalanobis distance s."""
        s = np.asarray(s, dtype=float)
        if self.is_gaussian:
            return -0.5 * p * math.log(2.0 * math.pi) - 0.5 * s
        nu = self.nu
        log_norm = gammaln(0.5 * (nu + p)) - gammaln(0.5 * nu) - 0.5 * p * math.log(nu * math.pi)
        return log_norm - 0.5 * (nu + p) * np.log1p(s / nu)

    def dlog_g(self, s, p: int):
        """Derivative of log g with respect to s."""
        s = np.asarray(s, dtype=float)
        if self.is_gaussian:
            return np.full_like(s, -0.5)
        return -0.5 * (self.nu + p) / (self.nu + s)

    def weight(self, s, p: int):
        """EM weight -2 dlog_g(s); identically 1 for the Gaussian."""
        return -2.0 * self.dlog_g(s, p)

    def radius_cdf(self, r, p: int):
        r2 = np.square(np.asarray(r, dtype=float))
        if self.is_gaussian:
            return stats.chi2.cdf(r2, p)
        return stats.f.cdf(r2 / p, p, self.nu)

    def radius_sf(self, r, p: int):
        r2 = np.square(np.asarray(r, dtype=float))
        if self.is_gaussian:
            return stats.chi2.sf(r2, p)
        return stats.f.sf(r2 / p, p, self.nu)

    def radius_pdf(self, r, p: int):
        r = np.asarray(r, dtype=float)
        if self.is_gaussian:
            return 2.0 * r * stats.chi2.pdf(r * r, p)
        return 2.0 * r / p * stats.f.pdf(r * r / p, p, self.nu)

    def radius_between(self, lo, hi, p: int):
        """P(lo < R <= hi), from tail areas when lo is past the median."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        below = self.radius_cdf(lo, p)
        central = self.radius_cdf(hi, p) - below
        tail = self.radius_sf(lo, p) - self.radius_sf(hi, p)
        return np.clip(np.where(below > 0.5, tail, central), 0.0, 1.0)

    def radius_outside(self, lo, hi, p: int):
        """P(R <= lo or R > hi) = 1 - radius_between(lo, hi)."""
        return np.clip(self.radius_cdf(lo, p) + self.radius_sf(hi, p), 0.0, 1.0)

    def weighted_radial_moment(self, lo, hi, p: int, k: int):
        """E[w(R^2) R^k ; lo < R <= hi] with w = weight, for k in 0, 1, 2.

        w(r^2) r^k times the radius density is proportional to the radius
        density of the same family in dimension p + k; for Student t the
        degrees of freedom become nu + 2 - k and the radius is rescaled.
        """
        if k not in (0, 1, 2):
            raise ValueError(f"Radial moment order must be 0, 1 or 2, got {k}")
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.is_gaussian:
            log_total = 0.5 * k * math.log(2.0) + gammaln(0.5 * (p + k)) - gammaln(0.5 * p)
            return math.exp(log_total) * self.radius_between(lo, hi, p + k)
        nu = self.nu
        nu_k = nu + 2.0 - k
        log_total = (math.log((nu + p) / nu) + 0.5 * k * math.log(nu)
                     + betaln(0.5 * (p + k), 0.5 * nu_k) - betaln(0.5 * p, 0.5 * nu))
        stretch = math.sqrt(nu / nu_k)
        tilted = RadialFamily.student_t(nu_k)
        return math.exp(log_total) * tilted.radius_between(lo / stretch, hi / stretch, p + k)

    def radius_quantile(self, q, p: int):
        q = np.asarray(q, dtype=float)
        if self.is_gaussian:
            return np.sqrt(stats.chi2.ppf(q, p))
        return np.sqrt(p * stats.f.ppf(q, p, self.nu))

    def gp_exponent(self, p: int) -> float:
        """Tail exponent gamma with r^gamma g(r) -> 0 (infinite for the Gaussian)."""
        if self.is_gaussian:
            return math.inf
        return 0.5 * (self.nu + p)

    @classmethod
    def parse(cls, text: str) -> "RadialFamily":
        """Parse 'gaussian', 't:5' or 't5' into a family."""
        token = str(text).strip().lower()
        match = re.fullmatch(r"([a-z_]+):?([0-9.eE+-]*)", token)
        if not match or match.group(1) not in FAMILY_REGISTRY:
            raise ValueError(f"Unsupported family '{text}'")
        name, arg = match.groups()
        try:
            return FAMILY_REGISTRY[name](float(arg) if arg else None)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Unsupported family '{text}': {e}") from e


def _make_gaussian(arg: Optional[float]) -> RadialFamily:
    if arg is not None:
        raise ValueError("gaussian takes no parameter")
    return RadialFamily.gaussian()


def _make_student_t(arg: Optional[float]) -> RadialFamily:
    if arg is None:
        raise ValueError("t family needs degrees of freedom, e.g. t:5")
    return RadialFamily.student_t(arg)


FAMILY_REGISTRY: Dict[str, Callable[[Optional[float]], RadialFamily]] = {
    "gaussian": _make_gaussian,
    "normal": _make_gaussian,
    "t": _make_student_t,
    "student": _make_student_t,
}


def n_params(p: int) -> int:
    """Number of free parameters of (mu, Sigma) in dimension p."""
    return p + p * (p + 1) // 2


def vech(matrix: np.ndarray) -> np.ndarray:
    rows, cols = np.tril_indices(matrix.shape[-1])
    return matrix[..., rows, cols]


def unvech(values: np.ndarray, p: int) -> np.ndarray:
    rows, cols = np.tril_indices(p)
    out = np.zeros((p, p))
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def vech_basis(p: int) -> list:
    """Symmetric direction matrices E_k, one per vech coordinate."""
    basis = []
    for i, j in zip(*np.tril_indices(p)):
        e = np.zeros((p, p))
        e[i, j] = 1.0
        e[j, i] = 1.0
        basis.append(e)
    return basis


def vech_labels(p: int) -> list:
    mu = [f"mu{i + 1}" for i in range(p)]
    sigma = [f"sigma{i + 1}{j + 1}" for i, j in zip(*np.tril_indices(p))]
    return mu + sigma


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EllipticalParams:
    """Location mu and scatter Sigma = L L^T carried by its Cholesky factor L."""
    mu: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        chol = np.tril(np.array(self.chol, dtype=float))
        p = mu.shape[0]
        if chol.shape != (p, p):
            raise DimensionMismatchError(f"mu has length {p} but the factor has shape {chol.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(chol))):
            raise NotPositiveDefiniteError("Parameters contain non-finite values")
        if np.any(np.diag(chol) <= 0):
            raise NotPositiveDefiniteError("Cholesky factor needs a positive diagonal")
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "chol", _readonly(chol))

    @classmethod
    def from_sigma(cls, mu, sigma) -> "EllipticalParams":
        mu = np.array(mu, dtype=float).reshape(-1)
        sigma = np.array(sigma, dtype=float)
        p = mu.shape[0]
        if sigma.shape != (p, p):
            raise DimensionMismatchError(f"mu has length {p} but sigma has shape {sigma.shape}")
        scale = max(np.max(np.abs(sigma)), 1e-300)
        if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12 * scale):
            raise NotPositiveDefiniteError("sigma is not symmetric")
        try:
            chol = np.linalg.cholesky(0.5 * (sigma + sigma.T))
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"sigma is not positive-definite: {e}") from e
        return cls(mu, chol)

    @classmethod
    def standard(cls, p: int) -> "EllipticalParams":
        return cls(np.zeros(p), np.eye(p))

    @classmethod
    def from_vector(cls, vector, p: int) -> "EllipticalParams":
        """Inverse of to_vector: mu followed by the factor entries, log on the diagonal."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (n_params(p),):
            raise DimensionMismatchError(f"Expected {n_params(p)} parameters, got {vector.shape}")
        rows, cols = np.tril_indices(p)
        entries = vector[p:].copy()
        diagonal = rows == cols
        with np.errstate(over="ignore"):
            entries[diagonal] = np.exp(entries[diagonal])
        chol = np.zeros((p, p))
        chol[rows, cols] = entries
        return cls(vector[:p], chol)

    def to_vector(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.p)
        entries = self.chol[rows, cols].copy()
        diagonal = rows == cols
        entries[diagonal] = np.log(entries[diagonal])
        return np.concatenate([self.mu, entries])

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @property
    def sigma_inv(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(self.p))

    @property
    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    @property
    def scale(self) -> float:
        """varsigma^2 = |Sigma|^(1/p)."""
        return math.exp(self.log_det / self.p)

    @property
    def shape_matrix(self) -> np.ndarray:
        """Xi = Sigma / |Sigma|^(1/p), determinant one."""
        return self.sigma / self.scale

    def affine(self, a, b) -> "EllipticalParams":
        """Parameters of A X + b when X has parameters self."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        sigma = a @ self.sigma @ a.T
        return EllipticalParams.from_sigma(a @ self.mu + b, 0.5 * (sigma + sigma.T))

    def to_dict(self) -> Dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    def __repr__(self) -> str:
        return f"EllipticalParams(mu={self.mu.tolist()}, sigma={self.sigma.tolist()})"


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """E = {x : (x - center)^T shape^-1 (x - center) <= radius^2}."""
    center: np.ndarray
    shape: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        shape = np.array(self.shape, dtype=float)
        p = center.shape[0]
        if shape.shape != (p, p):
            raise DimensionMismatchError(f"center has length {p} but shape is {shape.shape}")
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise DegenerateRegionError(f"Ellipsoid radius must be positive, got {self.radius}")
        shape = 0.5 * (shape + shape.T)
        try:
            chol = np.linalg.cholesky(shape)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Ellipsoid shape is not positive-definite: {e}") from e
        object.__setattr__(self, "center", _readonly(center))
        object.__setattr__(self, "shape", _readonly(shape))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "_chol", _readonly(chol))

    @property
    def p(self) -> int:
        return self.center.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    @property
    def log_volume(self) -> float:
        p = self.p
        log_unit_ball = 0.5 * p * math.log(math.pi) - gammaln(0.5 * p + 1.0)
        log_det = 2.0 * np.sum(np.log(np.diag(self._chol)))
        return float(p * math.log(self.radius) + 0.5 * log_det + log_unit_ball)

    @property
    def volume(self) -> float:
        return math.exp(self.log_volume)

    def maha_sq(self, x) -> np.ndarray:
        points, single = _as_points(x, self.p)
        z = solve_triangular(self._chol, (points - self.center).T, lower=True)
        d2 = np.sum(z * z, axis=0)
        return float(d2[0]) if single else d2

    def contains(self, x):
        """Closed membership; points on the surface count as inside."""
        d2 = self.maha_sq(x)
        return d2 <= self.radius ** 2 * (1.0 + MEMBERSHIP_TOL)

    def aligned_radius(self, theta: EllipticalParams) -> Optional[float]:
        """Radius in Sigma-metric when the ellipsoid is theta-aligned, else None.

        Aligned means same center and shape = c * Sigma; the region is then
        {maha_theta <= c * radius^2}.
        """
        if theta.p != self.p:
            raise DimensionMismatchError(f"theta has dimension {theta.p}, region has {self.p}")
        if not np.allclose(self.center, theta.mu, rtol=0.0,
                           atol=ALIGN_TOL * (1.0 + np.max(np.abs(theta.mu)))):
            return None
        sigma = theta.sigma
        c = float(np.trace(cho_solve((theta.chol, True), self.shape))) / self.p
        if np.linalg.norm(self.shape - c * sigma) > ALIGN_TOL * np.linalg.norm(self.shape):
            return None
        return self.radius * math.sqrt(c)

    def affine(self, a, b) -> "Ellipsoid":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        return Ellipsoid(a @ self.center + b, a @ self.shape @ a.T, self.radius)

    def scaled(self, factor: float) -> "Ellipsoid":
        return Ellipsoid(self.center, self.shape, self.radius * factor)

    def to_dict(self) -> Dict:
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "radius": self.radius,
        }


def _as_points(x, p: int) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != p:
        raise DimensionMismatchError(f"Expected points of dimension {p}, got shape {np.shape(x)}")
    return points, single


def mahalanobis_sq(theta: EllipticalParams, x):
    """(x - mu)^T Sigma^-1 (x - mu) for one point or each row of a matrix."""
    points, single = _as_points(x, theta.p)
    z = solve_triangular(theta.chol, (points - theta.mu).T, lower=True)
    d2 = np.sum(z * z, axis=0)
    return float(d2[0]) if single else d2


def log_density(family: RadialFamily, theta: EllipticalParams, x):
    s = mahalanobis_sq(theta, x)
    return -0.5 * theta.log_det + family.log_g(s, theta.p)


def score(family: RadialFamily, theta: EllipticalParams, x) -> np.ndarray:
    """Gradient of log f_theta(x) in (mu, vech Sigma) coordinates.

    A vech coordinate for an off-diagonal entry moves Sigma_ij and Sigma_ji
    together.
    """
    p = theta.p
    points, single = _as_points(x, p)
    resid = points - theta.mu
    z = cho_solve((theta.chol, True), resid.T).T
    s = np.sum(resid * z, axis=1)
    psi = family.dlog_g(s, p)

    d_mu = -2.0 * psi[:, None] * z
    grad = -0.5 * theta.sigma_inv[None, :, :] - psi[:, None, None] * z[:, :, None] * z[:, None, :]
    rows, cols = np.tril_indices(p)
    d_sigma = grad[:, rows, cols] * np.where(rows == cols, 1.0, 2.0)

    out = np.hstack([d_mu, d_sigma])
    return out[0] if single else out


def vech_gradient_to_vector(theta: EllipticalParams, grad: np.ndarray) -> np.ndarray:
    """Chain rule from (mu, vech Sigma) to the (mu, log-Cholesky) vector of to_vector()."""
    p = theta.p
    grad = np.asarray(grad, dtype=float)
    rows, cols = np.tril_indices(p)
    diagonal = rows == cols
    halves = np.where(diagonal, 1.0, 0.5)

    g_sigma = np.zeros(grad.shape[:-1] + (p, p))
    g_sigma[..., rows, cols] = grad[..., p:] * halves
    g_sigma[..., cols, rows] = grad[..., p:] * halves

    d_chol = 2.0 * g_sigma @ theta.chol
    d_entries = d_chol[..., rows, cols]
    d_entries[..., diagonal] *= theta.chol[rows[diagonal], cols[diagonal]]
    return np.concatenate([grad[..., :p], d_entries], axis=-1)


def standard_draws(family: RadialFamily, p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from P_(0, I): uniform direction times a radius from radius_quantile."""
    direction = rng.standard_normal((n, p))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = family.radius_quantile(rng.random(n), p)
    return direction * radius[:, None]


def sample(family: RadialFamily, theta: EllipticalParams, n: int, seed=None) -> np.ndarray:
    """n i.i.d. draws from P_theta; deterministic for a fixed seed."""
    if n < 1:
        raise ValueError(f"Sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    z = standard_draws(family, theta.p, n, rng)
    return theta.mu + z @ theta.chol.T


def unit_directions(p: int, n: int, seed=None) -> np.ndarray:
    """n directions on the unit sphere as n // 2 antithetic pairs (u, -u)."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n // 2, p))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.vstack([u, -u])


class ProbabilityEstimate(NamedTuple):
    estimate: float
    std_error: float
    exact: bool


class IntegrationMethod(Enum):
    AUTO = "auto"  # exact when aligned or p = 1, fixed-direction integration otherwise
    SMOOTH = "smooth"  # always the fixed-direction integrator
    HIT_OR_MISS = "hit_or_miss"  # independent draws from P_theta


class _Rays(NamedTuple):
    v: np.ndarray  # L u for every direction
    offset: np.ndarray  # mu - region center
    lo: np.ndarray  # radius where the ray enters the region (0 when it starts inside)
    hi: np.ndarray  # radius where it leaves; lo = hi = 0 on a miss


class RegionIntegrator:
    """Region integrals of f_theta that are smooth in theta.

    For p = 1 the region is an interval: Gauss-Legendre nodes carry the
    moments and the probability itself comes from the one-dimensional CDF.
    For p >= 2 a fixed set of antithetic unit directions u_i is drawn once.
    Along x = mu + r L u_i the region is an interval [lo_i, hi_i] of r, and
    each direction contributes the exact radial mass P(lo_i < R <= hi_i), so
    every contribution lies in [0, 1] and only the directions are random.
    """

    def __init__(self, family: RadialFamily, region: Ellipsoid, n_nodes: int = 20_000, seed=0):
        self.family = family
        self.region = region
        self.p = region.p

        if self.p == 1:
            t, w = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_NODES)
            half = region.radius * math.sqrt(region.shape[0, 0])
            center = region.center[0]
            self.interval = (center - half, center + half)
            self.nodes = (center + half * t)[:, None]
            self.weights = half * w
            self.exact = True
            self.n_nodes = self.nodes.shape[0]
        else:
            if n_nodes < MIN_MC_DRAWS:
                raise ConfigurationError([f"Region integration needs at least {MIN_MC_DRAWS} nodes, got {n_nodes}"])
            self.interval = None
            self.directions = unit_directions(self.p, n_nodes, seed)
            self.exact = False
            self.n_nodes = self.directions.shape[0]
            self._precision = cho_solve((region.chol, True), np.eye(self.p)) / region.radius ** 2

    def _check(self, theta: EllipticalParams) -> None:
        if theta.p != self.p:
            raise DimensionMismatchError(f"theta has dimension {theta.p}, region has {self.p}")

    def _rays(self, theta: EllipticalParams) -> _Rays:
        # (offset + r v)^T P (offset + r v) = 1 solved for r, one quadratic per direction
        v = self.directions @ theta.chol.T
        offset = theta.mu - self.region.center
        pv = v @ self._precision
        a = np.sum(v * pv, axis=1)
        b = pv @ offset
        c = float(offset @ self._precision @ offset) - 1.0
        disc = b * b - a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        q = -(b + np.where(b >= 0, root, -root))
        first = q / a
        second = np.divide(c, q, out=np.zeros_like(q), where=q != 0)
        hi = np.maximum(first, second)
        lo = np.minimum(first, second)
        hit = (disc > 0) & (hi > 0)
        return _Rays(v, offset, np.where(hit, np.maximum(lo, 0.0), 0.0), np.where(hit, hi, 0.0))

    def contributions(self, theta: EllipticalParams) -> np.ndarray:
        """Per-pair masses (p >= 2); their mean is the region probability."""
        self._check(theta)
        rays = self._rays(theta)
        values = self.family.radius_between(rays.lo, rays.hi, self.p)
        half = self.n_nodes // 2
        return 0.5 * (values[:half] + values[half:])

    def node_values(self, theta: EllipticalParams) -> np.ndarray:
        """w_i f_theta(x_i) for every Gauss-Legendre node (p = 1)."""
        self._check(theta)
        return self.weights * np.exp(log_density(self.family, theta, self.nodes))

    def _interval_z(self, theta: EllipticalParams) -> Tuple[float, float]:
        a, b = self.interval
        sd = theta.chol[0, 0]
        return (a - theta.mu[0]) / sd, (b - theta.mu[0]) / sd

    def _central(self, z: float) -> float:
        return 0.5 * float(self.family.radius_cdf(abs(z), 1))  # P(0 < Z < |z|)

    def _upper(self, z: float) -> float:
        return 0.5 * float(self.family.radius_sf(abs(z), 1))  # P(Z > |z|)

    def _interval_mass(self, theta: EllipticalParams) -> float:
        za, zb = self._interval_z(theta)
        if za < 0 < zb:
            mass = self._central(za) + self._central(zb)
        else:
            lo, hi = sorted((abs(za), abs(zb)))
            # differences of tail areas far out, of central areas near the center
            mass = self._upper(lo) - self._upper(hi) if lo > 1.0 else self._central(hi) - self._central(lo)
        return min(max(mass, 0.0), 1.0)

    def _interval_outside(self, theta: EllipticalParams) -> float:
        za, zb = self._interval_z(theta)
        below = self._upper(za) if za < 0 else 0.5 + self._central(za)
        above = self._upper(zb) if zb > 0 else 0.5 + self._central(zb)
        return min(below + above, 1.0)

    def mass(self, theta: EllipticalParams) -> float:
        self._check(theta)
        if self.p == 1:
            return self._interval_mass(theta)
        return float(np.clip(np.mean(self.contributions(theta)), 0.0, 1.0))

    def outside_mass(self, theta: EllipticalParams) -> float:
        """1 - P_theta(A), summed from the tails so it keeps precision near P = 1."""
        self._check(theta)
        if self.p == 1:
            return self._interval_outside(theta)
        rays = self._rays(theta)
        return float(np.clip(np.mean(self.family.radius_outside(rays.lo, rays.hi, self.p)), 0.0, 1.0))

    def log_mass(self, theta: EllipticalParams) -> float:
        mass = self.mass(theta)
        return math.log(mass) if mass > 0 else -math.inf

    def estimate(self, theta: EllipticalParams) -> ProbabilityEstimate:
        if self.p == 1:
            return ProbabilityEstimate(self.mass(theta), 0.0, True)
        values = self.contributions(theta)
        return ProbabilityEstimate(
            float(np.clip(np.mean(values), 0.0, 1.0)),
            float(np.std(values, ddof=1) / math.sqrt(values.size)),
            False,
        )

    def _interval_gradient(self, theta: EllipticalParams) -> np.ndarray:
        a, b = self.interval
        mu = theta.mu[0]
        var = theta.sigma[0, 0]
        fa, fb = np.exp(log_density(self.family, theta, np.array([[a], [b]])))
        d_mu = fa - fb
        d_var = -((b - mu) * fb - (a - mu) * fa) / (2.0 * var)
        return np.array([d_mu, d_var])

    def _ray_gradient(self, theta: EllipticalParams, rays: _Rays) -> np.ndarray:
        p = self.p
        n = self.n_nodes
        d_mu = np.zeros(p)
        d_chol = np.zeros((p, p))
        # an end point r moves by dr = -n.(dmu + r dL u) / (n.v), n the region normal there
        for r, sign in ((rays.hi, 1.0), (rays.lo, -1.0)):
            active = r > 0
            if not np.any(active):
                continue
            r_a = r[active]
            v = rays.v[active]
            normal = (rays.offset + r_a[:, None] * v) @ self._precision
            slope = np.sum(v * normal, axis=1)
            coef = -sign * self.family.radius_pdf(r_a, p) / (slope * n)
            d_mu += coef @ normal
            d_chol += (normal * (coef * r_a)[:, None]).T @ self.directions[active]

        # chain through the Cholesky factor: dL = L tril_half(L^-1 dSigma L^-T)
        chol_inv = solve_triangular(theta.chol, np.eye(p), lower=True)
        d_sigma = []
        for e in vech_basis(p):
            inner = np.tril(chol_inv @ e @ chol_inv.T)
            inner[np.diag_indices(p)] *= 0.5
            d_sigma.append(float(np.sum(d_chol * (theta.chol @ inner))))
        return np.concatenate([d_mu, d_sigma])

    def mass_and_gradient(self, theta: EllipticalParams) -> Tuple[float, np.ndarray]:
        """P(A) and its gradient in (mu, vech Sigma) coordinates."""
        self._check(theta)
        if self.p == 1:
            return self._interval_mass(theta), self._interval_gradient(theta)
        rays = self._rays(theta)
        mass = float(np.clip(np.mean(self.family.radius_between(rays.lo, rays.hi, self.p)), 0.0, 1.0))
        return mass, self._ray_gradient(theta, rays)

    def outside_mass_and_gradient(self, theta: EllipticalParams) -> Tuple[float, np.ndarray]:
        """1 - P(A) and its gradient in (mu, vech Sigma) coordinates."""
        _, grad = self.mass_and_gradient(theta)
        return self.outside_mass(theta), -grad

    def log_mass_and_gradient(self, theta: EllipticalParams) -> Tuple[float, np.ndarray]:
        """log P(A) and grad P(A) / P(A)."""
        mass, grad = self.mass_and_gradient(theta)
        if mass <= 0:
            return -math.inf, np.zeros(n_params(self.p))
        return math.log(mass), grad / mass

    def weighted_moments(self, theta: EllipticalParams) -> Tuple[float, np.ndarray, np.ndarray]:
        """Integrals over the region of u f, u x f and u x x^T f with u = weight(s)."""
        self._check(theta)
        if self.p == 1:
            values = self.node_values(theta)
            u = self.family.weight(mahalanobis_sq(theta, self.nodes), self.p)
            wu = values * u
            return float(np.sum(wu)), wu @ self.nodes, (self.nodes * wu[:, None]).T @ self.nodes

        # x = mu + R L u along each direction, so the radial moments of order 0, 1, 2 suffice
        rays = self._rays(theta)
        u = self.directions
        w0, w1, w2 = (self.family.weighted_radial_moment(rays.lo, rays.hi, self.p, k) for k in range(3))
        m0 = float(np.mean(w0))
        spread = theta.chol @ (w1 @ u) / self.n_nodes
        second = theta.chol @ ((u * w2[:, None]).T @ u / self.n_nodes) @ theta.chol.T
        mu = theta.mu
        m1 = m0 * mu + spread
        m2 = m0 * np.outer(mu, mu) + np.outer(mu, spread) + np.outer(spread, mu) + second
        return m0, m1, m2


def region_probability(family: RadialFamily, theta: EllipticalParams, region: Ellipsoid,
                       budget: int = 20_000, seed=0,
                       method: IntegrationMethod = IntegrationMethod.AUTO) -> ProbabilityEstimate:
    """P_theta(region) with its Monte-Carlo standard error.

    Args:
        family: Radial family
        theta: Parameters of the law
        region: Ellipsoid to integrate over
        budget: Number of Monte-Carlo draws or nodes (at least 1000)
        seed: Common-random-number key
        method: AUTO is exact for theta-aligned regions and for p = 1

    Returns:
        ProbabilityEstimate (estimate, std_error, exact)
    """
    if region.p != theta.p:
        raise DimensionMismatchError(f"theta has dimension {theta.p}, region has {region.p}")
    if budget < MIN_MC_DRAWS:
        raise ConfigurationError([f"Region probability needs at least {MIN_MC_DRAWS} draws, got {budget}"])

    if method == IntegrationMethod.HIT_OR_MISS:
        draws = sample(family, theta, budget, seed)
        hits = region.contains(draws)
        mass = float(np.mean(hits))
        return ProbabilityEstimate(mass, math.sqrt(max(mass * (1.0 - mass), 1e-300) / budget), False)

    if method == IntegrationMethod.AUTO:
        aligned = region.aligned_radius(theta)
        if aligned is not None:
            return ProbabilityEstimate(float(family.radius_cdf(aligned, theta.p)), 0.0, True)

    return RegionIntegrator(family, region, budget, seed).estimate(theta)


def mve_radius(family: RadialFamily, p: int, coverage: float) -> float:
    """Radius r with radius_cdf(r, p) = coverage; coverage 0.5 gives the MVE."""
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"Coverage must lie in (0, 1), got {coverage}")
    return float(family.radius_quantile(coverage, p))


def gp_exponent(family: RadialFamily, p: int) -> float:
    return family.gp_exponent(p)


@dataclass
class ConditionReport:
    """Family-level validity checks for a given dimension."""
    family: str
    p: int
    strictly_decreasing: bool
    continuous: bool
    tail_exponent: float
    tail_condition: bool
    regularity_integral: float
    regular: bool

    @property
    def all_hold(self) -> bool:
        return self.strictly_decreasing and self.continuous and self.tail_condition and self.regular


def check_conditions(family: RadialFamily, p: int) -> ConditionReport:
    """Check monotonicity, continuity, the tail exponent and score regularity of g."""
    grid = np.concatenate([np.linspace(1e-6, 10.0, 400), np.logspace(1, 6, 100)])
    slope = family.dlog_g(grid, p)
    values = family.log_g(grid, p)
    # adjacent log g values may not jump on the fine part of the grid
    continuous = bool(np.all(np.isfinite(values)) and np.max(np.abs(np.diff(values[:400]))) < 1.0)

    def integrand(r: float) -> float:
        s = r * r
        return float(r ** (p + 1) * (1.0 + s) * family.dlog_g(s, p) ** 2 * np.exp(family.log_g(s, p)))

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
    gamma = family.gp_exponent(p)

    report = ConditionReport(
        family=family.label,
        p=p,
        strictly_decreasing=bool(np.all(slope < 0)),
        continuous=continuous,
        tail_exponent=gamma,
        tail_condition=bool(gamma > 0.5 * p),
        regularity_integral=float(value),
        regular=bool(np.isfinite(value) and value >= 0),
    )
    logger.debug(f"Conditions for {family.label}, p={p}: {report}")
    return report
