import math

import numpy as np
import pytest
from scipy import integrate, stats

from trimmed_likelihood.elliptical import (
    Ellipsoid,
    EllipticalParams,
    IntegrationMethod,
    RadialFamily,
    RegionIntegrator,
    check_conditions,
    log_density,
    mahalanobis_sq,
    mve_radius,
    region_probability,
    sample,
    score,
    unit_directions,
    unvech,
    vech,
    vech_basis,
    vech_gradient_to_vector,
    vech_labels,
)
from trimmed_likelihood.exceptions import (
    ConfigurationError,
    DegenerateRegionError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
)


THETA_2D = EllipticalParams.from_sigma([0.4, -0.3], [[1.5, 0.4], [0.4, 0.8]])


class TestRadialFamily:
    def test_parse(self):
        assert RadialFamily.parse("gaussian").is_gaussian
        assert RadialFamily.parse("t:5").nu == 5
        assert RadialFamily.parse("T5").label == "t:5"

    @pytest.mark.parametrize("text", ["cauchy", "t", "gaussian:3", "t:-1"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            RadialFamily.parse(text)

    def test_mve_radius_constants(self, gaussian):
        assert mve_radius(gaussian, 2, 0.5) == pytest.approx(1.1774, abs=1e-4)
        assert mve_radius(gaussian, 2, 0.975) == pytest.approx(2.7162, abs=1e-4)
        with pytest.raises(ValueError):
            mve_radius(gaussian, 2, 1.0)

    def test_radius_cdf_inverts_quantile(self, t5):
        r = mve_radius(t5, 3, 0.8)
        assert float(t5.radius_cdf(r, 3)) == pytest.approx(0.8, abs=1e-10)
        assert float(t5.radius_sf(r, 3)) == pytest.approx(0.2, abs=1e-10)

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    def test_conditions_hold(self, family):
        report = check_conditions(family, 2)
        assert report.all_hold
        assert report.tail_exponent > 1.0

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    def test_radius_between_and_outside(self, family):
        lo, hi = 0.7, 2.3
        between = family.radius_between(lo, hi, 3)
        assert between == pytest.approx(family.radius_cdf(hi, 3) - family.radius_cdf(lo, 3))
        assert between + family.radius_outside(lo, hi, 3) == pytest.approx(1.0)
        assert family.radius_between(0.0, np.inf, 3) == pytest.approx(1.0)
        far = family.radius_between(30.0, 31.0, 2)
        assert far == pytest.approx(family.radius_sf(30.0, 2) - family.radius_sf(31.0, 2), rel=1e-9)

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_weighted_radial_moment_matches_quadrature(self, family, k):
        p, lo, hi = 2, 0.4, 1.9

        def integrand(r):
            return float(family.weight(r * r, p) * r ** k * family.radius_pdf(r, p))

        expected, _ = integrate.quad(integrand, lo, hi)
        assert family.weighted_radial_moment(lo, hi, p, k) == pytest.approx(expected, rel=1e-7)

    def test_full_weighted_moments(self, t5):
        assert t5.weighted_radial_moment(0.0, np.inf, 3, 0) == pytest.approx(1.0)
        assert t5.weighted_radial_moment(0.0, np.inf, 3, 2) == pytest.approx(3.0)
        with pytest.raises(ValueError):
            t5.weighted_radial_moment(0.0, 1.0, 3, 3)


class TestParams:
    def test_vector_roundtrip(self):
        back = EllipticalParams.from_vector(THETA_2D.to_vector(), 2)
        np.testing.assert_allclose(back.sigma, THETA_2D.sigma, atol=1e-12)
        np.testing.assert_allclose(back.mu, THETA_2D.mu)

    def test_vech_layout(self):
        m = np.array([[1.0, 2.0], [2.0, 3.0]])
        np.testing.assert_array_equal(vech(m), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(unvech(vech(m), 2), m)
        assert vech_labels(2) == ["mu1", "mu2", "sigma11", "sigma21", "sigma22"]

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            EllipticalParams.from_sigma([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_scale_and_shape(self):
        assert np.linalg.det(THETA_2D.shape_matrix) == pytest.approx(1.0)
        assert THETA_2D.scale == pytest.approx(math.sqrt(np.linalg.det(THETA_2D.sigma)))


class TestDensity:
    def test_gaussian_constants(self, gaussian):
        assert log_density(gaussian, EllipticalParams.standard(2), [1.0, 1.0]) == pytest.approx(-2.8379, abs=1e-4)
        assert log_density(gaussian, EllipticalParams.standard(1), [0.0]) == pytest.approx(-0.9189, abs=1e-4)

    def test_matches_scipy(self, gaussian, t5):
        x = np.array([[0.1, 0.2], [2.0, -1.0], [-3.0, 4.0]])
        np.testing.assert_allclose(
            log_density(gaussian, THETA_2D, x),
            stats.multivariate_normal(THETA_2D.mu, THETA_2D.sigma).logpdf(x),
        )
        np.testing.assert_allclose(
            log_density(t5, THETA_2D, x),
            stats.multivariate_t(THETA_2D.mu, THETA_2D.sigma, df=5).logpdf(x),
        )

    def test_dimension_mismatch(self, gaussian):
        with pytest.raises(DimensionMismatchError):
            log_density(gaussian, THETA_2D, [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    def test_score_matches_finite_differences(self, family):
        x = np.array([0.7, -1.2])
        analytic = score(family, THETA_2D, x)
        h = 1e-6
        numeric = []
        for i in range(2):
            shift = np.eye(2)[i] * h
            up = EllipticalParams.from_sigma(THETA_2D.mu + shift, THETA_2D.sigma)
            down = EllipticalParams.from_sigma(THETA_2D.mu - shift, THETA_2D.sigma)
            numeric.append((log_density(family, up, x) - log_density(family, down, x)) / (2 * h))
        for e in vech_basis(2):
            up = EllipticalParams.from_sigma(THETA_2D.mu, THETA_2D.sigma + h * e)
            down = EllipticalParams.from_sigma(THETA_2D.mu, THETA_2D.sigma - h * e)
            numeric.append((log_density(family, up, x) - log_density(family, down, x)) / (2 * h))
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_vector_gradient_chain_rule(self, t5):
        x = np.array([1.1, 0.3])
        analytic = vech_gradient_to_vector(THETA_2D, score(t5, THETA_2D, x))
        v = THETA_2D.to_vector()
        h = 1e-6
        numeric = []
        for k in range(v.size):
            step = np.zeros(v.size)
            step[k] = h
            up = log_density(t5, EllipticalParams.from_vector(v + step, 2), x)
            down = log_density(t5, EllipticalParams.from_vector(v - step, 2), x)
            numeric.append((up - down) / (2 * h))
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestSampling:
    def test_deterministic(self, gaussian):
        np.testing.assert_array_equal(sample(gaussian, THETA_2D, 50, seed=4), sample(gaussian, THETA_2D, 50, seed=4))

    def test_moments(self, gaussian, t5):
        x = sample(gaussian, THETA_2D, 40_000, seed=1)
        np.testing.assert_allclose(x.mean(axis=0), THETA_2D.mu, atol=0.03)
        np.testing.assert_allclose(np.cov(x, rowvar=False), THETA_2D.sigma, atol=0.05)
        y = sample(t5, EllipticalParams.standard(2), 50_000, seed=2)
        # Student t with nu = 5 has covariance Sigma * nu / (nu - 2)
        assert np.var(y[:, 0]) == pytest.approx(5.0 / 3.0, rel=0.15)

    def test_rejects_empty(self, gaussian):
        with pytest.raises(ValueError):
            sample(gaussian, THETA_2D, 0)

    def test_unit_directions_come_in_pairs(self):
        u = unit_directions(3, 2001, seed=0)
        assert u.shape == (2000, 3)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
        np.testing.assert_array_equal(u[:1000], -u[1000:])


class TestEllipsoid:
    def test_closed_membership(self):
        region = Ellipsoid([0.0, 0.0], np.eye(2), 1.0)
        assert region.contains([1.0, 0.0])
        assert not region.contains([1.0 + 1e-6, 0.0])

    def test_degenerate(self):
        with pytest.raises(DegenerateRegionError):
            Ellipsoid([0.0], [[1.0]], 0.0)

    def test_aligned_radius(self):
        region = Ellipsoid(THETA_2D.mu, 2.0 * THETA_2D.sigma, 1.5)
        assert region.aligned_radius(THETA_2D) == pytest.approx(1.5 * math.sqrt(2.0))
        shifted = Ellipsoid(THETA_2D.mu + 0.1, THETA_2D.sigma, 1.5)
        assert shifted.aligned_radius(THETA_2D) is None

    def test_volume_of_disc(self):
        assert Ellipsoid([0.0, 0.0], np.eye(2), 2.0).volume == pytest.approx(4.0 * math.pi)


class TestRegionProbability:
    def test_aligned_is_exact(self, gaussian):
        region = Ellipsoid([0.0, 0.0], np.eye(2), mve_radius(gaussian, 2, 0.5))
        result = region_probability(gaussian, EllipticalParams.standard(2), region)
        assert result.exact
        assert result.estimate == pytest.approx(0.5, abs=1e-12)

    def test_budget_floor(self, gaussian):
        region = Ellipsoid([0.0, 0.0], np.eye(2), 1.0)
        with pytest.raises(ConfigurationError):
            region_probability(gaussian, THETA_2D, region, budget=500)
        with pytest.raises(ConfigurationError):
            RegionIntegrator(gaussian, region, n_nodes=999)

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    def test_interval_mass(self, family):
        theta = EllipticalParams.from_sigma([0.4], [[1.69]])
        region = Ellipsoid([0.1], [[1.0]], 1.2)
        result = region_probability(family, theta, region)
        dist = stats.norm() if family.is_gaussian else stats.t(5)
        expected = dist.cdf((1.3 - 0.4) / 1.3) - dist.cdf((-1.1 - 0.4) / 1.3)
        assert result.exact
        assert result.estimate == pytest.approx(expected, abs=1e-10)

    def test_interval_mass_one_sided(self, gaussian):
        theta = EllipticalParams.from_sigma([5.0], [[1.0]])
        region = Ellipsoid([0.0], [[1.0]], 2.0)
        expected = stats.norm.cdf(-3.0) - stats.norm.cdf(-7.0)
        assert RegionIntegrator(gaussian, region).mass(theta) == pytest.approx(expected, rel=1e-9)

    def test_interval_mass_under_huge_scale(self, gaussian):
        theta = EllipticalParams.from_sigma([0.0], [[1e14]])
        region = Ellipsoid([0.0], [[1.0]], 1.0)
        expected = 2.0 / (1e7 * math.sqrt(2.0 * math.pi))
        assert RegionIntegrator(gaussian, region).mass(theta) == pytest.approx(expected, rel=1e-6)

    def test_smooth_agrees_with_hit_or_miss(self, gaussian):
        region = Ellipsoid([0.3, -0.2], [[1.5, 0.3], [0.3, 0.8]], 1.5)
        smooth = region_probability(gaussian, THETA_2D, region, 20_000, seed=1, method=IntegrationMethod.SMOOTH)
        direct = region_probability(gaussian, THETA_2D, region, 50_000, seed=2,
                                    method=IntegrationMethod.HIT_OR_MISS)
        assert abs(smooth.estimate - direct.estimate) < 4.0 * (smooth.std_error + direct.std_error)

    def test_affine_equivariance(self, t5):
        theta = EllipticalParams.standard(2)
        region = Ellipsoid([0.0, 0.0], np.eye(2), 1.3)
        a = np.array([[2.0, 0.5], [0.0, 1.5]])
        b = np.array([3.0, -1.0])
        before = region_probability(t5, theta, region)
        after = region_probability(t5, theta.affine(a, b), region.affine(a, b))
        assert after.exact and before.exact
        assert after.estimate == pytest.approx(before.estimate, abs=1e-10)

    def test_smooth_on_aligned_region_has_no_spread(self, t5):
        region = Ellipsoid(THETA_2D.mu, 2.0 * THETA_2D.sigma, 1.2)
        exact = region_probability(t5, THETA_2D, region)
        smooth = region_probability(t5, THETA_2D, region, 5000, seed=4, method=IntegrationMethod.SMOOTH)
        assert exact.exact and not smooth.exact
        assert smooth.estimate == pytest.approx(exact.estimate, abs=1e-12)
        assert smooth.std_error < 1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_mass_of_concentrated_law_stays_bounded(self, gaussian, seed):
        region = Ellipsoid([0.0, 0.0], np.diag([1.0, 2.0]), 3.0)
        theta = EllipticalParams.from_sigma([0.0, 0.0], np.diag([0.002, 0.001]))
        integrator = RegionIntegrator(gaussian, region, 20_000, seed=seed)
        estimate = integrator.estimate(theta)
        assert 1.0 - 1e-12 <= estimate.estimate <= 1.0
        assert 0.0 <= integrator.outside_mass(theta) < 1e-12

    def test_outside_mass_keeps_precision(self, gaussian):
        region = Ellipsoid([0.0, 0.0], np.diag([1.0, 2.0]), 3.0)
        theta = EllipticalParams.from_sigma([0.0, 0.0], np.diag([0.2, 0.1]))
        outside = RegionIntegrator(gaussian, region, 4000, seed=1).outside_mass(theta)
        # the region lies between the theta-ellipses of squared radius 45 and 180
        assert stats.chi2.sf(180.0, 2) <= outside <= stats.chi2.sf(45.0, 2)

    def test_region_away_from_the_center(self, gaussian):
        region = Ellipsoid([4.0, 1.0], [[0.5, 0.1], [0.1, 0.3]], 1.0)
        smooth = region_probability(gaussian, THETA_2D, region, 20_000, seed=5, method=IntegrationMethod.SMOOTH)
        direct = region_probability(gaussian, THETA_2D, region, 200_000, seed=6,
                                    method=IntegrationMethod.HIT_OR_MISS)
        assert 0.0 < smooth.estimate < 0.05
        assert abs(smooth.estimate - direct.estimate) < 4.0 * (smooth.std_error + direct.std_error)

    @pytest.mark.parametrize("family", [RadialFamily.gaussian(), RadialFamily.student_t(5)])
    def test_moments_over_a_huge_region_are_full_moments(self, family):
        region = Ellipsoid(THETA_2D.mu, np.eye(2), 1e4)
        m0, m1, m2 = RegionIntegrator(family, region, 20_000, seed=2).weighted_moments(THETA_2D)
        assert m0 == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(m1, THETA_2D.mu, atol=1e-6)
        np.testing.assert_allclose(m2, THETA_2D.sigma + np.outer(THETA_2D.mu, THETA_2D.mu), atol=0.05)

    def test_gaussian_zeroth_moment_is_the_mass(self, gaussian):
        region = Ellipsoid([0.3, -0.2], [[1.5, 0.3], [0.3, 0.8]], 1.5)
        integrator = RegionIntegrator(gaussian, region, 4000, seed=3)
        m0, _, _ = integrator.weighted_moments(THETA_2D)
        assert m0 == pytest.approx(integrator.mass(THETA_2D), rel=1e-12)


class TestIntegratorGradient:
    def test_interval_gradient(self, gaussian):
        region = Ellipsoid([0.2], [[1.0]], 1.4)
        integrator = RegionIntegrator(gaussian, region)
        theta = EllipticalParams.from_sigma([0.5], [[0.8]])
        _, grad = integrator.mass_and_gradient(theta)
        h = 1e-6
        d_mu = (integrator.mass(EllipticalParams.from_sigma([0.5 + h], [[0.8]]))
                - integrator.mass(EllipticalParams.from_sigma([0.5 - h], [[0.8]]))) / (2 * h)
        d_var = (integrator.mass(EllipticalParams.from_sigma([0.5], [[0.8 + h]]))
                 - integrator.mass(EllipticalParams.from_sigma([0.5], [[0.8 - h]]))) / (2 * h)
        np.testing.assert_allclose(grad, [d_mu, d_var], rtol=1e-5)

    def test_direction_gradient_matches_differences(self, t5):
        region = Ellipsoid([0.3, -0.2], [[1.5, 0.3], [0.3, 0.8]], 1.5)
        integrator = RegionIntegrator(t5, region, 5000, seed=3)
        mass, grad = integrator.mass_and_gradient(THETA_2D)
        assert mass == pytest.approx(integrator.mass(THETA_2D))
        h = 1e-6
        numeric = []
        for k, e in enumerate([np.eye(2)[0], np.eye(2)[1]] + vech_basis(2)):
            if k < 2:
                up = EllipticalParams.from_sigma(THETA_2D.mu + h * e, THETA_2D.sigma)
                down = EllipticalParams.from_sigma(THETA_2D.mu - h * e, THETA_2D.sigma)
            else:
                up = EllipticalParams.from_sigma(THETA_2D.mu, THETA_2D.sigma + h * e)
                down = EllipticalParams.from_sigma(THETA_2D.mu, THETA_2D.sigma - h * e)
            numeric.append((integrator.mass(up) - integrator.mass(down)) / (2 * h))
        np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-8)

    def test_log_mass_gradient_is_ratio(self, gaussian):
        region = Ellipsoid([0.0, 0.0], np.eye(2), 2.0)
        integrator = RegionIntegrator(gaussian, region, 3000, seed=0)
        mass, grad = integrator.mass_and_gradient(THETA_2D)
        log_mass, ratio = integrator.log_mass_and_gradient(THETA_2D)
        assert log_mass == pytest.approx(math.log(mass))
        np.testing.assert_allclose(ratio, grad / mass, rtol=1e-10)


def test_mahalanobis_of_center_is_zero():
    assert mahalanobis_sq(THETA_2D, THETA_2D.mu) == pytest.approx(0.0)
