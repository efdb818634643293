from dataclasses import replace

import numpy as np
import pytest

from trimmed_likelihood.config import EStepMethod, InitKind, OptimizerKind
from trimmed_likelihood.elliptical import Ellipsoid, EllipticalParams, RegionIntegrator, mve_radius
from trimmed_likelihood.estimators import (
    Branch,
    ComplementEStep,
    EStepMoments,
    EstimatorVariant,
    RejectionEStep,
    check_counts,
    em_update,
    fit_censored,
    fit_pipeline,
    fit_restricted,
    fit_smart,
    fit_truncated,
)
from trimmed_likelihood.exceptions import (
    ConfigurationError,
    InsufficientDataError,
    NonExistenceError,
)
from trimmed_likelihood.likelihoods import Objective, Variant, loglik_truncated, pi_star
from trimmed_likelihood.mve import TrimmedSample, trim
from trimmed_likelihood.robustness_lab import sample_gem


def _edge_heavy_sample():
    """Inside points crowd both ends of [-1, 1]: no truncated normal fits them."""
    region = Ellipsoid([0.0], [[1.0]], 1.0)
    inside = np.array([-0.99, -0.98, -0.97, -0.96, 0.96, 0.97, 0.98, 0.99])[:, None]
    return TrimmedSample(inside, 2, 10, region, np.arange(8), np.array([8, 9]))


class TestCounts:
    def test_gaussian_needs_p_plus_two(self, gaussian):
        region = Ellipsoid([0.0, 0.0], np.eye(2), 3.0)
        small = trim(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [9.0, 9.0]]), region)
        with pytest.raises(InsufficientDataError):
            check_counts(small, gaussian)

    def test_student_bound(self, t5):
        # p * gamma / (gamma - p / 2) = 2 * 3.5 / 2.5 = 2.8, so 3 points are enough
        region = Ellipsoid([0.0, 0.0], np.eye(2), 3.0)
        ok = trim(np.array([[0.0, 0.0], [1.0, 0.2], [0.1, 1.0]]), region)
        check_counts(ok, t5)


class TestTruncated:
    def test_recovers_truth(self, gaussian, trimmed_1d, fast_fit_cfg):
        fit = fit_truncated(trimmed_1d, gaussian, fast_fit_cfg)
        assert fit.converged
        assert abs(fit.theta_hat.mu[0]) < 0.2
        assert 0.8 < fit.theta_hat.sigma[0, 0] < 1.25
        assert fit.branch is None

    def test_is_a_local_maximum(self, gaussian, trimmed_1d, fast_fit_cfg):
        fit = fit_truncated(trimmed_1d, gaussian, fast_fit_cfg)
        obj = Objective(Variant.TRUNCATED, gaussian, trimmed_1d)
        mu, sd = fit.theta_hat.mu[0], float(np.sqrt(fit.theta_hat.sigma[0, 0]))
        steps = np.linspace(-0.05, 0.05, 21)
        grid = np.array([
            [loglik_truncated(obj, EllipticalParams.from_sigma([mu + a], [[(sd + b) ** 2]])) for b in steps]
            for a in steps
        ])
        i, j = np.unravel_index(np.argmax(grid), grid.shape)
        assert abs(i - 10) <= 1 and abs(j - 10) <= 1

    def test_nonexistence_is_reported(self, gaussian, fast_fit_cfg):
        with pytest.raises(NonExistenceError) as info:
            fit_truncated(_edge_heavy_sample(), gaussian, fast_fit_cfg)
        assert info.value.monitor in ("region_mass", "location", "min_eigenvalue")

    def test_two_dimensional_fit(self, gaussian, trimmed_2d, fast_fit_cfg):
        fit = fit_truncated(trimmed_2d, gaussian, fast_fit_cfg)
        np.testing.assert_allclose(fit.theta_hat.mu, [0.0, 0.0], atol=0.25)
        np.testing.assert_allclose(fit.theta_hat.sigma, np.eye(2), atol=0.35)


class TestCensored:
    def test_em_matches_quasi_newton_1d(self, gaussian, trimmed_1d, fast_fit_cfg):
        em_cfg = replace(fast_fit_cfg, e_step=EStepMethod.COMPLEMENT, param_tol=1e-8, max_iter=2000)
        qn_cfg = replace(fast_fit_cfg, optimizer=OptimizerKind.QUASI_NEWTON, param_tol=1e-8)
        em = fit_censored(trimmed_1d, gaussian, em_cfg)
        qn = fit_censored(trimmed_1d, gaussian, qn_cfg)
        np.testing.assert_allclose(em.theta_hat.mu, qn.theta_hat.mu, atol=1e-4)
        np.testing.assert_allclose(em.theta_hat.sigma, qn.theta_hat.sigma, atol=1e-4)
        assert em.ascent_violations == 0

    def test_em_matches_quasi_newton_2d(self, t5, trimmed_2d, fast_fit_cfg):
        em = fit_censored(trimmed_2d, t5, replace(fast_fit_cfg, e_step=EStepMethod.COMPLEMENT, max_iter=2000))
        qn = fit_censored(trimmed_2d, t5, replace(fast_fit_cfg, optimizer=OptimizerKind.QUASI_NEWTON))
        np.testing.assert_allclose(em.theta_hat.mu, qn.theta_hat.mu, atol=5e-3)
        np.testing.assert_allclose(em.theta_hat.sigma, qn.theta_hat.sigma, atol=5e-3)

    def test_rejection_e_step_recovers_truth(self, gaussian, trimmed_2d, fast_fit_cfg):
        fit = fit_censored(trimmed_2d, gaussian, fast_fit_cfg)
        np.testing.assert_allclose(fit.theta_hat.mu, [0.0, 0.0], atol=0.2)
        np.testing.assert_allclose(fit.theta_hat.sigma, np.eye(2), atol=0.3)
        assert fit.loglik < 0

    def test_user_supplied_start(self, gaussian, trimmed_1d, fast_fit_cfg):
        cfg = replace(fast_fit_cfg, init=InitKind.USER_SUPPLIED, init_theta=None)
        with pytest.raises(ConfigurationError):
            fit_censored(trimmed_1d, gaussian, cfg)
        cfg = replace(cfg, init_theta=EllipticalParams.from_sigma([0.5], [[2.0]]))
        fit = fit_censored(trimmed_1d, gaussian, cfg)
        assert abs(fit.theta_hat.mu[0]) < 0.2


class TestEStep:
    def test_uncensored_update_is_sample_moments(self, gaussian):
        data = np.array([[0.1, 0.3], [1.0, -0.5], [-0.7, 0.2], [0.4, 0.9], [-0.2, -0.8]])
        region = Ellipsoid([0.0, 0.0], np.eye(2), 10.0)
        trimmed = trim(data, region)
        nothing = EStepMoments(0.0, np.zeros(2), np.zeros((2, 2)), 1.0, 0.0)
        updated = em_update(EllipticalParams.standard(2), trimmed, gaussian, nothing)
        np.testing.assert_allclose(updated.mu, data.mean(axis=0))
        np.testing.assert_allclose(updated.sigma, np.cov(data, rowvar=False, ddof=0), atol=1e-12)

    def test_rejection_and_complement_agree(self, gaussian):
        region = Ellipsoid([0.0], [[1.0]], 1.5)
        theta = EllipticalParams.from_sigma([0.2], [[1.3]])
        rejection = RejectionEStep(gaussian, region, 200_000, seed=1).moments(theta)
        complement = ComplementEStep(RegionIntegrator(gaussian, region)).moments(theta)
        assert rejection.outside_mass == pytest.approx(complement.outside_mass, abs=0.01)
        assert rejection.e1[0] == pytest.approx(complement.e1[0], abs=0.05)
        assert rejection.e2[0, 0] == pytest.approx(complement.e2[0, 0], rel=0.05)


class TestRestricted:
    def test_inactive_constraint_matches_truncated(self, gaussian, trimmed_1d, fast_fit_cfg):
        truncated = fit_truncated(trimmed_1d, gaussian, fast_fit_cfg)
        restricted = fit_restricted(trimmed_1d, gaussian, 0.1, fast_fit_cfg)
        assert not restricted.boundary
        assert restricted.alpha_used == 0.1
        np.testing.assert_allclose(restricted.theta_hat.mu, truncated.theta_hat.mu, atol=1e-3)
        np.testing.assert_allclose(restricted.theta_hat.sigma, truncated.theta_hat.sigma, atol=1e-3)

    def test_active_constraint_on_nonexistence_sample(self, gaussian, fast_fit_cfg):
        sample = _edge_heavy_sample()
        fit = fit_restricted(sample, gaussian, 0.8, fast_fit_cfg)
        assert fit.boundary
        assert fit.region_mass == pytest.approx(0.8, abs=1e-3)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_alpha_range(self, gaussian, trimmed_1d, alpha):
        with pytest.raises(ConfigurationError):
            fit_restricted(trimmed_1d, gaussian, alpha)


class TestSmart:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_decision_rule(self, gaussian, fast_fit_cfg, seed):
        data, _ = sample_gem(gaussian, EllipticalParams.standard(1), 0.1, 6.0, 150, seed=seed)
        region = Ellipsoid([0.0], [[1.0]], 2.2)
        trimmed = trim(data, region)
        smart = fit_smart(trimmed, gaussian, fast_fit_cfg)
        assert smart.variant == EstimatorVariant.SMART

        truncated = fit_truncated(trimmed, gaussian, fast_fit_cfg)
        pi = pi_star(truncated.theta_hat, Objective(Variant.SMART, gaussian, trimmed))
        if pi >= 0:
            assert smart.branch == Branch.TRUNCATED
            np.testing.assert_array_equal(smart.theta_hat.to_vector(), truncated.theta_hat.to_vector())
            assert smart.pi_hat == pytest.approx(pi)
        else:
            censored = fit_censored(trimmed, gaussian, fast_fit_cfg)
            assert smart.branch == Branch.CENSORED
            assert smart.pi_hat == 0.0
            np.testing.assert_array_equal(smart.theta_hat.to_vector(), censored.theta_hat.to_vector())

    def test_falls_back_to_natural_restricted(self, gaussian, fast_fit_cfg):
        smart = fit_smart(_edge_heavy_sample(), gaussian, fast_fit_cfg)
        assert smart.branch == Branch.TRUNCATED
        assert smart.alpha_used == pytest.approx(0.8)
        assert smart.pi_hat >= 0

    def test_estimates_contamination(self, gaussian, fast_fit_cfg):
        data, _ = sample_gem(gaussian, EllipticalParams.standard(1), 0.2, 8.0, 1000, seed=4)
        region = Ellipsoid([0.0], [[1.0]], 2.4)
        smart = fit_smart(trim(data, region), gaussian, fast_fit_cfg)
        assert smart.pi_hat == pytest.approx(0.2, abs=0.06)


class TestEquivariance:
    """Fits on A x + b with region A(E) + b are the mapped fits on x with E."""

    A = np.array([[2.0, 0.0], [0.6, 0.5]])
    B = np.array([3.0, -1.0])

    def _pair(self, family, pi0):
        data, _ = sample_gem(family, EllipticalParams.standard(2), pi0, 6.0, 300, seed=21)
        region = Ellipsoid([0.0, 0.0], np.eye(2), mve_radius(family, 2, 0.9))
        trimmed = trim(data, region)
        moved = trim(data @ self.A.T + self.B, region.affine(self.A, self.B))
        assert (moved.m, moved.n_outside) == (trimmed.m, trimmed.n_outside)
        return trimmed, moved

    def _assert_mapped(self, before, after):
        expected = before.theta_hat.affine(self.A, self.B)
        np.testing.assert_allclose(after.theta_hat.mu, expected.mu, atol=2e-3)
        np.testing.assert_allclose(after.theta_hat.sigma, expected.sigma, atol=2e-3)

    @pytest.mark.parametrize("fit", [fit_truncated, fit_censored])
    def test_fits_follow_the_map(self, gaussian, fast_fit_cfg, fit):
        trimmed, moved = self._pair(gaussian, 0.0)
        self._assert_mapped(fit(trimmed, gaussian, fast_fit_cfg), fit(moved, gaussian, fast_fit_cfg))

    def test_smart_keeps_contamination(self, t5, fast_fit_cfg):
        trimmed, moved = self._pair(t5, 0.15)
        before = fit_smart(trimmed, t5, fast_fit_cfg)
        after = fit_smart(moved, t5, fast_fit_cfg)
        assert after.branch == before.branch == Branch.TRUNCATED
        assert after.pi_hat == pytest.approx(before.pi_hat, abs=2e-3)
        self._assert_mapped(before, after)


class TestPipeline:
    def test_runs_requested_variants(self, gaussian, clean_2d, fast_fit_cfg):
        result = fit_pipeline(clean_2d, gaussian, 0.975,
                              [EstimatorVariant.TRUNCATED, EstimatorVariant.SMART], fit_cfg=fast_fit_cfg)
        assert set(result.fits) == {EstimatorVariant.TRUNCATED, EstimatorVariant.SMART}
        assert not result.failures
        assert result.region.radius > result.mve.radius
        assert result.sample.n_total == 400

    def test_collects_failures(self, gaussian, clean_2d, fast_fit_cfg):
        result = fit_pipeline(clean_2d, gaussian, 0.975, [EstimatorVariant.RESTRICTED],
                              fit_cfg=fast_fit_cfg, alpha_restrict=1.5)
        assert EstimatorVariant.RESTRICTED in result.failures
        assert isinstance(result.failures[EstimatorVariant.RESTRICTED], ConfigurationError)
        assert result.nonexistence == []
