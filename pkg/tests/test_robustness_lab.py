import json

import numpy as np
import pytest
from scipy import stats

from trimmed_likelihood.config import LabConfig, MveConfig
from trimmed_likelihood.elliptical import Ellipsoid, EllipticalParams, mahalanobis_sq
from trimmed_likelihood.estimators import EstimatorVariant
from trimmed_likelihood.exceptions import ConfigurationError
from trimmed_likelihood.robustness_lab import (
    ExperimentKind,
    ExperimentPlan,
    ReplicateOutcome,
    ScenarioKind,
    contaminant_floor,
    replace_outliers,
    run_breakdown,
    run_consistency,
    run_rate,
    sample_gem,
    summarize_cell,
    symmetric_difference_mass,
    theoretical_mve,
)


@pytest.fixture
def small_mve():
    return MveConfig(n_subsets=100)


def _breakdown_plan(gaussian, count=0, replicates=4, seed=3):
    return ExperimentPlan(
        scenario=ScenarioKind.REPLACEMENT_OUTLIERS, family=gaussian, p=2, n_grid=[20],
        replicates=replicates, seed=seed, variants=[EstimatorVariant.CENSORED], count=count,
    )


class TestSampling:
    def test_gem_contaminants_sit_on_the_ring(self, gaussian):
        theta = EllipticalParams.from_sigma([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]])
        data, mask = sample_gem(gaussian, theta, 0.2, 10.0, 2000, seed=1)
        assert data.shape == (2000, 2)
        assert mask.mean() == pytest.approx(0.2, abs=0.03)
        np.testing.assert_allclose(mahalanobis_sq(theta, data[mask]), 100.0, rtol=1e-9)
        assert np.all(mahalanobis_sq(theta, data[mask]) > contaminant_floor(gaussian, 2, 0.2) ** 2)

    def test_gem_is_seeded(self, gaussian):
        theta = EllipticalParams.standard(2)
        a, _ = sample_gem(gaussian, theta, 0.1, 8.0, 50, seed=4)
        b, _ = sample_gem(gaussian, theta, 0.1, 8.0, 50, seed=4)
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ValueError):
            sample_gem(gaussian, theta, 1.0, 8.0, 50, seed=4)

    def test_replace_outliers(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((20, 2))
        replaced, mask = replace_outliers(data, 5, 1e6, rng)
        assert mask.sum() == 5
        assert np.all(np.linalg.norm(replaced[mask], axis=1) > 1e5)
        np.testing.assert_array_equal(replaced[~mask], data[~mask])

        untouched, none = replace_outliers(data, 0, 1e6, rng)
        assert not none.any()
        np.testing.assert_array_equal(untouched, data)

    def test_contaminant_floor(self, gaussian):
        assert contaminant_floor(gaussian, 2, 0.0) == pytest.approx(1.1774, abs=1e-4)
        assert contaminant_floor(gaussian, 2, 0.1) > contaminant_floor(gaussian, 2, 0.0)
        region = theoretical_mve(gaussian, EllipticalParams.standard(2))
        assert region.radius == pytest.approx(1.1774, abs=1e-4)


def test_symmetric_difference_of_nested_ellipsoids(gaussian):
    theta = EllipticalParams.standard(2)
    inner = Ellipsoid([0.0, 0.0], np.eye(2), 1.0)
    outer = Ellipsoid([0.0, 0.0], np.eye(2), 2.0)
    expected = stats.chi2.cdf(4.0, 2) - stats.chi2.cdf(1.0, 2)
    assert symmetric_difference_mass(gaussian, theta, inner, outer, seed=2) == pytest.approx(expected, abs=0.015)
    assert symmetric_difference_mass(gaussian, theta, inner, inner) == 0.0


class TestPlanValidation:
    @pytest.mark.parametrize("changes", [
        {"n_grid": []},
        {"n_grid": [200, 100]},
        {"n_grid": [3]},
        {"replicates": 0},
        {"variants": []},
        {"coverage": 0.3},
        {"pi0": 0.6},
        {"ring_radius": 1.0},
    ])
    def test_gem_plan_errors(self, gaussian, changes):
        values = dict(scenario=ScenarioKind.GEM_RING, family=gaussian, p=2, n_grid=[100, 200],
                      replicates=2, seed=1, pi0=0.1, ring_radius=10.0)
        values.update(changes)
        with pytest.raises(ConfigurationError):
            ExperimentPlan(**values).validate()

    @pytest.mark.parametrize("changes", [{"count": 20}, {"count": -1}, {"magnitude": 10.0}])
    def test_breakdown_plan_errors(self, gaussian, changes):
        plan = _breakdown_plan(gaussian)
        for key, value in changes.items():
            setattr(plan, key, value)
        with pytest.raises(ConfigurationError):
            plan.validate()

    def test_valid_plan_serializes(self, gaussian):
        plan = _breakdown_plan(gaussian, count=8)
        plan.validate()
        assert plan.to_dict()["scenario"] == "breakdown"
        assert plan.to_dict()["variants"] == ["c"]


class TestExperiments:
    def test_breakdown_is_reproducible(self, gaussian, fast_fit_cfg, small_mve):
        first = run_breakdown(_breakdown_plan(gaussian), fit_cfg=fast_fit_cfg, mve_cfg=small_mve)
        second = run_breakdown(_breakdown_plan(gaussian), fit_cfg=fast_fit_cfg, mve_cfg=small_mve)
        assert first.to_json() == second.to_json()
        assert first.kind == ExperimentKind.BREAKDOWN
        assert first.break_rate(EstimatorVariant.CENSORED) == 0.0

    def test_worker_count_does_not_change_results(self, gaussian, fast_fit_cfg, small_mve):
        serial = run_breakdown(_breakdown_plan(gaussian, count=3), None, LabConfig(workers=1),
                               fast_fit_cfg, small_mve)
        parallel = run_breakdown(_breakdown_plan(gaussian, count=3), None, LabConfig(workers=2),
                                 fast_fit_cfg, small_mve)
        assert serial.to_dict() == parallel.to_dict()
        assert [o.seed for o in serial.outcomes] == [o.seed for o in parallel.outcomes]

    def test_breakdown_needs_its_scenario(self, gaussian):
        plan = ExperimentPlan(ScenarioKind.CLEAN, gaussian, 2, [30], 1, seed=1)
        with pytest.raises(ConfigurationError):
            run_breakdown(plan)
        with pytest.raises(ConfigurationError):
            run_rate(_breakdown_plan(gaussian))

    def test_consistency_report(self, gaussian, fast_fit_cfg, small_mve):
        plan = ExperimentPlan(ScenarioKind.CLEAN, gaussian, 1, [40, 80], 3, seed=5,
                              variants=[EstimatorVariant.CENSORED, EstimatorVariant.SMART])
        report = run_consistency(plan, fit_cfg=fast_fit_cfg, mve_cfg=small_mve)
        frame = report.to_frame()
        assert len(frame) == 4
        assert {"n", "variant", "bias_mu1", "n_mse_mu1", "break_rate", "mve_symdiff"} <= set(frame.columns)
        assert len(report.replicate_frame()) == 12
        assert len(report.seeds) == 6
        assert report.cell(80, EstimatorVariant.SMART).replicates == 3
        with pytest.raises(KeyError):
            report.cell(60, EstimatorVariant.SMART)
        assert "rate_ratios" not in report.to_dict()

    def test_rate_report_carries_ratios(self, gaussian, fast_fit_cfg, small_mve):
        plan = ExperimentPlan(ScenarioKind.CLEAN, gaussian, 1, [40, 80], 3, seed=6,
                              variants=[EstimatorVariant.CENSORED])
        report = run_rate(plan, fit_cfg=fast_fit_cfg, mve_cfg=small_mve)
        payload = json.loads(report.to_json())
        assert payload["experiment"] == "rate"
        ratio = payload["rate_ratios"]["c"]
        assert ratio is None or ratio >= 1.0
        assert set(payload["component_rate_ratios"]["c"]) == {"mu1", "sigma11"}
        assert payload["component_rate_ratios"]["c"]["mu1"] == ratio
        with pytest.raises(KeyError):
            report.rate_ratio(EstimatorVariant.CENSORED, "sigma21")


class TestCellSummary:
    def _outcome(self, mu, sigma, replicate=0):
        return ReplicateOutcome(n=50, replicate=replicate, variant=EstimatorVariant.CENSORED, seed=replicate,
                                mu_hat=np.array(mu), sigma_hat=np.array(sigma), converged=True)

    def test_n_mse_covers_every_component(self):
        theta0 = EllipticalParams.from_sigma([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
        outcomes = [
            self._outcome([1.2, -1.0], [[2.0, 0.5], [0.5, 1.3]], 0),
            self._outcome([0.8, -0.9], [[2.4, 0.3], [0.3, 1.0]], 1),
            ReplicateOutcome(n=50, replicate=2, variant=EstimatorVariant.CENSORED, seed=2, failure="diverged"),
        ]
        cell = summarize_cell(50, EstimatorVariant.CENSORED, outcomes, theta0, 0.0, LabConfig())
        assert cell.completed == 2
        assert list(cell.n_mse) == ["mu1", "mu2", "sigma11", "sigma21", "sigma22"]
        assert cell.n_mse["mu1"] == pytest.approx(50 * 0.04)
        assert cell.n_mse["mu2"] == pytest.approx(50 * 0.005)
        assert cell.n_mse["sigma11"] == pytest.approx(50 * 0.08)
        assert cell.n_mse["sigma21"] == pytest.approx(50 * 0.02)
        assert cell.n_mse["sigma22"] == pytest.approx(50 * 0.045)
        assert cell.n_mse["mu1"] == pytest.approx(cell.n_mse_mu1)

        row = cell.to_dict()
        assert row["n_mse_sigma21"] == pytest.approx(1.0)
        assert "n_mse" not in row

    def test_empty_cell_reports_missing_values(self):
        outcomes = [ReplicateOutcome(n=30, replicate=0, variant=EstimatorVariant.SMART, seed=0, failure="x")]
        cell = summarize_cell(30, EstimatorVariant.SMART, outcomes, EllipticalParams.standard(2), 0.0, LabConfig())
        row = cell.to_dict()
        assert row["n_mse_sigma22"] is None
        assert row["completed"] == 0
