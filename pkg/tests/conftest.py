"""Shared fixtures for the trimmed-likelihood test suite."""

import pytest

from trimmed_likelihood.config import FitConfig, MveConfig
from trimmed_likelihood.elliptical import EllipticalParams, RadialFamily, sample
from trimmed_likelihood.mve import enlarge, sample_mve, trim


@pytest.fixture
def gaussian():
    return RadialFamily.gaussian()


@pytest.fixture
def t5():
    return RadialFamily.student_t(5)


@pytest.fixture
def fast_fit_cfg():
    """Reduced Monte-Carlo budgets that still clear the validation floors."""
    return FitConfig(max_iter=300, em_mc_draws=4000, prob_draws=4000, seed=11)


@pytest.fixture
def clean_2d(gaussian):
    return sample(gaussian, EllipticalParams.standard(2), 400, seed=123)


@pytest.fixture
def clean_1d(gaussian):
    return sample(gaussian, EllipticalParams.standard(1), 400, seed=321)


@pytest.fixture
def trimmed_1d(gaussian, clean_1d):
    region = enlarge(sample_mve(clean_1d, MveConfig(seed=5)), gaussian, 0.975)
    return trim(clean_1d, region)


@pytest.fixture
def trimmed_2d(gaussian, clean_2d):
    region = enlarge(sample_mve(clean_2d, MveConfig(seed=5)), gaussian, 0.975)
    return trim(clean_2d, region)


@pytest.fixture
def write_csv(tmp_path):
    """Write rows under a header into tmp_path and return the path."""
    def _write(name, header, rows):
        path = tmp_path / name
        lines = [header] + [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return _write
