import pytest

from trimmed_likelihood.config import (
    EstimationConfig,
    FitConfig,
    InitKind,
    MveConfig,
    load_run_file,
    parse_float_list,
    parse_int_list,
)
from trimmed_likelihood.exceptions import ConfigurationError


@pytest.fixture
def clean_env(monkeypatch):
    for name in ("TLE_SEED", "TLE_MC_BUDGET", "TLE_MAX_ITER", "TLE_PARAM_TOL", "TLE_WORKERS", "TLE_LOG_LEVEL",
                 "TLE_LOG_DIR"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_defaults_validate(clean_env):
    config = EstimationConfig()
    assert config.validate()
    assert config.seed == 0
    assert config.to_dict()["fit"]["optimizer"] == "em"


def test_environment_overrides(clean_env):
    clean_env.setenv("TLE_SEED", "17")
    clean_env.setenv("TLE_MC_BUDGET", "5000")
    clean_env.setenv("TLE_WORKERS", "3")
    clean_env.setenv("TLE_LOG_LEVEL", "debug")
    clean_env.setenv("TLE_LOG_DIR", "run-logs")
    config = EstimationConfig()
    assert config.seed == config.mve.seed == config.fit.seed == config.monte_carlo.seed == 17
    assert config.monte_carlo.info_draws == config.fit.prob_draws == 5000
    assert config.lab.workers == 3
    assert config.report.log_level == "DEBUG"
    assert config.report.log_dir == "run-logs"


def test_set_seed_reaches_every_component(clean_env):
    config = EstimationConfig()
    config.set_seed(42)
    assert (config.mve.seed, config.fit.seed, config.monte_carlo.seed) == (42, 42, 42)


def test_validate_collects_every_problem(clean_env):
    config = EstimationConfig()
    config.set_mc_budget(10)
    config.lab.workers = 0
    config.report.output_format = "xml"
    with pytest.raises(ConfigurationError) as info:
        config.validate()
    assert len(info.value.problems) >= 4


def test_fit_config_validation():
    with pytest.raises(ConfigurationError, match="init_theta"):
        FitConfig(init=InitKind.USER_SUPPLIED).validate()
    with pytest.raises(ConfigurationError):
        FitConfig(barrier_decay=1.5).validate()
    FitConfig().validate()


def test_mve_coverage_count():
    assert MveConfig().resolve_coverage(20, 2) == 11
    assert MveConfig(coverage_count=15).resolve_coverage(20, 2) == 15
    with pytest.raises(ConfigurationError):
        MveConfig(coverage_count=25).validate(20, 2)


def test_run_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("SEED=7\nMC-BUDGET=3000\n# comment\nfamily=t:5\n", encoding="utf-8")
    assert load_run_file(str(path)) == {"seed": "7", "mc_budget": "3000", "family": "t:5"}
    with pytest.raises(ConfigurationError):
        load_run_file(str(tmp_path / "missing.env"))


def test_list_parsing():
    assert parse_float_list("none, 0.25,0.1,") == [None, 0.25, 0.1]
    assert parse_int_list("200,800, 3200") == [200, 800, 3200]
    with pytest.raises(ValueError):
        parse_int_list("200,abc")
