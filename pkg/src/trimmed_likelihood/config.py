"""
Estimation Configuration
========================

Central configuration management for trimmed-likelihood estimation runs.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional
import os

from dotenv import dotenv_values, load_dotenv

from .exceptions import ConfigurationError

load_dotenv()


class OptimizerKind(Enum):
    """Maximization engine for the censored likelihood."""
    EM = "em"
    QUASI_NEWTON = "quasi_newton"


class InitKind(Enum):
    """Starting point of the maximizers."""
    FROM_REGION = "from_region"
    USER_SUPPLIED = "user_supplied"


class EStepMethod(Enum):
    """How the E-step imputes the censored observations."""
    REJECTION = "rejection"
    COMPLEMENT = "complement"


@dataclass
class MonteCarloConfig:
    """Monte-Carlo budgets."""
    prob_draws: int = 20_000  # CRN draws for region probabilities
    info_draws: int = 50_000  # draws for information matrices
    batches: int = 10  # batch-means blocks for standard errors
    seed: int = 0


@dataclass
class MveConfig:
    """Resampling search for the sample minimum volume ellipsoid."""
    n_subsets: int = 500
    coverage_count: Optional[int] = None  # None -> floor((n + p + 1) / 2)
    seed: int = 0
    refine: bool = True

    def resolve_coverage(self, n: int, p: int) -> int:
        """Number of points the ellipsoid must cover for a sample of size n in dimension p."""
        if self.coverage_count is not None:
            return self.coverage_count
        return (n + p + 1) // 2

    def validate(self, n: int, p: int) -> None:
        errors = []
        if self.n_subsets < 1:
            errors.append("n_subsets must be at least 1")
        h = self.resolve_coverage(n, p)
        if not p + 1 <= h <= n:
            errors.append(f"coverage_count must lie in [{p + 1}, {n}], got {h}")
        if errors:
            raise ConfigurationError(errors)


@dataclass
class FitConfig:
    """Maximizer settings shared by every estimator."""
    max_iter: int = 500
    param_tol: float = 1e-6
    em_mc_draws: int = 20_000
    prob_draws: int = 20_000
    optimizer: OptimizerKind = OptimizerKind.EM
    seed: int = 0
    init: InitKind = InitKind.FROM_REGION
    init_theta: Optional[Any] = None  # EllipticalParams when init is USER_SUPPLIED
    e_step: EStepMethod = EStepMethod.REJECTION
    barrier_start: float = 1.0
    barrier_decay: float = 0.1
    barrier_stop: float = 1e-9

    def validate(self) -> None:
        errors = []
        if self.max_iter < 1:
            errors.append("max_iter must be positive")
        if self.param_tol <= 0:
            errors.append("param_tol must be positive")
        if self.em_mc_draws < 100:
            errors.append("em_mc_draws must be at least 100")
        if self.prob_draws < 1000:
            errors.append("prob_draws must be at least 1000")
        if self.init == InitKind.USER_SUPPLIED and self.init_theta is None:
            errors.append("init_theta is required when init is USER_SUPPLIED")
        if not 0 < self.barrier_decay < 1:
            errors.append("barrier_decay must lie in (0, 1)")
        if self.barrier_stop <= 0 or self.barrier_stop > self.barrier_start:
            errors.append("barrier_stop must lie in (0, barrier_start]")
        if errors:
            raise ConfigurationError(errors)


@dataclass
class LabConfig:
    """Simulation experiment settings."""
    workers: int = 1
    blowup_threshold: float = 1e6  # condition number of the scatter estimate
    location_blowup: float = 100.0  # multiple of the true scale for the location estimate


@dataclass
class ReportConfig:
    """Report output settings."""
    output_format: str = "json"
    output_path: Optional[str] = None
    log_dir: str = "logs"
    log_level: str = "INFO"


class EstimationConfig:
    """Main configuration for estimation and simulation runs."""

    def __init__(self):
        self.monte_carlo = MonteCarloConfig()
        self.mve = MveConfig()
        self.fit = FitConfig()
        self.lab = LabConfig()
        self.report = ReportConfig()

        self.seed = int(os.getenv("TLE_SEED", "0"))

        # Load from environment if available
        self._load_from_env()
        self._propagate_seed()

    def _load_from_env(self) -> None:
        """Load configuration from environment variables."""
        if mc_budget := os.getenv("TLE_MC_BUDGET"):
            self.monte_carlo.info_draws = int(mc_budget)
            self.monte_carlo.prob_draws = int(mc_budget)
            self.fit.prob_draws = int(mc_budget)

        if max_iter := os.getenv("TLE_MAX_ITER"):
            self.fit.max_iter = int(max_iter)

        if param_tol := os.getenv("TLE_PARAM_TOL"):
            self.fit.param_tol = float(param_tol)

        if workers := os.getenv("TLE_WORKERS"):
            self.lab.workers = int(workers)

        if log_level := os.getenv("TLE_LOG_LEVEL"):
            self.report.log_level = log_level.upper()

        if log_dir := os.getenv("TLE_LOG_DIR"):
            self.report.log_dir = log_dir

    def _propagate_seed(self) -> None:
        self.monte_carlo.seed = self.seed
        self.mve.seed = self.seed
        self.fit.seed = self.seed

    def set_seed(self, seed: int) -> None:
        """Route a single seed to every random component."""
        self.seed = int(seed)
        self._propagate_seed()

    def set_mc_budget(self, draws: int) -> None:
        self.monte_carlo.info_draws = int(draws)
        self.monte_carlo.prob_draws = int(draws)
        self.fit.prob_draws = int(draws)

    def validate(self) -> bool:
        """Validate configuration."""
        errors = []

        if self.monte_carlo.prob_draws < 1000:
            errors.append("Region-probability budget must be at least 1000 draws")

        if self.monte_carlo.info_draws < 1000:
            errors.append("Information-matrix budget must be at least 1000 draws")

        if self.monte_carlo.batches < 2:
            errors.append("At least 2 batches are needed for MC standard errors")

        if self.mve.n_subsets < 1:
            errors.append("n_subsets must be at least 1")

        if self.lab.workers < 1:
            errors.append("workers must be at least 1")

        if self.report.output_format not in ("json", "csv"):
            errors.append(f"Unsupported output format '{self.report.output_format}'")

        try:
            self.fit.validate()
        except ConfigurationError as e:
            errors.extend(e.problems)

        if errors:
            raise ConfigurationError(errors)

        return True

    def to_dict(self) -> Dict:
        """Convert configuration to dictionary."""
        fit = asdict(self.fit)
        fit["optimizer"] = self.fit.optimizer.value
        fit["init"] = self.fit.init.value
        fit["e_step"] = self.fit.e_step.value
        fit["init_theta"] = None if self.fit.init_theta is None else "user"
        return {
            "monte_carlo": asdict(self.monte_carlo),
            "mve": asdict(self.mve),
            "fit": fit,
            "lab": asdict(self.lab),
            "report": asdict(self.report),
            "seed": self.seed,
        }


def load_run_file(path: str) -> Dict[str, str]:
    """Read a flat KEY=value run-config file.

    Keys are normalized to lower case with dashes turned into underscores so
    that file entries and CLI flag names line up.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigurationError([f"Config file not found: {path}"])

    values = dotenv_values(file_path)
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None
    }


def parse_float_list(text: str) -> List[Optional[float]]:
    """Parse '0.25,0.1,none' into [0.25, 0.1, None]."""
    items: List[Optional[float]] = []
    for token in str(text).split(","):
        token = token.strip().lower()
        if not token:
            continue
        items.append(None if token in ("none", "mve", "-") else float(token))
    return items


def parse_int_list(text: str) -> List[int]:
    """Parse '200,800,3200' into [200, 800, 3200]."""
    return [int(token) for token in str(text).split(",") if token.strip()]
