"""
Command-Line Interface
======================

Sub-commands for fitting the trimmed-likelihood estimators on CSV data,
computing asymptotic efficiency tables and running simulation campaigns.

Exit codes: 0 success, 1 input or configuration error, 2 partial result
(some requested estimator does not exist or failed while others were
reported).
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from enum import Enum
from typing import Callable, Dict, List, Optional, Type

from .config import (
    EStepMethod,
    EstimationConfig,
    OptimizerKind,
    load_run_file,
    parse_float_list,
    parse_int_list,
)
from .data_manager import load_observations
from .elliptical import RadialFamily
from .estimators import EstimatorVariant, fit_pipeline
from .exceptions import ConfigurationError, SingularInformationError, TrimmedLikelihoodError
from .inference import efficiency, standard_errors
from .reporting import efficiency_frame, fit_frame, fit_report, summary_lines, write_report
from .robustness_lab import ExperimentPlan, ScenarioKind, run_breakdown, run_consistency, run_rate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_PARTIAL = 2

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
COMPONENTS = ("mu", "sigma_diag", "sigma_offdiag")


def setup_logging(level: str = "INFO", log_dir: str = "logs") -> None:
    """File log under log_dir plus a console stream.

    The console stream is stderr because reports may be written to stdout.
    """
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(Path(log_dir) / "trimmed_likelihood.log"),
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )


def _common_options(parser: argparse.ArgumentParser, seeded: bool) -> None:
    parser.add_argument("--config", help="Flat KEY=value run-config file; flags override its values")
    parser.add_argument("--family", help="Radial family: gaussian or t:<nu> (default gaussian)")
    parser.add_argument("--variant", action="append", choices=[v.value for v in EstimatorVariant],
                        help="Estimator variant, repeatable: t, c, r, s")
    parser.add_argument("--seed", type=int,
                        help="Seed for every random component" + (" (required)" if seeded else ""))
    parser.add_argument("--mc-budget", type=int, help="Monte-Carlo draws for probabilities and information")
    parser.add_argument("--out", help="Output file (default stdout)")
    parser.add_argument("--format", choices=["json", "csv"], help="Output format")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-dir", help="Directory for the log file (default logs)")
    parser.add_argument("--workers", type=int, help="Parallel replicates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trimmed-likelihood",
        description="Robust estimation in elliptical models by trimmed likelihoods",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py fit --input data.csv --variant s --variant c --coverage 0.975
  python main.py efficiency --seed 1 --dims 2 --alphas none,0.25,0.1,0.025
  python main.py simulate --seed 7 --scenario gem --pi0 0.1 --n-grid 200,800,3200
  python main.py breakdown --seed 3 --n 20 --p 2 --count 8 --replicates 100
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    fit_parser = subparsers.add_parser("fit", help="Fit estimators on a CSV of observations")
    _common_options(fit_parser, seeded=False)
    fit_parser.add_argument("--input", help="CSV with a header row, one observation per row")
    fit_parser.add_argument("--coverage", type=float, help="Enlarged-region coverage 1 - alpha (default 0.975)")
    fit_parser.add_argument("--alpha-restrict", type=float,
                            help="alpha of MLE(r); default is the observed inside fraction")
    fit_parser.add_argument("--optimizer", choices=[k.value for k in OptimizerKind],
                            help="Censored-likelihood maximizer")
    fit_parser.add_argument("--e-step", choices=[k.value for k in EStepMethod],
                            help="E-step for the EM maximizer")
    fit_parser.add_argument("--no-std-errors", action="store_true", help="Skip asymptotic standard errors")

    eff_parser = subparsers.add_parser("efficiency", help="Asymptotic efficiency table")
    _common_options(eff_parser, seeded=True)
    eff_parser.add_argument("--dims", help="Comma-separated dimensions (default 2)")
    eff_parser.add_argument("--alphas", help="Comma-separated enlargement alphas; 'none' is the plain MVE")
    eff_parser.add_argument("--component", action="append", choices=list(COMPONENTS),
                            help="Parameter component, repeatable (default all)")
    eff_parser.add_argument("--joint", action="store_true",
                            help="Ratio of inverse-information entries with every parameter estimated")

    sim_parser = subparsers.add_parser("simulate", help="Consistency or rate experiment")
    _common_options(sim_parser, seeded=True)
    sim_parser.add_argument("--experiment", choices=["consistency", "rate"], help="Default consistency")
    sim_parser.add_argument("--scenario", choices=["clean", "gem"], help="Default clean")
    sim_parser.add_argument("--pi0", type=float, help="Contamination fraction of the gem scenario")
    sim_parser.add_argument("--ring-radius", type=float, help="Mahalanobis radius of the contaminants")
    sim_parser.add_argument("--n-grid", help="Comma-separated increasing sample sizes")
    sim_parser.add_argument("--replicates", type=int, help="Replicates per sample size")
    sim_parser.add_argument("--p", type=int, help="Dimension (default 2)")
    sim_parser.add_argument("--coverage", type=float, help="Enlarged-region coverage (default 0.975)")

    bd_parser = subparsers.add_parser("breakdown", help="Replacement-outlier breakdown experiment")
    _common_options(bd_parser, seeded=True)
    bd_parser.add_argument("--n", type=int, help="Sample size (default 20)")
    bd_parser.add_argument("--p", type=int, help="Dimension (default 2)")
    bd_parser.add_argument("--count", type=int, help="Number of replaced points")
    bd_parser.add_argument("--magnitude", type=float, help="Outlier distance (default 1e6)")
    bd_parser.add_argument("--replicates", type=int, help="Replicates (default 100)")
    bd_parser.add_argument("--coverage", type=float, help="Enlarged-region coverage (default 0.975)")

    return parser


class RunOptions:
    """Flag values layered over run-config file values."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values: Dict[str, str] = load_run_file(args.config) if args.config else {}

    def get(self, name: str, convert: Callable = str, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.file_values:
            try:
                return convert(self.file_values[name])
            except ValueError as e:
                raise ConfigurationError([f"Invalid value for {name} in config file: {e}"])
        return default

    def choice(self, name: str, kind: Type[Enum], default=None):
        value = self.get(name, default=default)
        if value is None:
            return None
        try:
            return kind(value)
        except ValueError:
            allowed = ", ".join(m.value for m in kind)
            raise ConfigurationError([f"Invalid value for {name}: '{value}' (expected one of {allowed})"])

    def coverage(self) -> float:
        coverage = self.get("coverage", float, 0.975)
        if not 0.5 <= coverage < 1.0:
            raise ConfigurationError([f"coverage must lie in [0.5, 1), got {coverage}"])
        return coverage

    def variants(self, default: List[str]) -> List[EstimatorVariant]:
        names = self.args.variant
        if not names and "variant" in self.file_values:
            names = [v.strip() for v in self.file_values["variant"].split(",") if v.strip()]
        try:
            return [EstimatorVariant(v) for v in (names or default)]
        except ValueError as e:
            raise ConfigurationError([str(e)])

    def family(self) -> RadialFamily:
        try:
            return RadialFamily.parse(self.get("family", default="gaussian"))
        except ValueError as e:
            raise ConfigurationError([str(e)])

    def seed(self, required: bool) -> Optional[int]:
        seed = self.get("seed", int)
        if seed is None and os.getenv("TLE_SEED"):
            seed = int(os.getenv("TLE_SEED"))
        if seed is None and required:
            raise ConfigurationError([f"--seed is required for '{self.args.command}'"])
        return seed


def _configure(options: RunOptions, seed_required: bool) -> EstimationConfig:
    config = EstimationConfig()
    seed = options.seed(seed_required)
    if seed is not None:
        config.set_seed(seed)
    if (budget := options.get("mc_budget", int)) is not None:
        config.set_mc_budget(budget)
    if (workers := options.get("workers", int)) is not None:
        config.lab.workers = workers
    if (fmt := options.get("format")) is not None:
        config.report.output_format = fmt
    config.report.output_path = options.get("out")
    config.validate()
    return config


def run_fit(options: RunOptions) -> int:
    """Fit the requested variants and write the fit report."""
    config = _configure(options, seed_required=False)
    input_path = options.get("input")
    if not input_path:
        raise ConfigurationError(["--input is required for 'fit'"])
    if (optimizer := options.choice("optimizer", OptimizerKind)) is not None:
        config.fit.optimizer = optimizer
    if (e_step := options.choice("e_step", EStepMethod)) is not None:
        config.fit.e_step = e_step

    family = options.family()
    coverage = options.coverage()
    alpha = options.get("alpha_restrict", float)
    variants = options.variants(["s"])

    observations = load_observations(input_path)
    pipeline = fit_pipeline(observations.values, family, coverage, variants,
                            config.mve, config.fit, alpha)

    errors = {}
    if not options.args.no_std_errors:
        for variant, fit in pipeline.fits.items():
            try:
                errors[variant] = standard_errors(fit, family, pipeline.region, observations.n,
                                                  config.monte_carlo.info_draws, config.seed)
            except SingularInformationError as e:
                logger.warning(f"No standard errors for MLE({variant.value}): {e}")

    report = fit_report(observations, pipeline, family, errors)
    write_report(report, fit_frame(report), config.report.output_format, config.report.output_path)
    for line in summary_lines(report):
        logger.info(line)

    if not pipeline.failures:
        return EXIT_OK
    if pipeline.fits or len(pipeline.nonexistence) == len(pipeline.failures):
        return EXIT_PARTIAL
    return EXIT_INPUT_ERROR


def run_efficiency(options: RunOptions) -> int:
    """Efficiency table over dimensions, variants, alphas and components."""
    config = _configure(options, seed_required=True)
    family = options.family()
    dims = parse_int_list(options.get("dims", default="2"))
    alphas = parse_float_list(options.get("alphas", default="none,0.25,0.1,0.025"))
    variants = options.variants(["t", "c"])
    components = options.args.component or list(COMPONENTS)

    results = []
    for p in dims:
        for variant in variants:
            for alpha in alphas:
                for component in components:
                    if component == "sigma_offdiag" and p < 2:
                        continue
                    results.append(efficiency(family, p, variant, alpha, component,
                                              config.monte_carlo.info_draws, config.seed,
                                              config.monte_carlo.batches,
                                              joint=options.args.joint))

    frame = efficiency_frame(results)
    fmt = options.get("format", default="csv")
    write_report({"efficiency": [r.to_dict() for r in results]}, frame, fmt, config.report.output_path)
    return EXIT_OK


def _lab_report(report, config: EstimationConfig, fmt: str) -> None:
    write_report(report.to_dict(), report.to_frame(), fmt, config.report.output_path)


def run_simulate(options: RunOptions) -> int:
    """Consistency or rate experiment on clean or gross-error samples."""
    config = _configure(options, seed_required=True)
    scenario = options.choice("scenario", ScenarioKind, "clean")
    plan = ExperimentPlan(
        scenario=scenario,
        family=options.family(),
        p=options.get("p", int, 2),
        n_grid=parse_int_list(options.get("n_grid", default="200,800,3200")),
        replicates=options.get("replicates", int, 200),
        seed=config.seed,
        variants=options.variants(["c", "s"]),
        pi0=options.get("pi0", float, 0.1 if scenario == ScenarioKind.GEM_RING else 0.0),
        ring_radius=options.get("ring_radius", float, 10.0),
        coverage=options.coverage(),
    )
    experiment = options.get("experiment", default="consistency")
    runner = run_rate if experiment == "rate" else run_consistency
    report = runner(plan, config.lab, config.fit, config.mve)
    _lab_report(report, config, options.get("format", default="json"))
    return EXIT_OK


def run_breakdown_command(options: RunOptions) -> int:
    """Breakdown experiment with replaced outliers."""
    config = _configure(options, seed_required=True)
    plan = ExperimentPlan(
        scenario=ScenarioKind.REPLACEMENT_OUTLIERS,
        family=options.family(),
        p=options.get("p", int, 2),
        n_grid=[options.get("n", int, 20)],
        replicates=options.get("replicates", int, 100),
        seed=config.seed,
        variants=options.variants(["c", "r", "s"]),
        count=options.get("count", int, 0),
        magnitude=options.get("magnitude", float, 1e6),
        coverage=options.coverage(),
    )
    report = run_breakdown(plan, None, config.lab, config.fit, config.mve)
    for variant in plan.variants:
        logger.info(f"MLE({variant.value}) break rate: {report.break_rate(variant):.3f}")
    _lab_report(report, config, options.get("format", default="json"))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunOptions], int]] = {
    "fit": run_fit,
    "efficiency": run_efficiency,
    "simulate": run_simulate,
    "breakdown": run_breakdown_command,
}


def main(argv: Optional[List[str]] = None, configure_logging: bool = True) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_INPUT_ERROR

    try:
        options = RunOptions(args)
        if configure_logging:
            report = EstimationConfig().report
            setup_logging(options.get("log_level", default=report.log_level),
                          options.get("log_dir", default=report.log_dir))
        logger.info(f"Running '{args.command}'")
        return COMMANDS[args.command](options)
    except TrimmedLikelihoodError as e:
        logger.error(f"Error in {args.command}: {e}")
        return EXIT_INPUT_ERROR
    except OSError as e:
        logger.error(f"I/O error in {args.command}: {e}")
        return EXIT_INPUT_ERROR
