"""
Report Writers
==============

JSON and CSV output for fit reports, efficiency tables and experiment
reports. Reports carry no timestamps or runtimes, so identical inputs give
byte-identical files.
"""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from .data_manager import ObservationSet
from .elliptical import RadialFamily, vech, vech_labels
from .estimators import EstimatorVariant, PipelineResult
from .inference import EfficiencyResult

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv")


def jsonable(value):
    """Plain-Python copy of value with non-finite floats mapped to None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    return value


def fit_report(observations: ObservationSet, pipeline: PipelineResult, family: RadialFamily,
               std_errors: Optional[Dict[EstimatorVariant, Dict[str, float]]] = None) -> Dict:
    """
    Assemble the fit report.

    Args:
        observations: Input data (for n, p and column names)
        pipeline: MVE, enlarged region, trimmed sample and fits
        family: Radial family used for the fits
        std_errors: Optional asymptotic standard errors per variant

    Returns:
        Dict with mve, enlarged_region, variants and failures entries
    """
    std_errors = std_errors or {}
    flagged = pipeline.sample.outside_index.tolist()

    variants = {}
    for variant, fit in pipeline.fits.items():
        entry = fit.to_dict()
        entry["flagged_outliers"] = flagged
        if variant in std_errors:
            entry["std_errors"] = std_errors[variant]
        variants[variant.value] = entry

    report = {
        "n": observations.n,
        "p": observations.p,
        "columns": observations.columns,
        "family": family.label,
        "coverage": pipeline.coverage,
        "mve": pipeline.mve.to_dict(),
        "enlarged_region": pipeline.region.to_dict(),
        "n_inside": pipeline.sample.m,
        "variants": variants,
        "failures": {variant.value: str(error) for variant, error in pipeline.failures.items()},
    }
    return jsonable(report)


def fit_frame(report: Dict) -> pd.DataFrame:
    """One row per fitted variant with flattened parameters."""
    rows = []
    p = report["p"]
    labels = vech_labels(p)
    for name, entry in report["variants"].items():
        theta = entry["theta_hat"]
        sigma = np.asarray(theta["sigma"], dtype=float)
        values = list(theta["mu"]) + vech(sigma).tolist()
        row = {"variant": name}
        row.update(dict(zip(labels, values)))
        row.update({
            "pi_hat": entry["pi_hat"],
            "loglik": entry["loglik"],
            "branch": entry["branch"],
            "converged": entry["converged"],
            "n_flagged": len(entry["flagged_outliers"]),
        })
        rows.append(row)
    for name, message in report.get("failures", {}).items():
        rows.append({"variant": name, "failure": message})
    return pd.DataFrame(rows)


def efficiency_frame(results: Iterable[EfficiencyResult]) -> pd.DataFrame:
    columns = ["family", "p", "variant", "alpha", "component", "efficiency", "mc_stderr"]
    return pd.DataFrame([r.to_dict() for r in results], columns=columns)


def write_json(payload: Dict, path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Write payload as indented JSON to path, or to stdout when path is None."""
    text = json.dumps(jsonable(payload), indent=2)
    if path is None:
        sys.stdout.write(text + "\n")
        return None
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    logger.info(f"Wrote JSON report to {file_path}")
    return file_path


def write_csv(frame: pd.DataFrame, path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    if path is None:
        frame.to_csv(sys.stdout, index=False)
        return None
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(file_path, index=False)
    logger.info(f"Wrote CSV report to {file_path}")
    return file_path


def write_report(payload: Dict, frame: pd.DataFrame, fmt: str = "json",
                 path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Write either the JSON payload or the flat CSV frame."""
    if fmt not in FORMATS:
        raise ValueError(f"Unsupported output format '{fmt}'")
    if fmt == "json":
        return write_json(payload, path)
    return write_csv(frame, path)


def summary_lines(report: Dict) -> List[str]:
    """Short human-readable summary of a fit report for the console."""
    lines = [
        f"n={report['n']} p={report['p']} family={report['family']} coverage={report['coverage']}",
        f"MVE radius {report['mve']['radius']:.4f}; {report['n_inside']} points inside the enlarged region",
    ]
    for name, entry in report["variants"].items():
        pi = entry["pi_hat"]
        pi_text = f" pi={pi:.4f}" if pi is not None else ""
        branch = f" [{entry['branch']}]" if entry["branch"] else ""
        lines.append(f"  MLE({name}){branch}: mu={np.round(entry['theta_hat']['mu'], 4).tolist()}"
                     f"{pi_text} converged={entry['converged']}")
    for name, message in report["failures"].items():
        lines.append(f"  MLE({name}) failed: {message}")
    return lines
