"""
Data Manager
============

Loads observation tables for fitting: UTF-8 comma-separated files with a
header row, one observation per row and numeric cells only.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from .exceptions import DataFormatError, InsufficientDataError

logger = logging.getLogger(__name__)

# file line of the first data row (line 1 is the header)
FIRST_DATA_LINE = 2


@dataclass
class ObservationSet:
    """Container for an n x p observation matrix."""
    columns: List[str]
    values: np.ndarray
    source: str = "<memory>"

    def __post_init__(self):
        """Validate data after initialization."""
        if self.values.ndim != 2 or self.values.shape[0] == 0:
            raise DataFormatError(f"no observations in {self.source}")
        if self.values.shape[1] != len(self.columns):
            raise DataFormatError(
                f"{len(self.columns)} column names for {self.values.shape[1]} columns in {self.source}"
            )
        if self.n <= self.p:
            raise InsufficientDataError(
                f"Need more observations than columns: n={self.n}, p={self.p} in {self.source}"
            )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=self.columns)


def _first_bad_cell(frame: pd.DataFrame, numeric: pd.DataFrame):
    bad = numeric.isna().to_numpy()
    rows, cols = np.nonzero(bad)
    row, col = rows[0], cols[0]  # row-major, so the first bad cell in file order
    return int(row), str(frame.columns[col]), frame.iat[row, col]


def load_observations(path: Union[str, Path]) -> ObservationSet:
    """
    Read a CSV of observations.

    Args:
        path: File with a header row naming the columns

    Returns:
        ObservationSet with float values in file order

    Raises:
        DataFormatError: Missing file, no observations, ragged rows or
            non-numeric cells (with the file line and column name)
        InsufficientDataError: n <= p
    """
    file_path = Path(path)
    if not file_path.exists():
        raise DataFormatError(f"Input file not found: {file_path}")

    try:
        frame = pd.read_csv(file_path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"no observations in {file_path}")
    except pd.errors.ParserError as e:
        raise DataFormatError(f"Malformed CSV {file_path}: {e}")
    except UnicodeDecodeError as e:
        raise DataFormatError(f"{file_path} is not UTF-8: {e}")

    if frame.empty:
        raise DataFormatError(f"no observations in {file_path}")

    unnamed = [c for c in frame.columns if str(c).startswith("Unnamed:")]
    if unnamed:
        raise DataFormatError("Header row has an empty column name", row=1, column=unnamed[0])

    stripped = frame.apply(lambda col: col.str.strip())
    numeric = stripped.apply(lambda col: pd.to_numeric(col, errors="coerce"))
    if numeric.isna().any().any():
        row, column, cell = _first_bad_cell(frame, numeric)
        raise DataFormatError(f"Non-numeric value '{cell}'", row=row + FIRST_DATA_LINE, column=column)

    values = numeric.to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        rows, cols = np.nonzero(~np.isfinite(values))
        raise DataFormatError("Infinite value", row=int(rows[0]) + FIRST_DATA_LINE,
                              column=str(frame.columns[cols[0]]))

    observations = ObservationSet([str(c) for c in frame.columns], values, str(file_path))
    logger.info(f"Loaded {observations.n} observations of {observations.p} columns from {file_path}")
    return observations


def save_observations(data, path: Union[str, Path], columns: Optional[List[str]] = None) -> Path:
    """Write an n x p array as a CSV with a header row."""
    values = np.atleast_2d(np.asarray(data, dtype=float))
    columns = columns or [f"x{i + 1}" for i in range(values.shape[1])]
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(values, columns=columns).to_csv(file_path, index=False)
    return file_path
