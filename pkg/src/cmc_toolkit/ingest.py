"""CSV ingestion into a validated Dataset."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    ConstantColumnError,
    DataValidationError,
    InputOutputError,
    MissingColumnError,
    NonNumericCellError,
    UsageError,
)
from .glm_fit import Dataset, Family

logger = logging.getLogger(__name__)


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise InputOutputError(f"input file not found: {path}") from e
    except UnicodeDecodeError as e:
        raise DataValidationError(f"{path} is not valid UTF-8: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DataValidationError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise DataValidationError(f"cannot parse {path}: {e}") from e
    except OSError as e:
        raise InputOutputError(f"cannot read {path}: {e}") from e


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0]) + 1
        cell = raw.iloc[bad[0]]
        what = "is missing" if cell == "" else f"'{cell}' is not a finite number"
        raise NonNumericCellError(
            f"row {row} (line {row + 1}), column '{column}': value {what}", row=row, column=column
        )
    return values


def ingest_csv(
    path: Union[str, Path],
    response: str,
    predictors: Optional[Sequence[str]] = None,
    family: Union[str, Family] = Family.GAUSSIAN,
) -> Dataset:
    """
    Read a UTF-8 CSV file with a header row into a Dataset.

    Args:
        path: CSV file
        response: Response column name
        predictors: Predictor column names; default is every other column
        family: Response family

    Returns:
        Dataset with the intercept column prepended

    Raises:
        InputOutputError: If the file cannot be read
        MissingColumnError: If a named column does not exist
        NonNumericCellError: For an empty or non-numeric cell, naming row and column
        ConstantColumnError: For a constant predictor column
        InvalidResponseError: If the response does not fit the family
        SingularDesignError: If the predictors are linearly dependent
    """
    path = Path(path)
    family = Family.parse(family)
    frame = _read_frame(path)
    frame.columns = [str(c).strip() for c in frame.columns]

    if response not in frame.columns:
        raise MissingColumnError(f"response column '{response}' not found in {path.name}")
    if predictors is None:
        predictors = [c for c in frame.columns if c != response]
    else:
        predictors = list(predictors)
        missing = [c for c in predictors if c not in frame.columns]
        if missing:
            raise MissingColumnError(f"predictor column(s) not found in {path.name}: {', '.join(missing)}")
        if response in predictors:
            raise UsageError(f"response column '{response}' cannot also be a predictor")
        if len(set(predictors)) != len(predictors):
            raise UsageError("predictor columns must not repeat")

    y = _numeric_column(frame, response)
    columns = []
    for name in predictors:
        values = _numeric_column(frame, name)
        if values.size and np.all(values == values[0]):
            raise ConstantColumnError(f"predictor column '{name}' is constant")
        columns.append(values)
    Z = np.column_stack(columns) if columns else np.empty((len(y), 0))

    data = Dataset.from_predictors(y, Z, family, predictors)
    logger.info(f"Loaded {path.name}: n={data.n}, p={data.p}, family={family.value}")
    return data
