"""Hillstrom e-mail campaign dataset ingestion"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from .core import Treatment
from .errors import IngestionError
from .models import EmailArm, ResponseField
from .uplift_baseline import LabeledExample, UpliftData

logger = logging.getLogger(__name__)

SEGMENTS = {
    EmailArm.MENS: "Mens E-Mail",
    EmailArm.WOMENS: "Womens E-Mail",
}
CONTROL_SEGMENT = "No E-Mail"

NUMERIC_COLUMNS = ["recency", "history"]
BINARY_COLUMNS = ["mens", "womens", "newbie"]
CATEGORIES = {
    "zip_code": ["Rural", "Suburban", "Urban"],
    "channel": ["Multichannel", "Phone", "Web"],
    "history_segment": [
        "1) $0 - $100",
        "2) $100 - $200",
        "3) $200 - $350",
        "4) $350 - $500",
        "5) $500 - $750",
        "6) $750 - $1,000",
        "7) $1,000 +",
    ],
}
# spellings found in the public file mapped to the canonical level
ALIASES = {"zip_code": {"Surburban": "Suburban"}}
REQUIRED_COLUMNS = (
    NUMERIC_COLUMNS + BINARY_COLUMNS + list(CATEGORIES) + ["segment", "visit", "conversion", "spend"]
)

# header is line 1
FIRST_DATA_LINE = 2


@dataclass(frozen=True)
class FeatureMetadata:
    columns: List[str]
    scaling: Dict[str, Tuple[float, float]]  # numeric column -> (min, max) before scaling
    treatment_arm: EmailArm
    response_field: ResponseField
    n_treated: int
    n_control: int
    n_dropped: int

    def to_dict(self) -> Dict:
        return {
            "columns": self.columns,
            "scaling": {k: list(v) for k, v in self.scaling.items()},
            "treatment_arm": self.treatment_arm.value,
            "response_field": self.response_field.value,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "n_dropped": self.n_dropped,
        }


def feature_columns() -> List[str]:
    """Encoded column order: numerics, binaries, then one-hot blocks in CATEGORIES order"""
    columns = NUMERIC_COLUMNS + BINARY_COLUMNS
    for name, levels in CATEGORIES.items():
        columns += [f"{name}={level}" for level in levels]
    return columns


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = values.isna() | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise IngestionError(
            f"column {column!r} holds unparsable value {frame[column].iloc[position]!r}",
            row=position + FIRST_DATA_LINE,
        )
    return values.to_numpy(dtype=np.float64)


def _binary(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = _numeric(frame, column)
    bad = ~np.isin(values, (0.0, 1.0))
    if bad.any():
        position = int(np.flatnonzero(bad)[0])
        raise IngestionError(f"column {column!r} must be 0 or 1, got {values[position]!r}", row=position + FIRST_DATA_LINE)
    return values.astype(np.int64)


def _one_hot(frame: pd.DataFrame, column: str) -> np.ndarray:
    levels = CATEGORIES[column]
    values = frame[column].str.strip().replace(ALIASES.get(column, {}))
    unknown = ~values.isin(levels)
    if unknown.any():
        position = int(np.flatnonzero(unknown.to_numpy())[0])
        raise IngestionError(f"column {column!r} holds unknown category {values.iloc[position]!r}",
                             row=position + FIRST_DATA_LINE)
    codes = pd.Categorical(values, categories=levels).codes
    return np.eye(len(levels), dtype=np.float64)[codes]


def _min_max(values: np.ndarray) -> Tuple[np.ndarray, Tuple[float, float]]:
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.zeros_like(values), (low, high)
    return (values - low) / (high - low), (low, high)


def load_hillstrom_data(
    path: Union[str, Path],
    response_field: Union[ResponseField, str] = ResponseField.VISIT,
    treatment_arm: Union[EmailArm, str] = EmailArm.MENS,
) -> Tuple[UpliftData, FeatureMetadata]:
    """Encoded feature matrix, arm and response of one e-mail arm against control.

    Rows of the other e-mail arm are dropped. Scaling uses the min/max of the
    rows kept.
    """
    response_field = ResponseField(response_field)
    treatment_arm = EmailArm(treatment_arm)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from exc
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestionError(f"missing columns: {', '.join(missing)}")

    segment = frame["segment"].str.strip()
    known = set(SEGMENTS.values()) | {CONTROL_SEGMENT}
    unknown = ~segment.isin(known)
    if unknown.any():
        position = int(np.flatnonzero(unknown.to_numpy())[0])
        raise IngestionError(f"unknown segment {segment.iloc[position]!r}", row=position + FIRST_DATA_LINE)

    # validate every row, including those about to be dropped
    numeric = {c: _numeric(frame, c) for c in NUMERIC_COLUMNS + ["spend"]}
    binary = {c: _binary(frame, c) for c in BINARY_COLUMNS + ["visit", "conversion"]}
    one_hot = [_one_hot(frame, c) for c in CATEGORIES]

    keep = segment.isin([SEGMENTS[treatment_arm], CONTROL_SEGMENT]).to_numpy()
    if not keep.any():
        raise IngestionError(f"no rows for {SEGMENTS[treatment_arm]!r} or {CONTROL_SEGMENT!r}")

    blocks, scaling = [], {}
    for column in NUMERIC_COLUMNS:
        scaled, scaling[column] = _min_max(numeric[column][keep])
        blocks.append(scaled[:, None])
    blocks += [binary[c][keep, None].astype(np.float64) for c in BINARY_COLUMNS]
    blocks += [block[keep] for block in one_hot]

    arm = (segment.to_numpy()[keep] == SEGMENTS[treatment_arm]).astype(np.int64)
    data = UpliftData.from_arrays(np.hstack(blocks), arm, binary[response_field.value][keep])
    metadata = FeatureMetadata(
        columns=feature_columns(), scaling=scaling, treatment_arm=treatment_arm, response_field=response_field,
        n_treated=int(arm.sum()), n_control=int((arm == 0).sum()), n_dropped=int((~keep).sum()),
    )
    logger.info("loaded %d Hillstrom rows (%d treated, %d control, %d dropped)",
                len(data), metadata.n_treated, metadata.n_control, metadata.n_dropped)
    return data, metadata


def load_hillstrom(
    path: Union[str, Path],
    response_field: Union[ResponseField, str] = ResponseField.VISIT,
    treatment_arm: Union[EmailArm, str] = EmailArm.MENS,
) -> Tuple[List[LabeledExample], FeatureMetadata]:
    data, metadata = load_hillstrom_data(path, response_field, treatment_arm)
    examples = [
        LabeledExample(x=data.X[i], arm=Treatment(int(data.arm[i])), y=bool(data.y[i])) for i in range(len(data))
    ]
    return examples, metadata
