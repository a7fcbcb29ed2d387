"""Qini curves, the random-selection baseline and regret trace aggregation"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .core import Treatment
from .errors import DomainError

FLOAT_FORMAT = "%.6f"


# ============= QINI =============
@dataclass(frozen=True)
class ScoredIndividual:
    score: float
    arm: Treatment
    y: bool

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise DomainError(f"score must be finite, got {self.score!r}")


@dataclass(frozen=True)
class QiniPoint:
    b: int
    fraction: float
    q: float
    treated_responders: int
    treated: int
    control_responders: int
    control: int
    undefined: bool = False  # one arm absent from the first b bins


def _bin_ends(n: int, bins: int) -> np.ndarray:
    """Cumulative bin boundaries; the first n % bins bins hold one extra individual"""
    sizes = np.full(bins, n // bins, dtype=np.int64)
    sizes[: n % bins] += 1
    return np.cumsum(sizes)


def qini_curve_arrays(score, arm, y, bins: int = 10) -> List[QiniPoint]:
    score = np.asarray(score, dtype=np.float64)
    arm = np.asarray(arm, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    n = len(score)
    if n == 0:
        raise DomainError("qini curve needs at least one individual")
    if bins < 1 or bins > n:
        raise DomainError(f"bin count must lie in [1, {n}], got {bins}")
    if not np.all(np.isfinite(score)):
        raise DomainError("scores must be finite")
    if not (np.any(arm == 1) and np.any(arm == 0)):
        raise DomainError("qini curve needs both treated and control individuals")

    # stable sort on the negated score keeps input order among ties
    order = np.argsort(-score, kind="stable")
    treated = (arm[order] == 1).astype(np.int64)
    responders = y[order]
    n1 = np.cumsum(treated)
    n0 = np.cumsum(1 - treated)
    y1 = np.cumsum(treated * responders)
    y0 = np.cumsum((1 - treated) * responders)

    points = []
    for b, end in enumerate(_bin_ends(n, bins), start=1):
        i = end - 1
        N1, N0, Y1, Y0 = int(n1[i]), int(n0[i]), int(y1[i]), int(y0[i])
        undefined = N1 == 0 or N0 == 0
        q = 0.0 if undefined else Y1 / N1 - Y0 / N0
        points.append(QiniPoint(b=b, fraction=b / bins, q=q, treated_responders=Y1, treated=N1,
                                control_responders=Y0, control=N0, undefined=undefined))
    return points


def qini_curve(scored: Sequence[ScoredIndividual], bins: int = 10) -> List[QiniPoint]:
    """Cumulative incremental response rate over the first b of `bins` ranked bins"""
    if len(scored) == 0:
        raise DomainError("qini curve needs at least one individual")
    return qini_curve_arrays(
        [s.score for s in scored], [int(s.arm) for s in scored], [int(bool(s.y)) for s in scored], bins,
    )


def random_selection_line(final_q: float, bins: int) -> List[float]:
    if bins < 1:
        raise DomainError(f"bin count must be positive, got {bins}")
    return [final_q * b / bins for b in range(1, bins + 1)]


def _q_values(curve: Sequence[Union[QiniPoint, float]]) -> np.ndarray:
    return np.asarray([p.q if isinstance(p, QiniPoint) else float(p) for p in curve], dtype=np.float64)


def qini_area(curve: Sequence[Union[QiniPoint, float]], baseline: Sequence[Union[QiniPoint, float]]) -> float:
    """Trapezoidal area between curve and baseline over fraction in [0, 1]; both start at 0"""
    model, base = _q_values(curve), _q_values(baseline)
    if len(model) != len(base):
        raise DomainError(f"curve has {len(model)} points but baseline has {len(base)}")
    if len(model) == 0:
        raise DomainError("curves must not be empty")
    gap = np.concatenate([[0.0], model - base])
    fractions = np.linspace(0.0, 1.0, len(gap))
    return float(np.sum((gap[1:] + gap[:-1]) / 2.0 * np.diff(fractions)))


def qini_area_of_scores(score, arm, y, bins: int = 10) -> float:
    curve = qini_curve_arrays(score, arm, y, bins)
    return qini_area(curve, random_selection_line(curve[-1].q, bins))


def qini_permutation_null(score, arm, y, bins: int = 10, n_permutations: int = 100, seed: int = 0) -> np.ndarray:
    """Qini areas obtained after randomly permuting the scores"""
    score = np.asarray(score, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return np.asarray([qini_area_of_scores(rng.permutation(score), arm, y, bins) for _ in range(n_permutations)])


def write_qini_csv(curve: Sequence[QiniPoint], path: Union[str, Path]) -> Path:
    baseline = random_selection_line(curve[-1].q, len(curve))
    frame = pd.DataFrame({
        "b": [p.b for p in curve],
        "fraction": [p.fraction for p in curve],
        "q": [p.q for p in curve],
        "random": baseline,
        "treated_responders": [p.treated_responders for p in curve],
        "treated": [p.treated for p in curve],
        "control_responders": [p.control_responders for p in curve],
        "control": [p.control for p in curve],
        "undefined": [int(p.undefined) for p in curve],
    })
    return _write_csv(frame, path)


# ============= REGRET TRACES =============
def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over `window` steps; the first steps average what is available"""
    if window < 1:
        raise DomainError(f"window must be positive, got {window}")
    values = np.asarray(values, dtype=np.float64)
    cs = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    start = np.maximum(idx - window, 0)
    return (cs[idx] - cs[start]) / (idx - start)


@dataclass
class RegretTrace:
    regret: np.ndarray
    windowed: np.ndarray
    window: int
    markers: List[Tuple[int, str]] = field(default_factory=list)

    @classmethod
    def from_steps(cls, regret, window: int, markers: Optional[List[Tuple[int, str]]] = None) -> "RegretTrace":
        regret = np.asarray(regret, dtype=np.float64)
        return cls(regret=regret, windowed=moving_average(regret, window), window=window, markers=list(markers or []))

    def __len__(self) -> int:
        return len(self.regret)

    @property
    def final(self) -> float:
        return float(self.windowed[-1])

    def mean_between(self, start: int, stop: int) -> float:
        return float(np.mean(self.regret[start:stop]))


@dataclass
class AggregatedTrace:
    mean: RegretTrace
    low: np.ndarray
    high: np.ndarray
    n_runs: int


def aggregate_traces(traces: Sequence[RegretTrace]) -> AggregatedTrace:
    """Pointwise mean of several runs plus the min/max band"""
    if not traces:
        raise DomainError("no traces to aggregate")
    first = traces[0]
    for trace in traces[1:]:
        if len(trace) != len(first) or trace.window != first.window:
            raise DomainError(
                f"traces differ: length {len(trace)} vs {len(first)}, window {trace.window} vs {first.window}"
            )
    windowed = np.vstack([t.windowed for t in traces])
    regret = np.vstack([t.regret for t in traces])
    # drift markers are shared by every run; policy phase events are not
    drift = [(step, label) for step, label in first.markers if label.startswith("drift")]
    mean = RegretTrace(regret=regret.mean(axis=0), windowed=windowed.mean(axis=0), window=first.window, markers=drift)
    return AggregatedTrace(mean=mean, low=windowed.min(axis=0), high=windowed.max(axis=0), n_runs=len(traces))


def _marker_column(length: int, markers: Sequence[Tuple[int, str]]) -> List[str]:
    column = [""] * length
    for step, label in markers:
        if 0 <= step < length:
            column[step] = f"{column[step]};{label}" if column[step] else label
    return column


def write_trace_csv(trace: RegretTrace, path: Union[str, Path]) -> Path:
    frame = pd.DataFrame({
        "step": np.arange(len(trace)),
        "regret": trace.regret.astype(np.int64) if np.all(np.isin(trace.regret, (0.0, 1.0))) else trace.regret,
        "regret_windowed": trace.windowed,
        "marker": _marker_column(len(trace), trace.markers),
    })
    return _write_csv(frame, path)


def write_aggregate_csv(aggregate: AggregatedTrace, path: Union[str, Path]) -> Path:
    frame = pd.DataFrame({
        "step": np.arange(len(aggregate.mean)),
        "regret_windowed": aggregate.mean.windowed,
        "regret_min": aggregate.low,
        "regret_max": aggregate.high,
        "marker": _marker_column(len(aggregate.mean), aggregate.mean.markers),
    })
    return _write_csv(frame, path)


def _write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    return path
