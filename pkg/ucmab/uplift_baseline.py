"""Uplift random forest retrained through an ADWIN change detector.

The controller alternates between a random-assignment collection phase and a
deployed phase that treats whenever the forest's uplift exceeds tau. While
deployed, ADWIN watches the rescaled realized reward; a detected change throws
the model away and starts a fresh collection phase.
"""
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .bandits import realized_reward
from .core import ContextPoint, Treatment, compute_threshold, select_by_threshold
from .errors import DomainError, FitError, ModelStateError
from .models import AdwinParams, ControllerConfig, ForestParams

logger = logging.getLogger(__name__)

FOREST_SCHEMA = "ucmab.forest/1"
# gains at rounding-noise level count as no gain
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class LabeledExample:
    x: ContextPoint
    arm: Treatment
    y: bool


@dataclass(frozen=True)
class UpliftData:
    X: np.ndarray
    arm: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.arm) or len(self.X) != len(self.y):
            raise FitError(f"inconsistent shapes X={self.X.shape}, arm={self.arm.shape}, y={self.y.shape}")

    @classmethod
    def from_arrays(cls, X, arm, y) -> "UpliftData":
        return cls(
            X=np.asarray(X, dtype=np.float64),
            arm=np.asarray(arm, dtype=np.int64),
            y=np.asarray(y, dtype=np.int64),
        )

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample]) -> "UpliftData":
        if not examples:
            raise FitError("no training examples")
        return cls.from_arrays(
            np.vstack([np.asarray(e.x, dtype=np.float64) for e in examples]),
            [int(e.arm) for e in examples],
            [int(bool(e.y)) for e in examples],
        )

    def __len__(self) -> int:
        return len(self.y)

    def take(self, index: np.ndarray) -> "UpliftData":
        return UpliftData(X=self.X[index], arm=self.arm[index], y=self.y[index])


TrainingData = Union[UpliftData, Sequence[LabeledExample]]


def _as_data(data: TrainingData) -> UpliftData:
    return data if isinstance(data, UpliftData) else UpliftData.from_examples(data)


# ============= TREES =============
@dataclass
class UpliftTree:
    """Flat binary tree; feature == -1 marks a leaf"""
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    counts: List[Tuple[int, int, int, int]] = field(default_factory=list)  # (n0, n1, responders0, responders1)
    value: List[float] = field(default_factory=list)

    def _add_node(self, counts: Tuple[int, int, int, int]) -> int:
        n0, n1, r0, r1 = counts
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append((int(n0), int(n1), int(r0), int(r1)))
        self.value.append(r1 / n1 - r0 / n0 if n0 > 0 and n1 > 0 else 0.0)
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self) -> List[int]:
        return [i for i, f in enumerate(self.feature) if f < 0]

    def predict_one(self, x: ContextPoint) -> float:
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while feature[node] >= 0:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return self.value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        nodes = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = feature[nodes] >= 0
        while np.any(active):
            idx = rows[active]
            cur = nodes[idx]
            go_left = X[idx, feature[cur]] <= threshold[cur]
            nodes[idx] = np.where(go_left, left[cur], right[cur])
            active = feature[nodes] >= 0
        return np.asarray(self.value)[nodes]

    def to_dict(self) -> Dict[str, Any]:
        nodes = []
        for i in range(self.n_nodes):
            node: Dict[str, Any] = {"counts": list(self.counts[i]), "uplift": self.value[i]}
            if self.feature[i] >= 0:
                node.update(feature=self.feature[i], threshold=self.threshold[i],
                            left=self.left[i], right=self.right[i])
            nodes.append(node)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UpliftTree":
        tree = cls()
        for node in data["nodes"]:
            i = tree._add_node(tuple(node["counts"]))
            if "uplift" in node:
                tree.value[i] = float(node["uplift"])
            if "feature" in node:
                tree.feature[i] = int(node["feature"])
                tree.threshold[i] = float(node["threshold"])
                tree.left[i] = int(node["left"])
                tree.right[i] = int(node["right"])
        return tree


def _node_counts(arm: np.ndarray, y: np.ndarray) -> Tuple[int, int, int, int]:
    treated = arm == 1
    return (
        int(np.count_nonzero(~treated)), int(np.count_nonzero(treated)),
        int(np.count_nonzero(y[~treated])), int(np.count_nonzero(y[treated])),
    )


def _best_split(
    X: np.ndarray, arm: np.ndarray, y: np.ndarray, features: Sequence[int], min_group: int, parent_uplift: float
) -> Optional[Tuple[float, int, float]]:
    """Exhaustive search for the split maximizing the squared uplift divergence

    Returns (gain, feature, threshold) or None when no admissible split exists.
    """
    n = len(y)
    treated = (arm == 1).astype(np.int64)
    control = 1 - treated
    best: Optional[Tuple[float, int, float]] = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        t, c, yy = treated[order], control[order], y[order]
        n1_left = np.cumsum(t)[:-1]
        n0_left = np.cumsum(c)[:-1]
        r1_left = np.cumsum(t * yy)[:-1]
        r0_left = np.cumsum(c * yy)[:-1]
        n1_right = t.sum() - n1_left
        n0_right = c.sum() - n0_left
        r1_right = (t * yy).sum() - r1_left
        r0_right = (c * yy).sum() - r0_left

        admissible = (
            (xs[:-1] < xs[1:])
            & (n1_left >= min_group) & (n0_left >= min_group)
            & (n1_right >= min_group) & (n0_right >= min_group)
        )
        positions = np.nonzero(admissible)[0]
        if positions.size == 0:
            continue
        u_left = r1_left[positions] / n1_left[positions] - r0_left[positions] / n0_left[positions]
        u_right = r1_right[positions] / n1_right[positions] - r0_right[positions] / n0_right[positions]
        w_left = (positions + 1) / n
        gains = w_left * (u_left - parent_uplift) ** 2 + (1.0 - w_left) * (u_right - parent_uplift) ** 2
        k = int(np.argmax(gains))
        gain = float(gains[k])
        if best is None or gain > best[0]:
            pos = positions[k]
            best = (gain, int(f), float((xs[pos] + xs[pos + 1]) / 2.0))
    return best


def fit_tree(
    data: TrainingData, params: Optional[ForestParams] = None, rng: Optional[np.random.Generator] = None
) -> UpliftTree:
    """Greedy recursive partitioning on the squared uplift divergence between children"""
    params = params or ForestParams()
    data = _as_data(data)
    counts = _node_counts(data.arm, data.y)
    if counts[0] == 0 or counts[1] == 0:
        raise FitError("training data must contain both treated and control examples")
    if counts[0] < params.min_group or counts[1] < params.min_group:
        raise FitError(f"each arm needs at least min_group={params.min_group} examples, got n0={counts[0]}, n1={counts[1]}")

    n_features = data.X.shape[1]
    per_split = params.features_per_split(n_features)
    if per_split < n_features and rng is None:
        rng = np.random.default_rng(0)

    tree = UpliftTree()

    def grow(index: np.ndarray, depth: int) -> int:
        node = tree._add_node(_node_counts(data.arm[index], data.y[index]))
        if depth >= params.max_depth:
            return node
        if per_split < n_features:
            features = np.sort(rng.choice(n_features, size=per_split, replace=False))
        else:
            features = range(n_features)
        X, arm, y = data.X[index], data.arm[index], data.y[index]
        split = _best_split(X, arm, y, features, params.min_group, tree.value[node])
        if split is None or split[0] <= MIN_GAIN:
            return node
        _, f, thr = split
        goes_left = X[:, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = grow(index[goes_left], depth + 1)
        tree.right[node] = grow(index[~goes_left], depth + 1)
        return node

    grow(np.arange(len(data)), 0)
    return tree


# ============= FORESTS =============
@dataclass
class UpliftForest:
    trees: List[UpliftTree]
    n_features: int
    seed: Optional[int] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise ModelStateError("forest has no trees")
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)


def _stratified_bootstrap(arm: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for value in (0, 1):
        members = np.flatnonzero(arm == value)
        parts.append(rng.choice(members, size=members.size, replace=True))
    return np.concatenate(parts)


def _fit_member(data: UpliftData, params: ForestParams, seed: np.random.SeedSequence) -> UpliftTree:
    rng = np.random.default_rng(seed)
    if params.bootstrap:
        data = data.take(_stratified_bootstrap(data.arm, rng))
    return fit_tree(data, params, rng)


def fit_forest(
    data: TrainingData, n_trees: Optional[int] = None, params: Optional[ForestParams] = None, seed: int = 0
) -> UpliftForest:
    """Bagged uplift trees; identical seeds give identical forests whatever n_jobs is"""
    params = params or ForestParams()
    n_trees = n_trees or params.n_trees
    data = _as_data(data)
    counts = _node_counts(data.arm, data.y)
    if counts[0] == 0 or counts[1] == 0:
        raise FitError("training data must contain both treated and control examples")

    children = np.random.SeedSequence(seed).spawn(n_trees)
    if params.n_jobs == 1:
        trees = [_fit_member(data, params, child) for child in children]
    else:
        trees = Parallel(n_jobs=params.n_jobs)(delayed(_fit_member)(data, params, child) for child in children)
    logger.debug("fitted %d uplift trees on %d examples", n_trees, len(data))
    return UpliftForest(trees=list(trees), n_features=data.X.shape[1], seed=seed)


def predict_uplift(model: Optional[UpliftForest], x: ContextPoint) -> float:
    """Mean of the leaf uplift reached by x in each tree"""
    if model is None or not model.trees:
        raise ModelStateError("uplift forest is not fitted")
    return sum(tree.predict_one(x) for tree in model.trees) / len(model.trees)


def forest_to_dict(model: UpliftForest) -> Dict[str, Any]:
    return {
        "schema": FOREST_SCHEMA,
        "n_features": model.n_features,
        "seed": model.seed,
        "trees": [tree.to_dict() for tree in model.trees],
    }


def forest_from_dict(data: Dict[str, Any]) -> UpliftForest:
    return UpliftForest(
        trees=[UpliftTree.from_dict(t) for t in data["trees"]],
        n_features=int(data["n_features"]), seed=data.get("seed"),
    )


# ============= ADWIN =============
class AdwinDetector:
    """Adaptive windowing over an exponential histogram of [0, 1] observations"""

    def __init__(self, params: Optional[AdwinParams] = None, **overrides):
        self.params = params or AdwinParams(**overrides)
        self.n_detections = 0
        self.clear()

    def clear(self) -> None:
        # level i holds buckets of 2**i observations as (total, sum of squared deviations), oldest first
        self._levels: List[Deque[Tuple[float, float]]] = [deque()]
        self.width = 0
        self.total = 0.0
        self._ssd = 0.0
        self._tick = 0

    @property
    def mean(self) -> float:
        return self.total / self.width if self.width else 0.0

    @property
    def variance(self) -> float:
        return max(self._ssd, 0.0) / self.width if self.width else 0.0

    @property
    def n_buckets(self) -> int:
        return sum(len(level) for level in self._levels)

    def bucket_sizes(self) -> List[int]:
        return [2 ** i for i in range(len(self._levels) - 1, -1, -1) for _ in self._levels[i]]

    def update(self, value: float) -> bool:
        if not (0.0 <= value <= 1.0):
            raise DomainError(f"ADWIN observations must lie in [0, 1], got {value!r}")
        self._insert(float(value))
        self._compress()
        self._tick += 1
        if self._tick % self.params.clock == 0 and self.width > self.params.grace_period:
            return self._detect()
        return False

    def _insert(self, value: float) -> None:
        if self.width > 0:
            mean = self.total / self.width
            self._ssd += self.width * (value - mean) ** 2 / (self.width + 1)
        self.width += 1
        self.total += value
        self._levels[0].append((value, 0.0))

    def _compress(self) -> None:
        size = 1
        for i in range(len(self._levels)):
            level = self._levels[i]
            if len(level) <= self.params.max_buckets:
                break
            if i + 1 == len(self._levels):
                self._levels.append(deque())
            t1, v1 = level.popleft()
            t2, v2 = level.popleft()
            merged = v1 + v2 + size * size * (t1 / size - t2 / size) ** 2 / (2 * size)
            self._levels[i + 1].append((t1 + t2, merged))
            size *= 2

    def _drop_oldest(self) -> None:
        top = len(self._levels) - 1
        total, ssd = self._levels[top].popleft()
        size = 2 ** top
        rest = self.width - size
        if rest > 0:
            rest_mean = (self.total - total) / rest
            self._ssd -= ssd + size * rest * (total / size - rest_mean) ** 2 / (size + rest)
        else:
            self._ssd = 0.0
        self.width = rest
        self.total -= total
        while len(self._levels) > 1 and not self._levels[-1]:
            self._levels.pop()

    def _cut_threshold(self, n0: np.ndarray, n1: np.ndarray) -> np.ndarray:
        m = 1.0 / (n0 - self.params.min_window + 1) + 1.0 / (n1 - self.params.min_window + 1)
        d = math.log(2.0 * math.log(self.width) / self.params.delta)
        return np.sqrt(2.0 * m * self.variance * d) + 2.0 / 3.0 * d * m

    def _has_cut(self) -> bool:
        """True when some split of the window into old and recent buckets has diverging means"""
        sizes = np.array([2 ** i for i in range(len(self._levels) - 1, -1, -1) for _ in self._levels[i]], dtype=np.int64)
        totals = np.array([t for i in range(len(self._levels) - 1, -1, -1) for t, _ in self._levels[i]])
        n0 = np.cumsum(sizes)[:-1]
        u0 = np.cumsum(totals)[:-1]
        n1 = self.width - n0
        u1 = self.total - u0
        ok = (n0 >= self.params.min_window) & (n1 >= self.params.min_window)
        if not np.any(ok):
            return False
        n0, u0, n1, u1 = n0[ok], u0[ok], n1[ok], u1[ok]
        return bool(np.any(np.abs(u0 / n0 - u1 / n1) >= self._cut_threshold(n0, n1)))

    def _detect(self) -> bool:
        detected = False
        while self.width > self.params.grace_period and self._has_cut():
            detected = True
            self._drop_oldest()
        if detected:
            self.n_detections += 1
        return detected


def adwin_observe(detector: AdwinDetector, value: float) -> bool:
    return detector.update(value)


# ============= CONTROLLER =============
class Phase(str, enum.Enum):
    COLLECTING = "collecting"
    DEPLOYED = "deployed"


@dataclass
class ControllerState:
    config: ControllerConfig
    detector: AdwinDetector
    tau: float
    phase: Phase = Phase.COLLECTING
    buffer: List[LabeledExample] = field(default_factory=list)
    model: Optional[UpliftForest] = None
    n_fits: int = 0
    seed: int = 0

    @property
    def collection_target(self) -> int:
        return self.config.collection_target


def make_controller(config: Optional[ControllerConfig] = None, seed: int = 0) -> ControllerState:
    config = config or ControllerConfig()
    return ControllerState(
        config=config, detector=AdwinDetector(config.adwin), tau=compute_threshold(config.reward_spec), seed=seed,
    )


def controller_act(state: ControllerState, x: ContextPoint, rng: np.random.Generator) -> Treatment:
    if state.phase == Phase.COLLECTING:
        return Treatment(int(rng.integers(2)))
    return select_by_threshold(predict_uplift(state.model, x), state.tau)


def controller_feedback(
    state: ControllerState, x: ContextPoint, arm: int, y: bool, correctness_signal: float
) -> ControllerState:
    if state.phase == Phase.COLLECTING:
        state.buffer.append(LabeledExample(x=np.array(x, dtype=np.float64), arm=Treatment(int(arm)), y=bool(y)))
        if len(state.buffer) >= state.collection_target:
            try:
                state.model = fit_forest(state.buffer, params=state.config.forest, seed=state.seed + state.n_fits)
            except FitError as exc:
                logger.warning("retraining postponed after %d examples: %s", len(state.buffer), exc)
                return state
            state.n_fits += 1
            state.buffer = []
            state.phase = Phase.DEPLOYED
            state.detector.clear()
            logger.debug("uplift forest deployed (fit #%d)", state.n_fits)
        return state

    if adwin_observe(state.detector, correctness_signal):
        logger.debug("ADWIN detected a change; collecting new data")
        state.model = None
        state.buffer = []
        state.phase = Phase.COLLECTING
    return state


class UpliftController:
    """Policy adapter feeding ADWIN the realized reward rescaled to [0, 1]"""

    name = "urf"

    def __init__(self, config: Optional[ControllerConfig] = None, seed: int = 0):
        self.state = make_controller(config, seed)
        self.rng = np.random.default_rng(seed)
        self._low, self._high = self.state.config.reward_spec.reward_range()
        self.events: List[Tuple[int, str]] = []

    @property
    def phase(self) -> Phase:
        return self.state.phase

    def act(self, x: ContextPoint, t: Optional[int] = None) -> Treatment:
        return controller_act(self.state, x, self.rng)

    def feedback(self, x: ContextPoint, arm: int, responded: bool, t: Optional[int] = None) -> float:
        reward = realized_reward(responded, arm, self.state.config.reward_spec)
        signal = (reward - self._low) / (self._high - self._low)
        before = self.state.phase
        controller_feedback(self.state, x, arm, responded, signal)
        if self.state.phase != before:
            self.events.append((-1 if t is None else t, self.state.phase.value))
        return reward
