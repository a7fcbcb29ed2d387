"""Epsilon-greedy U-CMAB and CMAB agents over a uniform grid of the context space"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .core import ContextPoint, RewardSpec, Treatment, as_treatment, select_by_argmax
from .errors import ConfigurationError, DomainError
from .models import BanditConfig

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "ucmab.agent/1"
MAX_CELLS = 10_000_000

Bounds = Sequence[Tuple[float, float]]


@dataclass
class ValueEstimator:
    """Penalized reward estimates, one row per grid cell and one column per arm"""
    table: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    bins: int

    @property
    def n_features(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.bins,) * self.n_features

    def flat_index(self, cell: Tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(cell, self.shape))

    def cell_of(self, x: ContextPoint) -> int:
        return self.flat_index(_grid_cell(x, self.lower, self.upper, self.bins))


@dataclass
class AgentState:
    config: BanditConfig
    estimator: ValueEstimator
    steps_taken: int
    rng: np.random.Generator
    kind: str = "ucmab"


def _check_bounds(bounds: Bounds) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(bounds, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ConfigurationError(f"bounds must be a non-empty list of (low, high) pairs, got {bounds!r}")
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 1] <= arr[:, 0]):
        raise ConfigurationError(f"every bound needs finite low < high, got {bounds!r}")
    return arr[:, 0].copy(), arr[:, 1].copy()


def _grid_cell(x: ContextPoint, lower: np.ndarray, upper: np.ndarray, bins: int) -> Tuple[int, ...]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != lower.shape:
        raise DomainError(f"context has shape {x.shape}, expected ({len(lower)},)")
    if not np.all(np.isfinite(x)):
        raise DomainError("context entries must be finite")
    scaled = np.floor((x - lower) / (upper - lower) * bins).astype(np.int64)
    # outside the box, and the upper edge itself, fall into the edge cells
    np.clip(scaled, 0, bins - 1, out=scaled)
    return tuple(int(i) for i in scaled)


def discretize(x: ContextPoint, config: BanditConfig, bounds: Bounds) -> Tuple[int, ...]:
    """Grid cell of x, one index per dimension"""
    lower, upper = _check_bounds(bounds)
    return _grid_cell(x, lower, upper, config.bins_per_dimension)


def realized_reward(responded: bool, arm: int, spec: RewardSpec) -> float:
    """R(y) - psi_arm for one observed outcome"""
    return spec.reward(responded) - spec.penalty(arm)


def act(state: AgentState, x: ContextPoint) -> Treatment:
    """Epsilon-greedy choice; always draws one uniform so equal seeds stay in lock-step"""
    values = state.estimator.table[state.estimator.cell_of(x)]
    if state.rng.random() < state.config.epsilon:
        return Treatment(int(state.rng.integers(2)))
    return select_by_argmax((float(values[0]), float(values[1])))


def update(state: AgentState, x: ContextPoint, arm: int, reward: float) -> AgentState:
    """Constant step-size tracking of the visited (cell, arm) estimate"""
    if not math.isfinite(reward):
        raise DomainError(f"reward must be finite, got {reward!r}")
    arm = as_treatment(arm)
    cell = state.estimator.cell_of(x)
    q = state.estimator.table[cell, arm]
    state.estimator.table[cell, arm] = q + state.config.step_size * (reward - q)
    state.steps_taken += 1
    return state


def _validated(config: Union[BanditConfig, Dict[str, Any]]) -> BanditConfig:
    try:
        if isinstance(config, BanditConfig):
            return BanditConfig.model_validate(config.model_dump())
        return BanditConfig.model_validate(config)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


def _make_agent(config: BanditConfig, bounds: Bounds, seed: Optional[int], kind: str) -> AgentState:
    lower, upper = _check_bounds(bounds)
    cells = config.bins_per_dimension ** len(lower)
    if cells > MAX_CELLS:
        raise ConfigurationError(
            f"{config.bins_per_dimension} bins over {len(lower)} dimensions gives {cells} cells (limit {MAX_CELLS})"
        )
    table = np.full((cells, 2), config.optimism, dtype=np.float64)
    estimator = ValueEstimator(table=table, lower=lower, upper=upper, bins=config.bins_per_dimension)
    logger.debug("created %s agent with %d cells", kind, cells)
    return AgentState(config=config, estimator=estimator, steps_taken=0, rng=np.random.default_rng(seed), kind=kind)


def make_ucmab(config: Union[BanditConfig, Dict[str, Any]], bounds: Bounds, seed: Optional[int] = None) -> AgentState:
    """Agent optimizing the penalized reward, i.e. uplift above tau"""
    return _make_agent(_validated(config), bounds, seed, "ucmab")


def make_cmab(config: Union[BanditConfig, Dict[str, Any]], bounds: Bounds, seed: Optional[int] = None) -> AgentState:
    """Plain contextual bandit: the configured penalties are ignored"""
    config = _validated(config)
    config = config.model_copy(update={"reward_spec": config.reward_spec.with_zero_penalties()})
    return _make_agent(config, bounds, seed, "cmab")


class BanditAgent:
    """Policy adapter used by episodes, the CLI and the decision service"""

    def __init__(self, state: AgentState, name: Optional[str] = None):
        self.state = state
        self.name = name or state.kind

    def act(self, x: ContextPoint, t: Optional[int] = None) -> Treatment:
        return act(self.state, x)

    def feedback(self, x: ContextPoint, arm: int, responded: bool, t: Optional[int] = None) -> float:
        reward = realized_reward(responded, arm, self.state.config.reward_spec)
        update(self.state, x, arm, reward)
        return reward


# ============= CHECKPOINTS =============
def agent_to_dict(state: AgentState) -> Dict[str, Any]:
    est = state.estimator
    return {
        "schema": CHECKPOINT_SCHEMA,
        "kind": state.kind,
        "config": state.config.model_dump(mode="json"),
        "bounds": [[float(lo), float(hi)] for lo, hi in zip(est.lower, est.upper)],
        "table": est.table.tolist(),
        "steps_taken": state.steps_taken,
        "rng_state": state.rng.bit_generator.state,
    }


def agent_from_dict(data: Dict[str, Any]) -> AgentState:
    if data.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigurationError(f"unsupported checkpoint schema {data.get('schema')!r}")
    config = _validated(data["config"])
    lower, upper = _check_bounds(data["bounds"])
    table = np.asarray(data["table"], dtype=np.float64)
    expected = (config.bins_per_dimension ** len(lower), 2)
    if table.shape != expected:
        raise ConfigurationError(f"checkpoint table has shape {table.shape}, expected {expected}")
    if not np.all(np.isfinite(table)):
        raise ConfigurationError("checkpoint table holds non-finite estimates")

    rng_state = data["rng_state"]
    bit_generator = getattr(np.random, rng_state["bit_generator"])()
    bit_generator.state = rng_state

    estimator = ValueEstimator(table=table, lower=lower, upper=upper, bins=config.bins_per_dimension)
    return AgentState(
        config=config, estimator=estimator, steps_taken=int(data["steps_taken"]),
        rng=np.random.Generator(bit_generator), kind=data.get("kind", "ucmab"),
    )


def save_agent(state: AgentState, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(agent_to_dict(state)), encoding="utf-8")
    tmp.replace(path)
    return path


def load_agent(path: Union[str, Path]) -> AgentState:
    return agent_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
