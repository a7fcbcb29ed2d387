"""Pydantic schemas for agents, baselines, environments and experiment files"""
import enum
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, field_validator, model_validator

from .core import RewardSpec, compute_threshold


__all__ = [
    'BanditConfig',
    'ForestParams',
    'AdwinParams',
    'ControllerConfig',
    'SurfaceParams',
    'DriftSchedule',
    'EnvironmentSpec',
    'AgentsSection',
    'QiniSection',
    'ExperimentConfig',
]


def _require_tau_in_range(spec: RewardSpec) -> RewardSpec:
    tau = compute_threshold(spec)
    if not (-1.0 <= tau < 1.0):
        raise ValueError(f"threshold tau={tau:.6g} derived from the reward spec lies outside [-1, 1)")
    return spec


# Enums
class DriftKind(str, enum.Enum):
    NONE = "none"
    SUDDEN = "sudden"
    GRADUAL = "gradual"


class ExperimentKind(str, enum.Enum):
    SIMULATE = "simulate"
    QINI = "qini"


class ResponseField(str, enum.Enum):
    VISIT = "visit"
    CONVERSION = "conversion"


class EmailArm(str, enum.Enum):
    MENS = "mens"
    WOMENS = "womens"


class EstimatorKind(str, enum.Enum):
    FOREST = "forest"
    TWO_MODEL = "two_model"


class PolicyName(str, enum.Enum):
    UCMAB = "ucmab"
    CMAB = "cmab"
    URF = "urf"


# ============= BANDIT SCHEMAS =============
class BanditConfig(BaseModel):
    """Epsilon-greedy agent over a uniform grid.

    The defaults (epsilon=0.1, step_size=0.01, 10 bins) are implementation
    choices; the bundled experiment files tune them for a 2-d environment.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(0.1, ge=0.0, le=1.0, description="Exploration rate")
    step_size: float = Field(0.01, gt=0.0, le=1.0, description="Constant tracking step size alpha")
    bins_per_dimension: int = Field(10, ge=1)
    reward_spec: RewardSpec = Field(default_factory=RewardSpec)
    optimism: FiniteFloat = Field(0.0, description="Initial value of every cell")

    @field_validator("reward_spec")
    @classmethod
    def _tau_in_range(cls, spec: RewardSpec) -> RewardSpec:
        return _require_tau_in_range(spec)


# ============= UPLIFT BASELINE SCHEMAS =============
class ForestParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trees: int = Field(50, ge=1)
    max_depth: int = Field(8, ge=0)
    min_group: int = Field(5, ge=1, description="Minimum examples per arm in every leaf")
    max_features: Union[Literal["sqrt"], int, None] = Field("sqrt", description="Features tried per split; None = all")
    bootstrap: bool = True
    n_jobs: int = Field(1, description="joblib workers for tree training")

    @field_validator("max_features")
    @classmethod
    def _positive_features(cls, value):
        if isinstance(value, int) and value < 1:
            raise ValueError("max_features must be >= 1")
        return value

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None:
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return min(n_features, self.max_features)


class AdwinParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta: float = Field(0.002, gt=0.0, lt=1.0, description="Confidence of the cut test")
    max_buckets: int = Field(5, ge=2, description="Buckets kept per histogram level")
    min_window: int = Field(5, ge=1, description="Minimum size of each sub-window in a cut")
    grace_period: int = Field(10, ge=1, description="Observations before the first cut check")
    clock: int = Field(1, ge=1, description="Cut checks run every `clock` insertions")


class ControllerConfig(BaseModel):
    """Uplift forest retrained from a random-assignment period whenever ADWIN fires"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    collection_target: int = Field(2000, ge=2)
    reward_spec: RewardSpec = Field(default_factory=RewardSpec)
    forest: ForestParams = Field(default_factory=ForestParams)
    adwin: AdwinParams = Field(default_factory=AdwinParams)

    @field_validator("reward_spec")
    @classmethod
    def _tau_in_range(cls, spec: RewardSpec) -> RewardSpec:
        return _require_tau_in_range(spec)


# ============= ENVIRONMENT SCHEMAS =============
class SurfaceParams(BaseModel):
    """Drift-able parameters of u(x) = u_max * sigmoid(k * (w.x + c)) - u_shift and b(x) = clamp(w_b.x + c_b)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    w: List[FiniteFloat]
    c: FiniteFloat = 0.0
    k: FiniteFloat = 1.0
    u_max: FiniteFloat = 0.5
    u_shift: FiniteFloat = 0.0
    w_b: List[FiniteFloat]
    c_b: FiniteFloat = 0.3
    margins: Tuple[FiniteFloat, FiniteFloat] = (0.0, 1.0)

    @model_validator(mode="after")
    def _shapes(self) -> "SurfaceParams":
        if len(self.w) < 1:
            raise ValueError("w must have at least one entry")
        if len(self.w) != len(self.w_b):
            raise ValueError(f"w has {len(self.w)} entries but w_b has {len(self.w_b)}")
        lo, hi = self.margins
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"margins must satisfy 0 <= lo <= hi <= 1, got {self.margins}")
        return self

    @property
    def n(self) -> int:
        return len(self.w)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.w, [self.c, self.k, self.u_max, self.u_shift], self.w_b, [self.c_b], self.margins,
        ]).astype(np.float64)

    @classmethod
    def from_vector(cls, theta: np.ndarray, n: int) -> "SurfaceParams":
        theta = [float(v) for v in theta]
        return cls(
            w=theta[:n], c=theta[n], k=theta[n + 1], u_max=theta[n + 2], u_shift=theta[n + 3],
            w_b=theta[n + 4:2 * n + 4], c_b=theta[2 * n + 4], margins=(theta[2 * n + 5], theta[2 * n + 6]),
        )

    def interpolate(self, other: "SurfaceParams", fraction: float) -> "SurfaceParams":
        theta = (1.0 - fraction) * self.to_vector() + fraction * other.to_vector()
        return SurfaceParams.from_vector(theta, self.n)

    def flipped(self) -> "SurfaceParams":
        """Same surface with the high-uplift region moved to the other side of the boundary"""
        return self.model_copy(update={"w": [-v for v in self.w], "c": -self.c})


class DriftSchedule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DriftKind = DriftKind.NONE
    end: Optional[SurfaceParams] = Field(None, description="Parameters after drift; defaults to the flipped start surface")
    t_change: Optional[int] = Field(None, ge=0)
    t_begin: Optional[int] = Field(None, ge=0)
    t_end: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _times(self) -> "DriftSchedule":
        if self.kind == DriftKind.SUDDEN and self.t_change is None:
            raise ValueError("sudden drift needs t_change")
        if self.kind == DriftKind.GRADUAL:
            if self.t_begin is None or self.t_end is None:
                raise ValueError("gradual drift needs t_begin and t_end")
            if not self.t_begin < self.t_end:
                raise ValueError(f"gradual drift needs t_begin < t_end, got [{self.t_begin}, {self.t_end}]")
        return self


class EnvironmentSpec(BaseModel):
    """Everything needed to replay one stochastic environment"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(2, ge=1, description="Context dimension")
    surface: Optional[SurfaceParams] = Field(None, description="None draws a random surface from `seed`")
    schedule: DriftSchedule = Field(default_factory=DriftSchedule)
    reward_spec: RewardSpec = Field(default_factory=RewardSpec)
    horizon: int = Field(100_000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _dimensions(self) -> "EnvironmentSpec":
        surfaces = [s for s in (self.surface, self.schedule.end) if s is not None]
        for surface in surfaces:
            if surface.n != self.n:
                raise ValueError(f"surface has dimension {surface.n}, environment has n={self.n}")
        _require_tau_in_range(self.reward_spec)
        return self


# ============= EXPERIMENT FILE SCHEMAS =============
class BanditParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(0.1, ge=0.0, le=1.0)
    step_size: float = Field(0.01, gt=0.0, le=1.0)
    bins_per_dimension: int = Field(10, ge=1)
    optimism: FiniteFloat = 0.0


class ControllerParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    collection_target: int = Field(2000, ge=2)
    forest: ForestParams = Field(default_factory=ForestParams)
    adwin: AdwinParams = Field(default_factory=AdwinParams)


class AgentsSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    policies: List[PolicyName] = Field(default_factory=lambda: list(PolicyName))
    ucmab: BanditParams = Field(default_factory=BanditParams)
    cmab: Optional[BanditParams] = Field(None, description="Defaults to the ucmab parameters")
    controller: ControllerParams = Field(default_factory=ControllerParams)


class EnvironmentSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(2, ge=1)
    surface: Optional[SurfaceParams] = None
    schedule: DriftSchedule = Field(default_factory=DriftSchedule)
    horizon: int = Field(100_000, ge=1)
    window: int = Field(500, ge=1)


class QiniSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: Path
    response_field: ResponseField = ResponseField.VISIT
    treatment_arms: List[EmailArm] = Field(default_factory=lambda: [EmailArm.MENS, EmailArm.WOMENS], min_length=1)
    estimator: EstimatorKind = EstimatorKind.FOREST
    forest: ForestParams = Field(default_factory=lambda: ForestParams(min_group=100, max_depth=6))
    bins: int = Field(10, ge=1)
    holdout_fraction: float = Field(0.3, gt=0.0, lt=1.0)
    permutations: int = Field(100, ge=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ExperimentKind
    seeds: List[int] = Field(default_factory=lambda: list(range(1, 11)), min_length=1)
    output_dir: Optional[Path] = None
    reward: RewardSpec = Field(default_factory=RewardSpec)
    env: Optional[EnvironmentSection] = None
    agents: AgentsSection = Field(default_factory=AgentsSection)
    qini: Optional[QiniSection] = None

    @field_validator("reward")
    @classmethod
    def _tau_in_range(cls, spec: RewardSpec) -> RewardSpec:
        return _require_tau_in_range(spec)

    @model_validator(mode="after")
    def _sections(self) -> "ExperimentConfig":
        if self.kind == ExperimentKind.SIMULATE and self.env is None:
            raise ValueError("simulate experiments need an env section")
        if self.kind == ExperimentKind.QINI and self.qini is None:
            raise ValueError("qini experiments need a qini section")
        if self.env is not None:
            EnvironmentSpec(n=self.env.n, surface=self.env.surface, schedule=self.env.schedule,
                            reward_spec=self.reward, horizon=self.env.horizon)
        return self

    def environment_spec(self, seed: int) -> EnvironmentSpec:
        return EnvironmentSpec(
            n=self.env.n, surface=self.env.surface, schedule=self.env.schedule,
            reward_spec=self.reward, horizon=self.env.horizon, seed=seed,
        )

    def bandit_config(self, policy: PolicyName) -> BanditConfig:
        params = self.agents.ucmab
        if policy == PolicyName.CMAB and self.agents.cmab is not None:
            params = self.agents.cmab
        return BanditConfig(reward_spec=self.reward, **params.model_dump())

    def controller_config(self) -> ControllerConfig:
        params = self.agents.controller
        return ControllerConfig(
            collection_target=params.collection_target, reward_spec=self.reward,
            forest=params.forest, adwin=params.adwin,
        )
