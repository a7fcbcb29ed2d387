"""Request and response schemas of the decision service"""
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat

from ucmab.core import RewardSpec
from ucmab.models import BanditConfig


__all__ = [
    'DecideRequest',
    'DecideResponse',
    'AgentCreate',
    'AgentSummary',
    'ActRequest',
    'ActResponse',
    'FeedbackRequest',
    'FeedbackResponse',
]

AGENT_NAME_PATTERN = r"^[A-Za-z0-9_-]{1,64}$"


# ============= UPLIFT DECISION MODELS =============
class DecideRequest(BaseModel):
    p0: float = Field(..., ge=0.0, le=1.0, description="Response probability without treatment")
    p1: float = Field(..., ge=0.0, le=1.0, description="Response probability with treatment")
    reward_spec: RewardSpec = Field(default_factory=RewardSpec)


class DecideResponse(BaseModel):
    tau: float
    uplift: float
    threshold_arm: int
    argmax_arm: int
    penalized_rewards: Tuple[float, float]


# ============= AGENT MODELS =============
class AgentCreate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., pattern=AGENT_NAME_PATTERN)
    kind: Literal["ucmab", "cmab"] = "ucmab"
    config: BanditConfig = Field(default_factory=BanditConfig)
    bounds: List[Tuple[FiniteFloat, FiniteFloat]] = Field(..., min_length=1)
    seed: Optional[int] = None


class AgentSummary(BaseModel):
    name: str
    kind: str
    n_features: int
    bins_per_dimension: int
    cells: int
    steps_taken: int
    tau: float
    config: BanditConfig


class ActRequest(BaseModel):
    x: List[FiniteFloat] = Field(..., min_length=1)


class ActResponse(BaseModel):
    arm: int


class FeedbackRequest(BaseModel):
    x: List[FiniteFloat] = Field(..., min_length=1)
    arm: int = Field(..., ge=0, le=1)
    responded: bool


class FeedbackResponse(BaseModel):
    steps_taken: int
    reward: float
