"""Closed-form uplift math: threshold, penalized reward and the two decision rules.

A bandit that maximizes the penalized reward ``R(Y=1) * p_i - psi_i`` over the
two arms takes exactly the decision of an uplift model that treats when
``p1 - p0 > (psi_1 - psi_0) / R(Y=1)``. Both rules resolve equality to control.
"""
import enum
import math
from typing import Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, field_validator

from .errors import ConfigurationError, DomainError

# An individual's feature vector
ContextPoint = NDArray[np.float64]


class Treatment(enum.IntEnum):
    CONTROL = 0
    TREATED = 1


def as_treatment(arm) -> Treatment:
    try:
        return Treatment(arm)
    except ValueError:
        raise DomainError(f"arm must be 0 or 1, got {arm!r}") from None


class RewardSpec(BaseModel):
    """Reward for each outcome plus the penalty charged for each arm"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    reward_on_response: FiniteFloat = Field(1.0, gt=0, description="R(Y=1)")
    reward_on_no_response: FiniteFloat = Field(0.0, description="R(Y=0), fixed to 0")
    penalties: Tuple[FiniteFloat, FiniteFloat] = Field((0.0, 0.0), description="(psi_0, psi_1)")

    @field_validator("reward_on_no_response")
    @classmethod
    def _no_response_is_zero(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError("reward_on_no_response must be 0")
        return value

    def penalty(self, arm: int) -> float:
        return self.penalties[as_treatment(arm)]

    def reward(self, responded: bool) -> float:
        return self.reward_on_response if responded else self.reward_on_no_response

    def reward_range(self) -> Tuple[float, float]:
        """Smallest and largest realized penalized reward over both arms and outcomes"""
        low = min(self.reward_on_no_response - psi for psi in self.penalties)
        high = max(self.reward_on_response - psi for psi in self.penalties)
        return low, high

    def with_zero_penalties(self) -> "RewardSpec":
        return self.model_copy(update={"penalties": (0.0, 0.0)})


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must be a probability in [0, 1], got {value!r}")


def compute_threshold(spec: RewardSpec) -> float:
    """tau = (psi_1 - psi_0) / R(Y=1)"""
    if not spec.reward_on_response > 0:
        raise DomainError(f"reward_on_response must be positive, got {spec.reward_on_response!r}")
    psi0, psi1 = spec.penalties
    return (psi1 - psi0) / spec.reward_on_response


def check_threshold_range(spec: RewardSpec) -> float:
    """Return tau, rejecting reward specs whose threshold falls outside [-1, 1)"""
    tau = compute_threshold(spec)
    if not (-1.0 <= tau < 1.0):
        raise ConfigurationError(f"threshold tau={tau:.6g} derived from the reward spec lies outside [-1, 1)")
    return tau


def uplift(p1: float, p0: float) -> float:
    _check_probability("p1", p1)
    _check_probability("p0", p0)
    return p1 - p0


def penalized_expected_reward(p_response: float, spec: RewardSpec, arm: int) -> float:
    """Expected reward of an arm minus its penalty, R(Y=1) * p - psi_arm"""
    _check_probability("p_response", p_response)
    return spec.reward_on_response * p_response - spec.penalty(arm)


def select_by_threshold(u_hat: float, tau: float) -> Treatment:
    return Treatment.TREATED if u_hat > tau else Treatment.CONTROL


def select_by_argmax(r_u_per_arm: Tuple[float, float]) -> Treatment:
    r0, r1 = r_u_per_arm
    if not (math.isfinite(r0) and math.isfinite(r1)):
        raise DomainError(f"penalized values must be finite, got {r_u_per_arm!r}")
    return Treatment.TREATED if r1 > r0 else Treatment.CONTROL
