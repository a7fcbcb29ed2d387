from fastapi import APIRouter, HTTPException

from ucmab.core import (
    Treatment, check_threshold_range, penalized_expected_reward, select_by_argmax, select_by_threshold, uplift,
)
from ucmab.errors import UCMABError
from .models import DecideRequest, DecideResponse

router = APIRouter(prefix="/api/uplift", tags=["uplift"])


@router.post("/decide", response_model=DecideResponse)
async def decide(request: DecideRequest):
    """Threshold and argmax decisions for known response probabilities"""
    try:
        tau = check_threshold_range(request.reward_spec)
        rewards = (
            penalized_expected_reward(request.p0, request.reward_spec, Treatment.CONTROL),
            penalized_expected_reward(request.p1, request.reward_spec, Treatment.TREATED),
        )
        u = uplift(request.p1, request.p0)
        return DecideResponse(
            tau=tau,
            uplift=u,
            threshold_arm=int(select_by_threshold(u, tau)),
            argmax_arm=int(select_by_argmax(rewards)),
            penalized_rewards=rewards,
        )
    except UCMABError as e:
        raise HTTPException(status_code=400, detail=str(e))
