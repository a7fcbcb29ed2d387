"""Bandit agent API endpoints"""
from typing import Any, Dict, List

from fastapi import APIRouter, Depends, HTTPException, Response

from ucmab.bandits import BanditAgent, agent_to_dict
from ucmab.core import compute_threshold
from ucmab.errors import ConfigurationError, DomainError
from ..dependencies import get_current_operator, get_registry
from ..models import ActRequest, ActResponse, AgentCreate, AgentSummary, FeedbackRequest, FeedbackResponse
from ..registry import AgentExistsError, AgentNotFoundError, AgentRegistry

router = APIRouter(prefix="/api/agents", tags=["agents"])


def _summary(agent: BanditAgent) -> AgentSummary:
    state = agent.state
    return AgentSummary(
        name=agent.name,
        kind=state.kind,
        n_features=state.estimator.n_features,
        bins_per_dimension=state.config.bins_per_dimension,
        cells=len(state.estimator.table),
        steps_taken=state.steps_taken,
        tau=compute_threshold(state.config.reward_spec),
        config=state.config,
    )


def _get_or_404(registry: AgentRegistry, name: str) -> BanditAgent:
    try:
        return registry.get(name)
    except AgentNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))


@router.post("/", response_model=AgentSummary, status_code=201)
async def create_agent(
    agent: AgentCreate,
    registry: AgentRegistry = Depends(get_registry),
    operator: str = Depends(get_current_operator)
):
    """Create a bandit agent (requires operator token)"""
    try:
        created = registry.create(agent.name, agent.kind, agent.config, agent.bounds, agent.seed)
    except AgentExistsError as e:
        raise HTTPException(status_code=409, detail=str(e))
    except ConfigurationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return _summary(created)


@router.get("/", response_model=List[AgentSummary])
async def get_agents(registry: AgentRegistry = Depends(get_registry)):
    """Get all agents"""
    return [_summary(registry.get(name)) for name in registry.names()]


@router.get("/{name}", response_model=AgentSummary)
async def get_agent(name: str, registry: AgentRegistry = Depends(get_registry)):
    """Get a specific agent"""
    return _summary(_get_or_404(registry, name))


@router.post("/{name}/act", response_model=ActResponse)
async def act(name: str, request: ActRequest, registry: AgentRegistry = Depends(get_registry)):
    """Choose an arm for the context x"""
    _get_or_404(registry, name)
    try:
        with registry.mutate(name) as agent:
            arm = agent.act(request.x)
    except AgentNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except DomainError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ActResponse(arm=int(arm))


@router.post("/{name}/feedback", response_model=FeedbackResponse)
async def feedback(
    name: str,
    request: FeedbackRequest,
    registry: AgentRegistry = Depends(get_registry),
    operator: str = Depends(get_current_operator)
):
    """Report the observed response for an earlier decision (requires operator token)"""
    _get_or_404(registry, name)
    try:
        with registry.mutate(name) as agent:
            reward = agent.feedback(request.x, request.arm, request.responded)
    except AgentNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except DomainError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return FeedbackResponse(steps_taken=agent.state.steps_taken, reward=reward)


@router.get("/{name}/checkpoint")
async def get_checkpoint(name: str, registry: AgentRegistry = Depends(get_registry)) -> Dict[str, Any]:
    """Get the agent's checkpoint JSON"""
    return agent_to_dict(_get_or_404(registry, name).state)


@router.delete("/{name}", status_code=204)
async def delete_agent(
    name: str,
    registry: AgentRegistry = Depends(get_registry),
    operator: str = Depends(get_current_operator)
):
    """Delete an agent and its checkpoint (requires operator token)"""
    try:
        registry.delete(name)
    except AgentNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    return Response(status_code=204)
