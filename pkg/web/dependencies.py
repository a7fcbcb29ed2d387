"""Dependencies for route protection and registry access"""
from fastapi import Depends, HTTPException, status
from fastapi.security import HTTPBearer

from .registry import AgentRegistry, registry
from .security import verify_operator_token

security = HTTPBearer(auto_error=False)


async def get_current_operator(credentials=Depends(security)) -> str:
    """
    Dependency to verify the operator JWT from the Authorization header
    Returns the token subject if valid
    """
    subject = None
    if credentials is not None:
        try:
            subject = verify_operator_token(credentials.credentials)
        except ValueError:
            # secret key not configured
            subject = None

    if subject is None:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid or expired token",
            headers={"WWW-Authenticate": "Bearer"},
        )

    return subject


def get_registry() -> AgentRegistry:
    return registry
