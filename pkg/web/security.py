"""JWT operator token utilities"""
import jwt
from datetime import datetime, timedelta, timezone
from typing import Optional

from ucmab.settings import secret_key

ALGORITHM = "HS256"
OPERATOR_TOKEN_EXPIRATION_MINUTES = 60


def create_operator_token(subject: str = "operator", expires_minutes: Optional[int] = None) -> str:
    """Create JWT operator token allowed to mutate agents"""
    if expires_minutes is None:
        expires_minutes = OPERATOR_TOKEN_EXPIRATION_MINUTES

    now = datetime.now(timezone.utc)
    payload = {
        "sub": subject,
        "exp": now + timedelta(minutes=expires_minutes),
        "iat": now,
        "type": "operator"
    }

    return jwt.encode(payload, secret_key(), algorithm=ALGORITHM)


def verify_operator_token(token: str) -> Optional[str]:
    """Verify JWT operator token and return its subject if valid"""
    try:
        payload = jwt.decode(token, secret_key(), algorithms=[ALGORITHM])
    except jwt.InvalidTokenError:
        return None

    # Verify token type is operator
    if payload.get("type") != "operator":
        return None

    return payload.get("sub")
