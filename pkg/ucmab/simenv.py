"""Parametric drifting environment, the all-knowing oracle and causal regret.

Responses follow p(Y=1 | T=0, x) = b(x) and p(Y=1 | T=1, x) = b(x) + u(x) with
a logistic uplift surface u and an affine, clamped base rate b. Drift moves the
surface parameters: swapped at one step (sudden) or linearly interpolated over
an interval (gradual). Contexts are always Uniform([0, 1]^n).
"""
import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Protocol, Tuple

import numpy as np
from scipy.special import expit

from .core import ContextPoint, Treatment, as_treatment, compute_threshold
from .errors import DomainError, SpecificationError
from .evaluation import RegretTrace
from .models import DriftKind, DriftSchedule, EnvironmentSpec, SurfaceParams

logger = logging.getLogger(__name__)

# lattice points per pair of dimensions checked at construction
VALIDATION_POINTS_PER_PAIR = 1000
VALIDATION_INTERIOR_POINTS = 4096
VALIDATION_SEED = 0
VALIDATION_TOLERANCE = 1e-12
# rounding slack allowed when a probability is queried
PROBABILITY_TOLERANCE = 1e-9


class IndividualType(str, enum.Enum):
    X1 = "X1"  # persuadable: responds only when treated
    X2 = "X2"  # lost cause: never responds
    X3 = "X3"  # sure thing: always responds
    X4 = "X4"  # do-not-disturb: responds only when untreated


class Policy(Protocol):
    name: str

    def act(self, x: ContextPoint, t: Optional[int] = None) -> Treatment: ...

    def feedback(self, x: ContextPoint, arm: int, responded: bool, t: Optional[int] = None) -> float: ...


def _split(theta: np.ndarray, n: int):
    w = theta[:n]
    c, k, u_max, u_shift = theta[n:n + 4]
    w_b = theta[n + 4:2 * n + 4]
    c_b, lo, hi = theta[2 * n + 4:2 * n + 7]
    return w, c, k, u_max, u_shift, w_b, c_b, lo, hi


def _surface(theta: np.ndarray, n: int, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Base rate b and uplift u at the rows of X"""
    w, c, k, u_max, u_shift, w_b, c_b, lo, hi = _split(theta, n)
    u = u_max * expit(k * (X @ w + c)) - u_shift
    b = np.clip(X @ w_b + c_b, lo, hi)
    return b, u


def _validation_blocks(n: int) -> Iterator[np.ndarray]:
    """Points checked at construction, one block at a time"""
    if n == 1:
        yield np.linspace(0.0, 1.0, VALIDATION_POINTS_PER_PAIR)[:, None]
        return
    per_axis = math.ceil(math.sqrt(VALIDATION_POINTS_PER_PAIR))
    a, b = np.meshgrid(np.linspace(0.0, 1.0, per_axis), np.linspace(0.0, 1.0, per_axis), indexing="ij")
    for i, j in itertools.combinations(range(n), 2):
        # the pair plane at the faces and the center of the remaining coordinates
        for rest in (0.0, 0.5, 1.0):
            block = np.full((a.size, n), rest)
            block[:, i] = a.ravel()
            block[:, j] = b.ravel()
            yield block
    if n <= 12:
        yield np.asarray(list(itertools.product((0.0, 1.0), repeat=n)), dtype=np.float64)
    yield np.random.default_rng(VALIDATION_SEED).random((VALIDATION_INTERIOR_POINTS, n))


def _check_surface(theta: np.ndarray, n: int, label: str) -> None:
    low, high = math.inf, -math.inf
    for block in _validation_blocks(n):
        b, u = _surface(theta, n, block)
        treated = b + u
        low = min(low, float(b.min()), float(treated.min()))
        high = max(high, float(b.max()), float(treated.max()))
    if low < -VALIDATION_TOLERANCE or high > 1.0 + VALIDATION_TOLERANCE:
        raise SpecificationError(f"{label} surface yields response probabilities in [{low:.4f}, {high:.4f}], outside [0, 1]")


def _checked_probability(p: float) -> float:
    if not (-PROBABILITY_TOLERANCE <= p <= 1.0 + PROBABILITY_TOLERANCE):
        raise DomainError(f"response probability {p!r} lies outside [0, 1]; the surface left its validated range")
    return min(max(p, 0.0), 1.0)


def random_surface(n: int, rng: np.random.Generator, tau: float = 0.0) -> SurfaceParams:
    """Random valid surface whose tau-boundary u(x) = tau crosses the context cube"""
    direction = rng.normal(size=n)
    direction /= np.linalg.norm(direction)
    center = rng.uniform(0.3, 0.7, size=n)
    u_max = min(rng.uniform(0.4, 0.8), 1.8 * min(1.0 - tau, 1.0 + tau))
    u_shift = u_max / 2.0 - tau
    u_low, u_high = -u_shift, u_max - u_shift
    b_low, b_high = max(0.0, -u_low), min(1.0, 1.0 - u_high)
    spread = (b_high - b_low) * 0.2
    w_b = rng.uniform(-1.0, 1.0, size=n)
    w_b *= spread / max(np.abs(w_b).sum(), 1e-12)
    c_b = (b_low + b_high) / 2.0 - float(w_b @ np.full(n, 0.5))
    return SurfaceParams(
        w=direction.tolist(), c=float(-direction @ center), k=float(rng.uniform(5.0, 15.0)),
        u_max=float(u_max), u_shift=float(u_shift), w_b=w_b.tolist(), c_b=float(c_b),
    )


@dataclass
class Environment:
    spec: EnvironmentSpec
    start: SurfaceParams
    end: SurfaceParams
    tau: float

    def __post_init__(self):
        self._start = self.start.to_vector()
        self._end = self.end.to_vector()

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    @property
    def schedule(self) -> DriftSchedule:
        return self.spec.schedule

    def drift_fraction(self, t: int) -> float:
        """0 before any drift, 1 once the end surface is fully in place"""
        schedule = self.spec.schedule
        if schedule.kind == DriftKind.SUDDEN:
            return 0.0 if t < schedule.t_change else 1.0
        if schedule.kind == DriftKind.GRADUAL:
            if t <= schedule.t_begin:
                return 0.0
            if t >= schedule.t_end:
                return 1.0
            return (t - schedule.t_begin) / (schedule.t_end - schedule.t_begin)
        return 0.0

    def theta_vector(self, t: int) -> np.ndarray:
        fraction = self.drift_fraction(t)
        if fraction == 0.0:
            return self._start
        if fraction == 1.0:
            return self._end
        return (1.0 - fraction) * self._start + fraction * self._end

    def evaluate(self, x: ContextPoint, t: int) -> Tuple[float, float]:
        if t < 0 or t >= self.horizon:
            raise DomainError(f"step {t} outside the horizon [0, {self.horizon})")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DomainError(f"context has shape {x.shape}, expected ({self.n},)")
        b, u = _surface(self.theta_vector(t), self.n, x[None, :])
        return float(b[0]), float(u[0])


def build_environment(spec: EnvironmentSpec) -> Environment:
    """Resolve the start/end surfaces and reject any that leave [0, 1]"""
    tau = compute_threshold(spec.reward_spec)
    start = spec.surface or random_surface(spec.n, np.random.default_rng(spec.seed), tau)
    if spec.schedule.kind == DriftKind.NONE:
        end = start
    else:
        end = spec.schedule.end or start.flipped()

    theta_start, theta_end = start.to_vector(), end.to_vector()
    _check_surface(theta_start, spec.n, "start")
    if spec.schedule.kind != DriftKind.NONE:
        _check_surface(theta_end, spec.n, "end")
    if spec.schedule.kind == DriftKind.GRADUAL:
        for fraction in (0.25, 0.5, 0.75):
            theta = (1.0 - fraction) * theta_start + fraction * theta_end
            _check_surface(theta, spec.n, f"interpolated ({fraction:.2f})")
    return Environment(spec=spec, start=start, end=end, tau=tau)


def theta_at(env: Environment, t: int) -> SurfaceParams:
    return SurfaceParams.from_vector(env.theta_vector(t), env.n)


def sample_context(env: Environment, rng: np.random.Generator) -> ContextPoint:
    return rng.random(env.n)


def true_probability(env: Environment, x: ContextPoint, arm: int, t: int) -> float:
    b, u = env.evaluate(x, t)
    return _checked_probability(b + u if as_treatment(arm) == Treatment.TREATED else b)


def respond(env: Environment, x: ContextPoint, arm: int, t: int, rng: np.random.Generator) -> bool:
    return bool(rng.random() < true_probability(env, x, arm, t))


def optimal_action(env: Environment, x: ContextPoint, t: int) -> Treatment:
    _, u = env.evaluate(x, t)
    return Treatment.TREATED if u > env.tau else Treatment.CONTROL


def classify_individual(env: Environment, x: ContextPoint, t: int) -> IndividualType:
    p0 = true_probability(env, x, Treatment.CONTROL, t)
    p1 = true_probability(env, x, Treatment.TREATED, t)
    if p0 not in (0.0, 1.0) or p1 not in (0.0, 1.0):
        raise DomainError(f"individual type is only defined for deterministic responses, got p0={p0}, p1={p1}")
    return {
        (0.0, 1.0): IndividualType.X1,
        (0.0, 0.0): IndividualType.X2,
        (1.0, 1.0): IndividualType.X3,
        (1.0, 0.0): IndividualType.X4,
    }[(p0, p1)]


def step_regret(chosen: int, optimal: int) -> int:
    return 0 if int(chosen) == int(optimal) else 1


def drift_markers(schedule: DriftSchedule) -> List[Tuple[int, str]]:
    if schedule.kind == DriftKind.SUDDEN:
        return [(schedule.t_change, "drift")]
    if schedule.kind == DriftKind.GRADUAL:
        return [(schedule.t_begin, "drift_begin"), (schedule.t_end, "drift_end")]
    return []


class OraclePolicy:
    name = "oracle"

    def __init__(self, env: Environment):
        self.env = env

    def act(self, x: ContextPoint, t: Optional[int] = None) -> Treatment:
        return optimal_action(self.env, x, t)

    def feedback(self, x: ContextPoint, arm: int, responded: bool, t: Optional[int] = None) -> float:
        return 0.0


class RandomPolicy:
    name = "random"

    def __init__(self, seed: Optional[int] = None):
        self.rng = np.random.default_rng(seed)

    def act(self, x: ContextPoint, t: Optional[int] = None) -> Treatment:
        return Treatment(int(self.rng.integers(2)))

    def feedback(self, x: ContextPoint, arm: int, responded: bool, t: Optional[int] = None) -> float:
        return 0.0


def run_episode(env: Environment, policy: Policy, window: int = 500) -> RegretTrace:
    """Play the policy for the whole horizon and record its causal regret.

    Contexts and responses come from one generator seeded by the environment,
    so every policy faces the same individuals.
    """
    rng = np.random.default_rng(env.spec.seed)
    regret = np.zeros(env.horizon, dtype=np.float64)
    n, tau = env.n, env.tau
    for t in range(env.horizon):
        x = rng.random(n)
        arm = policy.act(x, t)
        b, u = _surface(env.theta_vector(t), n, x[None, :])
        b, u = float(b[0]), float(u[0])
        optimal = Treatment.TREATED if u > tau else Treatment.CONTROL
        p = _checked_probability(b + u if arm == Treatment.TREATED else b)
        responded = bool(rng.random() < p)
        policy.feedback(x, arm, responded, t)
        regret[t] = step_regret(arm, optimal)
    markers = drift_markers(env.schedule) + list(getattr(policy, "events", []))
    markers.sort(key=lambda m: m[0])
    logger.debug("%s finished %d steps, mean regret %.4f", getattr(policy, "name", "policy"), env.horizon, regret.mean())
    return RegretTrace.from_steps(regret, window, markers)
