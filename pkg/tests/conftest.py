import numpy as np
import pytest

from ucmab.core import RewardSpec
from ucmab.models import DriftSchedule, EnvironmentSpec, SurfaceParams

HILLSTROM_HEADER = "recency,history_segment,history,mens,womens,zip_code,newbie,channel,segment,visit,conversion,spend"
HILLSTROM_ROWS = [
    '10,"2) $100 - $200",142.44,1,0,Surburban,0,Phone,Mens E-Mail,1,0,0',
    '6,"3) $200 - $350",329.08,1,1,Rural,1,Web,No E-Mail,0,0,0',
    '2,"1) $0 - $100",45.34,0,1,Urban,0,Multichannel,Mens E-Mail,1,1,49.5',
]


@pytest.fixture
def tau_spec() -> RewardSpec:
    """R(Y=1) = 1 with psi = (0, 0.2), so tau = 0.2"""
    return RewardSpec(reward_on_response=1.0, penalties=(0.0, 0.2))


@pytest.fixture
def boundary_surface() -> SurfaceParams:
    """u(x) crosses 0.2 at x0 = 0.5; probabilities stay inside [0.1, 0.9]"""
    return SurfaceParams(w=[1.0, 0.0], c=-0.5, k=10.0, u_max=0.6, u_shift=0.1, w_b=[0.1, 0.1], c_b=0.2)


@pytest.fixture
def static_spec(tau_spec, boundary_surface) -> EnvironmentSpec:
    return EnvironmentSpec(n=2, surface=boundary_surface, reward_spec=tau_spec, horizon=20_000, seed=3)


@pytest.fixture
def sudden_spec(tau_spec, boundary_surface) -> EnvironmentSpec:
    return EnvironmentSpec(
        n=2, surface=boundary_surface, reward_spec=tau_spec, horizon=2_000, seed=3,
        schedule=DriftSchedule(kind="sudden", t_change=1_000),
    )


@pytest.fixture
def hillstrom_csv(tmp_path):
    path = tmp_path / "hillstrom.csv"
    path.write_text("\n".join([HILLSTROM_HEADER] + HILLSTROM_ROWS) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def synthetic_hillstrom_csv(tmp_path):
    """600 Hillstrom-shaped rows where the men's e-mail lifts visits of recent customers"""
    rng = np.random.default_rng(11)
    segments = ["Mens E-Mail", "Womens E-Mail", "No E-Mail"]
    levels = ["1) $0 - $100", "2) $100 - $200", "3) $200 - $350", "4) $350 - $500"]
    lines = [HILLSTROM_HEADER]
    for i in range(600):
        recency = int(rng.integers(1, 13))
        segment = segments[i % 3]
        p = 0.1 + (0.6 if segment == "Mens E-Mail" and recency <= 6 else 0.0)
        visit = int(rng.random() < p)
        lines.append(
            f'{recency},"{levels[i % 4]}",{rng.uniform(30, 900):.2f},{int(rng.integers(2))},{int(rng.integers(2))},'
            f'{["Rural", "Surburban", "Urban"][(i // 3) % 3]},{int(rng.integers(2))},{["Phone", "Web", "Multichannel"][(i // 9) % 3]},'
            f'{segment},{visit},{int(visit and rng.random() < 0.2)},0'
        )
    path = tmp_path / "synthetic_hillstrom.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
