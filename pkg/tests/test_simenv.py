import numpy as np
import pytest
from pydantic import ValidationError

from ucmab.core import RewardSpec, Treatment
from ucmab.errors import DomainError, SpecificationError
from ucmab.models import DriftSchedule, EnvironmentSpec, SurfaceParams
from ucmab.simenv import (
    Environment, IndividualType, OraclePolicy, RandomPolicy, build_environment, classify_individual, drift_markers,
    optimal_action, random_surface, respond, run_episode, sample_context, step_regret, theta_at, true_probability,
)


def deterministic_env(u_max, u_shift, c_b) -> Environment:
    surface = SurfaceParams(w=[1.0], c=-0.5, k=1e4, u_max=u_max, u_shift=u_shift, w_b=[0.0], c_b=c_b)
    return build_environment(EnvironmentSpec(n=1, surface=surface, horizon=10))


class TestConstruction:
    def test_surface_leaving_unit_interval_rejected(self):
        surface = SurfaceParams(w=[1.0, 0.0], c=-0.5, k=10.0, u_max=0.9, u_shift=0.0, w_b=[0.0, 0.0], c_b=0.5)
        with pytest.raises(SpecificationError):
            build_environment(EnvironmentSpec(n=2, surface=surface))

    def test_violation_away_from_the_pair_plane_centers_rejected(self):
        # b + u exceeds 1 only when the third coordinate is near 1
        surface = SurfaceParams(w=[1.0, -1.0, 0.0], c=0.0, k=1e4, u_max=0.5, u_shift=0.0,
                                w_b=[0.1, 0.1, 0.1], c_b=0.24)
        with pytest.raises(SpecificationError):
            build_environment(EnvironmentSpec(n=3, surface=surface))

    def test_many_dimensions_validate(self):
        surface = random_surface(24, np.random.default_rng(1), 0.2)
        env = build_environment(EnvironmentSpec(n=24, surface=surface, reward_spec=RewardSpec(penalties=(0.0, 0.2))))
        assert env.n == 24

    def test_invalid_end_surface_rejected(self, boundary_surface):
        bad = boundary_surface.model_copy(update={"c_b": 0.6})
        spec = EnvironmentSpec(n=2, surface=boundary_surface,
                               schedule=DriftSchedule(kind="sudden", t_change=10, end=bad))
        with pytest.raises(SpecificationError):
            build_environment(spec)

    def test_dimension_mismatch_rejected(self, boundary_surface):
        with pytest.raises(ValidationError):
            EnvironmentSpec(n=3, surface=boundary_surface)

    def test_gradual_schedule_needs_ordered_interval(self):
        with pytest.raises(ValidationError):
            DriftSchedule(kind="gradual", t_begin=10, t_end=10)

    def test_default_end_is_flipped_start(self, sudden_spec, boundary_surface):
        env = build_environment(sudden_spec)
        assert env.end == boundary_surface.flipped()
        assert env.end.w == [-1.0, -0.0]

    @pytest.mark.parametrize("seed", range(20))
    def test_random_surfaces_are_valid(self, seed):
        rng = np.random.default_rng(seed)
        tau = float(rng.uniform(-0.9, 0.9))
        surface = random_surface(3, rng, tau)
        penalties = (0.0, tau) if tau >= 0 else (-tau, 0.0)
        spec = EnvironmentSpec(n=3, surface=surface, reward_spec=RewardSpec(penalties=penalties),
                               schedule=DriftSchedule(kind="gradual", t_begin=1, t_end=5))
        env = build_environment(spec)
        points = np.random.default_rng(seed).random((200, 3))
        decisions = {optimal_action(env, x, 0) for x in points}
        assert decisions == {Treatment.CONTROL, Treatment.TREATED}

    def test_random_surface_when_none_given(self, tau_spec):
        a = build_environment(EnvironmentSpec(n=2, reward_spec=tau_spec, seed=5))
        b = build_environment(EnvironmentSpec(n=2, reward_spec=tau_spec, seed=5))
        c = build_environment(EnvironmentSpec(n=2, reward_spec=tau_spec, seed=6))
        assert a.start == b.start
        assert a.start != c.start


class TestDrift:
    def test_sudden_switch(self, sudden_spec, boundary_surface):
        env = build_environment(sudden_spec)
        assert theta_at(env, 999) == boundary_surface
        assert theta_at(env, 1000) == boundary_surface.flipped()

    def test_gradual_interpolation(self, tau_spec, boundary_surface):
        spec = EnvironmentSpec(n=2, surface=boundary_surface, reward_spec=tau_spec, horizon=200,
                               schedule=DriftSchedule(kind="gradual", t_begin=100, t_end=150))
        env = build_environment(spec)
        start, end = boundary_surface.to_vector(), boundary_surface.flipped().to_vector()
        np.testing.assert_allclose(theta_at(env, 100).to_vector(), start)
        np.testing.assert_allclose(theta_at(env, 125).to_vector(), 0.5 * (start + end))
        np.testing.assert_allclose(theta_at(env, 150).to_vector(), end)
        np.testing.assert_allclose(theta_at(env, 199).to_vector(), end)

    def test_flip_swaps_optimal_action(self, sudden_spec):
        env = build_environment(sudden_spec)
        x = np.array([0.9, 0.5])
        assert optimal_action(env, x, 0) == Treatment.TREATED
        assert optimal_action(env, x, 1500) == Treatment.CONTROL

    def test_markers(self):
        assert drift_markers(DriftSchedule()) == []
        assert drift_markers(DriftSchedule(kind="sudden", t_change=7)) == [(7, "drift")]
        assert drift_markers(DriftSchedule(kind="gradual", t_begin=3, t_end=9)) == [(3, "drift_begin"), (9, "drift_end")]


class TestResponses:
    def test_probabilities(self, static_spec):
        env = build_environment(static_spec)
        x = np.array([0.5, 0.5])
        # boundary point: sigmoid(0) = 0.5, u = 0.2, b = 0.3
        assert true_probability(env, x, 0, 0) == pytest.approx(0.3)
        assert true_probability(env, x, 1, 0) == pytest.approx(0.5)
        assert optimal_action(env, x, 0) == Treatment.CONTROL

    def test_step_outside_horizon(self, static_spec):
        env = build_environment(static_spec)
        with pytest.raises(DomainError):
            true_probability(env, np.array([0.5, 0.5]), 1, static_spec.horizon)

    def test_probability_outside_unit_interval_is_reported(self):
        bad = SurfaceParams(w=[1.0], c=-0.5, k=10.0, u_max=0.9, u_shift=0.0, w_b=[0.0], c_b=0.5)
        env = Environment(spec=EnvironmentSpec(n=1, surface=bad, horizon=10), start=bad, end=bad, tau=0.0)
        assert true_probability(env, np.array([0.1]), 1, 0) == pytest.approx(0.5 + 0.9 * 0.01798620996, abs=1e-6)
        with pytest.raises(DomainError):
            true_probability(env, np.array([0.9]), 1, 0)

    @pytest.mark.parametrize("arm", [-1, 2])
    def test_unknown_arm(self, static_spec, arm):
        env = build_environment(static_spec)
        with pytest.raises(DomainError):
            true_probability(env, np.array([0.5, 0.5]), arm, 0)

    def test_respond_frequency(self, static_spec):
        env = build_environment(static_spec)
        rng = np.random.default_rng(0)
        x = np.array([0.5, 0.5])
        hits = np.mean([respond(env, x, 1, 0, rng) for _ in range(20_000)])
        assert hits == pytest.approx(0.5, abs=0.02)

    def test_contexts_in_unit_cube(self, static_spec):
        env = build_environment(static_spec)
        rng = np.random.default_rng(0)
        points = np.array([sample_context(env, rng) for _ in range(1000)])
        assert points.shape == (1000, 2)
        assert points.min() >= 0.0 and points.max() < 1.0

    def test_individual_types(self):
        lift = deterministic_env(u_max=1.0, u_shift=0.0, c_b=0.0)
        assert classify_individual(lift, np.array([0.9]), 0) == IndividualType.X1
        assert classify_individual(lift, np.array([0.1]), 0) == IndividualType.X2
        harm = deterministic_env(u_max=1.0, u_shift=1.0, c_b=1.0)
        assert classify_individual(harm, np.array([0.9]), 0) == IndividualType.X3
        assert classify_individual(harm, np.array([0.1]), 0) == IndividualType.X4

    def test_individual_type_needs_deterministic_responses(self):
        env = deterministic_env(u_max=1.0, u_shift=0.0, c_b=0.0)
        with pytest.raises(DomainError):
            classify_individual(env, np.array([0.5]), 0)

    def test_step_regret(self):
        assert step_regret(Treatment.TREATED, Treatment.TREATED) == 0
        assert step_regret(Treatment.CONTROL, Treatment.TREATED) == 1


class TestEpisodes:
    def test_oracle_has_zero_regret(self, static_spec):
        env = build_environment(static_spec.model_copy(update={"horizon": 3000}))
        trace = run_episode(env, OraclePolicy(env), window=100)
        assert len(trace) == 3000
        assert trace.regret.sum() == 0

    def test_random_policy_regret_is_one_half(self, static_spec):
        env = build_environment(static_spec)
        trace = run_episode(env, RandomPolicy(seed=1), window=500)
        settled = trace.windowed[500:]
        assert settled.mean() == pytest.approx(0.5, abs=0.02)
        assert np.mean((settled >= 0.45) & (settled <= 0.55)) > 0.95

    def test_episode_is_reproducible(self, sudden_spec):
        env = build_environment(sudden_spec)
        a = run_episode(env, RandomPolicy(seed=4), window=50)
        b = run_episode(env, RandomPolicy(seed=4), window=50)
        np.testing.assert_array_equal(a.regret, b.regret)
        assert a.markers == [(1000, "drift")]
