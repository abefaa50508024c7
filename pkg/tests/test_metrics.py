import math

import numpy as np
import pytest

from loopsim.bandit_models import Departure
from loopsim.creator_games import ActionSpace, CreatorGame
from loopsim.engine import EntityId, EntityState, Record, Scenario, Trajectory, simulate
from loopsim.metrics import (
    MetricReport,
    cumulative_engagement,
    departure_rate,
    equilibrium_dispersion,
    homogenization,
    preference_drift,
    standard_metrics,
    welfare,
)
from loopsim.policies import FixedPolicy
from loopsim.viewer_models import BiasedAssimilation, Boredom

V0, V1, V2 = (EntityId("viewer", i) for i in range(3))


def handmade(states_by_viewer, inputs=None, outputs=None):
    """Trajectory from explicit per-tick states (x_0..x_T) for each viewer."""
    horizon = len(next(iter(states_by_viewer.values()))) - 1
    traj = Trajectory(horizon)
    for t in range(horizon):
        for e, xs in states_by_viewer.items():
            u = np.zeros(len(xs[t])) if inputs is None else np.asarray(inputs[e][t], float)
            y = np.zeros(1) if outputs is None else np.asarray(outputs[e][t], float)
            traj.append(Record(t, e, EntityState(xs[t]), u, y))
    traj.final_states = {e: EntityState(xs[-1]) for e, xs in states_by_viewer.items()}
    return traj


class TestDrift:
    def test_constant(self):
        traj = handmade({V0: [[0.3, 2.0]] * 6})
        assert preference_drift(traj, V0).tolist() == [0.0] * 6

    def test_orthogonal_rotation(self):
        traj = handmade({V0: [[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]})
        np.testing.assert_allclose(preference_drift(traj, "viewer:0"), [0.0, 0.4, 1.0], atol=1e-15)

    def test_euclidean_off_sphere(self):
        traj = handmade({V0: [[0.0], [3.0], [-4.0]]})
        assert preference_drift(traj, V0).tolist() == [0.0, 3.0, 4.0]

    def test_biased_assimilation_monotone(self):
        x0 = np.array([1.0, 0.0])
        sc = Scenario.build(FixedPolicy([0.6, 0.8]), [BiasedAssimilation(2, eta=1.0, x0=x0)], horizon=60)
        drift = preference_drift(simulate(sc), V0)
        assert np.all(np.diff(drift) >= -1e-15)
        assert drift[-1] > 0


class TestHomogenization:
    def test_identical(self):
        traj = handmade({V0: [[1.0, 1.0]] * 2, V1: [[2.0, 2.0]] * 2, V2: [[0.5, 0.5]] * 2})
        assert homogenization(traj, 0) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        traj = handmade({V0: [[1, 0, 0]] * 2, V1: [[0, 1, 0]] * 2, V2: [[0, 0, 1]] * 2})
        assert homogenization(traj, 1) == 0.0

    def test_sixty_degrees(self):
        traj = handmade({V0: [[1.0, 0.0]] * 2, V1: [[0.5, math.sqrt(3) / 2]] * 2})
        assert homogenization(traj, 0) == pytest.approx(0.5, abs=1e-15)

    def test_needs_two_viewers(self):
        with pytest.raises(ValueError, match="2 viewers"):
            homogenization(handmade({V0: [[1.0]] * 3}), 0)


class TestEngagement:
    def test_zero(self):
        assert cumulative_engagement(handmade({V0: [[0.0]] * 5}), V0) == 0.0

    def test_constant_one(self):
        traj = handmade({V0: [[0.0]] * 11}, outputs={V0: [[1.0]] * 10})
        assert cumulative_engagement(traj, V0) == 10.0

    def test_vector_l1(self):
        traj = handmade({V0: [[0.0]] * 3}, outputs={V0: [[1.0, -2.0], [0.5, 0.5]]})
        assert cumulative_engagement(traj, V0) == 4.0

    def test_boredom_tail(self):
        traj = simulate(Scenario.build(FixedPolicy([1.0]), [Boredom()], horizon=120))
        tail = traj.records_for(V0)[-1].y[0]
        assert tail == pytest.approx(2.0, abs=1e-6)


class TestWelfare:
    def test_orthogonal(self):
        traj = handmade({V0: [[1.0, 0.0]] * 4}, inputs={V0: [[0.0, 3.0]] * 3})
        assert welfare(traj, V0) == 0.0

    def test_aligned_unit(self):
        xs = [[math.cos(t), math.sin(t)] for t in range(9)]
        traj = handmade({V0: xs}, inputs={V0: xs[:-1]})
        assert welfare(traj, V0) == pytest.approx(8.0, abs=1e-12)

    def test_boredom_hand_sum(self):
        q = 1.5
        traj = simulate(Scenario.build(FixedPolicy([q]), [Boredom(0.5, 0.0)], horizon=6))
        xs, x = [], 0.0
        for _ in range(6):
            xs.append(x)
            x = 0.5 * x + q
        assert welfare(traj, V0) == pytest.approx(sum(v * q for v in xs), abs=1e-12)

    def test_shape_mismatch(self):
        traj = handmade({V0: [[1.0, 0.0]] * 2}, inputs={V0: [[1.0]]})
        with pytest.raises(ValueError):
            welfare(traj, V0)


class TestDispersion:
    def test_identical(self):
        g = CreatorGame(3, ActionSpace.sphere(2, 4), viewers=[[1, 0]])
        assert equilibrium_dispersion((1, 1, 1), g) == 0.0

    def test_two_basis_vectors(self):
        g = CreatorGame(2, ActionSpace.box(2, [0.0, 1.0]), viewers=[[1, 0]])
        assert equilibrium_dispersion((2, 1), g) == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_topic_entropy(self):
        g = CreatorGame(4, ActionSpace.finite(list("ABCD")), rec_rule="topic")
        assert equilibrium_dispersion((0, 1, 2, 3), g) == pytest.approx(math.log(4), abs=1e-15)

    def test_single_creator(self):
        g = CreatorGame(1, ActionSpace.finite(list("AB")), rec_rule="topic")
        assert equilibrium_dispersion((1,), g) == 0.0


class TestDeparture:
    def test_no_departure_model(self):
        traj = simulate(Scenario.build(FixedPolicy([1.0]), [Boredom(), Boredom()], routing="broadcast", horizon=5))
        assert departure_rate(traj) == 0.0

    def test_all_departed(self):
        leaver = Departure([1.0], click=[[0.0]], leave=[[1.0]])
        traj = simulate(Scenario.build(FixedPolicy([1.0]), [leaver] * 3, routing="broadcast", horizon=2))
        assert departure_rate(traj) == 1.0

    def test_geometric_survival(self):
        model = Departure([1.0], click=[[0.0]], leave=[[0.5]])
        n = 4000
        traj = simulate(Scenario.build(FixedPolicy([1.0]), [model] * n, routing="broadcast", horizon=10, seed=3))
        assert departure_rate(traj) == pytest.approx(1 - 0.5**10, rel=0.01)


class TestPurity:
    def test_recompute_identical(self):
        sc = Scenario.build(FixedPolicy([0.6, 0.8]), [BiasedAssimilation(2, 0.5, x0=[1.0, 0.0]),
                                                      BiasedAssimilation(2, 0.5, x0=[0.0, 1.0])],
                            routing="broadcast", horizon=20)
        traj = simulate(sc)
        a, b = standard_metrics(traj), standard_metrics(traj)
        assert a == b
        names = {(m.name, m.entity) for m in a}
        assert ("homogenization", "") in names and ("preference_drift", "viewer:1") in names

    def test_cosine_range(self):
        rng = np.random.default_rng(0)
        states = {EntityId("viewer", i): rng.normal(size=(4, 3)).tolist() for i in range(5)}
        traj = handmade(states)
        for t in range(3):
            assert -1.0 <= homogenization(traj, t) <= 1.0

    def test_report_must_be_finite(self):
        with pytest.raises(ValueError):
            MetricReport("x", float("nan"))
