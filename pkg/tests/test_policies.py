import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import init, noise
from loopsim.bandit_models import Rotting, one_hot
from loopsim.engine import RECOMMENDER, EntityId, Scenario, simulate
from loopsim.errors import ConfigurationError
from loopsim.policies import (
    POLICIES,
    UCB1,
    EpsilonGreedy,
    FixedPolicy,
    GreedyDot,
    SlidingUCB,
    SoftmaxPolicy,
)

E2 = [[1.0, 0.0], [0.0, 1.0]]
V0 = EntityId("viewer", 0)


def arm_state(policy, sums, counts, last=-1):
    x = init(policy, entity=RECOMMENDER)
    return x.evolve(vec=policy.pack(np.array(sums, float), np.array(counts, float), [last]))


def pulled(traj):
    return [int(np.argmax(r.y)) for r in traj.records_for(RECOMMENDER)]


def bandit_run(policy, env, horizon, seed=0):
    return simulate(Scenario.build(policy, [env], horizon=horizon, seed=seed))


class TestGreedyDot:
    def test_frozen_estimate(self):
        p = GreedyDot(E2, rho=0.0, prior=[0.2, 0.1])
        x = init(p, entity=RECOMMENDER)
        for t in range(10):
            y, x = p.step(x, [3.0 * t], noise(tick=t, entity=RECOMMENDER))
            assert y.tolist() == [1.0, 0.0]
        assert p.estimates(x)[0].tolist() == [0.2, 0.1]

    def test_argmax(self):
        p = GreedyDot(E2, prior=[1.0, 0.0], output="index")
        y, _ = p.step(init(p, entity=RECOMMENDER), [0.0], noise(entity=RECOMMENDER))
        assert y.tolist() == [0.0]

    def test_ties_go_low(self):
        p = GreedyDot(E2, prior=[1.0, 1.0], output="index")
        assert p.step(init(p, entity=RECOMMENDER), [0.0], noise())[0].tolist() == [0.0]

    def test_feedback_flips_recommendation(self):
        p = GreedyDot(E2, rho=1.0, output="index")
        x = init(p, entity=RECOMMENDER)
        x = x.evolve(vec=[0.0, 0.0, 1.0])  # last shown e2
        y, x2 = p.step(x, [2.0], noise())
        assert p.estimates(x2)[0].tolist() == [0.0, 2.0]
        assert y.tolist() == [1.0]

    def test_slate_and_scored(self):
        cat = [[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]]
        slate = GreedyDot(cat, prior=[1.0, 0.2], output="slate", slate_size=2)
        assert slate.step(init(slate), [0.0], noise())[0].tolist() == [0.0, 2.0]
        scored = GreedyDot(cat, prior=[1.0, 0.2], output="scored")
        assert scored.step(init(scored), [0.0], noise())[0].tolist() == [1.0, 1.0, 0.0]
        with pytest.raises(ConfigurationError):
            GreedyDot(cat, output="slate", slate_size=4)

    def test_choice_feedback(self):
        p = GreedyDot(E2, rho=0.5, feedback="choice")
        x = init(p).evolve(vec=[0.0, 0.0, 0.0])
        _, x2 = p.step(x, [1.0], noise())
        assert p.estimates(x2)[0].tolist() == [0.0, 0.5]
        with pytest.raises(ConfigurationError):
            p.step(x, [5.0], noise())

    def test_bootstrap_not_credited(self):
        p = GreedyDot(E2, rho=1.0, prior=[0.3, 0.0])
        _, x = p.step(init(p), [9.0], noise())
        assert p.estimates(x)[0].tolist() == [0.3, 0.0]


class TestUCB1:
    def test_forced_exploration(self):
        traj = bandit_run(UCB1(4), Rotting(4, base=[0.1, 0.9, 0.5, 0.2], rho=0.0), 4)
        assert pulled(traj) == [0, 1, 2, 3]

    def test_zero_confidence_is_greedy(self):
        p = UCB1(3, confidence=0.0)
        x = arm_state(p, [0.5, 2.0, 1.5], [1, 4, 1])
        assert p.choose(0, *p.unpack(x.vec)[:2], None) == 2

    def test_worked_index(self):
        p = UCB1(2)
        # arm 0 paid 1.0, arm 1 was just pulled and pays 0.0 now
        x = arm_state(p, [1.0, 0.0], [1, 0], last=1)
        y, x2 = p.step(x, [0.0], noise())
        sums, counts, _ = p.unpack(x2.vec)
        assert counts.tolist() == [[1.0, 1.0]]
        assert y.tolist() == [1.0, 0.0]
        assert 1 + math.sqrt(2 * math.log(3)) == pytest.approx(2.482, abs=1e-3)

    def test_means_exact(self):
        rewards = np.random.default_rng(3).normal(size=200)
        p = UCB1(2)
        x = init(p)
        seen = {0: [], 1: []}
        last = None
        for t, r in enumerate(rewards):
            y, x = p.step(x, [r], noise(tick=t))
            if last is not None:
                seen[last].append(r)
            last = int(np.argmax(y))
        means = p.means(x)[0]
        for k in (0, 1):
            assert abs(means[k] - np.mean(seen[k])) <= 1e-12


class TestEpsilonGreedy:
    @staticmethod
    def frequencies(p, x, n, seed=0):
        sums, counts, _ = p.unpack(x.vec)
        rng = np.random.default_rng(seed)
        w = SimpleNamespace(rng=rng, tick=0)
        picks = np.fromiter((p.choose(0, sums, counts, w) for _ in range(n)), dtype=int, count=n)
        return np.bincount(picks, minlength=p.n_arms) / n

    def test_full_exploration_uniform(self):
        p = EpsilonGreedy(4, epsilon=1.0)
        freq = self.frequencies(p, arm_state(p, [5, 0, 0, 0], [1, 1, 1, 1]), 10**6)
        assert np.all(np.abs(freq - 0.25) <= 0.0025)

    def test_no_exploration(self):
        p = EpsilonGreedy(3, epsilon=0.0)
        x = arm_state(p, [0.2, 0.9, 0.4], [1, 1, 1])
        assert all(p.step(x, [0.0], noise(tick=t))[0].tolist() == [0, 1, 0] for t in range(20))

    def test_half_exploration(self):
        p = EpsilonGreedy(2, epsilon=0.5)
        freq = self.frequencies(p, arm_state(p, [1.0, 0.0], [1, 1]), 10**5)
        assert freq[0] == pytest.approx(0.75, abs=0.005)

    def test_seeded_stream(self):
        p = EpsilonGreedy(3, epsilon=0.3)
        env = Rotting(3, base=[0.2, 0.5, 0.1], rho=0.0, noise=0.1)
        assert bandit_run(p, env, 200, 4).to_jsonl() == bandit_run(p, env, 200, 4).to_jsonl()


class TestSlidingUCB:
    def test_long_window_matches_ucb1(self):
        env = Rotting(3, base=[0.5, 0.6, 0.4], rho=0.0, noise=0.3)
        a = pulled(bandit_run(UCB1(3), env, 300, seed=2))
        b = pulled(bandit_run(SlidingUCB(3, window=300), env, 300, seed=2))
        assert a == b

    def test_unit_window(self):
        p = SlidingUCB(2, window=1)
        x = init(p)
        arms = []
        for t, reward in enumerate([0.0, 0.0, 5.0, 0.0, 1.0]):
            y, x = p.step(x, [reward], noise(tick=t))
            arms.append(int(np.argmax(y)))
        # pulls 0, 1, 1, 0: arm 1 paid 5 then 0, arm 0 paid 0 then 1
        assert arms == [0, 1, 1, 0, 0]
        assert p.unpack(x.vec)[0].shape == (1, 2, 1)
        assert p.means(x)[0].tolist() == [1.0, 0.0]

    def test_beats_frozen_greedy_on_rotting(self):
        env = Rotting(2, base=[1.0, 1.0], rho=[1.0, 0.0])
        sliding = bandit_run(SlidingUCB(2, window=50), env, 5000)
        sliding_total = sum(r.y[0] for r in sliding.records_for(V0))
        frozen_total = frozen_greedy_total(env, 5000, explore=100)
        assert sliding_total >= frozen_total


def frozen_greedy_total(env, horizon, explore):
    """Round-robin for ``explore`` ticks, then commit to the best empirical arm."""
    from loopsim.engine import RngStream

    stream = RngStream(0)
    x = env.initial_state(stream.noise(V0, -1))
    totals = np.zeros(env.n_arms)
    counts = np.zeros(env.n_arms)
    reward = 0.0
    best = None
    for t in range(horizon):
        if t < explore:
            arm = t % env.n_arms
        else:
            best = int(np.argmax(totals / counts)) if best is None else best
            arm = best
        y, x = env.step(x, one_hot(arm, env.n_arms), stream.noise(V0, t))
        if t < explore:
            totals[arm] += y[0]
            counts[arm] += 1
        reward += y[0]
    return reward


class TestSoftmax:
    def test_worked_probabilities(self):
        p = SoftmaxPolicy(E2, prior=[1.0, 0.0])
        y, _ = p.step(init(p), [0.0], noise())
        np.testing.assert_allclose(y, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-12)
        assert y[0] == pytest.approx(0.7311, abs=1e-4)

    def test_zero_estimate_uniform(self):
        p = SoftmaxPolicy([[1, 2], [3, -1], [0, 0]])
        y, _ = p.step(init(p), [0.0], noise())
        np.testing.assert_allclose(y, [1 / 3] * 3, atol=1e-15)

    def test_hot_is_uniform(self):
        p = SoftmaxPolicy(E2, temperature=1e12, prior=[5.0, -5.0])
        y, _ = p.step(init(p), [0.0], noise())
        np.testing.assert_allclose(y, [0.5, 0.5], atol=1e-10)

    def test_sums_to_one_per_user(self):
        p = SoftmaxPolicy([[1, 0], [0, 1], [1, 1]], prior=[3.0, -2.0], n_users=2, feedback_dims=[1, 1])
        x = init(p).evolve(vec=np.concatenate([p.estimates(init(p)).ravel(), [0, 2]]))
        y, _ = p.step(x, [1.0, 0.5], noise())
        assert abs(y[:3].sum() - 1) <= 1e-12 and abs(y[3:].sum() - 1) <= 1e-12

    def test_temperature_positive(self):
        with pytest.raises(ConfigurationError):
            SoftmaxPolicy(E2, temperature=0.0)


class TestFixed:
    def test_constant(self):
        p = FixedPolicy([1.0])
        x = init(p)
        for t in range(5):
            y, x2 = p.step(x, [float(t)], noise(tick=t))
            assert y.tolist() == [1.0] and x2 is x

    def test_zero_output_inert(self):
        from loopsim.viewer_models import Boredom

        traj = simulate(Scenario.build(FixedPolicy([0.0]), [Boredom(0.5, 0.0)], horizon=10))
        assert all(r.y[0] == 0.0 and r.x.vec[0] == 0.0 for r in traj.records_for(V0))


def test_multi_user_blocks():
    p = UCB1(2, n_users=3)
    y, x = p.step(init(p), [0.0, 0.0, 0.0], noise())
    assert y.tolist() == [1, 0, 1, 0, 1, 0]
    assert p.unpack(x.vec)[2].tolist() == [0, 0, 0]


def test_registry_ids():
    assert set(POLICIES) == {"fixed", "greedy_dot", "softmax", "epsilon_greedy", "ucb1", "sliding_ucb"}
