import logging
import math

import numpy as np
import pytest

from conftest import init, noise, run_steps
from loopsim.engine import EntityState
from loopsim.errors import ConfigurationError
from loopsim.viewer_models import (
    VIEWER_MODELS,
    AttractionAversion,
    BeliefChoice,
    BeliefUpdate,
    BiasedAssimilation,
    Boredom,
    ClickedDelta,
    DiscountedChoice,
    LoyaltySoftmax,
    MereExposure,
    OperantConditioning,
    ScoreClick,
    geometric_weights,
    sigmoid,
)


def step(model, x, u, tick=0, seed=0):
    y, x2 = model.step(x, np.asarray(u, dtype=float), noise(seed, tick))
    return np.asarray(y, dtype=float), x2


class TestBoredom:
    def test_recurrence(self):
        m = Boredom(decay=0.5)
        y, x = step(m, init(m), [1.0])
        assert (y[0], x.vec[0]) == (0.0, 1.0)
        y, x = step(m, x, [1.0])
        assert (y[0], x.vec[0]) == (1.0, 1.5)


class TestAttractionAversion:
    def test_pure_attraction(self):
        m = AttractionAversion(2, 0, 1, 0, weights=[1, 0, 0])
        _, x = step(m, init(m), [0, 1])
        np.testing.assert_array_equal(x.vec, [0, 1])

    def test_pure_aversion(self):
        m = AttractionAversion(2, 0, 0, 1, weights=[1, 0, 0])
        _, x = step(m, init(m), [0, 1])
        np.testing.assert_array_equal(x.vec, [0, -1])

    def test_rating_is_inner_product(self):
        m = AttractionAversion(2, 1, 0, 0, x0=[1, 0])
        y, _ = step(m, init(m), [1, 0])
        assert y[0] == 1.0

    def test_weighted_memory(self):
        m = AttractionAversion(2, 0, 1, 0, weights=[1.0, 0.5, 0.25])
        _, states = run_steps(m, [[1, 0], [0, 1], [1, 1]])
        # newest first: 1*(1,1) + 0.5*(0,1) + 0.25*(1,0)
        np.testing.assert_allclose(states[-1].vec, [1.25, 1.5])
        assert len(states[-1].history) == 3

    def test_empty_history_falls_back_to_scaled_input(self):
        m = AttractionAversion(2, 0, 0, 1, weights=[0.5, 0.25])
        _, x = step(m, init(m), [2, 0])
        np.testing.assert_array_equal(x.vec, [-1, 0])

    def test_default_weights(self):
        w = geometric_weights()
        assert len(w) == 20 and w[0] == 1 and w[3] == 0.125

    def test_reset_draws_from_mu0(self):
        m = AttractionAversion(2, 1, 0, 0, mu0_mean=[3, -3], mu0_std=0.0)
        _, x = step(m, init(m), [0, 1])
        np.testing.assert_array_equal(x.vec, [3, -3])

    def test_alphas_must_sum_to_one(self):
        with pytest.raises(ConfigurationError, match="alpha"):
            AttractionAversion(2, 0.5, 0.2, 0.2)


class TestMereExposure:
    @pytest.mark.parametrize(
        "alpha, expected", [(0.0, [1, 0]), (1.0, [0, 1]), (0.5, [0.5, 0.5])]
    )
    def test_mixing(self, alpha, expected):
        m = MereExposure(2, alpha, x0=[1, 0])
        _, x = step(m, init(m), [0, 1])
        np.testing.assert_array_equal(x.vec, expected)

    def test_alpha_range(self):
        with pytest.raises(ConfigurationError, match=r"alpha: 1.5 is outside \[0, 1\]"):
            MereExposure(2, 1.5)


class TestOperantConditioning:
    def test_zero_delta_forgets(self):
        m = OperantConditioning(2, 0.3, 0.3, 0.0, p0=[1, 0], m0=4.0)
        _, states = run_steps(m, [[1, 0]] * 5)
        assert all(s.vec[-1] == 0.0 for s in states[1:])

    def test_zero_surprise_keeps_preference(self):
        m = OperantConditioning(2, 0.5, 0.5, 0.5, p0=[1, 0], m0=1.0)
        _, x = step(m, init(m), [1, 0], tick=1)
        np.testing.assert_array_equal(x.vec[:2], [1, 0])

    def test_worked_example(self):
        m = OperantConditioning(2, 0.5, 0.5, 0.5, p0=[1, 0], m0=0.0)
        y, x = step(m, init(m), [1, 0], tick=2)
        assert y[0] == 1.0
        assert x.vec[2] == 0.5
        s = math.atan(-1.0)
        assert s == pytest.approx(-0.7854, abs=1e-4)
        np.testing.assert_allclose(x.vec[:2], [0.2146, 0.0], atol=1e-4)
        np.testing.assert_allclose(x.vec[:2], [(1 - 0.5 * abs(s)) + 0.5 * s, 0.0], atol=1e-15)

    def test_normaliser(self):
        m = OperantConditioning(1, 0.1, 0.1, 0.5)
        assert m.normaliser(0) == m.normaliser(1) == 1.0
        assert m.normaliser(2) == 0.5
        assert m.normaliser(4) == pytest.approx(0.875)


class TestBiasedAssimilation:
    def test_orthogonal_inert(self):
        m = BiasedAssimilation(2, 1.0, [1, 0])
        y, x = step(m, init(m), [0, 1])
        assert y[0] == 0.0
        np.testing.assert_array_equal(x.vec, [1, 0])

    def test_same_direction_fixed(self):
        m = BiasedAssimilation(3, 2.0, [0, 0.6, 0.8])
        _, x = step(m, init(m), [0, 0.6, 0.8])
        np.testing.assert_allclose(x.vec, [0, 0.6, 0.8], atol=1e-15)

    def test_worked_example(self):
        r = math.sqrt(2) / 2
        m = BiasedAssimilation(2, 1.0, [1, 0])
        _, x = step(m, init(m), [r, r])
        np.testing.assert_allclose(x.vec, [0.9487, 0.3162], atol=1e-4)
        np.testing.assert_allclose(x.vec, np.array([1.5, 0.5]) / math.sqrt(2.5), atol=1e-15)

    def test_opposite_content_cannot_collapse(self):
        # x + eta <x, u> u = (1 + eta) x when u = -x, so eta >= 0 never hits zero
        m = BiasedAssimilation(2, 3.0, [1, 0])
        _, x = step(m, init(m), [-1, 0])
        np.testing.assert_array_equal(x.vec, [1, 0])

    def test_requires_unit_vectors(self):
        with pytest.raises(ConfigurationError):
            BiasedAssimilation(2, 1.0, [1, 1])
        m = BiasedAssimilation(2, 1.0, [1, 0])
        with pytest.raises(ConfigurationError):
            step(m, init(m), [2, 0])


class TestScoreClick:
    @pytest.mark.parametrize("s", [-3.0, -0.5, 0.0, 0.7, 4.0])
    def test_no_amplification(self, s):
        assert ScoreClick(gamma=0).click_probability(s) == pytest.approx(sigmoid(s), abs=1e-15)

    def test_saturates(self):
        assert ScoreClick(gamma=0.5).click_probability(50.0) == pytest.approx(1.0, abs=1e-12)

    def test_default_boost_at_zero(self):
        assert ScoreClick(gamma=0.5).click_probability(0.0) == 0.5

    def test_state_is_probability(self):
        m = ScoreClick(gamma=0.5, content_dim=2)
        y, x = step(m, init(m), [1.0, 0.3, 0.4])
        sig = 1 / (1 + math.exp(-1))
        assert x.vec[0] == pytest.approx(sig + (1 - sig) * 0.5 * math.tanh(1.0))
        assert y[0] in (0.0, 1.0)

    def test_out_of_range_probability_warns_and_clamps(self, caplog):
        m = ScoreClick(gamma=5.0)
        with caplog.at_level(logging.WARNING):
            y, x = step(m, init(m), [2.0])
        assert x.vec[0] == 1.0 and y[0] == 1.0
        assert "outside [0, 1]" in caplog.text


class TestClickedDelta:
    def test_absorbing_bounds(self):
        m = ClickedDelta(3, 2, 0.2, x0=[1.0, 0.0, 0.5])
        for seed in range(20):
            y, x = step(m, init(m), [0, 1], seed=seed)
            assert y.tolist() == [1.0, 0.0]
            assert x.vec.tolist() == [1.0, 0.0, 0.5]

    def test_worked_example(self):
        m = ClickedDelta(2, 1, 0.2, x0=[0.5, 0.5])
        seen = {}
        for seed in range(40):
            y, x = step(m, init(m), [1], seed=seed)
            seen[y[0]] = x.vec[1]
            assert x.vec[0] == 0.5
        assert seen[1.0] == pytest.approx(0.6)
        assert seen[0.0] == pytest.approx(0.4)

    def test_slate_validation(self):
        m = ClickedDelta(3, 2, 0.2)
        with pytest.raises(ConfigurationError):
            step(m, init(m), [0, 0])
        with pytest.raises(ConfigurationError):
            step(m, init(m), [0, 3])
        with pytest.raises(ConfigurationError):
            ClickedDelta(3, 2, 1.0)


class TestDiscountedChoice:
    def test_frequency_with_gamma_one(self):
        m = DiscountedChoice(3, 1, gamma=1.0)
        _, states = run_steps(m, [[0]] * 3)
        np.testing.assert_array_equal(m.preference(states[-1].vec), [1, 0, 0])

    def test_beta_zero_uniform(self):
        m = DiscountedChoice(4, 3, beta=0.0)
        np.testing.assert_array_equal(m.choice_probabilities([5.0, 0, 1, 0], [0, 1, 2]), [1 / 3] * 3)

    def test_empty_counts_uniform(self):
        m = DiscountedChoice(4, 2, beta=10.0)
        np.testing.assert_array_equal(m.choice_probabilities(np.zeros(4), [1, 3]), [0.5, 0.5])

    def test_worked_example(self):
        m = DiscountedChoice(2, 1, gamma=0.5, n0=[1, 0])
        y, x = step(m, init(m), [1])
        assert y[0] == 1.0
        np.testing.assert_array_equal(x.vec, [0.5, 1.0])
        np.testing.assert_allclose(m.preference(x.vec), [1 / 3, 2 / 3], atol=1e-15)

    def test_choice_weights(self):
        m = DiscountedChoice(3, 2, beta=2.0)
        probs = m.choice_probabilities([3.0, 1.0, 0.0], [0, 1])
        e = np.exp(2 * np.array([0.75, 0.25]))
        np.testing.assert_allclose(probs, e / e.sum())


class TestLoyaltySoftmax:
    def test_alpha1_zero_freezes_loyalty(self):
        m = LoyaltySoftmax(3, 2, 0.0, 1.0, loyalty0=[0.1, 0.2, 0.3])
        _, states = run_steps(m, [[0]] * 10)
        np.testing.assert_array_equal(m.split(states[-1].vec)[0], [0.1, 0.2, 0.3])

    def test_alpha2_zero_freezes_preferences(self):
        prefs = [[0.6, 0.8], [1.0, 0.0]]
        m = LoyaltySoftmax(2, 2, 0.5, 0.0, prefs0=prefs)
        _, states = run_steps(m, [[1]] * 10)
        np.testing.assert_allclose(m.split(states[-1].vec)[1], prefs, atol=1e-15)

    def test_worked_example(self):
        m = LoyaltySoftmax(1, 2, 1.0, 1.0, prefs0=[[0.6, 0.8]])
        y, x = step(m, init(m), [0])
        loyalty, prefs = m.split(x.vec)
        np.testing.assert_allclose(prefs[0], [0.8944, 0.4472], atol=1e-4)
        np.testing.assert_allclose(prefs[0], np.array([1.6, 0.8]) / math.sqrt(3.2), atol=1e-15)
        assert loyalty[0] == pytest.approx(0.6)
        assert y[0] == 0.0

    def test_only_active_viewer_moves(self):
        m = LoyaltySoftmax(3, 2, 1.0, 1.0)
        x0 = init(m)
        y, x = step(m, x0, [1])
        active = int(y[0])
        l0, p0 = m.split(x0.vec)
        l1, p1 = m.split(x.vec)
        for i in range(3):
            if i != active:
                assert l1[i] == l0[i]
                np.testing.assert_array_equal(p1[i], p0[i])
        assert l1[active] > l0[active]


class TestBeliefChoice:
    catalog = [[1, 0], [0, 1]]

    def test_beta1_zero_copies_recommendation(self):
        m = BeliefChoice(self.catalog, beta1=0.0)
        np.testing.assert_allclose(m.choice_probabilities(np.array([0.3, 0.9]), [0.8, 0.2]), [0.8, 0.2], atol=1e-15)

    def test_symmetric_catalog(self):
        cat = [[1, 0], [-1, 0], [0, 1], [0, -1]]
        m = BeliefChoice(cat, beta2=3.0, lam=0.7)
        uniform = [0.25] * 4
        np.testing.assert_allclose(m.belief_mean(uniform), [0, 0], atol=1e-15)
        np.testing.assert_allclose(m.next_state_probabilities(uniform), uniform, atol=1e-15)

    def test_worked_example(self):
        m = BeliefChoice(self.catalog)
        cbar = m.belief_mean([0.8, 0.2])
        np.testing.assert_allclose(cbar, [0.9846, 0.0154], atol=1e-4)
        np.testing.assert_allclose(cbar, [0.512 / 0.52, 0.008 / 0.52], atol=1e-15)

    def test_rejects_degenerate_distribution(self):
        m = BeliefChoice(self.catalog)
        with pytest.raises(ConfigurationError):
            step(m, init(m), [0.0, 0.0])
        with pytest.raises(ConfigurationError):
            step(m, init(m), [0.7, 0.7])

    def test_state_moves_to_a_candidate(self):
        m = BeliefChoice(self.catalog, candidates=[[0.5, 0.5], [2, 2]])
        y, x = step(m, init(m), [0.5, 0.5])
        assert y[0] in (0.0, 1.0)
        assert x.vec.tolist() in ([0.5, 0.5], [2.0, 2.0])


class TestBeliefUpdate:
    def test_certain_response(self):
        m = BeliefUpdate(x0=[0.2, 1.0, 0.3])
        for seed in range(10):
            y, _ = step(m, init(m), [1], seed=seed)
            assert y[0] == 1.0

    def test_indicator_zeroes(self):
        m = BeliefUpdate(x0=[0.4, 0.1, 0.2])
        _, x = step(m, init(m), [1])
        np.testing.assert_array_equal(x.vec, [0.0, 0.1, 0.2])

    def test_worked_example(self):
        m = BeliefUpdate(x0=[0.4, 0.1, 0.2], p_low=1.5, p_high=1.5)
        _, x = step(m, init(m), [2])
        assert x.vec[0] == pytest.approx(0.6)
        np.testing.assert_array_equal(x.vec[1:], [0.1, 0.2])

    def test_mirror_pair_and_cap(self):
        m = BeliefUpdate(x0=[0.1, 0.2, 0.9], p_low=2.0, p_high=2.0)
        _, x = step(m, init(m), [0])
        np.testing.assert_array_equal(x.vec, [0.1, 0.2, 1.0])

    def test_middle_maximum_is_inert(self):
        m = BeliefUpdate(x0=[0.1, 0.8, 0.2])
        _, x = step(m, init(m), [2])
        np.testing.assert_array_equal(x.vec, [0.1, 0.8, 0.2])

    def test_multiplier_mean_above_one(self):
        with pytest.raises(ConfigurationError):
            BeliefUpdate(p_low=0.5, p_high=1.5)


def test_registry_ids():
    assert set(VIEWER_MODELS) == {
        "boredom", "attraction_aversion", "mere_exposure", "operant_conditioning", "biased_assimilation",
        "score_click", "clicked_delta", "discounted_choice", "loyalty_softmax", "belief_choice", "belief_update",
    }


def test_steps_do_not_mutate_inputs():
    m = MereExposure(2, 0.5, x0=[1, 0])
    x = init(m)
    u = np.array([0.0, 1.0])
    before = (x.vec.copy(), u.copy())
    step(m, x, u)
    np.testing.assert_array_equal(x.vec, before[0])
    np.testing.assert_array_equal(u, before[1])
    assert isinstance(x, EntityState)


@pytest.mark.parametrize("noise_sd", [0.0, 0.5])
def test_rating_mean_matches_inner_product(noise_sd):
    m = MereExposure(2, 0.0, x0=[0.6, -0.2], noise=noise_sd)
    x = init(m)
    u = np.array([0.5, 1.5])
    n = 20_000
    ys = np.array([m.step(x, u, noise(3, t))[0][0] for t in range(n)])
    target = float(np.dot([0.6, -0.2], u))
    if noise_sd == 0:
        assert np.all(ys == target)
    else:
        assert abs(ys.mean() - target) < 3 * noise_sd / math.sqrt(n)
