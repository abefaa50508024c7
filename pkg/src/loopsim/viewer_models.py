"""Viewer preference dynamics packaged as interaction models.

Conventions shared by the models below:

* item / content-type indices are 0-based everywhere (a recommendation of
  "type 3" in a three-type model is index 2);
* where only the expected rating is pinned down, the realized rating is
  ``E[y] + N(0, noise^2)`` with ``noise`` defaulting to 0;
* the recommender's routed output is the model input ``u``.
"""

from __future__ import annotations

import logging

import numpy as np

from . import _validate as v
from .engine import EntityState, InteractionModel, Noise
from .errors import ConfigurationError, DegenerateUpdateError

log = logging.getLogger(__name__)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - np.max(logits))
    return z / z.sum()


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF sample; one uniform draw."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def _rating(mean: float, noise: float, w: Noise) -> float:
    return mean + noise * w.rng.standard_normal() if noise > 0 else mean


def _index(name, value, n) -> int:
    idx = int(round(float(value)))
    if idx != value or not 0 <= idx < n:
        raise ConfigurationError(f"index {value!r} outside 0..{n - 1}", path=name)
    return idx


class Boredom(InteractionModel):
    """Attention span replenished by recommendation quality.

    ``x' = decay * x + u`` and watch time ``y = u * x``.
    """

    input_dim = 1
    output_dim = 1

    def __init__(self, decay=0.5, x0=0.0, noise=0.0):
        self.decay = v.number("decay", decay)
        self.x0 = v.number("x0", x0)
        self.noise = v.number("noise", noise, lo=0)

    def initial_state(self, w):
        return EntityState([self.x0])

    def step(self, x, u, w):
        q = u[0]
        y = _rating(q * x.vec[0], self.noise, w)
        return [y], x.evolve(vec=[self.decay * x.vec[0] + q])


def geometric_weights(ratio=0.5, length=20) -> np.ndarray:
    return ratio ** np.arange(length)


class AttractionAversion(InteractionModel):
    """Stationary / attraction / aversion preference jumps.

    With probability ``alpha1`` the preference resamples from
    ``N(mu0_mean, mu0_std^2 I)``; with ``alpha2`` it becomes the weighted sum
    of recent recommendations ``sum_tau weights[tau] * rec_{t - tau}``
    (``weights[0]`` multiplies the current one), with ``alpha3`` its negation.
    """

    def __init__(self, dim, alpha1, alpha2, alpha3, weights=None, mu0_mean=None, mu0_std=1.0, x0=None, noise=0.0):
        self.dim = v.integer("dim", dim, lo=1)
        self.alphas = np.array([
            v.number("alpha1", alpha1, 0, 1),
            v.number("alpha2", alpha2, 0, 1),
            v.number("alpha3", alpha3, 0, 1),
        ])
        if abs(self.alphas.sum() - 1.0) > 1e-9:
            raise ConfigurationError(f"alpha1 + alpha2 + alpha3 must equal 1, got {self.alphas.sum():g}", path="alpha1")
        self.weights = geometric_weights() if weights is None else v.vector("weights", weights)
        if self.weights.size == 0:
            raise ConfigurationError("need at least one history weight", path="weights")
        self.mu0_mean = np.zeros(self.dim) if mu0_mean is None else v.vector("mu0_mean", mu0_mean, self.dim)
        self.mu0_std = v.number("mu0_std", mu0_std, lo=0)
        self.x0 = self.mu0_mean.copy() if x0 is None else v.vector("x0", x0, self.dim)
        self.noise = v.number("noise", noise, lo=0)
        self.input_dim = self.dim

    def initial_state(self, w):
        return EntityState(self.x0, history_cap=len(self.weights))

    def memory(self, x: EntityState, u: np.ndarray) -> np.ndarray:
        """Weighted sum of the current and stored recommendations, newest first."""
        recs = [np.asarray(u, dtype=float)] + [np.array(h[1]) for h in reversed(x.history)]
        total = np.zeros(self.dim)
        for weight, rec in zip(self.weights, recs):
            total = total + weight * rec
        return total

    def step(self, x, u, w):
        y = _rating(float(x.vec @ u), self.noise, w)
        branch = _sample(self.alphas, w.rng)
        if branch == 0:
            new = self.mu0_mean + self.mu0_std * w.rng.standard_normal(self.dim)
        elif branch == 1:
            new = self.memory(x, u)
        else:
            new = -self.memory(x, u)
        return [y], x.evolve(vec=new, record=(w.tick, u))


class MereExposure(InteractionModel):
    """Preference drifts toward whatever is shown: ``x' = (1 - alpha) x + alpha u``."""

    def __init__(self, dim, alpha, x0=None, noise=0.0):
        self.dim = v.integer("dim", dim, lo=1)
        self.alpha = v.number("alpha", alpha, 0, 1)
        self.x0 = np.zeros(self.dim) if x0 is None else v.vector("x0", x0, self.dim)
        self.noise = v.number("noise", noise, lo=0)
        self.input_dim = self.dim

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        y = _rating(float(x.vec @ u), self.noise, w)
        return [y], x.evolve(vec=(1 - self.alpha) * x.vec + self.alpha * u)


class OperantConditioning(InteractionModel):
    """Preference ``p`` plus discounted memory ``m`` of past recommendation quality.

    ``m' = delta (m + p.u)``, ``s = arctan(m / sum_{tau=1}^{t-1} delta^tau - p.u)`` and
    ``p' = (1 - alpha |s|) p + alpha1 s u``. The tick ``t`` comes from the
    disturbance; an empty or zero normaliser is replaced by 1. State vector is
    ``[p..., m]``.
    """

    def __init__(self, dim, alpha, alpha1, delta, p0=None, m0=0.0, noise=0.0):
        self.dim = v.integer("dim", dim, lo=1)
        self.alpha = v.number("alpha", alpha, lo=0)
        self.alpha1 = v.number("alpha1", alpha1)
        self.delta = v.number("delta", delta, 0, 1, hi_open=True)
        self.p0 = np.zeros(self.dim) if p0 is None else v.vector("p0", p0, self.dim)
        self.m0 = v.number("m0", m0)
        self.noise = v.number("noise", noise, lo=0)
        self.input_dim = self.dim

    def normaliser(self, t: int) -> float:
        total = sum(self.delta**tau for tau in range(1, t))
        return total if total > 0 else 1.0

    def initial_state(self, w):
        return EntityState(np.append(self.p0, self.m0))

    def step(self, x, u, w):
        p, m = x.vec[:-1], x.vec[-1]
        quality = float(p @ u)
        y = _rating(quality, self.noise, w)
        s = np.arctan(m / self.normaliser(w.tick) - quality)
        p_next = (1 - self.alpha * abs(s)) * p + self.alpha1 * s * u
        m_next = self.delta * (m + quality)
        return [y], x.evolve(vec=np.append(p_next, m_next))


class BiasedAssimilation(InteractionModel):
    """Sphere-valued preference pulled toward content in proportion to agreement.

    ``x' = normalise(x + eta <x, u> u)``.
    """

    def __init__(self, dim, eta, x0, noise=0.0):
        self.dim = v.integer("dim", dim, lo=1)
        self.eta = v.number("eta", eta, lo=0)
        self.x0 = v.unit("x0", v.vector("x0", x0, self.dim))
        self.noise = v.number("noise", noise, lo=0)
        self.input_dim = self.dim

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        norm_u = np.linalg.norm(u)
        if abs(norm_u - 1.0) > 1e-9:
            raise ConfigurationError(f"recommendation must be a unit vector, got norm {norm_u:.12g}", path="u")
        align = float(x.vec @ u)
        y = _rating(align, self.noise, w)
        raw = x.vec + self.eta * align * u
        norm = np.linalg.norm(raw)
        if norm < 1e-300:
            raise DegenerateUpdateError("biased assimilation update collapsed to the zero vector")
        return [y], x.evolve(vec=raw / norm)


BOOSTS = {
    "tanh_abs": lambda s: np.tanh(abs(s)),
    "zero": lambda s: 0.0,
}


def sigmoid(s: float) -> float:
    return 1.0 / (1.0 + np.exp(-s)) if s >= 0 else np.exp(s) / (1.0 + np.exp(s))


class ScoreClick(InteractionModel):
    """Memoryless click probability driven by the displayed predicted score.

    Input is ``[score, content...]``. The state is recomputed every tick as
    ``sigma(s) + (1 - sigma(s)) gamma r(s)`` for ``s > 0`` and
    ``sigma(s) (1 + gamma r(s))`` otherwise; the click is
    ``Bernoulli(clamp(x, 0, 1))``.
    """

    output_dim = 1

    def __init__(self, gamma=0.0, boost="tanh_abs", content_dim=0):
        self.gamma = v.number("gamma", gamma, lo=0)
        self.boost_name = v.choice("boost", boost, BOOSTS)
        self.boost = BOOSTS[boost]
        self.content_dim = v.integer("content_dim", content_dim, lo=0)
        self.input_dim = 1 + self.content_dim

    def click_probability(self, s: float) -> float:
        sig = sigmoid(s)
        r = self.boost(s)
        if s > 0:
            return sig + (1 - sig) * self.gamma * r
        return sig * (1 + self.gamma * r)

    def initial_state(self, w):
        return EntityState([0.5])

    def step(self, x, u, w):
        prob = self.click_probability(float(u[0]))
        if not 0.0 <= prob <= 1.0:
            log.warning("score_click: probability %.6g outside [0, 1] for score %.6g; clamping", prob, u[0])
        prob = min(max(prob, 0.0), 1.0)
        click = float(w.rng.random() < prob)
        return [click], x.evolve(vec=[prob])


class ClickedDelta(InteractionModel):
    """Per-item click propensities nudged toward 1 when clicked, toward 0 when skipped.

    A shown item ``j`` is clicked with probability ``x[j]``; then
    ``x[j] += delta (1 - x[j])`` if clicked, else ``x[j] *= 1 - delta``.
    Input is a slate of ``slate_size`` item indices, output the click vector.
    """

    def __init__(self, n_items, slate_size, delta, x0=None):
        self.n_items = v.integer("n_items", n_items, lo=1)
        self.slate_size = v.integer("slate_size", slate_size, 1, self.n_items)
        self.delta = v.number("delta", delta, 0, 1, lo_open=True, hi_open=True)
        self.x0 = np.full(self.n_items, 0.5) if x0 is None else v.vector("x0", x0, self.n_items, 0, 1)
        self.input_dim = self.slate_size
        self.output_dim = self.slate_size

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        slate = [_index("u", item, self.n_items) for item in u]
        if len(set(slate)) != len(slate):
            raise ConfigurationError(f"slate {slate} repeats an item", path="u")
        draws = w.rng.random(len(slate))
        new = x.vec.copy()
        clicks = np.zeros(len(slate))
        for pos, (item, draw) in enumerate(zip(slate, draws)):
            if draw < x.vec[item]:
                clicks[pos] = 1.0
                new[item] = x.vec[item] + self.delta * (1 - x.vec[item])
            else:
                new[item] = x.vec[item] * (1 - self.delta)
        return clicks, x.evolve(vec=new)


class DiscountedChoice(InteractionModel):
    """Choice from a slate driven by discounted consumption counts.

    The state holds counts ``n``; the exposed preference is ``n / |n|_1`` (uniform
    when ``n = 0``). The viewer picks slate item ``c`` with probability
    proportional to ``exp(beta * pref[c])``, then ``n' = gamma n + e_c``.
    Output is the chosen item index.
    """

    output_dim = 1

    def __init__(self, n_items, slate_size, gamma=1.0, beta=1.0, n0=None):
        self.n_items = v.integer("n_items", n_items, lo=1)
        self.slate_size = v.integer("slate_size", slate_size, 1, self.n_items)
        self.gamma = v.number("gamma", gamma, 0, 1, lo_open=True)
        self.beta = v.number("beta", beta, lo=0)
        self.n0 = np.zeros(self.n_items) if n0 is None else v.vector("n0", n0, self.n_items, lo=0)
        self.input_dim = self.slate_size

    @staticmethod
    def preference(counts) -> np.ndarray:
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            return np.full(counts.shape, 1.0 / counts.size)
        return counts / total

    def choice_probabilities(self, counts, slate) -> np.ndarray:
        if np.sum(counts) <= 0:
            return np.full(len(slate), 1.0 / len(slate))
        pref = self.preference(counts)
        return _softmax(self.beta * pref[list(slate)])

    def initial_state(self, w):
        return EntityState(self.n0)

    def step(self, x, u, w):
        slate = [_index("u", item, self.n_items) for item in u]
        probs = self.choice_probabilities(x.vec, slate)
        chosen = slate[_sample(probs, w.rng)]
        counts = self.gamma * x.vec
        counts[chosen] += 1.0
        return [float(chosen)], x.evolve(vec=counts)


class LoyaltySoftmax(InteractionModel):
    """Population model: a global loyalty vector picks who is active each tick.

    State is ``[loyalty (n_viewers), prefs (n_viewers x n_items) row-major]``.
    The active viewer ``i ~ softmax(loyalty)`` consumes ``softmax(prefs[i])``
    (independent of the recommendation); then ``loyalty[i] += alpha1 prefs[i][rec]``
    and ``prefs[i] = normalise(prefs[i] + alpha2 e_rec)``. Input is one shared
    recommendation index, or one per viewer when ``per_viewer_input``.
    Output is ``[active viewer, consumed item]``.
    """

    output_dim = 2

    def __init__(self, n_viewers, n_items, alpha1, alpha2, loyalty0=None, prefs0=None, per_viewer_input=False):
        self.n_viewers = v.integer("n_viewers", n_viewers, lo=1)
        self.n_items = v.integer("n_items", n_items, lo=1)
        self.alpha1 = v.number("alpha1", alpha1, lo=0)
        self.alpha2 = v.number("alpha2", alpha2, lo=0)
        self.loyalty0 = np.zeros(self.n_viewers) if loyalty0 is None else v.vector("loyalty0", loyalty0, self.n_viewers)
        if prefs0 is None:
            self.prefs0 = np.full((self.n_viewers, self.n_items), 1.0 / np.sqrt(self.n_items))
        else:
            self.prefs0 = v.matrix("prefs0", prefs0, (self.n_viewers, self.n_items))
            norms = np.linalg.norm(self.prefs0, axis=1)
            if (np.abs(norms - 1) > 1e-9).any():
                raise ConfigurationError("each preference row must have unit norm", path="prefs0")
        self.per_viewer_input = bool(per_viewer_input)
        self.input_dim = self.n_viewers if self.per_viewer_input else 1

    def split(self, vec):
        m = self.n_viewers
        return vec[:m], vec[m:].reshape(m, self.n_items)

    def initial_state(self, w):
        return EntityState(np.concatenate([self.loyalty0, self.prefs0.ravel()]))

    def step(self, x, u, w):
        loyalty, prefs = self.split(x.vec)
        active = _sample(_softmax(loyalty), w.rng)
        rec = _index("u", u[active] if self.per_viewer_input else u[0], self.n_items)
        consumed = _sample(_softmax(prefs[active]), w.rng)
        loyalty = loyalty.copy()
        prefs = prefs.copy()
        loyalty[active] += self.alpha1 * prefs[active, rec]
        row = prefs[active].copy()
        row[rec] += self.alpha2
        prefs[active] = row / np.linalg.norm(row)
        return [float(active), float(consumed)], x.evolve(vec=np.concatenate([loyalty, prefs.ravel()]))


class BeliefChoice(InteractionModel):
    """Choice and preference shift driven by a belief about future content.

    Input is a distribution ``y^r`` over the catalogue. The belief is
    ``cbar = sum y^r[c]^3 c / sum y^r[c]^3``. The viewer chooses content ``c``
    with probability proportional to ``y^r[c] exp(beta1 x.c)``; the next
    preference is a candidate ``z`` sampled with probability proportional to
    ``exp(beta2 (lam cbar.z + (1 - lam) cbar.anchor))``. Candidates default to
    the catalogue vectors, ``anchor`` to the initial preference. Output is the
    chosen catalogue index.
    """

    output_dim = 1

    def __init__(self, catalog, beta1=1.0, beta2=1.0, lam=0.5, x0=None, anchor=None, candidates=None):
        self.catalog = v.matrix("catalog", catalog)
        p, d = self.catalog.shape
        if p < 1:
            raise ConfigurationError("catalog must hold at least one item", path="catalog")
        self.beta1 = v.number("beta1", beta1, lo=0)
        self.beta2 = v.number("beta2", beta2, lo=0)
        self.lam = v.number("lam", lam, 0, 1)
        self.x0 = self.catalog[0].copy() if x0 is None else v.vector("x0", x0, d)
        self.anchor = self.x0.copy() if anchor is None else v.vector("anchor", anchor, d)
        self.candidates = self.catalog if candidates is None else v.matrix("candidates", candidates, (None, d))
        self.input_dim = p

    def belief_mean(self, dist) -> np.ndarray:
        dist = self._check_distribution(dist)
        cubed = dist**3
        return cubed @ self.catalog / cubed.sum()

    def choice_probabilities(self, x_vec, dist) -> np.ndarray:
        dist = self._check_distribution(dist)
        logits = self.beta1 * (self.catalog @ x_vec)
        weights = dist * np.exp(logits - logits.max())
        return weights / weights.sum()

    def next_state_probabilities(self, dist) -> np.ndarray:
        cbar = self.belief_mean(dist)
        logits = self.beta2 * (self.lam * (self.candidates @ cbar) + (1 - self.lam) * float(cbar @ self.anchor))
        return _softmax(logits)

    def _check_distribution(self, dist) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if dist.shape[0] != self.catalog.shape[0] or (dist < 0).any():
            raise ConfigurationError("recommendation must be a nonnegative vector over the catalog", path="u")
        if dist.sum() <= 0:
            raise ConfigurationError("recommendation distribution has no mass", path="u")
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ConfigurationError(f"recommendation distribution sums to {dist.sum():.12g}", path="u")
        return dist

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        chosen = _sample(self.choice_probabilities(x.vec, u), w.rng)
        z = _sample(self.next_state_probabilities(u), w.rng)
        return [float(chosen)], x.evolve(vec=self.candidates[z])


class BeliefUpdate(InteractionModel):
    """Three-type belief state with multiplicative reinforcement.

    When ``x[0]`` is the largest entry ``(j, j') = (0, 2)``; when ``x[2]`` is,
    ``(2, 0)``; then ``x'[j] = 1{rec = j'} min(p_t x[j], 1)`` with
    ``p_t ~ U[p_low, p_high]``. Other coordinates are unchanged, and nothing
    moves when the middle entry is the strict maximum. The response is
    ``Bernoulli(x[rec])``.
    """

    input_dim = 1
    output_dim = 1

    def __init__(self, x0=(1 / 3, 1 / 3, 1 / 3), p_low=1.0, p_high=2.0):
        self.x0 = v.vector("x0", x0, 3, 0, 1)
        self.p_low = v.number("p_low", p_low, lo=0)
        self.p_high = v.number("p_high", p_high, lo=self.p_low)
        if (self.p_low + self.p_high) / 2 <= 1:
            raise ConfigurationError("the multiplier must have mean > 1", path="p_high")

    def target(self, x_vec):
        top = x_vec.max()
        if x_vec[0] == top:
            return 0, 2
        if x_vec[2] == top:
            return 2, 0
        return None

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        rec = _index("u", u[0], 3)
        response = float(w.rng.random() < x.vec[rec])
        p_t = w.rng.uniform(self.p_low, self.p_high) if self.p_high > self.p_low else self.p_low
        new = x.vec.copy()
        pair = self.target(x.vec)
        if pair is not None:
            j, j_prime = pair
            new[j] = min(p_t * x.vec[j], 1.0) if rec == j_prime else 0.0
        return [response], x.evolve(vec=new)


VIEWER_MODELS = {
    "boredom": Boredom,
    "attraction_aversion": AttractionAversion,
    "mere_exposure": MereExposure,
    "operant_conditioning": OperantConditioning,
    "biased_assimilation": BiasedAssimilation,
    "score_click": ScoreClick,
    "clicked_delta": ClickedDelta,
    "discounted_choice": DiscountedChoice,
    "loyalty_softmax": LoyaltySoftmax,
    "belief_choice": BeliefChoice,
    "belief_update": BeliefUpdate,
}
