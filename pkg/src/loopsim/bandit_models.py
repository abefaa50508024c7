"""Reward environments whose distribution shifts with what gets recommended.

Every model takes the pulled arm as a one-hot vector of length ``n_arms`` and
emits one realized reward. Unless a model says otherwise the reward is its
expectation plus observation noise: ``noise_kind="gaussian"`` adds
``N(0, noise^2)``, ``noise_kind="bernoulli"`` draws ``Bernoulli(mean)`` with
the mean clipped to [0, 1].
"""

from __future__ import annotations

import numpy as np

from . import _validate as v
from .engine import EntityState, InteractionModel
from .errors import ConfigurationError

NOISE_KINDS = ("gaussian", "bernoulli")


def pulled_arm(u, n_arms: int) -> int:
    u = np.asarray(u, dtype=float)
    hot = np.flatnonzero(u)
    if u.shape[0] != n_arms or hot.size != 1 or u[hot[0]] != 1.0:
        raise ConfigurationError(f"expected a one-hot arm vector of length {n_arms}, got {u.tolist()}", path="u")
    return int(hot[0])


def one_hot(k: int, n_arms: int) -> np.ndarray:
    e = np.zeros(n_arms)
    e[k] = 1.0
    return e


class BanditEnvironment(InteractionModel):
    """Shared plumbing: arm decoding and reward noise."""

    output_dim = 1

    def __init__(self, n_arms, noise=0.0, noise_kind="gaussian"):
        self.n_arms = v.integer("n_arms", n_arms, lo=1)
        self.noise = v.number("noise", noise, lo=0)
        self.noise_kind = v.choice("noise_kind", noise_kind, NOISE_KINDS)
        self.input_dim = self.n_arms

    def observe(self, mean: float, w) -> float:
        if self.noise_kind == "bernoulli":
            return float(w.rng.random() < min(max(mean, 0.0), 1.0))
        if self.noise > 0:
            return mean + self.noise * w.rng.standard_normal()
        return mean

    def reward_sd(self, mean: float) -> float:
        """Standard deviation of one observed reward around ``mean``."""
        if self.noise_kind == "bernoulli":
            p = min(max(mean, 0.0), 1.0)
            return float(np.sqrt(p * (1 - p)))
        return self.noise


class Rotting(BanditEnvironment):
    """Expected reward decays with the arm's own pull count.

    ``family="power"``: ``base (n + 1)^(-rho)``; ``family="exponential"``:
    ``base exp(-rho n)``. State is the pull-count vector.
    """

    FAMILIES = ("power", "exponential")

    def __init__(self, n_arms, base=1.0, rho=0.5, family="power", noise=0.0, noise_kind="gaussian"):
        super().__init__(n_arms, noise, noise_kind)
        self.base = v.per_arm("base", base, self.n_arms)
        self.rho = v.per_arm("rho", rho, self.n_arms, lo=0)
        self.family = v.choice("family", family, self.FAMILIES)

    def mean(self, k: int, pulls: float) -> float:
        if self.family == "power":
            return float(self.base[k] * (pulls + 1.0) ** (-self.rho[k]))
        return float(self.base[k] * np.exp(-self.rho[k] * pulls))

    def expected_reward(self, x: EntityState, k: int) -> float:
        return self.mean(k, x.vec[k])

    def initial_state(self, w):
        return EntityState(np.zeros(self.n_arms))

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        y = self.observe(self.expected_reward(x, k), w)
        counts = x.vec.copy()
        counts[k] += 1
        return [y], x.evolve(vec=counts)


class Recharging(BanditEnvironment):
    """Expected reward grows with the time since the arm was last pulled.

    The state ``tau`` starts at 0, resets to 1 on a pull and otherwise
    increments. Reward families:

    * ``saturating`` (concave): ``base (1 - gamma^tau)``
    * ``logistic`` (monotone increasing): ``base / (1 + exp(-(tau - midpoint) / scale))``
    * ``gp``: one sample per arm of a Gaussian process over ``tau = 0..tau_max``
      with squared-exponential kernel, mean ``base``; drawn once from ``gp_seed``
      and held fixed (``tau`` beyond ``tau_max`` reads the last value)
    """

    FAMILIES = ("saturating", "logistic", "gp")

    def __init__(
        self, n_arms, base=1.0, gamma=0.5, family="saturating", midpoint=3.0, scale=1.0,
        tau_max=50, length_scale=5.0, gp_variance=0.1, gp_seed=0, noise=0.0, noise_kind="gaussian",
    ):
        super().__init__(n_arms, noise, noise_kind)
        self.base = v.per_arm("base", base, self.n_arms)
        self.gamma = v.per_arm("gamma", gamma, self.n_arms, 0, 1, hi_open=True)
        self.family = v.choice("family", family, self.FAMILIES)
        self.midpoint = v.per_arm("midpoint", midpoint, self.n_arms)
        self.scale = v.per_arm("scale", scale, self.n_arms, lo=0, lo_open=True)
        self.tau_max = v.integer("tau_max", tau_max, lo=1)
        self.length_scale = v.number("length_scale", length_scale, lo=0, lo_open=True)
        self.gp_variance = v.number("gp_variance", gp_variance, lo=0)
        self.gp_seed = v.integer("gp_seed", gp_seed, lo=0)
        self.gp_table = self._sample_gp() if self.family == "gp" else None

    def _sample_gp(self) -> np.ndarray:
        taus = np.arange(self.tau_max + 1, dtype=float)
        cov = self.gp_variance * np.exp(-0.5 * ((taus[:, None] - taus[None, :]) / self.length_scale) ** 2)
        chol = np.linalg.cholesky(cov + 1e-9 * np.eye(len(taus)))
        rng = np.random.default_rng(self.gp_seed)
        draws = rng.standard_normal((self.n_arms, len(taus)))
        return self.base[:, None] + draws @ chol.T

    def mean(self, k: int, tau: float) -> float:
        if self.family == "saturating":
            return float(self.base[k] * (1.0 - self.gamma[k] ** tau))
        if self.family == "logistic":
            return float(self.base[k] / (1.0 + np.exp(-(tau - self.midpoint[k]) / self.scale[k])))
        return float(self.gp_table[k, int(min(tau, self.tau_max))])

    def expected_reward(self, x, k):
        return self.mean(k, x.vec[k])

    def initial_state(self, w):
        return EntityState(np.zeros(self.n_arms))

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        y = self.observe(self.expected_reward(x, k), w)
        tau = x.vec + 1.0
        tau[k] = 1.0
        return [y], x.evolve(vec=tau)


class Rebounding(BanditEnvironment):
    """Satiation that decays geometrically and rebounds with exposure.

    Reward mean ``base[k] - lam[k] * x[k]`` (pre-update satiation), then every
    arm decays: ``x'[j] = gamma[j] (x[j] + 1{j = k})``.
    """

    def __init__(self, n_arms, base=1.0, gamma=0.5, lam=1.0, x0=None, noise=0.0, noise_kind="gaussian"):
        super().__init__(n_arms, noise, noise_kind)
        self.base = v.per_arm("base", base, self.n_arms)
        self.gamma = v.per_arm("gamma", gamma, self.n_arms, 0, 1, lo_open=True, hi_open=True)
        self.lam = v.per_arm("lam", lam, self.n_arms, lo=0)
        self.x0 = np.zeros(self.n_arms) if x0 is None else v.vector("x0", x0, self.n_arms, lo=0)

    def expected_reward(self, x, k):
        return float(self.base[k] - self.lam[k] * x.vec[k])

    def initial_state(self, w):
        return EntityState(self.x0)

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        y = self.observe(self.expected_reward(x, k), w)
        return [y], x.evolve(vec=self.gamma * (x.vec + one_hot(k, self.n_arms)))


class Departure(BanditEnvironment):
    """Typed viewer who may leave after an unclicked recommendation.

    The type ``b`` (1-based) is drawn from ``prior`` at init. Pulling arm ``k``
    gives a click with probability ``click[k][b-1]`` while active; on a miss the
    viewer departs with probability ``leave[k][b-1]``. State is
    ``[type or 0 once departed, active]``; departed viewers emit 0 forever.
    """

    active_slot = 1

    def __init__(self, prior, click, leave):
        self.prior = v.vector("prior", prior, lo=0)
        if abs(self.prior.sum() - 1.0) > 1e-9:
            raise ConfigurationError(f"must sum to 1, got {self.prior.sum():.12g}", path="prior")
        self.click = v.matrix("click", click, (None, self.prior.size), 0, 1)
        self.leave = v.matrix("leave", leave, self.click.shape, 0, 1)
        super().__init__(self.click.shape[0], 0.0, "bernoulli")

    def expected_reward(self, x, k):
        kind, active = int(x.vec[0]), x.vec[1]
        return float(self.click[k, kind - 1]) if active else 0.0

    def initial_state(self, w):
        cdf = np.cumsum(self.prior)
        kind = int(np.searchsorted(cdf, w.rng.random() * cdf[-1], side="right")) + 1
        return EntityState([min(kind, self.prior.size), 1.0])

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        if not x.vec[1]:
            return [0.0], x
        kind = int(x.vec[0])
        draws = w.rng.random(2)
        if draws[0] < self.click[k, kind - 1]:
            return [1.0], x
        if draws[1] < self.leave[k, kind - 1]:
            return [0.0], x.evolve(vec=[0.0, 0.0])
        return [0.0], x


class LastSwitch(BanditEnvironment):
    """Reward depends on how long ago each arm's pulled/not-pulled status flipped.

    State is ``[clock (n_arms), last status (n_arms)]``. After a pull of arm
    ``k`` the new status is ``e_k``; each clock resets to 0 where the status
    changed and increments elsewhere. Reward mean is ``m_k(clock[k])`` with
    ``recovering`` ``base (1 - gamma^tau)`` or ``deprecating`` ``base gamma^tau``.
    """

    SHAPES = ("recovering", "deprecating")

    def __init__(self, n_arms, base=1.0, gamma=0.5, shape="recovering", noise=0.0, noise_kind="gaussian"):
        super().__init__(n_arms, noise, noise_kind)
        self.base = v.per_arm("base", base, self.n_arms)
        self.gamma = v.per_arm("gamma", gamma, self.n_arms, 0, 1)
        shapes = [shape] * self.n_arms if isinstance(shape, str) else list(shape)
        if len(shapes) != self.n_arms:
            raise ConfigurationError(f"expected one shape per arm ({self.n_arms})", path="shape")
        self.shape = [v.choice("shape", s, self.SHAPES) for s in shapes]

    def mean(self, k: int, tau: float) -> float:
        decay = self.gamma[k] ** tau
        return float(self.base[k] * (1.0 - decay if self.shape[k] == "recovering" else decay))

    def expected_reward(self, x, k):
        return self.mean(k, x.vec[k])

    def transition(self, clocks, status, k):
        new_status = one_hot(k, self.n_arms)
        changed = new_status != status
        return np.where(changed, 0.0, clocks + 1.0), new_status

    def initial_state(self, w):
        return EntityState(np.zeros(2 * self.n_arms))

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        y = self.observe(self.expected_reward(x, k), w)
        clocks, status = self.transition(x.vec[: self.n_arms], x.vec[self.n_arms:], k)
        return [y], x.evolve(vec=np.concatenate([clocks, status]))


class Anchor(BanditEnvironment):
    """Scalar state pulled toward the anchor of whichever arm is played.

    ``x' = x + lam (anchor[k] - x)`` and the reward mean is ``rate[k] * x'``
    (post-update state).
    """

    def __init__(self, n_arms, anchor=1.0, rate=1.0, lam=0.5, x0=0.0, noise=0.0, noise_kind="gaussian"):
        super().__init__(n_arms, noise, noise_kind)
        self.anchor = v.per_arm("anchor", anchor, self.n_arms)
        self.rate = v.per_arm("rate", rate, self.n_arms)
        self.lam = v.number("lam", lam, 0, 1)
        self.x0 = v.number("x0", x0)

    def updated(self, x_val: float, k: int) -> float:
        return x_val + self.lam * (self.anchor[k] - x_val)

    def expected_reward(self, x, k):
        return float(self.rate[k] * self.updated(x.vec[0], k))

    def initial_state(self, w):
        return EntityState([self.x0])

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        new = self.updated(x.vec[0], k)
        y = self.observe(float(self.rate[k] * new), w)
        return [y], x.evolve(vec=[new])


class HistoryRate(BanditEnvironment):
    """Viewer whose observable is the instantaneous rate of returning to the platform.

    Each tick is one interaction event. The gap since the previous event is
    ``Geometric(1 / mean_gap)`` with ``mean_gap = max(1, delay_scale / max(r, floor))``
    where ``r`` is the previous response (a synthetic delay model); the output
    is ``1 / gap``, or 0 for the very first event. The response to arm ``k``
    is ``base[k]`` plus reward noise. State is
    ``[last event time, last response, event count]``; the history keeps
    ``(tick, (event time, arm, response))``.
    """

    def __init__(self, n_arms, base=1.0, delay_scale=1.0, floor=1e-3, history_cap=32, noise=0.0, noise_kind="gaussian"):
        super().__init__(n_arms, noise, noise_kind)
        self.base = v.per_arm("base", base, self.n_arms)
        self.delay_scale = v.number("delay_scale", delay_scale, lo=0, lo_open=True)
        self.floor = v.number("floor", floor, lo=0, lo_open=True)
        self.history_cap = v.integer("history_cap", history_cap, lo=1)

    def gap_probability(self, last_response: float) -> float:
        mean_gap = max(1.0, self.delay_scale / max(last_response, self.floor))
        return 1.0 / mean_gap

    def expected_rate(self, last_response: float) -> float:
        """E[1/G] for G ~ Geometric(p) on {1, 2, ...}."""
        p = self.gap_probability(last_response)
        if p >= 1.0:
            return 1.0
        return float(-p * np.log(p) / (1.0 - p))

    def expected_reward(self, x, k):
        if x.vec[2] == 0:
            return 0.0
        return self.expected_rate(x.vec[1])

    def initial_state(self, w):
        return EntityState(np.zeros(3), history_cap=self.history_cap)

    def step(self, x, u, w):
        k = pulled_arm(u, self.n_arms)
        last_time, last_response, events = x.vec
        if events == 0:
            event_time, rate = float(w.tick), 0.0
        else:
            gap = int(w.rng.geometric(self.gap_probability(last_response)))
            event_time, rate = last_time + gap, 1.0 / gap
        response = self.observe(float(self.base[k]), w)
        state = x.evolve(vec=[event_time, response, events + 1], record=(w.tick, (event_time, k, response)))
        return [rate], state


BANDIT_MODELS = {
    "rotting": Rotting,
    "recharging": Recharging,
    "rebounding": Rebounding,
    "departure": Departure,
    "last_switch": LastSwitch,
    "anchor": Anchor,
    "history_rate": HistoryRate,
}
