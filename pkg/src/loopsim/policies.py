"""Recommender policies.

A policy serves ``n_users`` users at once. Its input is the concatenation of
the users' previous outputs (``feedback_dims[i]`` values for user ``i``) and
its output concatenates one recommendation block per user, so ``"split"``
routing hands each user its own block. Feedback is credited to the
recommendation made on the previous tick; the t = 0 bootstrap input is never
credited.

State layouts (all flat, user-major):

* bandit policies: ``[reward sums (n x K), pull counts (n x K), last arm (n)]``;
  the sliding-window variant replaces the sums with ring buffers
  ``(n x K x window)``
* catalogue policies: ``[preference estimate (n x d), last item (n)]``

``last`` entries are -1 until a recommendation is made. Ties are broken
toward the lowest index everywhere.
"""

from __future__ import annotations

import math

import numpy as np

from . import _validate as v
from .bandit_models import one_hot
from .engine import EntityState, InteractionModel
from .errors import ConfigurationError


class Policy(InteractionModel):
    def __init__(self, n_users=1, feedback_dims=None):
        self.n_users = v.integer("n_users", n_users, lo=1)
        dims = [1] * self.n_users if feedback_dims is None else [int(d) for d in feedback_dims]
        if len(dims) != self.n_users or any(d < 1 for d in dims):
            raise ConfigurationError(f"need {self.n_users} positive feedback widths, got {dims}", path="feedback_dims")
        self.feedback_dims = dims
        self.input_dim = sum(dims)
        self._offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def feedback(self, u, i: int) -> np.ndarray:
        return np.asarray(u[self._offsets[i]:self._offsets[i + 1]], dtype=float)


class FixedPolicy(InteractionModel):
    """Emits a configured constant vector every tick; stateless."""

    input_dim = None

    def __init__(self, value=(1.0,)):
        self.value = v.vector("value", value)
        if self.value.size == 0:
            raise ConfigurationError("must hold at least one value", path="value")
        self.output_dim = int(self.value.size)

    def initial_state(self, w):
        return EntityState(np.zeros(0))

    def step(self, x, u, w):
        return self.value, x


class _ArmPolicy(Policy):
    """Shared bookkeeping for K-armed index policies."""

    def __init__(self, n_arms, n_users=1, feedback_dims=None):
        super().__init__(n_users, feedback_dims)
        self.n_arms = v.integer("n_arms", n_arms, lo=1)
        self.output_dim = self.n_users * self.n_arms

    # layout helpers -----------------------------------------------------
    @property
    def _stat_size(self) -> int:
        return self.n_users * self.n_arms

    def unpack(self, vec):
        n, k = self.n_users, self.n_arms
        s = self._stat_size
        sums = vec[:s].reshape(n, k)
        counts = vec[s:2 * s].reshape(n, k)
        last = vec[2 * s:]
        return sums, counts, last

    def pack(self, stats, counts, last):
        return np.concatenate([np.ravel(stats), np.ravel(counts), np.ravel(last)])

    def initial_state(self, w):
        return EntityState(self.pack(np.zeros(self._stat_size), np.zeros(self._stat_size), -np.ones(self.n_users)))

    def means(self, state: EntityState) -> np.ndarray:
        sums, counts, _ = self.unpack(state.vec)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.where(counts > 0, counts, 1), 0.0)

    def credit(self, sums, counts, last, u):
        for i in range(self.n_users):
            arm = int(last[i])
            if arm >= 0:
                sums[i, arm] += float(np.sum(self.feedback(u, i)))
                counts[i, arm] += 1

    def choose(self, i, sums, counts, w) -> int:
        raise NotImplementedError

    def step(self, x, u, w):
        sums, counts, last = (a.copy() for a in self.unpack(x.vec))
        self.credit(sums, counts, last, u)
        arms = [self.choose(i, sums, counts, w) for i in range(self.n_users)]
        out = np.concatenate([one_hot(a, self.n_arms) for a in arms])
        return out, x.evolve(vec=self.pack(sums, counts, np.array(arms, dtype=float)))


def _ucb_choice(totals, counts, confidence) -> int:
    """Lowest-index unpulled arm, else argmax mean + c sqrt(2 ln t / n)."""
    unpulled = np.flatnonzero(counts == 0)
    if unpulled.size:
        return int(unpulled[0])
    t = counts.sum() + 1
    index = totals / counts + confidence * np.sqrt(2.0 * math.log(t) / counts)
    return int(np.argmax(index))


class UCB1(_ArmPolicy):
    def __init__(self, n_arms, confidence=1.0, n_users=1, feedback_dims=None):
        super().__init__(n_arms, n_users, feedback_dims)
        self.confidence = v.number("confidence", confidence, lo=0)

    def choose(self, i, sums, counts, w):
        return _ucb_choice(sums[i], counts[i], self.confidence)


class EpsilonGreedy(_ArmPolicy):
    """Uniform arm with probability epsilon, otherwise the best empirical mean."""

    def __init__(self, n_arms, epsilon=0.1, n_users=1, feedback_dims=None):
        super().__init__(n_arms, n_users, feedback_dims)
        self.epsilon = v.number("epsilon", epsilon, 0, 1)

    def choose(self, i, sums, counts, w):
        if self.epsilon > 0 and w.rng.random() < self.epsilon:
            return int(w.rng.integers(self.n_arms))
        safe = np.where(counts[i] > 0, counts[i], 1)
        means = np.where(counts[i] > 0, sums[i] / safe, 0.0)
        return int(np.argmax(means))


class SlidingUCB(_ArmPolicy):
    """UCB whose means and counts use only each arm's last ``window`` rewards.

    The exploration term still uses the total number of pulls, so with a
    window no shorter than the run the decisions coincide with :class:`UCB1`.
    """

    def __init__(self, n_arms, window=50, confidence=1.0, n_users=1, feedback_dims=None):
        super().__init__(n_arms, n_users, feedback_dims)
        self.window = v.integer("window", window, lo=1)
        self.confidence = v.number("confidence", confidence, lo=0)

    @property
    def _buffer_size(self) -> int:
        return self.n_users * self.n_arms * self.window

    def unpack(self, vec):
        n, k, s = self.n_users, self.n_arms, self._stat_size
        b = self._buffer_size
        buf = vec[:b].reshape(n, k, self.window)
        counts = vec[b:b + s].reshape(n, k)
        last = vec[b + s:]
        return buf, counts, last

    def initial_state(self, w):
        return EntityState(self.pack(np.zeros(self._buffer_size), np.zeros(self._stat_size), -np.ones(self.n_users)))

    def window_stats(self, buf_row, count: int) -> tuple[float, int]:
        """Sum over the retained rewards in chronological order, and how many there are."""
        kept = int(min(count, self.window))
        start = int(count - kept)
        total = 0.0
        for j in range(start, int(count)):
            total += buf_row[j % self.window]
        return total, kept

    def means(self, state):
        buf, counts, _ = self.unpack(state.vec)
        out = np.zeros((self.n_users, self.n_arms))
        for i in range(self.n_users):
            for k in range(self.n_arms):
                total, kept = self.window_stats(buf[i, k], int(counts[i, k]))
                out[i, k] = total / kept if kept else 0.0
        return out

    def credit(self, buf, counts, last, u):
        for i in range(self.n_users):
            arm = int(last[i])
            if arm >= 0:
                buf[i, arm, int(counts[i, arm]) % self.window] = float(np.sum(self.feedback(u, i)))
                counts[i, arm] += 1

    def choose(self, i, buf, counts, w):
        unpulled = np.flatnonzero(counts[i] == 0)
        if unpulled.size:
            return int(unpulled[0])
        totals = np.zeros(self.n_arms)
        kept = np.zeros(self.n_arms)
        for k in range(self.n_arms):
            totals[k], kept[k] = self.window_stats(buf[i, k], int(counts[i, k]))
        t = counts[i].sum() + 1
        index = totals / kept + self.confidence * np.sqrt(2.0 * math.log(t) / kept)
        return int(np.argmax(index))


OUTPUT_MODES = {"content", "slate", "scored", "index"}
FEEDBACK_MODES = {"scalar", "choice"}


class _CataloguePolicy(Policy):
    """Exponential moving average of feedback-weighted content, per user.

    ``feedback="scalar"``: ``u_hat' = (1 - rho) u_hat + rho * f * c_last`` with
    ``f`` the summed user output and ``c_last`` last tick's content.
    ``feedback="choice"``: the user output is a chosen catalogue index and
    ``u_hat' = (1 - rho) u_hat + rho * c_chosen``.
    """

    def __init__(self, catalog, rho=0.5, feedback="scalar", prior=None, n_users=1, feedback_dims=None):
        super().__init__(n_users, feedback_dims)
        self.catalog = v.matrix("catalog", catalog)
        if self.catalog.shape[0] < 1:
            raise ConfigurationError("catalog must be nonempty", path="catalog")
        self.n_items, self.dim = self.catalog.shape
        self.rho = v.number("rho", rho, 0, 1)
        self.feedback_mode = v.choice("feedback", feedback, FEEDBACK_MODES)
        self.prior = np.zeros(self.dim) if prior is None else v.vector("prior", prior, self.dim)

    def unpack(self, vec):
        n, d = self.n_users, self.dim
        return vec[:n * d].reshape(n, d), vec[n * d:]

    def initial_state(self, w):
        est = np.tile(self.prior, (self.n_users, 1))
        return EntityState(np.concatenate([est.ravel(), -np.ones(self.n_users)]))

    def estimates(self, state) -> np.ndarray:
        return self.unpack(state.vec)[0]

    def last_content(self, last_item: int) -> np.ndarray:
        return self.catalog[last_item]

    def update(self, est, last, u):
        est = est.copy()
        for i in range(self.n_users):
            if last[i] < 0:
                continue
            fb = self.feedback(u, i)
            if self.feedback_mode == "choice":
                item = int(round(fb[0]))
                if not 0 <= item < self.n_items:
                    raise ConfigurationError(f"choice feedback {fb[0]!r} is not a catalogue index", path="u")
                target = self.catalog[item]
            else:
                target = float(np.sum(fb)) * self.last_content(int(last[i]))
            est[i] = (1 - self.rho) * est[i] + self.rho * target
        return est


class GreedyDot(_CataloguePolicy):
    """Recommend the catalogue item with the largest inner product with the estimate.

    ``output``: ``content`` (item vector), ``slate`` (top ``slate_size``
    indices), ``scored`` (``[score, item vector]``) or ``index``.
    """

    def __init__(self, catalog, rho=0.5, output="content", slate_size=1, feedback="scalar", prior=None,
                 n_users=1, feedback_dims=None):
        super().__init__(catalog, rho, feedback, prior, n_users, feedback_dims)
        self.output = v.choice("output", output, OUTPUT_MODES)
        self.slate_size = v.integer("slate_size", slate_size, 1, self.n_items)
        width = {"content": self.dim, "slate": self.slate_size, "scored": 1 + self.dim, "index": 1}[self.output]
        self.block = width
        self.output_dim = width * self.n_users

    def ranking(self, estimate) -> np.ndarray:
        scores = self.catalog @ estimate
        return np.argsort(-scores, kind="stable")

    def step(self, x, u, w):
        est, last = self.unpack(x.vec)
        est = self.update(est, last, u)
        blocks, chosen = [], []
        for i in range(self.n_users):
            order = self.ranking(est[i])
            top = int(order[0])
            chosen.append(top)
            if self.output == "content":
                blocks.append(self.catalog[top])
            elif self.output == "slate":
                blocks.append(order[: self.slate_size].astype(float))
            elif self.output == "scored":
                blocks.append(np.concatenate([[float(self.catalog[top] @ est[i])], self.catalog[top]]))
            else:
                blocks.append([float(top)])
        vec = np.concatenate([est.ravel(), np.array(chosen, dtype=float)])
        return np.concatenate(blocks), x.evolve(vec=vec)


class SoftmaxPolicy(_CataloguePolicy):
    """Emit the full distribution ``softmax(<u_hat, c> / temperature)`` over the catalogue.

    Under scalar feedback the credited content is the distribution's mean item.
    The ``last`` slot records the modal item.
    """

    def __init__(self, catalog, temperature=1.0, rho=0.5, feedback="scalar", prior=None, n_users=1, feedback_dims=None):
        super().__init__(catalog, rho, feedback, prior, n_users, feedback_dims)
        self.temperature = v.number("temperature", temperature, lo=0, lo_open=True)
        self.output_dim = self.n_items * self.n_users

    def distribution(self, estimate) -> np.ndarray:
        logits = (self.catalog @ estimate) / self.temperature
        z = np.exp(logits - logits.max())
        return z / z.sum()

    def step(self, x, u, w):
        est, last = self.unpack(x.vec)
        est = self.update(est, last, u) if self.feedback_mode == "choice" else self._scalar_update(est, last, u)
        dists = [self.distribution(est[i]) for i in range(self.n_users)]
        modal = [float(np.argmax(d)) for d in dists]
        vec = np.concatenate([est.ravel(), np.array(modal)])
        return np.concatenate(dists), x.evolve(vec=vec)

    def _scalar_update(self, est, last, u):
        est = est.copy()
        for i in range(self.n_users):
            if last[i] < 0:
                continue
            # credit the mean content of the distribution shown last tick
            shown = self.distribution(est[i]) @ self.catalog
            est[i] = (1 - self.rho) * est[i] + self.rho * float(np.sum(self.feedback(u, i))) * shown
        return est


POLICIES = {
    "fixed": FixedPolicy,
    "greedy_dot": GreedyDot,
    "softmax": SoftmaxPolicy,
    "epsilon_greedy": EpsilonGreedy,
    "ucb1": UCB1,
    "sliding_ucb": SlidingUCB,
}
