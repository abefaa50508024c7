"""Myopic content-creator competition.

Creators pick actions from a common enumerable :class:`ActionSpace`. A
:class:`CreatorGame` turns a profile (one action index per creator) into an
allocation of viewers to creators and then into payoffs
``reward - cost``. Best-response dynamics iterate the creators' state update
``a_j <- argmax_a U_j(a; a_-j)``; its fixed points are exactly the pure Nash
equilibria on the grid.

Any object with ``n_players``, ``sizes`` and ``payoffs(profile)`` works as a
game here, e.g. :class:`MatrixGame` for arbitrary normal-form payoffs.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _validate as v
from .engine import EntityState, InteractionModel
from .errors import BudgetExceededError, ConfigurationError

DEFAULT_BUDGET = 10**6
TIE_EPS = 1e-12
NASH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ActionSpace:
    """A finite, canonically ordered set of actions; ``points[i]`` is action i's vector."""

    kind: str
    points: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ConfigurationError("action space must contain at least one action")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        labels = tuple(self.labels) or tuple(_format_vec(p) for p in pts)
        if len(labels) != pts.shape[0]:
            raise ConfigurationError("one label per action required")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(f"unknown action {label!r}") from None

    @classmethod
    def finite(cls, labels, vectors=None):
        labels = [str(x) for x in labels]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("action labels must be distinct", path="labels")
        pts = np.arange(len(labels), dtype=float)[:, None] if vectors is None else np.array(vectors, dtype=float)
        return cls("finite", pts, tuple(labels))

    @classmethod
    def interval(cls, step=0.1, lo=0.0, hi=1.0):
        step = v.number("step", step, lo=0, lo_open=True)
        n = int(round((hi - lo) / step)) + 1
        pts = np.round(lo + step * np.arange(n), 12)
        pts = pts[pts <= hi + 1e-12]
        return cls("interval", pts[:, None])

    @classmethod
    def ray(cls, direction, step=0.1, hi=1.0):
        """Points ``r * direction`` for r on the interval grid; norm-based costs make r the effort level."""
        direction = v.vector("direction", direction)
        radii = cls.interval(step, 0.0, hi).points[:, 0]
        return cls("ray", radii[:, None] * direction[None, :])

    @classmethod
    def box(cls, dim, levels):
        dim = v.integer("dim", dim, lo=1)
        levels = v.vector("levels", levels, lo=0)
        pts = np.array(list(itertools.product(levels, repeat=dim)), dtype=float)
        return cls("box", pts)

    @classmethod
    def sphere(cls, dim, resolution):
        """Unit vectors: ``resolution`` equally spaced angles for dim 2, else
        normalised nonzero points of the lattice ``{-r..r}^dim``."""
        dim = v.integer("dim", dim, lo=1)
        resolution = v.integer("resolution", resolution, lo=1)
        if dim == 1:
            pts = np.array([[1.0], [-1.0]])
        elif dim == 2:
            angles = 2 * np.pi * np.arange(resolution) / resolution
            pts = np.round(np.stack([np.cos(angles), np.sin(angles)], axis=1), 15)
            pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        else:
            seen, rows = set(), []
            for cell in itertools.product(range(-resolution, resolution + 1), repeat=dim):
                if not any(cell):
                    continue
                g = math.gcd(*cell)
                key = tuple(c // g for c in cell)
                if key not in seen:
                    seen.add(key)
                    rows.append(np.array(key, dtype=float) / np.linalg.norm(key))
            pts = np.array(rows)
        return cls("sphere", pts)


def _format_vec(vec) -> str:
    return ";".join(f"{float(x):.12g}" for x in np.ravel(vec))


REC_RULES = ("hardmax", "softmax", "topic", "rank_prize", "engagement", "relevance_softmax")
REWARD_RULES = ("exposure", "weighted_exposure", "prize", "engaged_exposure")
COST_RULES = ("zero", "norm_power", "quadratic_quality")
TIE_RULES = ("split", "lowest")


def _share_winners(scores: np.ndarray, tie_rule: str) -> np.ndarray:
    """Allocation row giving the max-score creators their share; all -inf -> no one."""
    row = np.zeros(scores.shape[0])
    if not np.isfinite(scores).any():
        return row
    best = np.max(scores)
    winners = np.flatnonzero(scores >= best - TIE_EPS * max(1.0, abs(best)))
    if tie_rule == "split":
        row[winners] = 1.0 / winners.size
    else:
        row[winners[0]] = 1.0
    return row


@dataclass(frozen=True, eq=False)
class CreatorGame:
    """Creator competition: action space + recommendation rule + reward rule + cost rule.

    ``viewers`` (rows ``u_i``) feed the embedding rules. ``demand`` weights
    topics (one "viewer group" per finite action) and ``quality[a][j]`` is
    creator j's quality on topic a. ``relevance[a][i]`` feeds
    ``relevance_softmax``; ``null_score`` adds a no-recommendation option to it.
    ``tolerance`` holds the clickbait types ``s_i``; the engagement rule reads
    clickbait ``k = a[clickbait_index]`` and quality ``q = a[quality_index]``.
    """

    n_creators: int
    space: ActionSpace
    rec_rule: str = "hardmax"
    reward_rule: str = "exposure"
    cost_rule: str = "zero"
    tie_rule: str = "split"
    viewers: np.ndarray | None = None
    viewer_weights: np.ndarray | None = None
    eta: float = 1.0
    demand: np.ndarray | None = None
    quality: np.ndarray | None = None
    relevance: np.ndarray | None = None
    null_score: float | None = None
    prizes: np.ndarray | None = None
    tolerance: np.ndarray | None = None
    clickbait_index: int = 0
    quality_index: int = 1
    beta: float = 2.0
    cost_scale: float = 1.0
    cost_index: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        set_ = lambda k, val: object.__setattr__(self, k, val)  # noqa: E731
        set_("n_creators", v.integer("creators", self.n_creators, lo=1))
        v.choice("rec_rule", self.rec_rule, REC_RULES)
        v.choice("reward_rule", self.reward_rule, REWARD_RULES)
        v.choice("cost_rule", self.cost_rule, COST_RULES)
        v.choice("tie_rule", self.tie_rule, TIE_RULES)
        set_("eta", v.number("eta", self.eta, lo=0))
        set_("beta", v.number("beta", self.beta, lo=0, lo_open=True))
        set_("cost_scale", v.number("cost_scale", self.cost_scale, lo=0))
        n_actions, dim = len(self.space), self.space.dim
        p = self.n_creators

        if self.viewers is not None:
            set_("viewers", v.matrix("viewers", self.viewers, (None, dim)))
        if self.rec_rule in ("hardmax", "softmax", "engagement") and self.viewers is None:
            raise ConfigurationError(f"rec_rule {self.rec_rule!r} needs viewers", path="viewers")
        if self.rec_rule == "topic":
            if self.space.kind != "finite":
                raise ConfigurationError("topic rule needs a finite action space", path="action_space")
            demand = np.ones(n_actions) if self.demand is None else v.vector("demand", self.demand, n_actions, lo=0)
            set_("demand", demand)
            quality = np.ones((n_actions, p)) if self.quality is None else v.matrix("quality", self.quality, (n_actions, p))
            set_("quality", quality)
        if self.rec_rule == "relevance_softmax":
            if self.space.kind != "finite" or self.relevance is None:
                raise ConfigurationError("relevance_softmax needs a finite space and a relevance matrix", path="relevance")
            set_("relevance", v.matrix("relevance", self.relevance, (n_actions, None)))
            if self.null_score is not None:
                set_("null_score", v.number("null_score", self.null_score))
        if self.rec_rule == "engagement":
            tol = v.vector("tolerance", self.tolerance, self.viewers.shape[0], lo=0)
            if (tol <= 0).any():
                raise ConfigurationError("clickbait tolerances must be > 0", path="tolerance")
            set_("tolerance", tol)
            for name in ("clickbait_index", "quality_index"):
                set_(name, v.integer(name, getattr(self, name), 0, dim - 1))
        if self.rec_rule == "rank_prize" or self.reward_rule == "prize":
            if self.prizes is None:
                raise ConfigurationError("prize games need a prize vector", path="prizes")
            prizes = v.vector("prizes", self.prizes)
            if (np.diff(prizes) > 0).any():
                raise ConfigurationError("prize vector must be nonincreasing", path="prizes")
            padded = np.zeros(p)
            padded[: min(p, prizes.size)] = prizes[:p]
            set_("prizes", padded)
        if self.viewer_weights is not None:
            set_("viewer_weights", v.vector("viewer_weights", self.viewer_weights, self.n_groups, lo=0))
        set_("cost_index", v.integer("cost_index", self.cost_index, 0, dim - 1))

    # ------------------------------------------------------------------
    @property
    def n_players(self) -> int:
        return self.n_creators

    @property
    def sizes(self) -> tuple:
        return (len(self.space),) * self.n_creators

    @property
    def n_groups(self) -> int:
        """Number of allocation rows (viewers, topics or prize ranks)."""
        if self.rec_rule == "topic":
            return len(self.space)
        if self.rec_rule == "rank_prize":
            return self.n_creators
        if self.rec_rule == "relevance_softmax":
            return self.relevance.shape[1]
        return self.viewers.shape[0]

    def vectors(self, profile) -> np.ndarray:
        return self.space.points[list(profile)]

    def allocation(self, profile) -> np.ndarray:
        """Matrix (groups x creators) of exposure shares / probabilities."""
        profile = tuple(int(a) for a in profile)
        if len(profile) != self.n_creators or not all(0 <= a < len(self.space) for a in profile):
            raise ConfigurationError(f"invalid profile {profile}")
        acts = self.vectors(profile)
        p = self.n_creators
        rule = self.rec_rule
        if rule == "hardmax":
            scores = self.viewers @ acts.T
            return np.array([_share_winners(row, self.tie_rule) for row in scores])
        if rule == "softmax":
            logits = self.eta * (self.viewers @ acts.T)
            z = np.exp(logits - logits.max(axis=1, keepdims=True))
            return z / z.sum(axis=1, keepdims=True)
        if rule == "relevance_softmax":
            logits = self.eta * self.relevance[list(profile)].T
            if self.null_score is not None:
                logits = np.hstack([logits, np.full((logits.shape[0], 1), self.eta * self.null_score)])
            z = np.exp(logits - logits.max(axis=1, keepdims=True))
            probs = z / z.sum(axis=1, keepdims=True)
            return probs[:, :p]
        if rule == "topic":
            out = np.zeros((len(self.space), p))
            for topic in range(len(self.space)):
                scores = np.array([self.quality[topic, j] if profile[j] == topic else -np.inf for j in range(p)])
                out[topic] = _share_winners(scores, self.tie_rule)
            return out
        if rule == "rank_prize":
            return self._rank_allocation(acts[:, self.cost_index])
        # engagement
        k = acts[:, self.clickbait_index]
        q = acts[:, self.quality_index]
        out = np.zeros((self.viewers.shape[0], p))
        for i, s in enumerate(self.tolerance):
            engages = q - k / s >= -TIE_EPS
            scores = np.where(engages, q + k, -np.inf)
            out[i] = _share_winners(scores, self.tie_rule)
        return out

    def _rank_allocation(self, quality: np.ndarray) -> np.ndarray:
        """Row r = how prize r is shared; tied creators pool the prizes of the ranks they occupy."""
        p = self.n_creators
        out = np.zeros((p, p))
        order = sorted(range(p), key=lambda j: (-quality[j], j))
        rank = 0
        while rank < p:
            group = [order[rank]]
            while rank + len(group) < p and abs(quality[order[rank + len(group)]] - quality[group[0]]) <= TIE_EPS:
                group.append(order[rank + len(group)])
            ranks = range(rank, rank + len(group))
            if self.tie_rule == "split":
                for r in ranks:
                    out[r, group] = 1.0 / len(group)
            else:
                for r, j in zip(ranks, sorted(group)):
                    out[r, j] = 1.0
            rank += len(group)
        return out

    def group_weights(self) -> np.ndarray:
        if self.reward_rule == "prize":
            return self.prizes
        if self.reward_rule == "weighted_exposure":
            if self.viewer_weights is not None:
                return self.viewer_weights
            if self.rec_rule == "topic":
                return self.demand
        return np.ones(self.n_groups)

    def rewards(self, profile) -> np.ndarray:
        return self.group_weights() @ self.allocation(profile)

    def cost(self, action: int) -> float:
        a = self.space.points[action]
        if self.cost_rule == "zero":
            return 0.0
        if self.cost_rule == "norm_power":
            return float(self.cost_scale * np.linalg.norm(a) ** self.beta)
        return float(self.cost_scale * a[self.cost_index] ** 2)

    def payoffs(self, profile) -> np.ndarray:
        profile = tuple(int(a) for a in profile)
        hit = self._cache.get(profile)
        if hit is None:
            hit = self.rewards(profile) - np.array([self.cost(a) for a in profile])
            hit.setflags(write=False)
            if len(self._cache) < 200_000:
                self._cache[profile] = hit
        return hit


def clickbait_outcomes(profile, game: CreatorGame) -> tuple[float, float]:
    """Platform engagement and total viewer utility ``q - k / s_i`` for an engagement game."""
    alloc = game.allocation(profile)
    acts = game.vectors(profile)
    k = acts[:, game.clickbait_index]
    q = acts[:, game.quality_index]
    engagement = float(np.sum(alloc * (q + k)[None, :]))
    utility = float(np.sum(alloc * (q[None, :] - k[None, :] / game.tolerance[:, None])))
    return engagement, utility


@dataclass(frozen=True, eq=False)
class MatrixGame:
    """Normal-form game: ``table[a_1, ..., a_p]`` is the payoff vector of length p."""

    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.shape[-1] != table.ndim - 1:
            raise ConfigurationError(f"payoff table of shape {table.shape} is not (|A_1|, ..., |A_p|, p)")
        object.__setattr__(self, "table", table)

    @property
    def n_players(self) -> int:
        return self.table.ndim - 1

    @property
    def sizes(self) -> tuple:
        return self.table.shape[:-1]

    def payoffs(self, profile) -> np.ndarray:
        return self.table[tuple(int(a) for a in profile)]


def assign_recommendations(profile, game: CreatorGame) -> np.ndarray:
    """Per-viewer (or per-topic / per-rank) allocation over creators; rows may be all zero (no content)."""
    return game.allocation(profile)


def _replace(profile, j, action):
    out = list(profile)
    out[j] = int(action)
    return tuple(out)


def creator_utility(j: int, action: int, profile, game) -> float:
    """U_j(a; a_-j): payoff to creator j if it switched to ``action`` with the others fixed."""
    if not 0 <= j < game.n_players:
        raise ConfigurationError(f"creator index {j} outside 0..{game.n_players - 1}")
    return float(game.payoffs(_replace(profile, j, action))[j])


def utilities(j: int, profile, game) -> np.ndarray:
    return np.array([creator_utility(j, a, profile, game) for a in range(game.sizes[j])])


def best_response(j: int, profile, game) -> int:
    """Exhaustive argmax over creator j's actions; ties go to the lowest index."""
    utils = utilities(j, profile, game)
    best = utils.max()
    return int(np.flatnonzero(utils >= best - TIE_EPS * max(1.0, abs(best)))[0])


@dataclass
class Dynamics:
    profile: tuple
    converged: bool
    rounds: int
    path: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.profile, self.converged, self.rounds))


def best_response_dynamics(game, init_profile, max_rounds=100, tol=TIE_EPS, mode="sequential") -> Dynamics:
    """Round-robin best responses until a full round changes nothing.

    A creator keeps its current action when it is within ``tol`` of the best
    attainable utility, otherwise it moves to :func:`best_response`.
    ``mode="simultaneous"`` updates everyone against the previous profile.
    Unpacks as ``(profile, converged, rounds)``.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    v.choice("mode", mode, ("sequential", "simultaneous"))
    profile = tuple(int(a) for a in init_profile)
    if len(profile) != game.n_players:
        raise ConfigurationError(f"initial profile needs {game.n_players} actions, got {len(profile)}")
    path = [profile]

    def respond(j, against):
        utils = utilities(j, against, game)
        if utils[against[j]] >= utils.max() - tol:
            return against[j]
        return best_response(j, against, game)

    for rnd in range(1, max_rounds + 1):
        before = profile
        if mode == "sequential":
            for j in range(game.n_players):
                profile = _replace(profile, j, respond(j, profile))
        else:
            profile = tuple(respond(j, before) for j in range(game.n_players))
        path.append(profile)
        if profile == before:
            return Dynamics(profile, True, rnd, path)
    return Dynamics(profile, False, max_rounds, path)


def verify_pure_nash(profile, game, tol=NASH_TOL) -> bool:
    """True iff no creator gains more than ``tol`` by a unilateral deviation."""
    profile = tuple(int(a) for a in profile)
    for j in range(game.n_players):
        current = creator_utility(j, profile[j], profile, game)
        for a in range(game.sizes[j]):
            if creator_utility(j, a, profile, game) > current + tol:
                return False
    return True


def enumeration_budget() -> int:
    raw = os.environ.get("LOOPSIM_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"LOOPSIM_BUDGET must be an integer, got {raw!r}") from None


def enumerate_pure_nash(game, budget=None) -> list[tuple]:
    """Every pure Nash profile, by brute force over all profiles."""
    budget = enumeration_budget() if budget is None else int(budget)
    size = math.prod(game.sizes)
    if size > budget:
        raise BudgetExceededError(size, budget)
    return [prof for prof in itertools.product(*(range(n) for n in game.sizes)) if verify_pure_nash(prof, game)]


def equilibrium_dispersion(profile, game: CreatorGame) -> float:
    """Mean pairwise distance of creator actions, or the action-histogram entropy on finite spaces."""
    profile = list(profile)
    if len(profile) < 2:
        return 0.0
    if game.space.kind == "finite":
        _, counts = np.unique(profile, return_counts=True)
        freq = counts / counts.sum()
        return float(-(freq * np.log(freq)).sum())
    acts = game.vectors(profile)
    dists = [np.linalg.norm(acts[a] - acts[b]) for a, b in itertools.combinations(range(len(profile)), 2)]
    return float(np.mean(dists))


# -- engine coupling ----------------------------------------------------------


class CreatorParticipation(InteractionModel):
    """Creator stays while the exposure summed over the last ``window`` ticks reaches ``threshold``.

    Input: exposure this tick. Output: the active flag after the update.
    State: ``[active, ticks observed, exposure ring buffer (window)]``;
    departure is permanent.
    """

    input_dim = 1
    output_dim = 1
    active_slot = 0

    def __init__(self, window=5, threshold=1.0):
        self.window = v.integer("window", window, lo=1)
        self.threshold = v.number("threshold", threshold, lo=0)

    def initial_state(self, w):
        return EntityState(np.concatenate([[1.0, 0.0], np.zeros(self.window)]))

    def step(self, x, u, w):
        active, seen = x.vec[0], int(x.vec[1])
        if not active:
            return [0.0], x
        ring = x.vec[2:].copy()
        ring[seen % self.window] = float(u[0])
        seen += 1
        if seen >= self.window and ring.sum() < self.threshold:
            active = 0.0
        return [active], x.evolve(vec=np.concatenate([[active, float(seen)], ring]))


class LandscapePolicy(InteractionModel):
    """Recommender that relays the previous content landscape to every creator.

    Input: the creators' action indices; output: the same vector, to be
    broadcast. At t = 0 it relays ``initial_profile``.
    """

    def __init__(self, n_creators, initial_profile=None):
        self.n_creators = v.integer("n_creators", n_creators, lo=1)
        init = [0] * self.n_creators if initial_profile is None else initial_profile
        self.initial_profile = v.vector("initial_profile", init, self.n_creators)
        self.input_dim = self.n_creators
        self.output_dim = self.n_creators

    def initial_state(self, w):
        return EntityState([1.0])

    def step(self, x, u, w):
        landscape = self.initial_profile if x.vec[0] else np.asarray(u, dtype=float)
        return landscape, x.evolve(vec=[0.0])


class BestResponseCreator(InteractionModel):
    """Creator whose state update is its best response to the relayed landscape.

    Output is the current action index ``a_{j,t}``; ``x' = BR_j(landscape)``.
    Coupled with :class:`LandscapePolicy` this runs simultaneous best-response
    dynamics inside the engine, so its fixed points are pure Nash equilibria.
    """

    output_dim = 1

    def __init__(self, game, creator, initial_action=0):
        self.game = game
        self.creator = v.integer("creator", creator, 0, game.n_players - 1)
        self.initial_action = v.integer("initial_action", initial_action, 0, game.sizes[self.creator] - 1)
        self.input_dim = game.n_players

    def initial_state(self, w):
        return EntityState([float(self.initial_action)])

    def step(self, x, u, w):
        landscape = tuple(int(round(a)) for a in u)
        current = int(x.vec[0])
        landscape = _replace(landscape, self.creator, current)
        utils = utilities(self.creator, landscape, self.game)
        nxt = current if utils[current] >= utils.max() - TIE_EPS else best_response(self.creator, landscape, self.game)
        return [float(current)], x.evolve(vec=[float(nxt)])
