"""JSON scenario and sweep files.

A scenario file looks like::

    {
      "recommender": {"model": "fixed", "params": {"value": [1.0]}},
      "users": [{"model": "boredom", "params": {"decay": 0.5}, "count": 1}],
      "horizon": 100,
      "seed": 0
    }

Optional keys: ``routing`` ("split", "broadcast" or one ``[lo, hi]`` slice per
user), ``outputs`` (file names inside the output directory), per-user
``kind``/``initial_output`` and a ``game`` section for the creator games.
Unknown keys anywhere are rejected, and every error names its location, e.g.
``users[0].params.alpha``.
"""

from __future__ import annotations

import copy
import hashlib
import inspect
import itertools
import json
import math
import re
from dataclasses import dataclass, fields

from .bandit_models import BANDIT_MODELS
from .creator_games import (
    ActionSpace,
    BestResponseCreator,
    CreatorGame,
    CreatorParticipation,
    LandscapePolicy,
    MatrixGame,
    enumeration_budget,
)
from .engine import EntityId, Scenario
from .errors import BudgetExceededError, ConfigurationError
from .policies import POLICIES
from .viewer_models import VIEWER_MODELS

CREATOR_MODELS = {
    "creator_participation": CreatorParticipation,
    "best_response_creator": BestResponseCreator,
}
USER_MODELS = {**VIEWER_MODELS, **BANDIT_MODELS, **CREATOR_MODELS}
RECOMMENDERS = {**POLICIES, "landscape": LandscapePolicy}

TOP_KEYS = ("recommender", "users", "game", "horizon", "seed", "routing", "outputs")
REC_KEYS = ("model", "params")
USER_KEYS = ("model", "params", "count", "kind", "initial_output")
OUTPUT_KEYS = ("trajectory", "summary", "metrics", "equilibrium")
DEFAULT_OUTPUTS = {"trajectory": "trajectory.jsonl", "summary": "summary.csv"}

SPACE_BUILDERS = {
    "finite": ActionSpace.finite,
    "interval": ActionSpace.interval,
    "ray": ActionSpace.ray,
    "box": ActionSpace.box,
    "sphere": ActionSpace.sphere,
}
_GAME_FIELDS = tuple(f.name for f in fields(CreatorGame) if f.name not in ("n_creators", "space", "_cache"))
DYNAMICS_KEYS = ("init_profile", "max_rounds", "mode", "tol")
GAME_KEYS = ("creators", "action_space", "payoff_table") + _GAME_FIELDS + DYNAMICS_KEYS


def _reject_unknown(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"expected an object, got {type(obj).__name__}", path=path or None)
    for key in obj:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown key (allowed: {', '.join(allowed)})", path=where)


def _int_field(obj, key, path, lo=0, default=None):
    value = obj.get(key, default)
    if value is None:
        raise ConfigurationError("required", path=path)
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ConfigurationError(f"expected an integer >= {lo}, got {value!r}", path=path)
    return value


def construct(cls, params, path):
    """``cls(**params)`` with every failure reported under ``path``."""
    if not isinstance(params, dict):
        raise ConfigurationError("expected an object of parameters", path=path)
    sig = inspect.signature(cls)
    accepts_any = any(p.kind is inspect.Parameter.VAR_KEYWORD for p in sig.parameters.values())
    if not accepts_any:
        for key in params:
            if key not in sig.parameters:
                raise ConfigurationError(f"unknown parameter for {cls.__name__}", path=f"{path}.{key}")
    try:
        return cls(**params)
    except ConfigurationError as exc:
        raise exc.under(path) from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), path=path) from None


def build_space(spec, path="game.action_space") -> ActionSpace:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError("expected an object with a 'kind'", path=path)
    kind = spec["kind"]
    if kind not in SPACE_BUILDERS:
        raise ConfigurationError(f"unknown action space {kind!r} (known: {', '.join(SPACE_BUILDERS)})", path=f"{path}.kind")
    params = {k: val for k, val in spec.items() if k != "kind"}
    return construct(SPACE_BUILDERS[kind], params, path)


def build_game(spec, path="game"):
    """A :class:`CreatorGame` (or :class:`MatrixGame` when ``payoff_table`` is given)."""
    _reject_unknown(spec, GAME_KEYS, path)
    if "payoff_table" in spec:
        extra = set(spec) - {"payoff_table", *DYNAMICS_KEYS}
        if extra:
            raise ConfigurationError("a payoff_table game takes no other game keys", path=f"{path}.{sorted(extra)[0]}")
        try:
            return MatrixGame(spec["payoff_table"])
        except (ConfigurationError, ValueError) as exc:
            raise ConfigurationError(str(exc), path=f"{path}.payoff_table") from None
    for key in ("creators", "action_space"):
        if key not in spec:
            raise ConfigurationError("required", path=f"{path}.{key}")
    space = build_space(spec["action_space"], f"{path}.action_space")
    kwargs = {k: spec[k] for k in _GAME_FIELDS if k in spec}
    kwargs.update(n_creators=spec["creators"], space=space)
    try:
        return CreatorGame(**kwargs)
    except ConfigurationError as exc:
        if exc.path == "creators":
            raise ConfigurationError(exc.message, f"{path}.creators") from None
        raise exc.under(path) from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), path=path) from None


def _action_index(game, value, path):
    if isinstance(value, str):
        if isinstance(game, CreatorGame):
            try:
                return game.space.index(value)
            except ConfigurationError as exc:
                raise exc.under(path) from None
        raise ConfigurationError("action labels need a finite action space", path=path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"expected an action index or label, got {value!r}", path=path)
    return value


@dataclass(frozen=True)
class Dynamics:
    init_profile: tuple
    max_rounds: int = 100
    mode: str = "sequential"
    tol: float = 1e-12


class ScenarioConfig:
    """A validated scenario document.

    ``data`` is the normalised JSON object (defaults filled in), so
    ``parse_scenario(cfg.to_json())`` reproduces ``cfg`` exactly.
    """

    def __init__(self, data: dict):
        self.data = data
        self.game = build_game(data["game"]) if "game" in data else None
        self.dynamics = self._dynamics() if self.game is not None else None
        self._scenario = self._build_scenario() if "recommender" in data else None

    # -- serialisation ------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2, allow_nan=False) + "\n"

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"), allow_nan=False)

    @property
    def run_id(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:12]

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.canonical() == other.canonical()

    __hash__ = None

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def horizon(self) -> int:
        return self.data["horizon"]

    @property
    def outputs(self) -> dict:
        return {**DEFAULT_OUTPUTS, **self.data["outputs"]}

    # -- construction -------------------------------------------------------
    def scenario(self) -> Scenario:
        if self._scenario is None:
            raise ConfigurationError("this config has no recommender/users section to simulate", path="recommender")
        return self._scenario

    def _dynamics(self) -> Dynamics:
        spec = self.data["game"]
        n = self.game.n_players
        raw = spec.get("init_profile", [0] * n)
        if not isinstance(raw, list) or len(raw) != n:
            raise ConfigurationError(f"expected a list of {n} actions", path="game.init_profile")
        profile = tuple(_action_index(self.game, a, f"game.init_profile[{j}]") for j, a in enumerate(raw))
        for j, a in enumerate(profile):
            if not 0 <= a < self.game.sizes[j]:
                raise ConfigurationError(f"action {a} outside 0..{self.game.sizes[j] - 1}", path=f"game.init_profile[{j}]")
        rounds = _int_field(spec, "max_rounds", "game.max_rounds", lo=1, default=100)
        mode = spec.get("mode", "sequential")
        if mode not in ("sequential", "simultaneous"):
            raise ConfigurationError(f"{mode!r} is not 'sequential' or 'simultaneous'", path="game.mode")
        tol = spec.get("tol", 1e-12)
        if isinstance(tol, bool) or not isinstance(tol, (int, float)) or not 0 <= tol < math.inf:
            raise ConfigurationError(f"expected a number >= 0, got {tol!r}", path="game.tol")
        return Dynamics(profile, rounds, mode, float(tol))

    def _build_scenario(self) -> Scenario:
        data = self.data
        counters = {"viewer": 0, "creator": 0}
        pairs, init_outputs = [], {}
        for i, user in enumerate(data["users"]):
            path = f"users[{i}]"
            cls = USER_MODELS[user["model"]]
            params = dict(user["params"])
            if cls is BestResponseCreator:
                if self.game is None:
                    raise ConfigurationError("best_response_creator needs a game section", path=f"{path}.model")
                params["game"] = self.game
            for _ in range(user["count"]):
                model = construct(cls, params, f"{path}.params")
                eid = EntityId(user["kind"], counters[user["kind"]])
                counters[user["kind"]] += 1
                pairs.append((eid, model))
                if "initial_output" in user:
                    init_outputs[eid] = user["initial_output"]
        rec_spec = data["recommender"]
        cls = RECOMMENDERS[rec_spec["model"]]
        params = dict(rec_spec["params"])
        accepted = inspect.signature(cls).parameters
        if "n_users" in accepted and "n_users" not in params:
            params["n_users"] = len(pairs)
        if "feedback_dims" in accepted and "feedback_dims" not in params:
            params["feedback_dims"] = [m.output_dim for _, m in sorted(pairs, key=lambda p: p[0])]
        if cls is LandscapePolicy and self.game is not None:
            params.setdefault("n_creators", self.game.n_players)
            params.setdefault("initial_profile", list(self.dynamics.init_profile))
        recommender = construct(cls, params, "recommender.params")
        routing = data["routing"]
        if isinstance(routing, list):
            if len(routing) != len(pairs):
                raise ConfigurationError(f"expected {len(pairs)} slices (one per user), got {len(routing)}", path="routing")
            routing = [tuple(sl) for sl in routing]
        try:
            return Scenario.build(recommender, pairs, routing, data["horizon"], data["seed"], init_outputs or None)
        except ConfigurationError as exc:
            raise exc.under("scenario") from None


def _normalise(doc) -> dict:
    _reject_unknown(doc, TOP_KEYS, "")
    out = {}
    if "recommender" in doc or "users" in doc:
        rec = doc.get("recommender")
        if rec is None:
            raise ConfigurationError("required when users are given", path="recommender")
        _reject_unknown(rec, REC_KEYS, "recommender")
        if rec.get("model") not in RECOMMENDERS:
            raise ConfigurationError(
                f"unknown policy {rec.get('model')!r} (known: {', '.join(sorted(RECOMMENDERS))})", path="recommender.model"
            )
        out["recommender"] = {"model": rec["model"], "params": rec.get("params", {})}
        users = doc.get("users")
        if not isinstance(users, list) or not users:
            raise ConfigurationError("expected a non-empty list of users", path="users")
        norm_users = []
        for i, user in enumerate(users):
            path = f"users[{i}]"
            _reject_unknown(user, USER_KEYS, path)
            model = user.get("model")
            if model not in USER_MODELS:
                raise ConfigurationError(f"unknown model {model!r} (known: {', '.join(sorted(USER_MODELS))})", path=f"{path}.model")
            kind = user.get("kind", "creator" if model in CREATOR_MODELS else "viewer")
            if kind not in ("viewer", "creator"):
                raise ConfigurationError(f"{kind!r} is not 'viewer' or 'creator'", path=f"{path}.kind")
            entry = {
                "model": model,
                "params": user.get("params", {}),
                "count": _int_field(user, "count", f"{path}.count", lo=1, default=1),
                "kind": kind,
            }
            if "initial_output" in user:
                entry["initial_output"] = user["initial_output"]
            norm_users.append(entry)
        out["users"] = norm_users
        out["horizon"] = _int_field(doc, "horizon", "horizon")
        routing = doc.get("routing", "split")
        if not (routing in ("split", "broadcast") or isinstance(routing, list)):
            raise ConfigurationError(f"expected 'split', 'broadcast' or a list of slices, got {routing!r}", path="routing")
        out["routing"] = routing
    elif "game" not in doc:
        raise ConfigurationError("a scenario needs recommender + users, or a game section", path="recommender")
    else:
        out["horizon"] = _int_field(doc, "horizon", "horizon", default=0)
        if "routing" in doc:
            raise ConfigurationError("routing needs recommender + users", path="routing")
    if "game" in doc:
        out["game"] = doc["game"]
    seed = _int_field(doc, "seed", "seed", default=0)
    if seed >= 2**64:
        raise ConfigurationError("must be < 2**64", path="seed")
    out["seed"] = seed
    outputs = doc.get("outputs", {})
    _reject_unknown(outputs, OUTPUT_KEYS, "outputs")
    for key, name in outputs.items():
        if not isinstance(name, str) or not name or "/" in name or "\\" in name or name in (".", ".."):
            raise ConfigurationError("expected a plain file name", path=f"outputs.{key}")
    out["outputs"] = outputs
    return out


def _load_json(text, what="scenario"):
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigurationError(f"{what} file is not valid UTF-8 ({exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def config_from_dict(doc) -> ScenarioConfig:
    return ScenarioConfig(_normalise(copy.deepcopy(doc)))


def parse_scenario(text) -> ScenarioConfig:
    """Parse and fully validate a scenario document (str or UTF-8 bytes)."""
    return config_from_dict(_load_json(text))


def load_scenario(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())


# -- sweeps ---------------------------------------------------------------

_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+)\]")


def parse_path(path: str) -> list:
    """``users[0].params.alpha`` -> ``["users", 0, "params", "alpha"]``."""
    tokens, pos = [], 0
    for part in path.split("."):
        if not part:
            raise ConfigurationError(f"malformed parameter path {path!r}")
        pos = 0
        while pos < len(part):
            m = _TOKEN.match(part, pos)
            if m is None or (pos > 0 and m.group(1)):
                raise ConfigurationError(f"malformed parameter path {path!r}")
            tokens.append(m.group(1) if m.group(1) else int(m.group(2)))
            pos = m.end()
    return tokens


def set_path(doc, path: str, value):
    tokens = parse_path(path)
    node = doc
    for tok, nxt in zip(tokens, tokens[1:]):
        try:
            if isinstance(tok, int):
                node = node[tok]
            else:
                if tok not in node:
                    node[tok] = [] if isinstance(nxt, int) else {}
                node = node[tok]
        except (IndexError, KeyError, TypeError):
            raise ConfigurationError(f"path {path!r} does not exist in the base config") from None
    last = tokens[-1]
    try:
        node[last] = value
    except (IndexError, TypeError):
        raise ConfigurationError(f"path {path!r} does not exist in the base config") from None


@dataclass(frozen=True)
class SweepCell:
    index: int
    seed: int
    values: tuple
    config: ScenarioConfig

    @property
    def name(self) -> str:
        return f"cell_{self.index:04d}"


class SweepSpec:
    """Base scenario x Cartesian product of parameter values x seeds."""

    KEYS = ("base", "parameters", "seeds", "budget")

    def __init__(self, doc):
        _reject_unknown(doc, self.KEYS, "")
        if "base" not in doc:
            raise ConfigurationError("required", path="base")
        self.base = config_from_dict(doc["base"]).data
        params = doc.get("parameters", [])
        if not isinstance(params, list):
            raise ConfigurationError("expected a list", path="parameters")
        self.parameters = []
        for i, p in enumerate(params):
            _reject_unknown(p, ("path", "values"), f"parameters[{i}]")
            if not isinstance(p.get("path"), str):
                raise ConfigurationError("expected a string", path=f"parameters[{i}].path")
            parse_path(p["path"])
            values = p.get("values")
            if not isinstance(values, list) or not values:
                raise ConfigurationError("expected a non-empty list", path=f"parameters[{i}].values")
            self.parameters.append((p["path"], values))
        self.seeds = self._seeds(doc.get("seeds", [self.base["seed"]]))
        self.budget = _int_field(doc, "budget", "budget", lo=1, default=enumeration_budget())
        size = math.prod(len(vals) for _, vals in self.parameters) * len(self.seeds)
        if size > self.budget:
            raise BudgetExceededError(size, self.budget)
        self.size = size

    @staticmethod
    def _seeds(raw):
        if isinstance(raw, dict):
            _reject_unknown(raw, ("start", "stop"), "seeds")
            start = _int_field(raw, "start", "seeds.start", default=0)
            stop = _int_field(raw, "stop", "seeds.stop")
            seeds = list(range(start, stop))
        elif isinstance(raw, list):
            seeds = raw
        else:
            raise ConfigurationError("expected a list of seeds or {start, stop}", path="seeds")
        if not seeds:
            raise ConfigurationError("no seeds", path="seeds")
        for i, s in enumerate(seeds):
            if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
                raise ConfigurationError(f"expected an integer in [0, 2**64), got {s!r}", path=f"seeds[{i}]")
        return seeds

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.parameters]

    def cells(self):
        """Cells in a fixed order: parameter values vary slowest, seeds fastest."""
        grids = [vals for _, vals in self.parameters]
        for index, (values, seed) in enumerate(itertools.product(itertools.product(*grids), self.seeds)):
            doc = copy.deepcopy(self.base)
            for path, value in zip(self.paths, values):
                set_path(doc, path, value)
            doc["seed"] = seed
            try:
                cfg = config_from_dict(doc)
            except ConfigurationError as exc:
                raise ConfigurationError(f"sweep cell {index}: {exc}") from None
            yield SweepCell(index, seed, tuple(values), cfg)


def parse_sweep(text) -> SweepSpec:
    return SweepSpec(_load_json(text, "sweep"))


def load_sweep(path) -> SweepSpec:
    with open(path, "rb") as fh:
        return parse_sweep(fh.read())
