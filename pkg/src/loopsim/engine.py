"""Coupled discrete-time dynamical systems: one recommender, many users.

Every entity is an :class:`InteractionModel` whose ``step`` fuses the state
update and the measurement equation so both see the same disturbance draw.
One tick of the coupled system runs in a fixed order::

    u^a_t = concat(y^i_{t-1})                 # initial outputs at t = 0
    y^a_t, x^a_{t+1} = recommender.step(x^a_t, u^a_t, w^a_t)
    u^i_t = y^a_t[routing[i]]
    y^i_t, x^i_{t+1} = user_i.step(x^i_t, u^i_t, w^i_t)

Randomness is counter based: the disturbance of entity ``e`` at tick ``t`` is a
Philox stream keyed by ``(seed, e)`` with ``t`` in the counter, so a run does
not depend on the order in which entities are constructed or stepped.
"""

from __future__ import annotations

import abc
import functools
import json
import types
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError

KINDS = ("recommender", "viewer", "creator")
_KIND_CODE = {kind: code for code, kind in enumerate(KINDS)}


@functools.total_ordering
@dataclass(frozen=True)
class EntityId:
    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ConfigurationError(f"unknown entity kind {self.kind!r}")
        if int(self.index) < 0 or int(self.index) != self.index:
            raise ConfigurationError(f"entity index must be a nonnegative integer, got {self.index!r}")

    def __str__(self):
        return f"{self.kind}:{self.index}"

    def __lt__(self, other):
        if not isinstance(other, EntityId):
            return NotImplemented
        return (_KIND_CODE[self.kind], self.index) < (_KIND_CODE[other.kind], other.index)

    @classmethod
    def parse(cls, text: str) -> "EntityId":
        kind, sep, index = str(text).partition(":")
        if not sep:
            raise ConfigurationError(f"entity id {text!r} is not of the form kind:index")
        try:
            return cls(kind, int(index))
        except ValueError:
            raise ConfigurationError(f"entity id {text!r} has a non-integer index") from None


RECOMMENDER = EntityId("recommender", 0)


def _frozen_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EntityState:
    """Numeric state of one entity.

    ``vec`` is the dense state, ``tags`` holds integer labels whose key set is
    fixed at construction, and ``history`` is a FIFO of ``(tick, summary)``
    pairs capped at ``history_cap`` entries.
    """

    vec: np.ndarray
    tags: Mapping[str, int] = field(default_factory=dict)
    history: tuple = ()
    history_cap: int = 0

    def __post_init__(self):
        vec = _frozen_vector(self.vec)
        if not np.isfinite(vec).all():
            raise NumericError(f"non-finite state vector {vec.tolist()}")
        object.__setattr__(self, "vec", vec)
        object.__setattr__(self, "tags", types.MappingProxyType({k: int(v) for k, v in dict(self.tags).items()}))
        history = tuple(self.history)
        if len(history) > self.history_cap:
            raise ConfigurationError(f"history length {len(history)} exceeds cap {self.history_cap}")
        object.__setattr__(self, "history", history)

    def evolve(self, vec=None, tags=None, record=None) -> "EntityState":
        """Return a successor state; ``record`` is appended to the history FIFO."""
        new_tags = self.tags
        if tags is not None:
            merged = dict(self.tags)
            for key, value in tags.items():
                if key not in merged:
                    raise ConfigurationError(f"tag {key!r} was not declared at init")
                merged[key] = value
            new_tags = merged
        history = self.history
        if record is not None and self.history_cap > 0:
            tick, summary = record
            history = history + ((int(tick), tuple(float(s) for s in np.ravel(summary))),)
            if len(history) > self.history_cap:
                history = history[len(history) - self.history_cap:]
        return EntityState(
            self.vec if vec is None else vec,
            new_tags,
            history,
            self.history_cap,
        )

    def __eq__(self, other):
        if not isinstance(other, EntityState):
            return NotImplemented
        return (
            np.array_equal(self.vec, other.vec)
            and dict(self.tags) == dict(other.tags)
            and self.history == other.history
            and self.history_cap == other.history_cap
        )

    __hash__ = None


class Noise:
    """Disturbance for one (entity, tick): the tick plus a lazily created generator."""

    __slots__ = ("entity", "tick", "_key", "_rng")

    def __init__(self, entity: EntityId, tick: int, key: np.ndarray):
        self.entity = entity
        self.tick = tick
        self._key = key
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            # tick -1 is the initialisation stream
            counter = np.array([0, self.tick + 1, 0, 0], dtype=np.uint64)
            self._rng = np.random.Generator(np.random.Philox(key=self._key, counter=counter))
        return self._rng


class RngStream:
    """Deterministic, order-independent disturbances derived from one master seed."""

    def __init__(self, master_seed: int):
        master_seed = int(master_seed)
        if master_seed < 0 or master_seed >= 2**64:
            raise ConfigurationError(f"seed must be a 64-bit nonnegative integer, got {master_seed}")
        self.master_seed = master_seed
        self._keys: dict[EntityId, np.ndarray] = {}

    def _key(self, entity: EntityId) -> np.ndarray:
        key = self._keys.get(entity)
        if key is None:
            seq = np.random.SeedSequence([self.master_seed, _KIND_CODE[entity.kind], entity.index])
            key = seq.generate_state(2, np.uint64)
            self._keys[entity] = key
        return key

    def noise(self, entity: EntityId, tick: int) -> Noise:
        if tick < -1:
            raise ValueError(f"tick must be >= -1, got {tick}")
        return Noise(entity, tick, self._key(entity))

    def draw(self, entity: EntityId, tick: int, k: int) -> float:
        """The k-th uniform draw of ``entity`` at ``tick``."""
        return float(self.noise(entity, tick).rng.random(k + 1)[k])


class InteractionModel(abc.ABC):
    """An entity's behaviour: ``step(x, u, w) -> (y, x')``.

    ``step`` must be deterministic given its arguments and must not mutate
    them. ``input_dim`` of ``None`` accepts any input length.
    """

    input_dim: int | None = None
    output_dim: int = 1
    #: index into ``vec`` of a 0/1 participation flag, if the model has one
    active_slot: int | None = None

    @abc.abstractmethod
    def initial_state(self, w: Noise) -> EntityState:
        ...

    @abc.abstractmethod
    def step(self, x: EntityState, u: np.ndarray, w: Noise) -> tuple[np.ndarray, EntityState]:
        ...


def _as_output(y, model: InteractionModel) -> np.ndarray:
    arr = np.array(y, dtype=float).reshape(-1)
    if arr.shape[0] != model.output_dim:
        raise ConfigurationError(
            f"{type(model).__name__} emitted {arr.shape[0]} values, declared output_dim {model.output_dim}"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scenario:
    """One recommender, its users, how the recommender output is routed, horizon and seed.

    Users are held sorted by id, so construction order never leaks into a run.
    ``routing`` maps each user to a ``(start, stop)`` slice of ``y^a``.
    """

    recommender: InteractionModel
    users: tuple
    routing: Mapping[EntityId, tuple[int, int]]
    horizon: int
    seed: int = 0
    initial_user_outputs: Mapping[EntityId, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        users = tuple(sorted(((EntityId(*uid) if not isinstance(uid, EntityId) else uid), m) for uid, m in self.users))
        ids = [uid for uid, _ in users]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate user entity ids")
        if any(uid.kind == "recommender" for uid in ids):
            raise ConfigurationError("exactly one recommender per scenario; users must be viewers or creators")
        if int(self.horizon) < 0:
            raise ConfigurationError(f"horizon must be >= 0, got {self.horizon}")
        RngStream(self.seed)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "seed", int(self.seed))

        out_dim = self.recommender.output_dim
        routing = {}
        for uid, model in users:
            if uid not in self.routing:
                raise ConfigurationError(f"routing does not cover user {uid}")
            start, stop = (int(v) for v in self.routing[uid])
            if not 0 <= start <= stop <= out_dim:
                raise ConfigurationError(
                    f"routing slice [{start}, {stop}) for {uid} lies outside recommender output of size {out_dim}"
                )
            if model.input_dim is not None and stop - start != model.input_dim:
                raise ConfigurationError(
                    f"routing slice for {uid} has length {stop - start}, model expects input_dim {model.input_dim}"
                )
            routing[uid] = (start, stop)
        object.__setattr__(self, "routing", types.MappingProxyType(routing))
        object.__setattr__(self, "_models", dict(users))

        total = sum(m.output_dim for _, m in users)
        if self.recommender.input_dim is not None and self.recommender.input_dim != total:
            raise ConfigurationError(
                f"recommender expects input_dim {self.recommender.input_dim}, users emit {total} values"
            )
        init = {}
        for uid, model in users:
            given = self.initial_user_outputs.get(uid)
            vec = np.zeros(model.output_dim) if given is None else np.array(given, dtype=float).reshape(-1)
            if vec.shape[0] != model.output_dim:
                raise ConfigurationError(
                    f"initial output for {uid} has length {vec.shape[0]}, model output_dim is {model.output_dim}"
                )
            vec.setflags(write=False)
            init[uid] = vec
        object.__setattr__(self, "initial_user_outputs", types.MappingProxyType(init))

    @classmethod
    def build(
        cls,
        recommender: InteractionModel,
        users: Sequence,
        routing="split",
        horizon: int = 0,
        seed: int = 0,
        initial_user_outputs=None,
    ) -> "Scenario":
        """Convenience constructor.

        ``users`` may be bare models (numbered as viewers in order) or
        ``(EntityId, model)`` pairs. ``routing`` is ``"split"`` (consecutive
        chunks of ``y^a`` sized by each user's input_dim, in id order),
        ``"broadcast"`` (every user sees all of ``y^a``), a mapping from id to
        slice, or a list of slices aligned with ``users``.
        """
        pairs = []
        for n, item in enumerate(users):
            if isinstance(item, InteractionModel):
                pairs.append((EntityId("viewer", n), item))
            else:
                uid, model = item
                pairs.append((uid if isinstance(uid, EntityId) else EntityId.parse(uid), model))
        out_dim = recommender.output_dim
        if isinstance(routing, str):
            if routing == "broadcast":
                route = {uid: (0, out_dim) for uid, _ in pairs}
            elif routing == "split":
                route, offset = {}, 0
                for uid, model in sorted(pairs):
                    width = model.input_dim if model.input_dim is not None else out_dim - offset
                    route[uid] = (offset, offset + width)
                    offset += width
            else:
                raise ConfigurationError(f"unknown routing mode {routing!r}")
        elif isinstance(routing, Mapping):
            route = {(k if isinstance(k, EntityId) else EntityId.parse(k)): tuple(v) for k, v in routing.items()}
        else:
            routing = list(routing)
            if len(routing) != len(pairs):
                raise ConfigurationError("routing list must have one slice per user")
            route = {uid: tuple(sl) for (uid, _), sl in zip(pairs, routing)}
        init = {}
        if initial_user_outputs is not None:
            if isinstance(initial_user_outputs, Mapping):
                init = {(k if isinstance(k, EntityId) else EntityId.parse(k)): v for k, v in initial_user_outputs.items()}
            else:
                init = {uid: v for (uid, _), v in zip(pairs, initial_user_outputs)}
        return cls(recommender, tuple(pairs), route, horizon, seed, init)

    @property
    def entities(self) -> list[EntityId]:
        return [RECOMMENDER] + [uid for uid, _ in self.users]

    def model(self, entity: EntityId) -> InteractionModel:
        if entity == RECOMMENDER:
            return self.recommender
        try:
            return self._models[entity]
        except KeyError:
            raise KeyError(f"unknown entity {entity}") from None

    def initial_states(self, rng: RngStream | None = None) -> dict[EntityId, EntityState]:
        rng = rng or RngStream(self.seed)
        return {eid: self.model(eid).initial_state(rng.noise(eid, -1)) for eid in self.entities}

    def active_slots(self) -> dict[EntityId, int]:
        return {eid: self.model(eid).active_slot for eid in self.entities if self.model(eid).active_slot is not None}


class _Tick(NamedTuple):
    new_states: dict
    rec_output: np.ndarray
    user_outputs: dict
    inputs: dict


def _checked_step(model, eid, x, u, w, t):
    try:
        # non-finite results are reported below as NumericError, not as warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            y, x_next = model.step(x, u, w)
        y = _as_output(y, model)
    except NumericError as exc:
        raise NumericError(str(exc), entity=str(eid), tick=t) from exc
    if not np.isfinite(y).all():
        raise NumericError(f"non-finite output {y.tolist()}", entity=str(eid), tick=t)
    if not isinstance(x_next, EntityState):
        raise ConfigurationError(f"{type(model).__name__}.step must return an EntityState")
    return y, x_next


def _tick(scenario: Scenario, states, prev_user_outputs, t: int, rng: RngStream) -> _Tick:
    parts = [np.asarray(prev_user_outputs[uid], dtype=float).reshape(-1) for uid, _ in scenario.users]
    u_a = np.concatenate(parts) if parts else np.zeros(0)
    u_a.setflags(write=False)
    y_a, x_a = _checked_step(scenario.recommender, RECOMMENDER, states[RECOMMENDER], u_a, rng.noise(RECOMMENDER, t), t)
    new_states = {RECOMMENDER: x_a}
    outputs = {}
    inputs = {RECOMMENDER: u_a}
    for uid, model in scenario.users:
        start, stop = scenario.routing[uid]
        u_i = y_a[start:stop]
        if model.input_dim is not None and u_i.shape[0] != model.input_dim:
            raise ConfigurationError(f"routed input for {uid} has length {u_i.shape[0]}, expected {model.input_dim}")
        y_i, x_i = _checked_step(model, uid, states[uid], u_i, rng.noise(uid, t), t)
        new_states[uid] = x_i
        outputs[uid] = y_i
        inputs[uid] = u_i
    return _Tick(new_states, y_a, outputs, inputs)


def step_coupled(scenario: Scenario, states, prev_user_outputs, t: int, rng: RngStream):
    """Advance the coupled system by one tick.

    Returns ``(new_states, rec_output, user_outputs)``.
    """
    if t < 0:
        raise ValueError(f"tick must be >= 0, got {t}")
    missing = [eid for eid in scenario.entities if eid not in states]
    if missing:
        raise ConfigurationError(f"missing states for {', '.join(map(str, missing))}")
    res = _tick(scenario, states, prev_user_outputs, t, rng)
    return res.new_states, res.rec_output, res.user_outputs


@dataclass(frozen=True)
class Record:
    t: int
    entity: EntityId
    x: EntityState
    u: np.ndarray
    y: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "entity": str(self.entity), "x": self.x.vec.tolist(), "u": self.u.tolist(), "y": self.y.tolist()},
            separators=(",", ":"),
            allow_nan=False,
        )

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (
            self.t == other.t
            and self.entity == other.entity
            and self.x == other.x
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


@dataclass
class Trajectory:
    """Append-only per-tick log of ``(x_t, u_t, y_t)`` for every entity."""

    horizon: int
    initial_states: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    final_states: dict | None = None
    active_slots: dict = field(default_factory=dict)
    _index: tuple = field(default=(-1, {}, {}), init=False, repr=False, compare=False)

    def append(self, record: Record) -> None:
        self.records.append(record)

    def _lookup(self) -> tuple[dict, dict]:
        # rebuilt whenever the record list has grown or been replaced
        if self._index[0] != len(self.records):
            by_entity, by_tick = {}, {}
            for r in self.records:
                by_entity.setdefault(r.entity, []).append(r)
                by_tick.setdefault(r.t, {})[r.entity] = r
            self._index = (len(self.records), by_entity, by_tick)
        return self._index[1], self._index[2]

    @property
    def entities(self) -> list[EntityId]:
        if self.initial_states:
            return sorted(self.initial_states)
        return sorted({r.entity for r in self.records})

    def records_for(self, entity: EntityId) -> list[Record]:
        found = list(self._lookup()[0].get(entity, ()))
        if not found and entity not in self.initial_states:
            raise KeyError(f"unknown entity {entity}")
        return found

    def states(self, entity: EntityId) -> list[np.ndarray]:
        """State vectors x_0 .. x_T (x_T only when the final state is known)."""
        recs = self.records_for(entity)
        if recs:
            series = [r.x.vec for r in recs]
        else:
            series = [self.initial_states[entity].vec]
        if self.final_states is not None and entity in self.final_states and recs:
            series.append(self.final_states[entity].vec)
        return series

    def at(self, t: int) -> dict[EntityId, Record]:
        return dict(self._lookup()[1].get(t, {}))

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str, active_slots=None) -> "Trajectory":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = Record(
                    int(obj["t"]),
                    EntityId.parse(obj["entity"]),
                    EntityState(obj["x"]),
                    _frozen_vector(obj["u"]),
                    _frozen_vector(obj["y"]),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"line {lineno}: malformed trajectory record ({exc})") from None
            records.append(rec)
        horizon = max((r.t for r in records), default=-1) + 1
        return cls(horizon=horizon, records=records, active_slots=dict(active_slots or {}))

    @classmethod
    def read_jsonl(cls, path, active_slots=None) -> "Trajectory":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read(), active_slots)


def simulate(scenario: Scenario) -> Trajectory:
    """Run the scenario for its full horizon and record every (x, u, y)."""
    rng = RngStream(scenario.seed)
    states = scenario.initial_states(rng)
    traj = Trajectory(scenario.horizon, dict(states), active_slots=scenario.active_slots())
    prev = dict(scenario.initial_user_outputs)
    for t in range(scenario.horizon):
        res = _tick(scenario, states, prev, t, rng)
        traj.append(Record(t, RECOMMENDER, states[RECOMMENDER], res.inputs[RECOMMENDER], res.rec_output))
        for uid, _ in scenario.users:
            traj.append(Record(t, uid, states[uid], res.inputs[uid], res.user_outputs[uid]))
        states = res.new_states
        prev = res.user_outputs
    traj.final_states = dict(states)
    return traj


def detect_fixed_point(trajectory: Trajectory, entity: EntityId, tol: float, window: int) -> int | None:
    """Earliest t with max_{s in [t, t+window)} ||x_s - x_t||_inf <= tol, else None."""
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if isinstance(entity, str):
        entity = EntityId.parse(entity)
    series = trajectory.states(entity)
    horizon = max(trajectory.horizon, 1)
    if not 1 <= window <= horizon:
        raise ValueError(f"window must satisfy 1 <= window <= {horizon}, got {window}")
    xs = np.array(series, dtype=float).reshape(len(series), -1)
    for t in range(len(xs) - window + 1):
        block = xs[t:t + window]
        if np.max(np.abs(block - xs[t]), initial=0.0) <= tol:
            return t
    return None
