"""Societal-impact measurements over trajectories and creator profiles.

Every function is a pure function of its inputs. The definitions are simple
defaults (drift from the start, mean pairwise cosine, summed outputs, ...);
each is a few lines, so swapping in another definition means writing another
function with the same signature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .creator_games import equilibrium_dispersion
from .engine import EntityId, Trajectory

__all__ = [
    "MetricReport",
    "cumulative_engagement",
    "departure_rate",
    "equilibrium_dispersion",
    "homogenization",
    "preference_drift",
    "standard_metrics",
    "welfare",
]

NORM_TOL = 1e-9


@dataclass(frozen=True)
class MetricReport:
    """One named measurement: a scalar plus an optional per-tick series."""

    name: str
    value: float
    series: tuple = ()
    entity: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"metric {self.name} is not finite: {self.value}")
        object.__setattr__(self, "series", tuple(float(s) for s in self.series))


def _entity(entity) -> EntityId:
    return EntityId.parse(entity) if isinstance(entity, str) else entity


def _viewers(traj: Trajectory) -> list[EntityId]:
    return [e for e in traj.entities if e.kind == "viewer"]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def preference_drift(traj: Trajectory, viewer) -> np.ndarray:
    """``1 - <x_0, x_t>`` when every state is a unit vector, else ``||x_t - x_0||_2``."""
    xs = np.array(traj.states(_entity(viewer)), dtype=float)
    xs = xs.reshape(len(xs), -1)
    x0 = xs[0]
    if np.all(np.abs(np.linalg.norm(xs, axis=1) - 1.0) <= NORM_TOL):
        return 1.0 - xs @ x0
    return np.linalg.norm(xs - x0, axis=1)


def homogenization(traj: Trajectory, t: int) -> float:
    """Mean pairwise cosine similarity of viewer states at tick ``t``."""
    viewers = _viewers(traj)
    if len(viewers) < 2:
        raise ValueError(f"homogenization needs at least 2 viewers, trajectory has {len(viewers)}")
    states = [np.ravel(traj.states(v)[t]) for v in viewers]
    sims = [_cosine(a, b) for a, b in itertools.combinations(states, 2)]
    return float(np.mean(sims))


def cumulative_engagement(traj: Trajectory, entity) -> float:
    """Sum of scalar outputs, or of ``||y_t||_1`` for vector outputs."""
    recs = traj.records_for(_entity(entity))
    total = 0.0
    for r in recs:
        total += float(r.y[0]) if r.y.size == 1 else float(np.abs(r.y).sum())
    return total


def welfare(traj: Trajectory, viewer) -> float:
    """Realised alignment ``sum_t <x_t, u_t>`` between state and received recommendation."""
    eid = _entity(viewer)
    total = 0.0
    for r in traj.records_for(eid):
        x, u = r.x.vec, r.u
        if x.shape != u.shape:
            raise ValueError(f"welfare needs matching state and input sizes for {eid}: {x.shape} vs {u.shape}")
        total += float(np.dot(x, u))
    return total


def departure_rate(traj: Trajectory, active_slots=None) -> float:
    """Fraction of viewers whose active flag is 0 at the final tick (0 without a departure model)."""
    slots = dict(traj.active_slots if active_slots is None else active_slots)
    viewers = _viewers(traj)
    if not viewers:
        return 0.0
    departed = 0
    for v in viewers:
        slot = slots.get(v)
        if slot is not None and np.ravel(traj.states(v)[-1])[slot] == 0:
            departed += 1
    return departed / len(viewers)


def standard_metrics(traj: Trajectory) -> list[MetricReport]:
    """The default metric set exported by the CLI."""
    reports = []
    for e in traj.entities:
        if e.kind == "recommender":
            continue
        name = str(e)
        reports.append(MetricReport("cumulative_engagement", cumulative_engagement(traj, e), entity=name))
        drift = preference_drift(traj, e)
        if drift.size:
            reports.append(MetricReport("preference_drift", float(drift[-1]), tuple(drift), entity=name))
        try:
            reports.append(MetricReport("welfare", welfare(traj, e), entity=name))
        except ValueError:
            pass
    viewers = _viewers(traj)
    if len(viewers) >= 2 and len({len(traj.states(v)[-1]) for v in viewers}) == 1:
        series = [homogenization(traj, t) for t in range(len(traj.states(viewers[0])))]
        reports.append(MetricReport("homogenization", series[-1], tuple(series)))
    if traj.active_slots:
        reports.append(MetricReport("departure_rate", departure_rate(traj)))
    return reports
