"""Delimited exports and optional PNG figures.

The CSV writers are the contract: fixed headers, deterministic row order,
shortest round-trip float formatting and LF line endings. Figures are only
produced on request and are drawn with the Agg canvas directly, so no global
matplotlib backend is touched.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .engine import Trajectory, detect_fixed_point

SUMMARY_HEADER = ("run_id", "seed", "horizon", "metric", "entity", "value")
METRICS_HEADER = ("metric", "entity", "t", "value")
EQUILIBRIUM_HEADER = ("creator", "action_index", "action_vec", "utility")

FIXED_POINT_TOL = 1e-6
FIXED_POINT_WINDOW = 5


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def fixed_points(traj: Trajectory, tol=FIXED_POINT_TOL, window=FIXED_POINT_WINDOW) -> dict:
    """First fixed-point tick (or None) of every user entity with a non-empty state."""
    if traj.horizon < 1:
        return {}
    window = min(window, traj.horizon)
    out = {}
    for e in traj.entities:
        if e.kind == "recommender" or not len(traj.states(e)[0]):
            continue
        out[e] = detect_fixed_point(traj, e, tol, window)
    return out


def export_summary(traj: Trajectory, metrics, run_id="", seed="", fixed_point=None) -> str:
    """Summary CSV: one row per scalar metric, sorted by (metric, entity).

    ``fixed_point`` maps entities to their first fixed-point tick; those
    become ``fixed_point_t`` rows (empty value when none was found).
    """
    rows = [(m.name, m.entity, fmt(m.value)) for m in metrics]
    for entity, t in (fixed_point or {}).items():
        rows.append(("fixed_point_t", str(entity), fmt(t)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return to_csv(SUMMARY_HEADER, [(run_id, fmt(seed) if seed != "" else "", fmt(traj.horizon)) + r for r in rows])


def export_metrics(metrics) -> str:
    """Tidy metric CSV: scalar row (empty t) then the per-tick series, if any."""
    rows = []
    for m in sorted(metrics, key=lambda m: (m.name, m.entity)):
        rows.append((m.name, m.entity, "", fmt(m.value)))
        rows.extend((m.name, m.entity, str(t), fmt(val)) for t, val in enumerate(m.series))
    return to_csv(METRICS_HEADER, rows)


def export_equilibrium(profile, game, utilities, nash: bool, rounds: int) -> str:
    rows = []
    points = getattr(getattr(game, "space", None), "points", None)
    for j, a in enumerate(profile):
        vec = points[a] if points is not None else [a]
        rows.append((str(j), str(a), ";".join(fmt(x) for x in vec), fmt(utilities[j])))
    return to_csv(EQUILIBRIUM_HEADER, rows) + f"nash={'true' if nash else 'false'},rounds={rounds}\n"


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- figures --------------------------------------------------------------


def _figure():
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6.4, 4.0), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def plot_states(traj: Trajectory, path, max_coords=4) -> Path:
    """Line plot of the leading state coordinates of every user entity."""
    fig = _figure()
    ax = fig.add_subplot()
    for e in traj.entities:
        if e.kind == "recommender":
            continue
        xs = np.array(traj.states(e), dtype=float)
        if xs.ndim < 2 or xs.shape[1] == 0:
            continue
        for c in range(min(max_coords, xs.shape[1])):
            label = str(e) if xs.shape[1] == 1 else f"{e}[{c}]"
            ax.plot(np.arange(len(xs)), xs[:, c], label=label, linewidth=1)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if ax.lines and len(ax.lines) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)


def plot_metric_series(metrics, path) -> Path | None:
    """Every metric that has a per-tick series, one line each; None when there are none."""
    series = [m for m in metrics if m.series]
    if not series:
        return None
    fig = _figure()
    ax = fig.add_subplot()
    for m in sorted(series, key=lambda m: (m.name, m.entity)):
        ax.plot(np.arange(len(m.series)), m.series, label=f"{m.name} {m.entity}".strip(), linewidth=1)
    ax.set_xlabel("t")
    if len(series) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    return Path(path)

