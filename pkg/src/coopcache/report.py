"""Versioned CSV writers with a fixed column order and 12 significant digits."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "SWEEP_COLUMNS",
    "fmt",
    "write_csv",
    "sweep_rows",
    "episode_rows",
    "trace_columns",
    "trace_rows",
    "cache_opt_columns",
    "cache_opt_rows",
    "read_csv",
]

SCHEMA_VERSION = 1
SWEEP_COLUMNS = (
    "policy", "beta", "gamma", "eta_or_kappa", "avg_power_per_user", "interruption_prob",
    "overflow_prob", "combined_cost", "pr_comp", "occupancy_bits", "seed", "n_slots",
)
EPISODE_COLUMNS = (
    "user", "interruption_prob", "overflow_prob", "smooth_interruption", "smooth_overflow",
    "avg_power", "rate_bits_comp", "rate_bits_selected", "underflow_events", "median_queue",
)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def write_csv(path: str | Path, kind: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write ``# coopcache <kind> v<N>`` then the header and formatted rows."""
    buf = io.StringIO()
    buf.write(f"# coopcache {kind} v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        writer.writerow([fmt(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path: str | Path) -> tuple[str, list[dict]]:
    """Return the schema comment and the rows as dicts of strings."""
    lines = Path(path).read_text().splitlines()
    header = lines[0]
    reader = csv.DictReader(lines[1:])
    return header, list(reader)


def sweep_rows(result) -> list[list]:
    out = []
    for row in list(result.rows) + list(result.aggregates):
        v = row.values
        out.append([
            row.policy, row.beta, row.gamma, row.eta_or_kappa,
            v.get("avg_power_per_user", math.nan), v.get("interruption_prob", math.nan),
            v.get("overflow_prob", math.nan), v.get("combined_cost", math.nan),
            v.get("pr_comp", math.nan), row.occupancy_bits, row.seed, row.n_slots,
        ])
    return out


def episode_rows(rec) -> list[list]:
    out = []
    for k in range(rec.interruption.size):
        out.append([
            k + 1, rec.interruption[k], rec.overflow[k], rec.smooth_interruption[k], rec.smooth_overflow[k],
            rec.avg_power[k], rec.rate_bits_comp[k], rec.rate_bits_selected[k], rec.underflow_events[k],
            rec.median_queue[k],
        ])
    return out


def trace_columns(n_users: int) -> list[str]:
    cols = ["slot", "s", "q_min"]
    for name in ("queue", "gain", "power", "rate"):
        cols += [f"{name}_{k + 1}" for k in range(n_users)]
    return cols


def trace_rows(trace) -> list[list]:
    out = []
    for i in range(trace.slot.size):
        row = [int(trace.slot[i]), int(trace.s[i]), trace.q_min[i]]
        for arr in (trace.queue, trace.gain, trace.power, trace.rate):
            row += list(arr[i])
        out.append(row)
    return out


def cache_opt_columns(n_files: int) -> list[str]:
    return ["iter", "U_window_avg", "occupancy_bits"] + [f"q_{l + 1}" for l in range(n_files)]


def cache_opt_rows(state) -> list[list]:
    return [[r.iteration, r.u_window_avg, r.occupancy_bits, *r.q] for r in state.trace]
