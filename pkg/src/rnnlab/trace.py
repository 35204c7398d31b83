"""Per-timestep hidden/cell state trajectories for qualitative analysis
of counting dynamics, with CSV export."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import RnnLabError
from .nn_core import ClassifierParams, forward_sequence


@dataclass(frozen=True)
class TrajectoryTrace:
    string: tuple
    steps: tuple  # (t, symbol, h array, c array or None)
    probability: float


def record_trace(cell: str, params, clf: ClassifierParams,
                 seq) -> TrajectoryTrace:
    prob, states = forward_sequence(cell, params, clf, seq,
                                    record_trace=True)
    steps = tuple((t, sym, st.h, st.c)
                  for t, (sym, st) in enumerate(zip(seq, states)))
    return TrajectoryTrace(tuple(seq), steps, prob)


def export_trace_csv(tr: TrajectoryTrace, path):
    """Columns t,symbol,h_0..h_{d-1}[,c_0..c_{d-1}]; 17 significant digits."""
    d = len(tr.steps[0][2]) if tr.steps else 0
    has_c = bool(tr.steps) and tr.steps[0][3] is not None
    header = ["t", "symbol"] + [f"h_{i}" for i in range(d)]
    if has_c:
        header += [f"c_{i}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, sym, h, c in tr.steps:
            row = [t, sym] + [f"{v:.17g}" for v in h]
            if has_c:
                row += [f"{v:.17g}" for v in c]
            w.writerow(row)


def read_trace_csv(path):
    """Parse an exported trace back into (t, symbol, h, c) tuples."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = sum(1 for name in header if name.startswith("h_"))
        has_c = any(name.startswith("c_") for name in header)
        steps = []
        for row in r:
            t, sym = int(row[0]), int(row[1])
            h = np.array([float(v) for v in row[2:2 + d]])
            c = np.array([float(v) for v in row[2 + d:2 + 2 * d]]) \
                if has_c else None
            steps.append((t, sym, h, c))
    return steps


def trace_filename(grammar_name: str, cell: str, seed: int, seq) -> str:
    digest = hashlib.sha256(bytes(seq)).hexdigest()[:10]
    return f"{grammar_name}_{cell}_{seed}_{digest}.csv"


def counting_statistic(tr: TrajectoryTrace, unit: int,
                       use_cell_state: bool = True):
    """(monotone_run_lengths, saturation_flag) for one hidden unit.

    Run lengths are the longest strictly monotone run of the unit's value
    within each maximal same-symbol block; saturation_flag is set when
    |h| exceeds 1 - 10*eps for >= 3 consecutive steps."""
    d = hidden_size_of(tr)
    if not 0 <= unit < d:
        raise RnnLabError(f"unit {unit} out of range for size {d}")
    series = []
    for t, sym, h, c in tr.steps:
        v = c[unit] if (use_cell_state and c is not None) else h[unit]
        series.append((sym, float(v)))
    runs = []
    i = 0
    while i < len(series):
        j = i
        while j < len(series) and series[j][0] == series[i][0]:
            j += 1
        block = [v for _, v in series[i:j]]
        runs.append(_longest_monotone_run(block))
        i = j
    eps = float(np.finfo(np.float64).eps)
    thresh = 1.0 - 10 * eps
    sat = 0
    flag = False
    for t, sym, h, c in tr.steps:
        if abs(h[unit]) > thresh:
            sat += 1
            if sat >= 3:
                flag = True
        else:
            sat = 0
    return runs, flag


def hidden_size_of(tr: TrajectoryTrace) -> int:
    if not tr.steps:
        return 0
    return len(tr.steps[0][2])


def _longest_monotone_run(values) -> int:
    if not values:
        return 0
    best = cur = 1
    direction = 0
    for a, b in zip(values, values[1:]):
        step = 1 if b > a else (-1 if b < a else 0)
        if step != 0 and (direction == 0 or step == direction):
            cur += 1
            direction = step
        elif step == 0:
            cur, direction = 1, 0
        else:
            cur, direction = 2, step
        best = max(best, cur)
    return best
