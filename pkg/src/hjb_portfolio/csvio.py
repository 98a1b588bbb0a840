"""CSV writers and readers for every file the pipeline emits.

Floats are written with ``repr`` so every value reads back bit for bit and
repeated runs produce identical bytes.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import ParseError
from .pde_solver import PdeState


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_rows(path, expected_prefix=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if expected_prefix and header[: len(expected_prefix)] != list(expected_prefix):
        raise ParseError(f"{path}: line 1: expected header starting with {','.join(expected_prefix)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
    return header, np.array(data, dtype=float).reshape(-1, len(header))


# -- alpha table --------------------------------------------------------------

def alpha_header(n):
    return ["phi", "alpha", "alpha_prime"] + [f"theta_{i}" for i in range(1, n + 1)] + ["support_size"]


def write_alpha_csv(path, phis, evals) -> None:
    n = len(evals[0].theta_hat)
    rows = ([p, e.alpha, e.alpha_prime, *e.theta_hat, e.support_size] for p, e in zip(phis, evals))
    write_rows(path, alpha_header(n), rows)


def read_alpha_csv(path):
    header, data = read_rows(path, ["phi", "alpha", "alpha_prime"])
    return header, data


# -- snapshots and diagnostics --------------------------------------------------

SNAPSHOT_HEADER = ["tau", "x", "phi"]
DIAGNOSTICS_HEADER = ["tau", "dt", "mass", "min_phi", "max_phi", "picard_iters"]


def write_snapshots_csv(path, x, snapshots) -> None:
    rows = ((s.tau, xi, v) for s in snapshots for xi, v in zip(x, s.values))
    write_rows(path, SNAPSHOT_HEADER, rows)


def read_snapshots_csv(path):
    """Return (x, [PdeState, ...]) from the long-format snapshot file."""
    _, data = read_rows(path, SNAPSHOT_HEADER)
    groups = defaultdict(list)
    order = []
    for tau, xi, v in data:
        if tau not in groups:
            order.append(tau)
        groups[tau].append((xi, v))
    if not order:
        raise ParseError(f"{path}: no snapshot rows")
    x = np.array([p[0] for p in groups[order[0]]])
    states = []
    for tau in order:
        pts = groups[tau]
        if len(pts) != len(x) or not np.array_equal([p[0] for p in pts], x):
            raise ParseError(f"{path}: snapshot at tau = {tau!r} uses a different x grid")
        states.append(PdeState(tau, np.array([p[1] for p in pts])))
    return x, states


def write_diagnostics_csv(path, diagnostics) -> None:
    rows = ([d[k] for k in DIAGNOSTICS_HEADER] for d in diagnostics)
    write_rows(path, DIAGNOSTICS_HEADER, rows)


def read_diagnostics_csv(path):
    return read_rows(path, DIAGNOSTICS_HEADER)[1]


# -- policy -------------------------------------------------------------------

def policy_header(n):
    return ["tau", "x"] + [f"theta_{i}" for i in range(1, n + 1)] + ["support", "entropy"]


def write_policy_csv(path, field) -> None:
    def rows():
        for k, tau in enumerate(field.taus):
            for i, xi in enumerate(field.x):
                yield [tau, xi, *field.theta[k, i], int(field.support[k, i]), field.entropy[k, i]]
    write_rows(path, policy_header(field.theta.shape[2]), rows())


def read_policy_csv(path):
    return read_rows(path, ["tau", "x"])


DIVERSIFICATION_HEADER = ["tau", "entropy_min", "entropy_mean", "entropy_max",
                          "support_min", "support_mean", "support_max"]


def write_diversification_csv(path, report) -> None:
    write_rows(path, DIVERSIFICATION_HEADER, ([r[k] for k in DIVERSIFICATION_HEADER] for r in report))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
