"""Asset statistics, decision sets, drift profiles and the assumption report."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO, Union

import numpy as np

from .errors import ParseError, ValidationError
from .grid import Grid1D

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AssetStats:
    """Mean returns and covariance of n assets.

    Construct through :func:`make_asset_stats` (or :func:`load_asset_stats`),
    which symmetrizes and validates the covariance.
    """

    names: tuple
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def n(self) -> int:
        return len(self.names)

    def scaled_mu(self, factor: float) -> "AssetStats":
        # bypasses validation: sigma is unchanged and already checked
        return AssetStats(self.names, self.mu * factor, self.sigma)


def symmetrize(sigma: np.ndarray) -> np.ndarray:
    return 0.5 * (sigma + sigma.T)


def make_asset_stats(names, mu, sigma, allow_singular: bool = False) -> AssetStats:
    names = tuple(str(s) for s in names)
    mu = np.array(mu, dtype=float).reshape(-1)
    sigma = np.atleast_2d(np.array(sigma, dtype=float))
    n = len(names)
    if n < 1:
        raise ValidationError("at least one asset is required")
    if len(set(names)) != n:
        raise ValidationError("asset names must be unique")
    if mu.shape != (n,) or sigma.shape != (n, n):
        raise ValidationError(
            f"dimension mismatch: {n} names, mu of shape {mu.shape}, sigma of shape {sigma.shape}"
        )
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise ValidationError("mu and sigma must contain only finite values")
    sigma = symmetrize(sigma)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        if not allow_singular:
            raise ValidationError("covariance matrix is not positive definite") from None
        eig_min = np.linalg.eigvalsh(sigma)[0]
        if eig_min < -1e-12 * max(1.0, abs(np.trace(sigma))):
            raise ValidationError(
                f"covariance matrix is indefinite (smallest eigenvalue {eig_min:.3e})"
            ) from None
        eps = 1e-8 * np.trace(sigma) / n
        log.warning(
            "COVARIANCE IS SINGULAR: adding ridge %.3e * I to make it positive definite", eps
        )
        sigma = sigma + eps * np.eye(n)
        np.linalg.cholesky(sigma)
    mu.setflags(write=False)
    sigma.setflags(write=False)
    return AssetStats(names, mu, sigma)


def load_asset_stats(source: TextIO | str, allow_singular: bool = False) -> AssetStats:
    """Parse the asset CSV layout ``name,mu,sigma_1,...,sigma_n``.

    ``source`` is an open text stream or the CSV text itself.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    rows = [r for r in csv.reader(source)]
    if not rows:
        raise ParseError("line 1: empty asset file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0] != "name" or header[1] != "mu":
        raise ParseError("line 1: header must be 'name,mu,sigma_1,...,sigma_n'")
    n = len(header) - 2
    expected = [f"sigma_{i}" for i in range(1, n + 1)]
    if header[2:] != expected:
        raise ParseError(f"line 1: expected covariance columns {','.join(expected)}")
    names, mu, sigma = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n + 2:
            raise ParseError(f"line {lineno}: expected {n + 2} fields, found {len(row)}")
        try:
            values = [float(c) for c in row[1:]]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value") from None
        names.append(row[0].strip())
        mu.append(values[0])
        sigma.append(values[1:])
    if len(names) != n:
        raise ParseError(f"line {len(rows)}: expected {n} asset rows, found {len(names)}")
    return make_asset_stats(names, mu, sigma, allow_singular=allow_singular)


def read_asset_file(path, allow_singular: bool = False) -> AssetStats:
    with open(path, newline="", encoding="utf-8") as fh:
        return load_asset_stats(fh, allow_singular=allow_singular)


def dump_asset_stats(stats: AssetStats) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["name", "mu"] + [f"sigma_{i}" for i in range(1, stats.n + 1)])
    for i, name in enumerate(stats.names):
        writer.writerow([name, repr(float(stats.mu[i]))] + [repr(float(v)) for v in stats.sigma[i]])
    return out.getvalue()


# -- decision sets -----------------------------------------------------------


def in_simplex(theta, tol: float = SIMPLEX_TOL) -> bool:
    theta = np.asarray(theta, dtype=float)
    return bool(np.all(theta >= -tol) and abs(theta.sum() - 1.0) <= tol)


@dataclass(frozen=True)
class Simplex:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("simplex dimension must be >= 1")

    def contains(self, theta) -> bool:
        return len(theta) == self.n and in_simplex(theta)


@dataclass(frozen=True, eq=False)
class Discrete:
    """Finite subset of the simplex; duplicates are dropped, first occurrence kept."""

    weights: np.ndarray

    def __init__(self, weights: Sequence[Sequence[float]]):
        try:
            w = np.atleast_2d(np.array(weights, dtype=float))
        except ValueError:
            raise ValidationError("discrete weight vectors must all have the same length") from None
        if w.size == 0:
            raise ValidationError("discrete decision set must be non-empty")
        keep = []
        for j, row in enumerate(w):
            if not in_simplex(row):
                raise ValidationError(f"discrete weight vector {j} is not in the simplex")
            if not any(np.array_equal(row, w[k]) for k in keep):
                keep.append(j)
        w = w[keep]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[1]

    def contains(self, theta) -> bool:
        return any(np.allclose(theta, w, rtol=0, atol=SIMPLEX_TOL) for w in self.weights)


DecisionSet = Union[Simplex, Discrete]


# -- x-dependent drift -------------------------------------------------------


@dataclass(frozen=True)
class DriftProfile:
    """Multiplicative drift profile: mu(x, theta) = g(x) * mu^T theta.

    ``constant``: g(x) = level.
    ``tanh``: g(x) = level + amplitude * tanh((x - center) / width).
    """

    kind: str = "constant"
    level: float = 1.0
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "tanh"):
            raise ValidationError(f"unknown drift profile {self.kind!r}")
        if self.kind == "tanh" and not self.width > 0:
            raise ValidationError("tanh drift profile requires width > 0")

    @property
    def x_dependent(self) -> bool:
        return self.kind != "constant"

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.level)
        return self.level + self.amplitude * np.tanh((x - self.center) / self.width)

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        return self.amplitude / self.width / np.cosh((x - self.center) / self.width) ** 2


# -- assumption report --------------------------------------------------------


@dataclass
class AssumptionReport:
    x: np.ndarray
    p: np.ndarray
    h: np.ndarray
    p_l2: float
    p_linf: float
    h_linf: float
    h_xx_l2: float
    passed: bool
    reasons: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "p_l2": self.p_l2,
            "p_linf": self.p_linf,
            "h_linf": self.h_linf,
            "h_xx_l2": self.h_xx_l2,
            "passed": self.passed,
            "reasons": list(self.reasons),
        }


def check_assumptions(
    stats: AssetStats,
    drift: DriftProfile | None,
    grid: Grid1D,
    tail_tol: float = 1e-3,
) -> AssumptionReport:
    """Evaluate p(x) = max|d_x mu(x, .)| and h(x) = -max mu(x, .) over the simplex.

    Both maxima are attained at vertices because mu(x, theta) is linear in theta.
    p must decay towards the truncation boundary for the L2 requirement to be
    plausible on the whole line.
    """
    drift = drift or DriftProfile()
    x = grid.centers
    dx = grid.dx
    g, dg = drift.g(x), drift.dg(x)
    mu_max, mu_min = float(stats.mu.max()), float(stats.mu.min())
    p = np.abs(dg) * float(np.abs(stats.mu).max())
    h = -np.where(g >= 0, g * mu_max, g * mu_min)
    if not drift.x_dependent:
        p = np.zeros_like(x)
    h_xx = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / dx**2
    p_l2 = math.sqrt(float(np.sum(p**2) * dx))
    p_linf = float(np.max(p))
    h_linf = float(np.max(np.abs(h)))
    h_xx_l2 = math.sqrt(float(np.sum(h_xx**2) * dx))

    reasons = []
    for label, value in (("||p||_L2", p_l2), ("||p||_Linf", p_linf),
                         ("||h||_Linf", h_linf), ("||h_xx||_L2", h_xx_l2)):
        if not math.isfinite(value):
            reasons.append(f"{label} is not finite")
    if p_linf > 0 and max(p[0], p[-1]) > tail_tol * p_linf:
        reasons.append(
            f"p does not decay at the domain ends (|p| = {max(p[0], p[-1]):.3e} at the boundary "
            f"vs max {p_linf:.3e}); L2 integrability on the real line is implausible"
        )
    return AssumptionReport(x, p, h, p_l2, p_linf, h_linf, h_xx_l2, not reasons, reasons)
