"""Riccati transform between the value function V and the risk-aversion field.

phi = -V_xx / V_x. Forward: utility u -> initial condition phi0 = -u''/u'.
Inverse: phi -> V, pinned by V(x_ref) = 0 and V_x(x_ref) = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import SolverError, ValidationError
from .grid import Grid1D
from .pde_solver import PdeState


@dataclass(frozen=True)
class CARA:
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"CARA requires a > 0, got {self.a}")


@dataclass(frozen=True)
class CRRA:
    gamma: float
    x_shift: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"CRRA requires gamma > 0, got {self.gamma}")


@dataclass(frozen=True)
class PiecewiseConstantRiskAversion:
    """phi0 = levels[j] on the j-th interval cut by the increasing breakpoints."""

    breakpoints: tuple
    levels: tuple

    def __init__(self, breakpoints: Sequence[float], levels: Sequence[float]):
        b = tuple(float(v) for v in breakpoints)
        lv = tuple(float(v) for v in levels)
        if len(lv) != len(b) + 1:
            raise ValidationError("piecewise-constant risk aversion needs len(levels) == len(breakpoints) + 1")
        if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise ValidationError("breakpoints must be strictly increasing")
        if not all(np.isfinite(lv)):
            raise ValidationError("risk-aversion levels must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)


@dataclass(frozen=True)
class TabulatedPhi0:
    """phi0 given at points x; linearly interpolated, constant beyond the ends."""

    x: tuple
    values: tuple

    def __init__(self, x: Sequence[float], values: Sequence[float]):
        x = tuple(float(v) for v in x)
        values = tuple(float(v) for v in values)
        if len(x) != len(values) or len(x) < 1:
            raise ValidationError("tabulated phi0 needs matching, non-empty x and values")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValidationError("tabulated phi0 abscissae must be strictly increasing")
        if not all(np.isfinite(values)):
            raise ValidationError("tabulated phi0 must be bounded")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", values)


UtilitySpec = Union[CARA, CRRA, PiecewiseConstantRiskAversion, TabulatedPhi0]


def initial_condition(spec: UtilitySpec, grid: Grid1D) -> PdeState:
    """Cell averages of phi0 = -u''/u' on the grid, at tau = 0."""
    faces = grid.faces
    dx = grid.dx
    if isinstance(spec, CARA):
        values = np.full(grid.n_cells, float(spec.a))
    elif isinstance(spec, CRRA):
        if grid.x_min + spec.x_shift <= 0:
            raise ValidationError(
                f"CRRA domain violation: x + x_shift must be > 0 on the grid, "
                f"but x_min + x_shift = {grid.x_min + spec.x_shift}"
            )
        # exact average of gamma / (x + shift)
        shifted = faces + spec.x_shift
        values = spec.gamma * np.log(shifted[1:] / shifted[:-1]) / dx
    elif isinstance(spec, PiecewiseConstantRiskAversion):
        edges = np.concatenate(([-np.inf], spec.breakpoints, [np.inf]))
        values = np.zeros(grid.n_cells)
        for level, lo, hi in zip(spec.levels, edges[:-1], edges[1:]):
            overlap = np.clip(np.minimum(faces[1:], hi) - np.maximum(faces[:-1], lo), 0.0, None)
            values += level * overlap
        values /= dx
        # cells inside a single interval get the level exactly, without round-off
        piece = np.searchsorted(spec.breakpoints, faces, side="right")
        whole = (piece[:-1] == piece[1:]) | (faces[1:] == np.take(edges, piece[:-1] + 1))
        values[whole] = np.take(spec.levels, piece[:-1][whole])
    elif isinstance(spec, TabulatedPhi0):
        values = np.interp(grid.centers, spec.x, spec.values)
    else:
        raise ValidationError(f"unknown utility specification {spec!r}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("initial condition is not bounded on the grid")
    return PdeState(0.0, values)


@dataclass(frozen=True, eq=False)
class ValueReconstruction:
    x: np.ndarray
    v_x: np.ndarray
    v: np.ndarray
    x_ref: float


def _cumtrapz_from(values: np.ndarray, dx: float, ref_index: int) -> np.ndarray:
    """Trapezoid integral of uniformly spaced values from node ref_index to each node.

    Sums run outward from the reference node so that small increments near it
    are not swamped by large partial sums from the far side.
    """
    seg = 0.5 * (values[1:] + values[:-1]) * dx
    out = np.zeros_like(values)
    out[ref_index + 1:] = np.cumsum(seg[ref_index:])
    out[:ref_index] = -np.cumsum(seg[:ref_index][::-1])[::-1]
    return out


def reconstruct_value(phi: PdeState, grid: Grid1D, x_ref: float | None = None) -> ValueReconstruction:
    """Invert the transform: V_x = exp(-int phi), V = int V_x, both from x_ref.

    Quadrature runs on the uniform cell centres from the centre nearest x_ref;
    the normalization at x_ref is then an affine map, which leaves -V_xx/V_x
    unchanged and keeps the round trip second order.

    For large positive phi, V saturates away from x_ref and its curvature
    drops below round-off there; anchoring at the right end (where V_x is
    smallest) keeps V well conditioned across the grid.
    """
    x = grid.centers
    dx = grid.dx
    values = np.asarray(phi.values, dtype=float)
    if x_ref is None:
        x_ref = 0.5 * (grid.x_min + grid.x_max)
    if not grid.x_min <= x_ref <= grid.x_max:
        raise ValidationError(f"x_ref = {x_ref} lies outside the grid")
    if not np.all(np.isfinite(values)):
        raise SolverError("phi is not finite; cannot reconstruct the value function")
    k = int(np.clip(np.rint((x_ref - x[0]) / dx), 0, len(x) - 1))
    # phi at x_ref by linear interpolation, extrapolated past the outer centres
    j = int(np.clip(k if x_ref >= x[k] else k - 1, 0, len(x) - 2))
    phi_ref = float(values[j] + (values[j + 1] - values[j]) * (x_ref - x[j]) / dx)
    h = x_ref - x[k]
    with np.errstate(over="raise"):
        try:
            log_vx = -_cumtrapz_from(values, dx, k)
            log_vx_ref = -0.5 * (values[k] + phi_ref) * h
            v_x = np.exp(log_vx - log_vx_ref)
        except FloatingPointError:
            raise SolverError("V_x overflowed during reconstruction; phi is too large") from None
    v = _cumtrapz_from(v_x, dx, k)
    v -= 0.5 * (v_x[k] + 1.0) * h
    if not (np.all(np.isfinite(v_x)) and np.all(np.isfinite(v))):
        raise SolverError("non-finite quadrature in value reconstruction")
    return ValueReconstruction(x, v_x, v, float(x_ref))


def forward_transform(v: np.ndarray, dx: float) -> np.ndarray:
    """-V_xx / V_x by central differences on interior nodes (length n - 2)."""
    v = np.asarray(v, dtype=float)
    v_xx = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
    v_x = (v[2:] - v[:-2]) / (2.0 * dx)
    return -v_xx / v_x
