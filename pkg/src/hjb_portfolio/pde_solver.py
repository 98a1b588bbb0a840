"""Finite-volume solver for  phi_tau = (alpha(x, phi))_xx - (alpha(x, phi) phi)_x.

Diffusion is implicit with Picard iterations on a secant face diffusivity;
the advective flux alpha * phi is upwinded and explicit. Both parts are in
flux form, so the scheme conserves sum(phi) * dx up to boundary fluxes.

``alpha`` is any object with vectorized ``value(phi, x)`` and
``derivative(phi, x)`` methods and an ``x_dependent`` attribute, e.g.
:class:`hjb_portfolio.value_function.AlphaTable`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import BlowUpError, CFLError, PicardError, SolverError, ValidationError
from .grid import Grid1D

log = logging.getLogger(__name__)

BOUNDARIES = ("dirichlet", "zero_flux")
SECANT_EPS = 1e-12
BLOWUP_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class PdeState:
    tau: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValidationError("PDE state must be a finite 1-D array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SolverConfig:
    T: float
    dt_initial: float
    cfl_safety: float = 0.9
    boundary: str = "dirichlet"
    picard_tol: float = 1e-10
    picard_max: int = 50
    advection_enabled: bool = True

    def __post_init__(self):
        if not self.T >= 0:
            raise ValidationError(f"horizon T must be >= 0, got {self.T}")
        if not self.dt_initial > 0:
            raise ValidationError(f"dt_initial must be > 0, got {self.dt_initial}")
        if not 0 < self.cfl_safety <= 1:
            raise ValidationError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if not self.picard_tol > 0:
            raise ValidationError("picard_tol must be > 0")
        if self.picard_max < 1:
            raise ValidationError("picard_max must be >= 1")


def wave_speed(alpha, phi, x):
    """d(alpha * phi)/dphi = alpha' phi + alpha."""
    return alpha.derivative(phi, x) * phi + alpha.value(phi, x)


def cfl_limit(alpha, phi: np.ndarray, grid: Grid1D, cfg: SolverConfig) -> float:
    if not cfg.advection_enabled:
        return math.inf
    speed = float(np.max(np.abs(wave_speed(alpha, phi, grid.centers))))
    if speed == 0.0:
        return math.inf
    return cfg.cfl_safety * grid.dx / speed


def dirichlet_values(phi0: np.ndarray):
    """phi0 at the two boundary faces, extrapolated linearly from the end cells.

    A flat far field gives the boundary cell value itself, bit for bit.
    """
    phi0 = np.asarray(phi0, dtype=float)
    left = phi0[0] if phi0[0] == phi0[1] else 1.5 * phi0[0] - 0.5 * phi0[1]
    right = phi0[-1] if phi0[-1] == phi0[-2] else 1.5 * phi0[-1] - 0.5 * phi0[-2]
    return float(left), float(right)


def _extend(phi, grid: Grid1D, boundary_values, reflect: bool):
    """Cell values and centres padded with one ghost cell on each side.

    With ``reflect`` the ghost mirrors the interior value about the face value
    (face Dirichlet condition for diffusion); otherwise the ghost carries the
    face value itself (inflow data for advection). Without boundary values the
    end cells are copied.
    """
    dx = grid.dx
    if boundary_values is None:
        left, right = phi[0], phi[-1]
    elif reflect:
        left = 2.0 * boundary_values[0] - phi[0]
        right = 2.0 * boundary_values[1] - phi[-1]
    else:
        left, right = boundary_values
    ext = np.concatenate(([left], phi, [right]))
    x_ext = np.concatenate(([grid.x_min - 0.5 * dx], grid.centers, [grid.x_max + 0.5 * dx]))
    return ext, x_ext


def _advective_flux(alpha, ext, x_ext, grid: Grid1D, zero_flux: bool):
    f = alpha.value(ext, x_ext) * ext
    avg = 0.5 * (ext[1:] + ext[:-1])
    speed = wave_speed(alpha, avg, grid.faces)
    flux = np.where(speed >= 0, f[:-1], f[1:])
    if zero_flux:
        flux[0] = flux[-1] = 0.0
    return flux


def _diffusion_faces(alpha, ext, x_ext, grid: Grid1D, zero_flux: bool):
    """Face increments of alpha and the secant diffusivity linearizing them."""
    a_left = alpha.value(ext[:-1], x_ext[:-1])
    a_right = alpha.value(ext[1:], x_ext[1:])
    d_alpha = a_right - a_left
    d_phi = ext[1:] - ext[:-1]
    small = np.abs(d_phi) < SECANT_EPS
    safe = np.where(small, 1.0, d_phi)
    if alpha.x_dependent:
        # average the phi-secant over the two neighbouring x positions
        cross = (alpha.value(ext[1:], x_ext[:-1]) - a_left) + (a_right - alpha.value(ext[:-1], x_ext[1:]))
        diff = 0.5 * cross / safe
    else:
        diff = d_alpha / safe
    if small.any():
        avg = 0.5 * (ext[1:] + ext[:-1])
        diff = np.where(small, alpha.derivative(avg, grid.faces), diff)
    scale = max(1.0, float(np.max(np.abs(diff))))
    if np.any(diff < -1e-10 * scale):
        raise SolverError("negative face diffusivity: alpha is not nondecreasing in phi")
    diff = np.maximum(diff, 0.0)
    if zero_flux:
        d_alpha[0] = d_alpha[-1] = 0.0
        diff[0] = diff[-1] = 0.0
    return d_alpha, diff


def _step(state: PdeState, grid: Grid1D, cfg: SolverConfig, alpha, dt: float,
          boundary_values=None):
    phi_n = np.asarray(state.values, dtype=float)
    if phi_n.shape != (grid.n_cells,):
        raise ValidationError("state length does not match the grid")
    if not dt > 0:
        raise ValidationError(f"time step must be positive, got {dt}")
    zero_flux = cfg.boundary == "zero_flux"
    if cfg.boundary == "dirichlet" and boundary_values is None:
        raise ValidationError("Dirichlet boundary requires boundary values")
    bv = None if zero_flux else boundary_values
    dx = grid.dx
    r = dt / dx**2

    rhs = phi_n.copy()
    if cfg.advection_enabled:
        limit = cfl_limit(alpha, phi_n, grid, cfg)
        if dt > limit * (1 + 1e-12):
            raise CFLError(f"dt = {dt:.6g} exceeds the advective CFL limit {limit:.6g}")
        ext, x_ext = _extend(phi_n, grid, bv, reflect=False)
        flux = _advective_flux(alpha, ext, x_ext, grid, zero_flux)
        rhs -= dt / dx * (flux[1:] - flux[:-1])

    phi_k = phi_n.copy()
    residuals = []
    n = grid.n_cells
    ab = np.zeros((3, n))
    for _ in range(cfg.picard_max):
        ext, x_ext = _extend(phi_k, grid, bv, reflect=True)
        d_alpha, diff = _diffusion_faces(alpha, ext, x_ext, grid, zero_flux)
        # increment form: the residual carries exact alpha differences, so a
        # converged iterate solves the nonlinear scheme and constants stay exact
        residual = rhs - phi_k + r * (d_alpha[1:] - d_alpha[:-1])
        lower = -r * diff[:-1]
        upper = -r * diff[1:]
        diag = 1.0 + r * (diff[:-1] + diff[1:])
        if bv is not None:
            # the reflected ghost moves opposite to the end cell
            diag[0] += r * diff[0]
            diag[-1] += r * diff[-1]
        if np.any(diag < np.abs(lower) + np.abs(upper)):
            raise SolverError("implicit diffusion matrix lost diagonal dominance")
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        delta = solve_banded((1, 1), ab, residual)
        phi_k = phi_k + delta
        res = float(np.max(np.abs(delta)))
        residuals.append(res)
        if res <= cfg.picard_tol:
            break
    else:
        raise PicardError(
            f"Picard iteration did not converge in {cfg.picard_max} iterations "
            f"(last residual {residuals[-1]:.3e})",
            residuals,
        )
    return PdeState(state.tau + dt, phi_k), len(residuals), residuals


def step(state: PdeState, grid: Grid1D, cfg: SolverConfig, alpha, dt: float,
         boundary_values=None) -> PdeState:
    """Advance one IMEX step of size dt.

    ``boundary_values`` = (left, right) face values for Dirichlet boundaries.
    """
    return _step(state, grid, cfg, alpha, dt, boundary_values)[0]


@dataclass
class SolutionTrajectory:
    grid: Grid1D
    snapshots: list
    diagnostics: list = field(default_factory=list)
    initial_mass: float = 0.0

    def mass(self, state: PdeState) -> float:
        return float(np.sum(state.values) * self.grid.dx)

    def snapshot_summary(self):
        rows = []
        for s in self.snapshots:
            m = self.mass(s)
            drift = abs(m - self.initial_mass) / abs(self.initial_mass) if self.initial_mass else abs(m)
            rows.append({"tau": s.tau, "mass": m, "relative_mass_drift": drift,
                         "min_phi": float(s.values.min()), "max_phi": float(s.values.max())})
        return rows

    @property
    def max_picard_iters(self) -> int:
        return max((d["picard_iters"] for d in self.diagnostics), default=0)

    @property
    def final(self) -> PdeState:
        return self.snapshots[-1]


def solve(phi0: PdeState, grid: Grid1D, cfg: SolverConfig, alpha,
          snapshot_times: Sequence[float] | None = None) -> SolutionTrajectory:
    """March from tau = 0 to T; snapshots are the completed steps nearest to the
    requested times."""
    T = float(cfg.T)
    times = sorted(set(float(t) for t in (snapshot_times if snapshot_times is not None else (0.0, T))))
    if any(t < 0 or t > T * (1 + 1e-12) for t in times):
        raise ValidationError(f"snapshot times must lie in [0, {T}]")
    state = PdeState(0.0, phi0.values)
    bv = dirichlet_values(phi0.values)
    dx = grid.dx
    mass0 = float(np.sum(state.values) * dx)
    guard = BLOWUP_FACTOR * max(float(np.max(np.abs(state.values))), np.finfo(float).tiny)

    traj = SolutionTrajectory(grid, [], [], mass0)
    traj.diagnostics.append({"tau": 0.0, "dt": 0.0, "mass": mass0,
                             "min_phi": float(state.values.min()),
                             "max_phi": float(state.values.max()), "picard_iters": 0})
    pending = list(times)
    while pending and pending[0] <= 0.0:
        traj.snapshots.append(state)
        pending.pop(0)

    while state.tau < T and pending:
        dt = min(cfg.dt_initial, cfl_limit(alpha, state.values, grid, cfg))
        last = state.tau + dt >= T * (1 - 1e-12)
        if last:
            dt = T - state.tau
        new, iters, _ = _step(state, grid, cfg, alpha, dt, bv)
        if last:
            new = PdeState(T, new.values)
        if float(np.max(np.abs(new.values))) > guard:
            raise BlowUpError(f"|phi| exceeded {BLOWUP_FACTOR:g} x |phi0| at tau = {new.tau:.6g}")
        mass = float(np.sum(new.values) * dx)
        traj.diagnostics.append({"tau": new.tau, "dt": dt, "mass": mass,
                                 "min_phi": float(new.values.min()),
                                 "max_phi": float(new.values.max()), "picard_iters": iters})
        while pending and pending[0] <= new.tau:
            t = pending.pop(0)
            traj.snapshots.append(state if t - state.tau <= new.tau - t else new)
        state = new
    return traj


# -- self-convergence ---------------------------------------------------------


def restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Block-average cell values onto a grid `factor` times coarser."""
    return np.asarray(fine).reshape(-1, factor).mean(axis=1)


@dataclass
class ConvergenceRow:
    n_cells: int
    dx: float
    dt: float
    error: float
    order: float | None


def convergence_study(grid: Grid1D, cfg: SolverConfig, alpha,
                      initial: Callable[[Grid1D], PdeState], refinements: int,
                      mode: str = "full") -> list:
    """Halve dx ``refinements - 1`` times; dt scales with dx**2 ('heat') or dx ('full').

    ``error`` is the L-infinity distance to the finest solution restricted to
    each grid. ``order`` is log2 of the ratio of successive level differences,
    which stays unbiased by the finite resolution of the reference.
    """
    if refinements < 3:
        raise ValidationError("convergence study requires at least 3 levels")
    if mode not in ("heat", "full"):
        raise ValidationError(f"unknown convergence mode {mode!r}")
    finals, grids, dts = [], [], []
    for k in range(refinements):
        g = Grid1D(grid.x_min, grid.x_max, grid.n_cells * 2**k)
        dt = cfg.dt_initial / (4**k if mode == "heat" else 2**k)
        level_cfg = SolverConfig(cfg.T, dt, cfg.cfl_safety, cfg.boundary, cfg.picard_tol,
                                 cfg.picard_max, cfg.advection_enabled)
        traj = solve(initial(g), g, level_cfg, alpha, snapshot_times=[cfg.T])
        finals.append(traj.final.values)
        grids.append(g)
        dts.append(dt)
    finest = finals[-1]
    diffs = [float(np.max(np.abs(restrict(finals[k + 1], 2) - finals[k])))
             for k in range(refinements - 1)]
    rows = []
    for k in range(refinements - 1):
        err = float(np.max(np.abs(restrict(finest, 2 ** (refinements - 1 - k)) - finals[k])))
        order = None
        if k + 1 < len(diffs) and diffs[k] > 0 and diffs[k + 1] > 0:
            order = math.log2(diffs[k] / diffs[k + 1])
        rows.append(ConvergenceRow(grids[k].n_cells, grids[k].dx, dts[k], err, order))
    return rows
