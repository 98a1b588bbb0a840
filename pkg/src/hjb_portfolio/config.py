"""Run configuration: a versioned TOML document.

Relative paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import MissingInputError, ValidationError
from .grid import Grid1D
from .market_data import Discrete, DriftProfile, Simplex
from .pde_solver import SolverConfig
from .riccati import CARA, CRRA, PiecewiseConstantRiskAversion, TabulatedPhi0

SCHEMA_VERSION = 1


@dataclass
class AlphaSpec:
    phi_min: float = 0.1
    phi_max: float = 100.0
    knots: int = 200
    spacing: str = "geometric"
    phi_values: list | None = None


@dataclass
class RunConfig:
    path: Path | None
    raw: dict
    assets: Path
    out_dir: Path
    allow_singular: bool
    decision_set_spec: dict
    drift: DriftProfile
    utility: object
    grid: Grid1D
    solver: SolverConfig
    alpha: AlphaSpec
    snapshot_times: list
    support_threshold: float = 0.01
    notes: list = field(default_factory=list)

    def decision_set(self, n_assets: int):
        kind = self.decision_set_spec.get("type", "simplex")
        if kind == "simplex":
            return Simplex(n_assets)
        return Discrete(self.decision_set_spec["weights"])


def _section(raw, name):
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ValidationError(f"config section [{name}] must be a table")
    return sec


def _utility(sec: dict):
    kind = sec.get("type")
    try:
        if kind == "cara":
            return CARA(float(sec["a"]))
        if kind == "crra":
            return CRRA(float(sec["gamma"]), float(sec.get("x_shift", 0.0)))
        if kind == "piecewise_constant":
            return PiecewiseConstantRiskAversion(sec["breakpoints"], sec["levels"])
        if kind == "tabulated":
            return TabulatedPhi0(sec["x"], sec["values"])
    except KeyError as exc:
        raise ValidationError(f"[utility] of type {kind!r} is missing key {exc.args[0]!r}") from None
    raise ValidationError(f"[utility] type must be cara, crra, piecewise_constant or tabulated, got {kind!r}")


def parse_config(raw: dict, base_dir: Path, path: Path | None = None) -> RunConfig:
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    inputs = _section(raw, "inputs")
    if "assets" not in inputs:
        raise ValidationError("[inputs] must name the asset CSV file")
    assets = (base_dir / inputs["assets"]).resolve()
    output = _section(raw, "output")
    out_dir = (base_dir / output.get("dir", "run")).resolve()

    ds = _section(raw, "decision_set")
    if ds.get("type", "simplex") not in ("simplex", "discrete"):
        raise ValidationError("[decision_set] type must be simplex or discrete")
    if ds.get("type") == "discrete" and "weights" not in ds:
        raise ValidationError("[decision_set] of type discrete needs weights")

    dsec = dict(_section(raw, "drift"))
    kind = dsec.pop("type", "constant")
    try:
        drift = DriftProfile(kind, **{k: float(v) for k, v in dsec.items()})
    except TypeError as exc:
        raise ValidationError(f"[drift]: {exc}") from None

    utility = _utility(_section(raw, "utility"))

    gsec = _section(raw, "grid")
    try:
        grid = Grid1D(float(gsec["x_min"]), float(gsec["x_max"]), int(gsec["n_cells"]))
    except KeyError as exc:
        raise ValidationError(f"[grid] is missing key {exc.args[0]!r}") from None

    ssec = _section(raw, "solver")
    try:
        solver = SolverConfig(
            T=float(ssec["T"]),
            dt_initial=float(ssec["dt_initial"]),
            cfl_safety=float(ssec.get("cfl_safety", 0.9)),
            boundary=str(ssec.get("boundary", "dirichlet")),
            picard_tol=float(ssec.get("picard_tol", 1e-10)),
            picard_max=int(ssec.get("picard_max", 50)),
            advection_enabled=bool(ssec.get("advection", True)),
        )
    except KeyError as exc:
        raise ValidationError(f"[solver] is missing key {exc.args[0]!r}") from None

    asec = _section(raw, "alpha")
    alpha = AlphaSpec(
        phi_min=float(asec.get("phi_min", 0.1)),
        phi_max=float(asec.get("phi_max", 100.0)),
        knots=int(asec.get("knots", 200)),
        spacing=str(asec.get("spacing", "geometric")),
        phi_values=[float(v) for v in asec["phi_values"]] if "phi_values" in asec else None,
    )
    if alpha.spacing not in ("geometric", "linear"):
        raise ValidationError("[alpha] spacing must be geometric or linear")

    times = [float(t) for t in output.get("snapshot_times", [0.0, solver.T])]
    if any(t < 0 or t > solver.T for t in times):
        raise ValidationError(f"snapshot times must lie in [0, T = {solver.T}]")

    psec = _section(raw, "policy")
    threshold = float(psec.get("support_threshold", 0.01))

    return RunConfig(path, raw, assets, out_dir, bool(inputs.get("allow_singular_covariance", False)),
                     dict(ds), drift, utility, grid, solver, alpha, times, threshold)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent, path)
