"""Method-of-lines finite-difference solver for the reaction-diffusion
systems in this package.

Space is discretized with the centered second-order Laplacian on a
uniform node grid; the semi-discrete system is advanced with the
classical fourth-order one-step scheme at a fixed parabolic step
dt = safety * h^2 / (2 max d).  Boundary data come from an exact
solution (re-evaluated at every stage time), from frozen initial
boundary values, or from second-order ghost-cell reflection.  Runs are
deterministic: identical configuration gives bit-identical output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .expr import Expr, compile_fn, free_symbols, parse
from .model import RDSystem
from .solutions import ExactSolution

__all__ = [
    "SimError", "SimBlowUpError", "SimConfig", "SimResult", "simulate",
    "error_vs_exact", "convergence_order", "ConvergenceResult",
    "write_snapshot_csv", "write_run_manifest", "config_hash",
]

BOUNDARY_MODES = ("dirichlet-from-exact", "dirichlet-constant", "no-flux")


class SimError(ValueError):
    """Invalid simulation request."""


class SimBlowUpError(SimError):
    """A field exceeded 1e12 or became non-finite.

    `last_t` holds the time of the last accepted step."""

    def __init__(self, message: str, last_t: float):
        super().__init__(message)
        self.last_t = last_t


@dataclass(frozen=True)
class SimConfig:
    """Run configuration.

    `initial` is either an ExactSolution (fields evaluated at t = 0; the
    same object feeds dirichlet-from-exact boundaries) or a triple of
    expressions in t and x.  `n_snapshots` output frames are spread
    evenly over [0, t_end], snapped to step boundaries.
    """

    x_interval: tuple
    n_cells: int
    t_end: float
    boundary: str
    initial: object
    safety: float = 0.4
    n_snapshots: int = 2

    def __post_init__(self):
        x0, x1 = float(self.x_interval[0]), float(self.x_interval[1])
        if not (math.isfinite(x0) and math.isfinite(x1) and x1 > x0):
            raise SimError(f"x_interval must be finite with x1 > x0, got {self.x_interval}")
        object.__setattr__(self, "x_interval", (x0, x1))
        if not (isinstance(self.n_cells, int) and self.n_cells >= 8):
            raise SimError(f"n_cells must be an integer >= 8, got {self.n_cells}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise SimError(f"t_end must be finite and nonnegative, got {self.t_end}")
        object.__setattr__(self, "t_end", float(self.t_end))
        if self.boundary not in BOUNDARY_MODES:
            raise SimError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if not (0 < self.safety <= 1):
            raise SimError(f"safety must lie in (0, 1], got {self.safety}")
        if not (isinstance(self.n_snapshots, int) and self.n_snapshots >= 1):
            raise SimError(f"n_snapshots must be a positive integer, got {self.n_snapshots}")

    @property
    def h(self) -> float:
        return (self.x_interval[1] - self.x_interval[0]) / self.n_cells


@dataclass(frozen=True)
class SimResult:
    """Simulation output: node grid, snapshot frames and diagnostics."""

    x: np.ndarray
    snapshots: tuple
    n_steps: int
    dt: float
    max_abs: float
    config: SimConfig
    manifest_hash: str = field(default="", repr=False)

    def snapshot_times(self) -> tuple:
        return tuple(t for t, *_ in self.snapshots)


_BLOWUP = 1e12


def _initial_exprs(initial) -> tuple:
    if isinstance(initial, ExactSolution):
        return initial.fields
    try:
        items = tuple(initial)
    except TypeError:
        raise SimError("initial must be an ExactSolution or a triple of expressions")
    if len(items) != 3:
        raise SimError(f"initial needs exactly three fields, got {len(items)}")
    out = []
    for e in items:
        e = parse(e) if isinstance(e, str) else e
        extra = free_symbols(e) - {"t", "x"}
        if extra:
            raise SimError(f"initial fields may depend on t and x only, got {sorted(extra)}")
        out.append(e)
    return tuple(out)


def simulate(system: RDSystem, cfg: SimConfig) -> SimResult:
    """Advance a system from its configured initial data.

    The stable step dt = safety h^2 / (2 max d) is rounded down so that
    an integer number of steps lands exactly on t_end.  Any field value
    leaving |value| <= 1e12, or turning non-finite, aborts the run with
    SimBlowUpError carrying the last accepted time.
    """
    x0, x1 = cfg.x_interval
    n = cfg.n_cells
    h = cfg.h
    xs = x0 + np.arange(n + 1) * h
    fields0 = _initial_exprs(cfg.initial)
    init_fns = [compile_fn(e, ("t", "x")) for e in fields0]
    with np.errstate(all="ignore"):
        state_full = [
            np.array(np.broadcast_to(np.asarray(f(np.zeros_like(xs), xs), dtype=float),
                                     xs.shape))
            for f in init_fns
        ]
    for arr in state_full:
        if not np.all(np.isfinite(arr)):
            raise SimError("initial data is not finite on the grid")

    dmax = max(float(dk) for dk in system.d)
    dt_target = cfg.safety * h * h / (2.0 * dmax)
    n_steps = 0 if cfg.t_end == 0 else max(1, int(math.ceil(cfg.t_end / dt_target - 1e-12)))
    dt = 0.0 if n_steps == 0 else cfg.t_end / n_steps

    dirichlet = cfg.boundary != "no-flux"
    if cfg.boundary == "dirichlet-from-exact":
        stage_t = (np.arange(2 * n_steps + 1) * (dt / 2.0)) if n_steps else np.zeros(1)
        with np.errstate(all="ignore"):
            gL = [np.broadcast_to(np.asarray(f(stage_t, np.full_like(stage_t, x0)),
                                             dtype=float), stage_t.shape)
                  for f in init_fns]
            gR = [np.broadcast_to(np.asarray(f(stage_t, np.full_like(stage_t, x1)),
                                             dtype=float), stage_t.shape)
                  for f in init_fns]
        for arr in (*gL, *gR):
            if not np.all(np.isfinite(arr)):
                raise SimError("boundary data evaluation failed (non-finite values)")
    elif cfg.boundary == "dirichlet-constant":
        m = 2 * n_steps + 1 if n_steps else 1
        gL = [np.full(m, float(arr[0])) for arr in state_full]
        gR = [np.full(m, float(arr[-1])) for arr in state_full]

    cfns = [compile_fn(system.C[k], ("u", "v", "w")) for k in range(3)]
    dvals = [float(dk) for dk in system.d]
    inv_h2 = 1.0 / (h * h)

    if dirichlet:
        state = [arr[1:-1].copy() for arr in state_full]

        def rhs(stage_idx, y):
            cs = [np.broadcast_to(np.asarray(cf(*y), dtype=float), y[0].shape)
                  for cf in cfns]
            out = []
            for k in range(3):
                lap = np.empty_like(y[k])
                lap[1:-1] = y[k][:-2] - 2.0 * y[k][1:-1] + y[k][2:]
                lap[0] = gL[k][stage_idx] - 2.0 * y[k][0] + y[k][1]
                lap[-1] = y[k][-2] - 2.0 * y[k][-1] + gR[k][stage_idx]
                out.append(dvals[k] * inv_h2 * lap + cs[k])
            return out

        def full_frame(stage_idx, y):
            return [np.concatenate(([gL[k][stage_idx]], y[k], [gR[k][stage_idx]]))
                    for k in range(3)]
    else:
        state = [arr.copy() for arr in state_full]

        def rhs(stage_idx, y):
            cs = [np.broadcast_to(np.asarray(cf(*y), dtype=float), y[0].shape)
                  for cf in cfns]
            out = []
            for k in range(3):
                lap = np.empty_like(y[k])
                lap[1:-1] = y[k][:-2] - 2.0 * y[k][1:-1] + y[k][2:]
                lap[0] = 2.0 * (y[k][1] - y[k][0])
                lap[-1] = 2.0 * (y[k][-2] - y[k][-1])
                out.append(dvals[k] * inv_h2 * lap + cs[k])
            return out

        def full_frame(stage_idx, y):
            return [y[k].copy() for k in range(3)]

    if n_steps == 0:
        snap_steps = [0]
    elif cfg.n_snapshots == 1:
        snap_steps = [n_steps]
    else:
        snap_steps = sorted({int(round(j * n_steps / (cfg.n_snapshots - 1)))
                             for j in range(cfg.n_snapshots)})
    snapshots = []
    max_abs = max(float(np.max(np.abs(a))) for a in state_full)
    if snap_steps[0] == 0:
        snapshots.append((0.0, *full_frame(0, state)))

    with np.errstate(all="ignore"):
        for j in range(n_steps):
            s0, s1, s2 = 2 * j, 2 * j + 1, 2 * j + 2
            k1 = rhs(s0, state)
            k2 = rhs(s1, [y + 0.5 * dt * k for y, k in zip(state, k1)])
            k3 = rhs(s1, [y + 0.5 * dt * k for y, k in zip(state, k2)])
            k4 = rhs(s2, [y + dt * k for y, k in zip(state, k3)])
            state = [y + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                     for y, a, b, c, d in zip(state, k1, k2, k3, k4)]
            biggest = max(float(np.max(np.abs(y))) for y in state)
            if not math.isfinite(biggest) or biggest > _BLOWUP:
                raise SimBlowUpError(
                    f"field magnitude left the 1e12 box at t = {(j + 1) * dt:.6g}",
                    last_t=j * dt)
            max_abs = max(max_abs, biggest)
            if (j + 1) in snap_steps:
                snapshots.append(((j + 1) * dt, *full_frame(s2, state)))

    result = SimResult(x=xs, snapshots=tuple(snapshots), n_steps=n_steps,
                       dt=dt, max_abs=max_abs, config=cfg)
    object.__setattr__(result, "manifest_hash", config_hash(system, cfg))
    return result


def error_vs_exact(result: SimResult, exact: ExactSolution,
                   norm: str = "sup") -> list:
    """Per-snapshot, per-component error against an exact solution.

    Returns a list of (t, (e_u, e_v, e_w)).  The l2 norm uses
    trapezoidal weights on the node grid.
    """
    if norm not in ("sup", "l2"):
        raise SimError(f"norm must be 'sup' or 'l2', got {norm!r}")
    fns = [compile_fn(e, ("t", "x")) for e in exact.fields]
    xs = result.x
    weights = np.full(xs.shape, result.config.h)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    out = []
    with np.errstate(all="ignore"):
        for t, *fields in result.snapshots:
            errs = []
            for k in range(3):
                ref = np.broadcast_to(
                    np.asarray(fns[k](np.full_like(xs, t), xs), dtype=float), xs.shape)
                diff = np.abs(fields[k] - ref)
                if norm == "sup":
                    errs.append(float(diff.max()))
                else:
                    errs.append(float(math.sqrt(float(np.sum(weights * diff ** 2)))))
            out.append((t, tuple(errs)))
    return out


@dataclass(frozen=True)
class ConvergenceResult:
    """Grid-refinement study: errors at t_end per level and observed
    orders per component ('exact' when both paired errors sit at
    machine level)."""

    n_values: tuple
    errors: tuple
    orders: tuple
    pairwise: tuple


_MACHINE = 1e-12


def convergence_order(system: RDSystem, exact: ExactSolution,
                      cfg_base: SimConfig, levels: int = 3) -> ConvergenceResult:
    """Run `levels` grids (n, 2n, 4n, ...) and report observed orders.

    The order per component is log2 of the error drop over the finest
    pair of levels; all pairwise orders are also returned.
    """
    if levels < 3:
        raise SimError(f"need at least 3 levels, got {levels}")
    n_values = tuple(cfg_base.n_cells * 2 ** j for j in range(levels))
    errors = []
    for nj in n_values:
        cfg = replace(cfg_base, n_cells=nj, initial=exact)
        res = simulate(system, cfg)
        errs = error_vs_exact(res, exact, norm="sup")
        errors.append(errs[-1][1])
    orders = []
    pairwise = []
    for k in range(3):
        comp = [e[k] for e in errors]
        rows = []
        for j in range(levels - 1):
            if comp[j] <= _MACHINE and comp[j + 1] <= _MACHINE:
                rows.append("exact")
            elif comp[j + 1] == 0:
                rows.append("exact")
            else:
                rows.append(math.log2(comp[j] / comp[j + 1]))
        pairwise.append(tuple(rows))
        orders.append(rows[-1])
    return ConvergenceResult(n_values=n_values, errors=tuple(errors),
                             orders=tuple(orders), pairwise=tuple(pairwise))


def config_hash(system: RDSystem, cfg: SimConfig) -> str:
    """Stable hash of the run inputs for the reproducibility manifest."""
    if isinstance(cfg.initial, ExactSolution):
        init_desc = {"solution": cfg.initial.id,
                     "params": {k: str(v) for k, v in cfg.initial.params.items()}}
    else:
        init_desc = {"expressions": [str(e) for e in _initial_exprs(cfg.initial)]}
    payload = {
        "x_interval": list(cfg.x_interval),
        "n_cells": cfg.n_cells,
        "t_end": cfg.t_end,
        "boundary": cfg.boundary,
        "safety": cfg.safety,
        "n_snapshots": cfg.n_snapshots,
        "initial": init_desc,
        "system": {"d": [str(dk) for dk in system.d],
                   "C": [str(c) for c in system.C]},
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_snapshot_csv(result: SimResult, path, index: Optional[int] = None):
    """Write snapshots as CSV rows t, x, u, v, w.

    `index` selects one frame; the default writes every stored frame in
    time order."""
    frames = result.snapshots if index is None else (result.snapshots[index],)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "u", "v", "w"])
        for t, u, v, w in frames:
            for i in range(result.x.shape[0]):
                wr.writerow([repr(float(t)), repr(float(result.x[i])),
                             repr(float(u[i])), repr(float(v[i])), repr(float(w[i]))])


def write_run_manifest(system: RDSystem, result: SimResult, path):
    """Write the reproducibility manifest (config, hash, diagnostics)."""
    payload = {
        "hash": config_hash(system, result.config),
        "n_steps": result.n_steps,
        "dt": result.dt,
        "max_abs": result.max_abs,
        "boundary": result.config.boundary,
        "n_cells": result.config.n_cells,
        "t_end": result.config.t_end,
        "snapshot_times": list(result.snapshot_times()),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
