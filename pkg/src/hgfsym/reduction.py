"""Symmetry reductions: ansatz construction, reduced ODE systems,
fixed-step integration, and lifting reduced solutions back to checked
PDE solutions.

The two no-drift operators of the constrained model (the case-2 shape
with unit cross-coupling) generate ansatz families mixing three profile
functions of x with a single exponential in t.  Substituting either
ansatz turns the PDE system into a second-order autonomous ODE system
for the profiles; this module builds both, integrates them with a
classical fourth-order scheme, and verifies lifted fields against the
original PDEs either symbolically (analytic profiles) or with
fifth-order-accurate finite-difference stencils (trajectories).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .expr import (
    Expr, add, compile_fn, compile_sum, const, differentiate, exp, mul,
    neg, pow_, sub, substitute, sym, tan, tanh,
)
from .model import RDSystem, Num, as_number, case2_system, numbers_differ, _ratio
from .symmetry import QOperator, Report, check_zero, DEFAULT_SEED

__all__ = [
    "ReductionError", "BlowUpError", "Ansatz", "build_ansatz",
    "ReducedODESystem", "reduced_ode_system", "Trajectory", "integrate_ode",
    "first_integral", "profile_tan", "profile_tanh", "lift_and_verify",
    "write_trajectory_csv",
]

T, X = sym("t"), sym("x")
PHIS = (sym("phi1"), sym("phi2"), sym("phi3"))


class ReductionError(ValueError):
    """Invalid reduction request."""


class BlowUpError(ReductionError):
    """A trajectory left the |phi| <= 1e12 box.

    `last_x` holds the abscissa of the last accepted step."""

    def __init__(self, message: str, last_x: float):
        super().__init__(message)
        self.last_x = last_x


def _lincomb(coeffs: Sequence[Num]) -> Expr:
    return add(*[mul(const(c), PHIS[i]) for i, c in enumerate(coeffs) if c != 0])


@dataclass(frozen=True)
class Ansatz:
    """Solution shape generated by one of the two no-drift operators.

    Each field is base + expo * exp(rate * t) with base and expo linear
    in the profiles phi1..phi3; `base_coeffs` and `exp_coeffs` hold the
    two 3x3 coefficient arrays (row = field, column = profile).  `fields`
    carries the same content assembled as expressions in t, phi1..phi3.
    """

    id: str
    params: dict
    rate: Num
    base_coeffs: tuple
    exp_coeffs: tuple
    fields: tuple
    operator: QOperator


def build_ansatz(id: str, params) -> Ansatz:
    """Build the ansatz generated by operator Q1 or Q2.

    `params` provides d1, d2, d3 with d1 != d2 and d1 != d3.  The
    invariant-surface conditions Q(u) = Q(v) = Q(w) = 0 are checked on
    the built fields by randomized evaluation at construction time.
    """
    p = {k: as_number(v) for k, v in dict(params).items()}
    missing = [k for k in ("d1", "d2", "d3") if k not in p]
    if missing:
        raise ReductionError(f"missing parameters {missing}")
    d1, d2, d3 = p["d1"], p["d2"], p["d3"]
    for dk, name in ((d1, "d1"), (d2, "d2"), (d3, "d3")):
        if not dk > 0:
            raise ReductionError(f"{name} must be positive, got {dk}")
    if not numbers_differ(d1, d2):
        raise ReductionError("degenerate diffusivities: d1 = d2")
    if not numbers_differ(d1, d3):
        raise ReductionError("degenerate diffusivities: d1 = d3")
    rate = _ratio(d3, sub_(d3, d1))
    g1 = _ratio(d1, sub_(d1, d2))
    g3 = _ratio(d3, sub_(d1, d3))
    if id == "Q1":
        A = _ratio(mul_(d1, sub_(d1, d3)), mul_(d3, sub_(d1, d2)))
        base = ((1, 0, 0), (0, 1, 0), (0, 0, 0))
        expo = ((0, 0, A), (0, 0, -A), (0, 0, 1))
        eta = (neg(mul(const(g1), sym("w"))), mul(const(g1), sym("w")),
               neg(mul(const(g3), sym("w"))))
    elif id == "Q2":
        B = _ratio(mul_(d3, sub_(d1, d2)), mul_(d1, sub_(d1, d3)))
        base = ((0, 0, 0), (0, 1, 0), (0, 0, 1))
        expo = ((1, 0, 0), (-1, 0, 0), (B, 0, 0))
        g2 = _ratio(mul_(mul_(d3, d3), sub_(d1, d2)),
                    mul_(d1, mul_(sub_(d1, d3), sub_(d1, d3))))
        eta = (neg(mul(const(g3), sym("u"))), mul(const(g3), sym("u")),
               neg(mul(const(g2), sym("u"))))
    else:
        raise ReductionError(f"unknown ansatz id {id!r}; use 'Q1' or 'Q2'")
    growth = exp(mul(const(rate), T))
    fields = tuple(
        add(_lincomb(base[k]), mul(_lincomb(expo[k]), growth))
        for k in range(3)
    )
    op = QOperator(xi=const(0), eta=eta)
    field_map = dict(zip(("u", "v", "w"), fields))
    labeled = [
        (f"Q({f})", sub(differentiate(fields[k], "t"), substitute(eta[k], field_map)))
        for k, f in enumerate(("u", "v", "w"))
    ]
    rep = check_zero(labeled, ("t", "x", "phi1", "phi2", "phi3"),
                     tol=1e-12, label=f"{id} characteristic")
    if not rep.passed:
        raise ReductionError(
            f"{id} fields violate the invariant-surface conditions; "
            f"max scaled residual {rep.max_residual:.3e}")
    return Ansatz(id=id, params={"d1": d1, "d2": d2, "d3": d3}, rate=rate,
                  base_coeffs=base, exp_coeffs=expo, fields=fields, operator=op)


def sub_(a: Num, b: Num) -> Num:
    return a - b


def mul_(a: Num, b: Num) -> Num:
    return a * b


@dataclass(frozen=True)
class ReducedODESystem:
    """Autonomous second-order system phi_k'' = rhs_k(x, phi)."""

    id: str
    params: dict
    rhs: tuple

    @property
    def n_components(self) -> int:
        return len(self.rhs)

    def names(self) -> tuple:
        return ("x",) + tuple(f"phi{i + 1}" for i in range(len(self.rhs)))


def reduced_ode_system(id: str, params) -> ReducedODESystem:
    """Reduced profile systems of the two ansatz families, plus the
    single-profile equation d1 phi'' = phi (phi - 1) that governs the
    second profile on the invariant line.

    ids: 'sys_4_6' (three components, first-family), 'sys_4_8'
    (three components, second-family; also needs d2 != d3),
    'eq_4_13' (one component, parameter d1 only).
    """
    p = {k: as_number(v) for k, v in dict(params).items()}
    if id == "eq_4_13":
        if "d1" not in p:
            raise ReductionError("missing parameters ['d1']")
        d1 = p["d1"]
        if not d1 > 0:
            raise ReductionError(f"d1 must be positive, got {d1}")
        phi = PHIS[0]
        rhs = mul(const(_ratio(1, d1)), phi, sub(phi, const(1)))
        return ReducedODESystem(id=id, params={"d1": d1}, rhs=(rhs,))
    if id not in ("sys_4_6", "sys_4_8"):
        raise ReductionError(
            f"unknown system id {id!r}; use 'sys_4_6', 'sys_4_8' or 'eq_4_13'")
    missing = [k for k in ("d1", "d2", "d3") if k not in p]
    if missing:
        raise ReductionError(f"missing parameters {missing}")
    d1, d2, d3 = p["d1"], p["d2"], p["d3"]
    for dk, name in ((d1, "d1"), (d2, "d2"), (d3, "d3")):
        if not dk > 0:
            raise ReductionError(f"{name} must be positive, got {dk}")
    if not numbers_differ(d1, d2):
        raise ReductionError("degenerate diffusivities: d1 = d2")
    if not numbers_differ(d1, d3):
        raise ReductionError("degenerate diffusivities: d1 = d3")
    f1, f2, f3 = PHIS
    gap = sub(sub(const(1), f1), f2)
    c23 = _ratio(sub_(d2, d3), sub_(d1, d3))
    if id == "sys_4_6":
        rhs = (
            mul(const(_ratio(-1, d1)), f1, gap),
            mul(const(_neg_ratio(c23, d2)), f2, gap),
            mul(const(_ratio(1, d1)), f3,
                add(f1, f2, const(_ratio(d1, sub_(d3, d1))))),
        )
    else:
        if not numbers_differ(d2, d3):
            raise ReductionError("degenerate diffusivities: d2 = d3")
        rhs = (
            mul(const(_ratio(1, d1)), f1,
                add(const(_ratio(d1, sub_(d3, d1))), f2)),
            mul(const(_neg_ratio(c23, d2)), f2,
                add(sub(const(1), f2),
                    mul(const(_ratio(sub_(d1, d3), sub_(d2, d3))), f3))),
            mul(const(_ratio(1, d1)), f2, f3),
        )
    return ReducedODESystem(id=id, params={"d1": d1, "d2": d2, "d3": d3}, rhs=rhs)


def _neg_ratio(a: Num, b: Num) -> Num:
    return _ratio(-a, b)


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step integration output.

    `values` and `slopes` have one row per grid node and one column per
    profile; `max_local_error` is the largest per-step Richardson
    estimate encountered."""

    system_id: str
    x: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    h: float
    n_steps: int
    max_local_error: float

    def __post_init__(self):
        if np.any(np.diff(self.x) <= 0):
            raise ReductionError("trajectory grid must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.slopes))):
            raise ReductionError("trajectory carries non-finite values")


_BLOWUP = 1e12


def integrate_ode(system: ReducedODESystem, init_values, init_slopes,
                  span, h: float = 1e-3) -> Trajectory:
    """Integrate phi'' = rhs(x, phi) with the classical fourth-order
    one-step scheme at fixed step.

    The step is adjusted to the nearest value that lands exactly on the
    right endpoint.  Each step is additionally re-taken as two half
    steps to form a Richardson local-error estimate; the solution itself
    always advances with the full step, so results are reproducible
    bit for bit.  Any |phi| exceeding 1e12 aborts with BlowUpError.
    """
    n = system.n_components
    y0 = [float(v) for v in np.atleast_1d(np.asarray(init_values, dtype=float))]
    s0 = [float(v) for v in np.atleast_1d(np.asarray(init_slopes, dtype=float))]
    if len(y0) != n or len(s0) != n:
        raise ReductionError(
            f"{system.id} has {n} components; got {len(y0)} values, {len(s0)} slopes")
    if not all(map(math.isfinite, y0 + s0)):
        raise ReductionError("initial data must be finite")
    x0, x1 = float(span[0]), float(span[1])
    if not (math.isfinite(x0) and math.isfinite(x1) and x1 > x0):
        raise ReductionError(f"span must be finite with x1 > x0, got ({x0}, {x1})")
    if not (h > 0 and math.isfinite(h)):
        raise ReductionError(f"step must be positive and finite, got {h}")
    n_steps = max(1, int(round((x1 - x0) / h)))
    h_act = (x1 - x0) / n_steps
    fns = [compile_fn(r, system.names(), scalar=True) for r in system.rhs]

    def deriv(x, y):
        vals = y[:n]
        return y[n:] + [f(x, *vals) for f in fns]

    def step(x, y, hh):
        k1 = deriv(x, y)
        k2 = deriv(x + hh / 2, [yi + hh / 2 * ki for yi, ki in zip(y, k1)])
        k3 = deriv(x + hh / 2, [yi + hh / 2 * ki for yi, ki in zip(y, k2)])
        k4 = deriv(x + hh, [yi + hh * ki for yi, ki in zip(y, k3)])
        return [yi + hh / 6 * (a + 2 * b + 2 * c + d)
                for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]

    y = y0 + s0
    xs = x0 + np.arange(n_steps + 1) * h_act
    rows = [list(y)]
    max_err = 0.0
    for i in range(n_steps):
        x = xs[i]
        y_full = step(x, y, h_act)
        y_half = step(x + h_act / 2, step(x, y, h_act / 2), h_act / 2)
        err = max(abs(a - b) for a, b in zip(y_full, y_half)) / 15.0
        max_err = max(max_err, err)
        y = y_full
        if any(not math.isfinite(v) or abs(v) > _BLOWUP for v in y):
            raise BlowUpError(
                f"{system.id}: solution exceeded 1e12 between x = {x:.6g} "
                f"and x = {xs[i + 1]:.6g}", last_x=float(x))
        rows.append(list(y))
    data = np.asarray(rows)
    return Trajectory(system_id=system.id, x=xs, values=data[:, :n],
                      slopes=data[:, n:], h=h_act, n_steps=n_steps,
                      max_local_error=max_err)


def first_integral(d1: Num, phi, dphi):
    """Conserved quantity d1 phi'^2 - (2/3) phi^3 + phi^2 of the
    single-profile equation."""
    phi = np.asarray(phi, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    return float(d1) * dphi ** 2 - (2.0 / 3.0) * phi ** 3 + phi ** 2


def profile_tan(d1: Num) -> Expr:
    """Unbounded profile (3/2)(1 + tan^2(x / (2 sqrt(d1)))); its first
    integral value is 0."""
    d1 = as_number(d1)
    half = mul(const(Fraction(1, 2)), pow_(const(d1), Fraction(-1, 2)), X)
    return mul(const(Fraction(3, 2)), add(const(1), pow_(tan(half), 2)))


def profile_tanh(d1: Num) -> Expr:
    """Kink profile (1/2)(-1 + 3 tanh^2(x / (2 sqrt(d1)))); its first
    integral value is 1/3."""
    d1 = as_number(d1)
    half = mul(const(Fraction(1, 2)), pow_(const(d1), Fraction(-1, 2)), X)
    return mul(const(Fraction(1, 2)),
               add(const(-1), mul(const(3), pow_(tanh(half), 2))))


# ---------------------------------------------------------------------------
# lifting

def lift_and_verify(ansatz: Ansatz, phis, system: RDSystem, *,
                    ts, xs=None, stride: Optional[int] = None,
                    interior_only: bool = False,
                    tol: float = 1e-9, label: str = None) -> Report:
    """Assemble (u, v, w) from an ansatz and profile data and measure the
    PDE residuals u_t - d_k u_xx - C_k on a grid.

    Analytic profiles (a triple of expressions in x) are differentiated
    symbolically and need `xs`; a Trajectory is differentiated with
    five-point finite-difference stencils in x (centered where both
    second neighbors exist, one-sided at the edges) and needs `stride`,
    the number of trajectory steps per stencil spacing.  The one-sided
    edge stencils are one order less accurate than the centered ones;
    `interior_only` drops the edge bands so that the reported maximum
    shrinks at the centered-stencil rate under stride refinement.
    Residuals are scaled pointwise by 1 + the magnitudes of the three
    assembled terms.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if label is None:
        label = f"lift {ansatz.id}"
    if isinstance(phis, Trajectory):
        if stride is None:
            raise ReductionError("trajectory lift needs a stencil stride")
        return _lift_trajectory(ansatz, phis, system, ts, int(stride),
                                interior_only, tol, label)
    if xs is None:
        raise ReductionError("analytic lift needs grid abscissas xs")
    return _lift_analytic(ansatz, tuple(phis), system, ts,
                          np.atleast_1d(np.asarray(xs, dtype=float)), tol, label)


def _field_names():
    return ("u", "v", "w")


def _lift_analytic(ansatz, phis, system, ts, xs, tol, label):
    if len(phis) != 3:
        raise ReductionError("analytic lift needs three profile expressions")
    rules = {f"phi{i + 1}": phis[i] for i in range(3)}
    fields = [substitute(e, rules) for e in ansatz.fields]
    field_map = dict(zip(_field_names(), fields))
    tt, xx = [a.ravel() for a in np.meshgrid(ts, xs, indexing="ij")]
    worst = 0.0
    per_eq = {}
    with np.errstate(all="ignore"):
        for k in range(3):
            resid = add(
                differentiate(fields[k], "t"),
                neg(mul(const(system.d[k]),
                        differentiate(differentiate(fields[k], "x"), "x"))),
                neg(substitute(system.C[k], field_map)),
            )
            value, scale = compile_sum(resid, ("t", "x"))(tt, xx)
            value = np.broadcast_to(np.asarray(value, dtype=float), tt.shape)
            scale = np.broadcast_to(np.asarray(scale, dtype=float), tt.shape)
            if not (np.all(np.isfinite(value)) and np.all(np.isfinite(scale))):
                raise ReductionError(
                    f"residual {k + 1} is not finite on the requested grid")
            m = float((np.abs(value) / (1.0 + scale)).max())
            per_eq[f"eq{k + 1}"] = m
            worst = max(worst, m)
    return Report(label=label, passed=bool(worst <= tol), max_residual=worst,
                  per_equation=per_eq, samples=int(tt.size * 3), seed=None,
                  tol=tol, params=dict(ansatz.params))


def _stencil_second(values: np.ndarray, s: int, h: float) -> np.ndarray:
    """Fifth-point second-derivative estimates at every node.

    Spacing is s grid steps.  Nodes with both second neighbors use the
    centered fourth-order formula; the first and last 2s nodes fall back
    to one-sided five-point stencils."""
    n = values.shape[0]
    if 4 * s > n - 1:
        raise ReductionError(
            f"stride {s} needs at least {4 * s + 1} nodes, trajectory has {n}")
    out = np.empty_like(values, dtype=float)
    H2 = (s * h) ** 2
    c = slice(2 * s, n - 2 * s)
    out[c] = (-values[: n - 4 * s] + 16 * values[s: n - 3 * s]
              - 30 * values[2 * s: n - 2 * s] + 16 * values[3 * s: n - s]
              - values[4 * s:]) / (12 * H2)
    for i in range(2 * s):
        f = values[i: i + 4 * s + 1: s]
        out[i] = (35 * f[0] - 104 * f[1] + 114 * f[2] - 56 * f[3] + 11 * f[4]) / (12 * H2)
    for i in range(n - 2 * s, n):
        f = values[i - 4 * s: i + 1: s][::-1]
        out[i] = (35 * f[0] - 104 * f[1] + 114 * f[2] - 56 * f[3] + 11 * f[4]) / (12 * H2)
    return out


def _lift_trajectory(ansatz, traj, system, ts, stride, interior_only, tol, label):
    if traj.values.shape[1] != 3:
        raise ReductionError("trajectory lift needs a three-profile trajectory")
    if stride < 1:
        raise ReductionError(f"stride must be at least 1, got {stride}")
    phi = traj.values
    ddphi = np.column_stack([
        _stencil_second(phi[:, j], stride, traj.h) for j in range(3)])
    if interior_only:
        keep = slice(2 * stride, phi.shape[0] - 2 * stride)
        if keep.start >= keep.stop:
            raise ReductionError(
                f"stride {stride} leaves no interior nodes on {phi.shape[0]} points")
        phi, ddphi = phi[keep], ddphi[keep]
    rate = float(ansatz.rate)
    egrow = np.exp(rate * ts)[:, None]
    base = np.asarray(ansatz.base_coeffs, dtype=float)
    expo = np.asarray(ansatz.exp_coeffs, dtype=float)
    flds, flds_t, flds_xx = [], [], []
    for k in range(3):
        b = phi @ base[k]
        e = phi @ expo[k]
        flds.append(b[None, :] + e[None, :] * egrow)
        flds_t.append(rate * e[None, :] * egrow)
        flds_xx.append((ddphi @ base[k])[None, :] + (ddphi @ expo[k])[None, :] * egrow)
    cfns = [compile_fn(system.C[k], _field_names()) for k in range(3)]
    worst = 0.0
    per_eq = {}
    with np.errstate(all="ignore"):
        for k in range(3):
            cvals = np.broadcast_to(
                np.asarray(cfns[k](*flds), dtype=float), flds[0].shape)
            diff = float(system.d[k]) * flds_xx[k]
            resid = flds_t[k] - diff - cvals
            scale = np.abs(flds_t[k]) + np.abs(diff) + np.abs(cvals)
            if not np.all(np.isfinite(resid)):
                raise ReductionError(f"residual {k + 1} is not finite")
            m = float((np.abs(resid) / (1.0 + scale)).max())
            per_eq[f"eq{k + 1}"] = m
            worst = max(worst, m)
    return Report(label=label, passed=bool(worst <= tol), max_residual=worst,
                  per_equation=per_eq, samples=int(flds[0].size * 3), seed=None,
                  tol=tol, params=dict(ansatz.params),
                  notes=(f"stride {stride}, stencil spacing {stride * traj.h:.6g}",))


def write_trajectory_csv(traj: Trajectory, path):
    """Write a trajectory as CSV with columns x, phi1, phi1', phi2, ..."""
    n = traj.values.shape[1]
    header = ["x"]
    for i in range(n):
        header += [f"phi{i + 1}", f"phi{i + 1}'"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(traj.x.shape[0]):
            row = [repr(float(traj.x[i]))]
            for j in range(n):
                row += [repr(float(traj.values[i, j])), repr(float(traj.slopes[i, j]))]
            wr.writerow(row)
