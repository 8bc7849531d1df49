"""Invariance checking for conditional symmetry operators.

An operator `Q = d/dt + xi d/dx + eta^1 d/du + eta^2 d/dv + eta^3 d/dw`
(time coefficient normalized to one) is applied to a three-component
reaction-diffusion system through its second prolongation.  The
prolonged action is restricted to the solution manifold by eliminating
time derivatives through the invariant-surface conditions and second
space derivatives through the equations themselves.  What remains is a
function on the first-order jet (t, x, u, v, w, u_x, v_x, w_x); the
operator is a conditional symmetry exactly when that function vanishes
identically, which is judged here by randomized evaluation against a
scale built from the residual's own additive terms.

A second, independent route is `determining_residuals`: for operators
whose field coefficients are affine in (u, v, w) the invariance
condition splits into an explicit system of constraints on the
coefficient functions.  Both routes must agree; the test suite holds
them against each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .expr import (
    Expr, Sym, Const, EvalDomainError, UnboundSymbolError,
    add, call, compile_fn, compile_sum, const, differentiate, evaluate,
    free_symbols, mul, neg, parse, pow_, split_terms, sub, substitute, sym,
)

__all__ = [
    "FIELDS", "REDUCED_JET", "DEFAULT_SEED", "DEFAULT_BOX",
    "QOperator", "LinearCoefficients", "Report", "JetConsistencyError",
    "total_derivative", "prolong_residuals", "verify_invariance",
    "determining_residuals", "check_zero", "sample_box",
]

FIELDS = ("u", "v", "w")
REDUCED_JET = ("t", "x", "u", "v", "w", "u_x", "v_x", "w_x")

DEFAULT_SEED = 104729
DEFAULT_BOX: dict = {
    "t": (0.0, 1.0), "x": (-1.0, 1.0),
    "u": (-1.0, 1.0), "v": (-1.0, 1.0), "w": (-1.0, 1.0),
    "u_x": (-1.0, 1.0), "v_x": (-1.0, 1.0), "w_x": (-1.0, 1.0),
}

_ALLOWED_COEFF_SYMBOLS = frozenset(("t", "x", "u", "v", "w"))


class JetConsistencyError(RuntimeError):
    """The reduced residual kept a jet symbol it should not contain."""


def _as_coeff(e) -> Expr:
    e = parse(e) if isinstance(e, str) else e
    if not isinstance(e, Expr):
        e = const(e)
    extra = free_symbols(e) - _ALLOWED_COEFF_SYMBOLS
    if extra:
        raise ValueError(
            f"operator coefficient depends on {sorted(extra)}; only t, x, u, v, w are allowed")
    return e


@dataclass(frozen=True)
class QOperator:
    """Conditional symmetry operator with unit time coefficient.

    `xi` is the space coefficient, `eta` the three field coefficients;
    all are expressions in (t, x, u, v, w).
    """

    xi: Expr
    eta: tuple

    def __post_init__(self):
        object.__setattr__(self, "xi", _as_coeff(self.xi))
        object.__setattr__(self, "eta", tuple(_as_coeff(e) for e in self.eta))
        if len(self.eta) != 3:
            raise ValueError("exactly three field coefficients are required")

    def scaled(self, factor) -> "QOperator":
        """Multiply all coefficients by a nonzero constant, then renormalize
        the time coefficient back to one.  The two steps cancel exactly, so
        the operator is unchanged; kept for equivalence-class tests."""
        f = Fraction(factor)
        if f == 0:
            raise ValueError("scaling factor must be nonzero")
        inv = 1 / f
        return QOperator(
            xi=mul(const(f), const(inv), self.xi),
            eta=tuple(mul(const(f), const(inv), e) for e in self.eta),
        )


@dataclass(frozen=True)
class LinearCoefficients:
    """Affine decomposition of the field coefficients of an operator.

    eta^1 = r1 u + q1 v + h1 w + p1
    eta^2 = r2 v + q2 u + h2 w + p2
    eta^3 = r3 w + q3 u + h3 v + p3

    with r, q, h, p functions of (t, x) only.  Note the leading terms run
    along the diagonal: each r multiplies the operator's own field.
    """

    r: tuple
    q: tuple
    h: tuple
    p: tuple

    def __post_init__(self):
        for group in (self.r, self.q, self.h, self.p):
            if len(group) != 3:
                raise ValueError("coefficient groups come in threes")
            for e in group:
                bad = free_symbols(_as_coeff(e)) & set(FIELDS)
                if bad:
                    raise ValueError(f"coefficient {e} may depend on t and x only")
        object.__setattr__(self, "r", tuple(_as_coeff(e) for e in self.r))
        object.__setattr__(self, "q", tuple(_as_coeff(e) for e in self.q))
        object.__setattr__(self, "h", tuple(_as_coeff(e) for e in self.h))
        object.__setattr__(self, "p", tuple(_as_coeff(e) for e in self.p))

    def etas(self) -> tuple:
        u, v, w = sym("u"), sym("v"), sym("w")
        r, q, h, p = self.r, self.q, self.h, self.p
        return (
            add(mul(r[0], u), mul(q[0], v), mul(h[0], w), p[0]),
            add(mul(r[1], v), mul(q[1], u), mul(h[1], w), p[1]),
            add(mul(r[2], w), mul(q[2], u), mul(h[2], v), p[2]),
        )

    def to_operator(self, xi=0) -> QOperator:
        return QOperator(xi=_as_coeff(xi), eta=self.etas())

    @classmethod
    def from_operator(cls, op: QOperator) -> "LinearCoefficients":
        """Extract the affine decomposition; fails if any eta is not affine
        in the fields."""
        u, v, w = sym("u"), sym("v"), sym("w")
        zeros = {"u": 0, "v": 0, "w": 0}
        diag = (u, v, w)
        cross = ((v, w), (u, w), (u, v))
        rs, qs, hs, ps = [], [], [], []
        for k, eta in enumerate(op.eta):
            rk = differentiate(eta, diag[k])
            qk = differentiate(eta, cross[k][0])
            hk = differentiate(eta, cross[k][1])
            for c in (rk, qk, hk):
                if free_symbols(c) & set(FIELDS):
                    raise ValueError(
                        f"eta^{k + 1} is not affine in the fields: {eta}")
            rs.append(rk)
            qs.append(qk)
            hs.append(hk)
            ps.append(substitute(eta, zeros))
        return cls(r=tuple(rs), q=tuple(qs), h=tuple(hs), p=tuple(ps))


# ---------------------------------------------------------------------------
# prolongation

def total_derivative(e: Expr, direction: str) -> Expr:
    """Total derivative on the jet space.

    D_x e = e_x + sum over fields of (f_x e_f + f_xx e_{f_x})
    D_t e = e_t + sum over fields of (f_t e_f + f_tx e_{f_x})

    Inputs may depend on t, x, the fields and their first x-derivatives.
    """
    if direction not in ("t", "x"):
        raise ValueError("direction must be 't' or 'x'")
    parts = [differentiate(e, direction)]
    for f in FIELDS:
        df = differentiate(e, f)
        if not (isinstance(df, Const) and df.value == 0):
            parts.append(mul(sym(f"{f}_{direction}"), df))
        dfx = differentiate(e, f"{f}_x")
        if not (isinstance(dfx, Const) and dfx.value == 0):
            second = f"{f}_xx" if direction == "x" else f"{f}_tx"
            parts.append(mul(sym(second), dfx))
    return add(*parts)


def prolong_residuals(op: QOperator, system) -> tuple:
    """Invariance residuals of the operator on the system's manifold.

    For each component k the prolonged operator applied to
    `d_k f_xx - f_t + C^k` contributes

        R_k = d_k sigma^k_xx - rho^k_t + sum_j eta^j dC^k/du^j

    with the first and second prolongation coefficients

        rho^k_x   = D_x eta^k - f^k_x D_x xi
        rho^k_t   = D_t eta^k - f^k_x D_t xi
        sigma^k_xx = D_x rho^k_x - f^k_xx D_x xi.

    The manifold substitution runs in a fixed order: first every f_t is
    replaced by eta - xi f_x, then every f_xx by (f_t - C)/d with the
    first replacement already inlined.  The result lives on the reduced
    jet (t, x, u, v, w, u_x, v_x, w_x).
    """
    xi = op.xi
    dxi_x = total_derivative(xi, "x")
    dxi_t = total_derivative(xi, "t")
    ts_rule = {
        f"{f}_t": sub(op.eta[k], mul(xi, sym(f"{f}_x")))
        for k, f in enumerate(FIELDS)
    }
    xx_rule = {
        f"{f}_xx": mul(const(Fraction(1, 1) / Fraction(system.d[k])),
                       sub(ts_rule[f"{f}_t"], system.C[k]))
        for k, f in enumerate(FIELDS)
    }
    residuals = []
    for k, f in enumerate(FIELDS):
        eta_k = op.eta[k]
        fx = sym(f"{f}_x")
        rho_x = sub(total_derivative(eta_k, "x"), mul(fx, dxi_x))
        rho_t = sub(total_derivative(eta_k, "t"), mul(fx, dxi_t))
        sigma_xx = sub(total_derivative(rho_x, "x"), mul(sym(f"{f}_xx"), dxi_x))
        coupling = add(*[
            mul(op.eta[j], differentiate(system.C[k], FIELDS[j]))
            for j in range(3)
        ])
        r = add(mul(const(system.d[k]), sigma_xx), neg(rho_t), coupling)
        r = substitute(r, ts_rule)
        r = substitute(r, xx_rule)
        extra = free_symbols(r) - set(REDUCED_JET)
        if extra:
            raise JetConsistencyError(
                f"residual {k + 1} kept unexpected jet symbols {sorted(extra)}")
        residuals.append(r)
    return tuple(residuals)


# ---------------------------------------------------------------------------
# randomized zero testing

@dataclass
class Report:
    """Outcome of a randomized residual check."""

    label: str
    passed: bool
    max_residual: float
    per_equation: dict
    samples: int
    seed: object
    tol: float
    params: dict = field(default_factory=dict)
    redraws: int = 0
    notes: tuple = ()

    def to_json(self) -> str:
        return json.dumps({
            "case": self.label,
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "samples": self.samples,
            "max_residual": self.max_residual,
            "per_equation": self.per_equation,
            "pass": self.passed,
            "seed": self.seed,
            "tol": self.tol,
            "redraws": self.redraws,
            "notes": list(self.notes),
        }, indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else v.numerator
    if isinstance(v, Expr):
        return str(v)
    return v


def sample_box(rng: np.random.Generator, names: Sequence[str], box: Mapping,
               n: int) -> dict:
    cols = {}
    for name in names:
        lo, hi = box.get(name, (-1.0, 1.0))
        cols[name] = rng.uniform(lo, hi, size=n)
    return cols


def check_zero(labeled_exprs, names: Sequence[str], *, box: Mapping = None,
               n_samples: int = 200, tol: float = 1e-9,
               seed: int = DEFAULT_SEED, confirm: bool = True,
               label: str = "residuals", params: dict = None,
               notes: tuple = ()) -> Report:
    """Judge a family of expressions identically zero by sampling.

    Each expression is evaluated at uniform random points of `box` and
    compared against tol * (1 + sum of |additive terms|) pointwise.  A
    sample where evaluation leaves the real domain is redrawn and
    counted.  The whole draw is repeated under a second seed so that a
    lucky sample set cannot certify a nonzero residual.
    """
    box = dict(DEFAULT_BOX if box is None else box)
    items = list(labeled_exprs)
    fns = [(lab, compile_sum(e, names)) for lab, e in items]
    seeds = [seed, seed + 1] if confirm else [seed]
    per_eq = {lab: 0.0 for lab, _ in items}
    redraws = 0
    total = 0
    with np.errstate(all="ignore"):
        for s in seeds:
            rng = np.random.default_rng(s)
            cols = sample_box(rng, names, box, n_samples)
            total += n_samples
            for lab, fn in fns:
                args = [cols[n] for n in names]
                value, scale = fn(*args)
                value = np.broadcast_to(np.asarray(value, dtype=float), (n_samples,)).copy()
                scale = np.broadcast_to(np.asarray(scale, dtype=float), (n_samples,)).copy()
                bad = ~(np.isfinite(value) & np.isfinite(scale))
                rounds = 0
                while bad.any():
                    rounds += 1
                    if rounds > 50:
                        raise EvalDomainError(
                            f"{lab}: sampling keeps leaving the domain; shrink the box")
                    redraws += int(bad.sum())
                    fresh = sample_box(rng, names, box, int(bad.sum()))
                    for i, n_ in enumerate(names):
                        cols[n_][bad] = fresh[n_]
                    args = [cols[n2] for n2 in names]
                    value, scale = fn(*args)
                    value = np.broadcast_to(np.asarray(value, dtype=float), (n_samples,)).copy()
                    scale = np.broadcast_to(np.asarray(scale, dtype=float), (n_samples,)).copy()
                    bad = ~(np.isfinite(value) & np.isfinite(scale))
                scaled = np.abs(value) / (1.0 + scale)
                per_eq[lab] = max(per_eq[lab], float(scaled.max()))
    worst = max(per_eq.values()) if per_eq else 0.0
    return Report(
        label=label, passed=bool(worst <= tol), max_residual=worst,
        per_equation=dict(per_eq), samples=total,
        seed=seeds[0] if len(seeds) == 1 else tuple(seeds),
        tol=tol, params=dict(params or {}), redraws=redraws, notes=tuple(notes),
    )


def verify_invariance(op: QOperator, system, *, n_samples: int = 200,
                      box: Mapping = None, tol: float = 1e-9,
                      seed: int = DEFAULT_SEED, confirm: bool = True,
                      label: str = "operator", notes: tuple = ()) -> Report:
    """Randomized invariance check of an operator against a system.

    Builds the manifold-restricted residuals once, then samples the
    reduced jet inside `box` (default: unit-sized box with t in [0, 1]).
    Passing means every sample of every residual stays below
    tol * (1 + term scale) under two independent seeds.
    """
    residuals = prolong_residuals(op, system)
    labeled = [(f"eq{k + 1}", r) for k, r in enumerate(residuals)]
    params = dict(getattr(getattr(system, "params", None), "as_dict", lambda: {})())
    return check_zero(
        labeled, REDUCED_JET, box=box, n_samples=n_samples, tol=tol,
        seed=seed, confirm=confirm, label=label, params=params, notes=notes)


# ---------------------------------------------------------------------------
# determining equations for affine operators

def determining_residuals(coeffs: LinearCoefficients, xi, params) -> list:
    """Left-hand sides of the coefficient constraints for affine operators.

    `xi` must depend on (t, x) only; `params` is the parameterized model
    (HGFParams).  Returns (label, expression) pairs; the operator is a
    conditional symmetry exactly when all of them vanish identically.
    The first two constraint groups of the underlying derivation (xi
    free of the fields, etas affine) are already encoded in the types.
    """
    from .model import HGFParams, hgf_system  # local import to avoid a cycle

    if not isinstance(params, HGFParams):
        raise TypeError("params must be HGFParams")
    xi = _as_coeff(xi)
    if free_symbols(xi) & set(FIELDS):
        raise ValueError("xi may depend on t and x only")

    d1, d2, d3 = (const(params.d1), const(params.d2), const(params.d3))
    system = hgf_system(params)
    C1, C2, C3 = system.C
    u, v, w = sym("u"), sym("v"), sym("w")
    etas = coeffs.etas()
    e1, e2, e3 = etas

    def dx(e):
        return differentiate(e, "x")

    def dt(e):
        return differentiate(e, "t")

    r, q, h = coeffs.r, coeffs.q, coeffs.h
    xi_x, xi_t = dx(xi), dt(xi)

    out = []
    # cross-diffusion constraints on the off-diagonal coefficients
    out.append(("3a", add(mul(sub(d1, d2), xi, q[0]), mul(-2, d1, d2, dx(q[0])))))
    out.append(("3b", add(mul(sub(d1, d3), xi, h[0]), mul(-2, d1, d3, dx(h[0])))))
    out.append(("4a", add(mul(sub(d1, d2), xi, q[1]), mul(2, d1, d2, dx(q[1])))))
    out.append(("4b", add(mul(sub(d2, d3), xi, h[1]), mul(-2, d2, d3, dx(h[1])))))
    out.append(("5a", add(mul(sub(d1, d3), xi, q[2]), mul(2, d1, d3, dx(q[2])))))
    out.append(("5b", add(mul(sub(d2, d3), xi, h[2]), mul(2, d2, d3, dx(h[2])))))
    # the space coefficient against each diagonal coefficient
    for lab, dk, rk in (("6", d1, r[0]), ("7", d2, r[1]), ("8", d3, r[2])):
        out.append((lab, add(xi_t, mul(-1, dk, dx(dx(xi))), mul(2, dk, dx(rk)),
                             mul(2, xi, xi_x))))

    # full field-dependent constraints, one per component
    def component(eta_k, d_k, C_k, own, others):
        (d_a, C_a, eta_a, slot_a), (d_b, C_b, eta_b, slot_b) = others
        return add(
            mul(e1, differentiate(C_k, "u")),
            mul(e2, differentiate(C_k, "v")),
            mul(e3, differentiate(C_k, "w")),
            mul(sub(mul(2, xi_x), differentiate(eta_k, own)), C_k),
            mul(-1, mul(d_k, pow_(d_a, -1)), differentiate(eta_k, slot_a), C_a),
            mul(-1, mul(d_k, pow_(d_b, -1)), differentiate(eta_k, slot_b), C_b),
            mul(d_k, dx(dx(eta_k))),
            neg(dt(eta_k)),
            mul(-2, xi_x, eta_k),
            mul(sub(mul(d_k, pow_(d_a, -1)), const(1)), eta_a,
                differentiate(eta_k, slot_a)),
            mul(sub(mul(d_k, pow_(d_b, -1)), const(1)), eta_b,
                differentiate(eta_k, slot_b)),
        )

    out.append(("9", component(e1, d1, C1, "u",
                               ((d2, C2, e2, "v"), (d3, C3, e3, "w")))))
    out.append(("10", component(e2, d2, C2, "v",
                                ((d1, C1, e1, "u"), (d3, C3, e3, "w")))))
    out.append(("11", component(e3, d3, C3, "w",
                                ((d1, C1, e1, "u"), (d2, C2, e2, "v")))))
    return out


def determining_report(coeffs: LinearCoefficients, xi, params, *,
                       n_samples: int = 200, tol: float = 1e-8,
                       seed: int = DEFAULT_SEED,
                       label: str = "determining") -> Report:
    """Randomized zero test over all determining residuals."""
    items = determining_residuals(coeffs, xi, params)
    names = ("t", "x", "u", "v", "w")
    return check_zero(items, names, n_samples=n_samples, tol=tol, seed=seed,
                      label=label, params=params.as_dict())
