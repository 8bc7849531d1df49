"""Symmetry reductions: ansatz construction, the reduced profile
systems, the fixed-step integrator, and lifting profiles back to checked
solutions of the governing system.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from hgfsym.expr import differentiate, evaluate, parse, sym, to_str
from hgfsym.model import case2_system
from hgfsym.reduction import (Ansatz, BlowUpError, ReducedODESystem,
                              ReductionError, build_ansatz, first_integral,
                              integrate_ode, lift_and_verify, profile_tan,
                              profile_tanh, reduced_ode_system,
                              write_trajectory_csv)
from hgfsym.symmetry import verify_invariance

PARAMS = {"d1": 1, "d2": 2, "d3": Fraction(1, 2)}


def test_build_ansatz_q1_structure():
    a = build_ansatz("Q1", PARAMS)
    assert a.rate == -1, f"rate d3/(d3-d1) must be -1, got {a.rate}"
    assert to_str(a.fields[0]) == "phi1 - phi3*exp(-t)"
    assert to_str(a.fields[2]) == "phi3*exp(-t)"


def test_build_ansatz_q2_structure():
    a = build_ansatz("Q2", PARAMS)
    assert to_str(a.fields[0]) == "phi1*exp(-t)"
    assert to_str(a.fields[2]) == "phi3 - phi1*exp(-t)", \
        f"w field: {to_str(a.fields[2])}"


def test_ansatz_operators_are_symmetries():
    """Both ansatz operators pass the invariance check against the
    matching model instance."""
    system = case2_system(**PARAMS)
    for which in ("Q1", "Q2"):
        a = build_ansatz(which, PARAMS)
        rep = verify_invariance(a.operator, system, label=which)
        assert rep.passed, f"{which}: residual {rep.max_residual:.3e}"


def test_build_ansatz_validation():
    with pytest.raises(ReductionError):
        build_ansatz("Q3", PARAMS)
    with pytest.raises(ReductionError):
        build_ansatz("Q1", {"d1": 1, "d2": 1, "d3": Fraction(1, 2)})
    with pytest.raises(ReductionError):
        build_ansatz("Q1", {"d1": 1, "d2": 2, "d3": -1})


def test_reduced_system_rhs_values():
    """Frozen right-hand sides at hand-checked points."""
    sysA = reduced_ode_system("sys_4_6", PARAMS)
    env = {"x": 0.0, "phi1": 0.5, "phi2": 0.5, "phi3": 2.0}
    rhs3 = evaluate(sysA.rhs[2], env)
    assert rhs3 == -2.0, f"phi3'' at phi1+phi2=1, phi3=2 must be -2, got {rhs3}"
    rhs1 = evaluate(sysA.rhs[0], env)
    assert rhs1 == 0.0, "phi1'' vanishes when 1 - phi1 - phi2 = 0"

    sysB = reduced_ode_system("sys_4_8", PARAMS)
    envB = {"x": 0.0, "phi1": 3.0, "phi2": 0.0, "phi3": 1.0}
    rhs1B = evaluate(sysB.rhs[0], envB)
    assert rhs1B == -6.0, f"phi1'' at phi2=0, phi1=3 must be -6, got {rhs1B}"


def test_reduced_system_validation():
    with pytest.raises(ReductionError):
        reduced_ode_system("sys_4_9", PARAMS)
    with pytest.raises(ReductionError):
        reduced_ode_system("sys_4_8", {"d1": 1, "d2": 2, "d3": 2})


def test_scalar_profile_equation():
    sysC = reduced_ode_system("eq_4_13", {"d1": 1})
    assert sysC.n_components == 1
    got = evaluate(sysC.rhs[0], {"x": 0.0, "phi1": 3.0})
    assert got == 6.0, f"phi(phi-1) at phi=3 must be 6, got {got}"


def test_integrate_matches_harmonic_oscillator():
    """Fixed-step fourth-order integration of phi'' = -phi against the
    cosine, an independent closed form."""
    system = ReducedODESystem(id="oscillator", params={},
                              rhs=(parse("-phi1"),))
    traj = integrate_ode(system, [1.0], [0.0], (0.0, math.pi), h=1e-3)
    err = np.max(np.abs(traj.values[:, 0] - np.cos(traj.x)))
    assert err <= 1e-12, f"cosine reproduction error {err:.3e}"
    assert traj.max_local_error < 1e-14


def test_integrate_sinusoidal_mode_of_reduced_system():
    """With phi1 + phi2 = 1 frozen, the third profile of the first
    reduced system obeys phi3'' = -phi3; start it as a pure sine."""
    system = reduced_ode_system("sys_4_6", PARAMS)
    traj = integrate_ode(system, [0.6, 0.4, 0.0], [0.0, 0.0, 0.25],
                         (0.0, math.pi), h=1e-3)
    want = 0.25 * np.sin(traj.x)
    err = np.max(np.abs(traj.values[:, 2] - want))
    assert err <= 1e-8, f"phi3 drifts from 0.25 sin x by {err:.3e}"
    drift1 = np.max(np.abs(traj.values[:, 0] - 0.6))
    assert drift1 <= 1e-12, f"constant phi1 drifted by {drift1:.3e}"


def test_integrator_step_snapping():
    system = ReducedODESystem(id="freefall", params={}, rhs=(parse("2"),))
    traj = integrate_ode(system, [0.0], [0.0], (0.0, 1.0), h=0.3)
    assert traj.x[-1] == 1.0, "grid must land exactly on the right endpoint"
    assert abs(traj.values[-1, 0] - 1.0) < 1e-14, "phi = x^2 at x = 1"


def test_blow_up_reports_location():
    """Starting the scalar profile equation above its separatrix drives
    it to a pole a finite distance out."""
    system = reduced_ode_system("eq_4_13", {"d1": 1})
    with pytest.raises(BlowUpError) as err:
        integrate_ode(system, [1.5], [0.0], (0.0, 10.0), h=1e-3)
    assert 2.0 < err.value.last_x < 4.0, \
        f"pole location {err.value.last_x} looks wrong"


def test_first_integral_known_profiles():
    """The two closed-form profiles sit on the frozen energy levels:
    the tangent profile at 0, the hyperbolic one at 1/3."""
    d1 = 1
    x = 0.4
    tan_p = profile_tan(d1)
    I_tan = first_integral(d1, evaluate(tan_p, {"x": x}),
                           evaluate(differentiate(tan_p, sym("x")), {"x": x}))
    assert abs(I_tan) <= 1e-12, f"tangent profile energy {I_tan:.3e}"
    tanh_p = profile_tanh(d1)
    I_tanh = first_integral(d1, evaluate(tanh_p, {"x": x}),
                            evaluate(differentiate(tanh_p, sym("x")), {"x": x}))
    assert abs(I_tanh - 1.0 / 3.0) <= 1e-12, \
        f"hyperbolic profile energy {I_tanh} vs 1/3"


def test_first_integral_conserved_along_trajectory():
    system = reduced_ode_system("eq_4_13", {"d1": 1})
    traj = integrate_ode(system, [-0.5], [0.0], (0.0, 3.0), h=1e-3)
    I = [first_integral(1, v, s) for v, s in
         zip(traj.values[:, 0], traj.slopes[:, 0])]
    drift = max(I) - min(I)
    assert drift <= 1e-12, f"first integral drifts by {drift:.3e}"
    assert abs(I[0] - 1.0 / 3.0) <= 1e-15, \
        f"energy of (-1/2, 0) start must be 1/3, got {I[0]}"


def test_trajectory_matches_hyperbolic_profile():
    """The orbit through (-1/2, 0) is the hyperbolic closed form shifted
    to its minimum."""
    system = reduced_ode_system("eq_4_13", {"d1": 1})
    traj = integrate_ode(system, [-0.5], [0.0], (0.0, 3.0), h=1e-3)
    want = 0.5 * (-1.0 + 3.0 * np.tanh(traj.x / 2.0) ** 2)
    err = np.max(np.abs(traj.values[:, 0] - want))
    assert err <= 1e-12, f"profile deviates from closed form by {err:.3e}"


def test_lift_analytic_solution_passes():
    """Lifting the closed-form profile triple through the first ansatz
    solves the matching model instance."""
    a = build_ansatz("Q1", PARAMS)
    system = case2_system(**PARAMS)
    k, beta, D = 0.25, 0.6, 1.0
    phis = (parse(f"{beta}"), parse(f"{1 - beta}"),
            parse(f"{k * (2 - 1) * D}*sin(x)"))
    rep = lift_and_verify(a, phis, system, ts=(0.0, 0.5, 1.0),
                          xs=np.linspace(0.1, 3.0, 40))
    assert rep.passed, f"analytic lift residual {rep.max_residual:.3e}"


def test_lift_analytic_rejects_wrong_profile():
    a = build_ansatz("Q1", PARAMS)
    system = case2_system(**PARAMS)
    phis = (parse("0.6"), parse("0.4"), parse("x"))
    rep = lift_and_verify(a, phis, system, ts=(0.0, 1.0),
                          xs=np.linspace(0.1, 3.0, 40))
    assert not rep.passed
    assert rep.max_residual > 1e-2, \
        f"wrong profile only reached {rep.max_residual:.3e}"


def test_lift_trajectory_interior_refinement():
    """Finite-difference lift residuals fall at the centered-stencil rate
    when the one-sided edge bands are excluded."""
    a = build_ansatz("Q1", PARAMS)
    system = case2_system(**PARAMS)
    red = reduced_ode_system("sys_4_6", PARAMS)
    traj = integrate_ode(red, [0.6, 0.4, 0.0], [0.0, 0.0, 0.25],
                         (0.0, math.pi), h=1e-3)
    res = []
    for stride in (64, 32):
        rep = lift_and_verify(a, traj, system, ts=(0.0, 1.0), stride=stride,
                              interior_only=True)
        res.append(rep.max_residual)
    order = math.log2(res[0] / res[1])
    assert order >= 3.5, f"stride halving gained only {order:.2f} orders"
    assert res[1] <= 1e-8, f"fine-stride residual {res[1]:.3e}"


def test_lift_trajectory_requires_stride():
    a = build_ansatz("Q1", PARAMS)
    system = case2_system(**PARAMS)
    red = reduced_ode_system("sys_4_6", PARAMS)
    traj = integrate_ode(red, [0.6, 0.4, 0.0], [0.0, 0.0, 0.25],
                         (0.0, 1.0), h=1e-2)
    with pytest.raises(ReductionError):
        lift_and_verify(a, traj, system, ts=(0.0,))


def test_trajectory_csv_layout(tmp_path):
    system = reduced_ode_system("eq_4_13", {"d1": 1})
    traj = integrate_ode(system, [-0.5], [0.0], (0.0, 1.0), h=0.1)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,phi1,phi1'"
    assert len(lines) == traj.x.shape[0] + 1
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == -0.5
