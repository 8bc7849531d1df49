"""Model catalog: parameter validation, the thirteen symmetry-admitting
specializations, admissible random draws, the free-function gate, and the
structural transformations to diffusive Lotka-Volterra form.
"""

import json
import os
from fractions import Fraction

import numpy as np
import pytest

from hgfsym.expr import evaluate, parse, to_str
from hgfsym.model import (DEFAULT_CASE_PARAMS, HGFParams, ModelError,
                          RDSystem, RestrictionError, as_number, case2_system,
                          case_ids, case_info, drift_exponential, hgf_system,
                          load_definition, random_case_params,
                          reaction_affine_fit, read_definition_file,
                          table_case, transform_to_dlv)
from hgfsym.symmetry import verify_invariance

RNG_SEED = 20260816


def test_as_number_exact_rationals():
    v = as_number("5/9")
    assert v == Fraction(5, 9) and isinstance(v, Fraction)
    assert as_number("0.5") == 0.5
    assert as_number(3) == 3
    with pytest.raises((ModelError, ValueError)):
        as_number("five")


def test_params_validation():
    good = HGFParams(d1=1, d2=2, d3=Fraction(1, 2), a1=1, a2=1, a3=0,
                     a4=Fraction(1, 2), a5=0)
    assert good.as_dict()["d3"] == Fraction(1, 2)
    with pytest.raises(ModelError):
        HGFParams(d1=0, d2=2, d3=1, a1=1, a2=1, a3=0, a4=1, a5=0)
    with pytest.raises(ModelError):
        HGFParams(d1=1, d2=2, d3=1, a1=-1, a2=1, a3=0, a4=1, a5=0)
    with pytest.raises(ModelError):
        HGFParams(d1=1, d2=2, d3=1, a1=1, a2=1, a3=0, a4=0, a5=0)


def test_reaction_terms_values():
    """Spot-check the three reaction expressions at a hand-computed
    point: u=0.3, v=0.2, w=0.1 with a=(2, 1/2, 1, 1/2, 1/4)."""
    p = HGFParams(d1=1, d2=1, d3=1, a1=2, a2=Fraction(1, 2), a3=1,
                  a4=Fraction(1, 2), a5=Fraction(1, 4))
    system = hgf_system(p)
    env = {"u": 0.3, "v": 0.2, "w": 0.1}
    got = [evaluate(c, env) for c in system.C]
    want = [0.3 * (1 - 0.3 - 2 * 0.2),
            0.5 * 0.2 * (1 - 0.3 - 2 * 0.2) + 0.3 * 0.1 + 2 * 0.2 * 0.1,
            1 * 0.1 * (1 - 0.1) - 0.5 * 0.3 * 0.1 - 0.25 * 0.2 * 0.1]
    for k, (g, w_) in enumerate(zip(got, want)):
        assert abs(g - w_) < 1e-15, f"C{k+1} at test point: {g} vs {w_}"


def test_case2_system_derived_coefficients():
    system = case2_system(1, 2, Fraction(1, 2))
    p = system.params
    assert p.a2 == Fraction(3, 1), f"a2 must be (d2-d3)/(d1-d3)=3, got {p.a2}"
    assert p.a4 == Fraction(1, 2), f"a4 must be d3/d1, got {p.a4}"
    assert p.a5 == Fraction(1, 2)
    with pytest.raises(RestrictionError):
        case2_system(1, 1, Fraction(1, 2))
    with pytest.raises(RestrictionError):
        case2_system(1, 2, 1)


def test_rdsystem_rejects_stray_symbols():
    with pytest.raises(ModelError):
        RDSystem(d=(1, 1, 1), C=("u*q", "v", "w"))


def test_all_catalog_operators_are_symmetries():
    """Every operator of every case passes the invariance check at its
    default parameters, at machine-level residuals."""
    total_ops = 0
    for case_id in case_ids():
        system, ops = table_case(case_id, DEFAULT_CASE_PARAMS[case_id])
        assert ops, f"case {case_id} produced no operators"
        for i, op in enumerate(ops):
            rep = verify_invariance(op, system,
                                    label=f"case-{case_id}/op-{i+1}")
            assert rep.passed and rep.max_residual < 1e-12, \
                f"case {case_id} op {i+1}: residual {rep.max_residual:.3e}"
            total_ops += 1
    assert total_ops == 18, f"catalog should expose 18 operators, got {total_ops}"


def test_case_ids_and_info():
    assert case_ids() == tuple(range(1, 14))
    info = case_info(2)
    assert info["required"] == ("d1", "d2", "d3", "a1")
    assert "d1 != d2" in info["restrictions"]
    with pytest.raises(ModelError):
        case_info(14)


def test_restrictions_raise_with_named_condition():
    with pytest.raises(RestrictionError) as err:
        table_case(2, {"d1": 1, "d2": 1, "d3": Fraction(1, 2), "a1": 1})
    assert "d1 != d2" in str(err.value), f"message: {err.value}"
    with pytest.raises(RestrictionError) as err:
        table_case(1, {"d1": 1, "d2": 2, "d3": 1, "a3": 0, "a4": 1})
    assert "a3" in str(err.value)


def test_unknown_and_missing_parameters():
    with pytest.raises(ModelError):
        table_case(2, {"d1": 1, "d2": 2, "d3": Fraction(1, 2), "a1": 1,
                       "bogus": 3})
    with pytest.raises(ModelError):
        table_case(2, {"d1": 1, "d2": 2})


def test_random_case_params_admissible_everywhere():
    """Random draws satisfy each case's restrictions and produce passing
    operators (smaller sample of the acceptance sweep)."""
    rng = np.random.default_rng(RNG_SEED)
    for case_id in case_ids():
        for _ in range(5):
            params = random_case_params(case_id, rng)
            system, ops = table_case(case_id, params)
            for op in ops:
                rep = verify_invariance(op, system, n_samples=100)
                assert rep.passed, \
                    f"case {case_id} draw {params} residual " \
                    f"{rep.max_residual:.3e}"


def test_free_function_gate():
    """Cases with a free profile P accept solutions of P_t = d2 P_xx and
    reject anything else; a2*P = 0 is enforced."""
    params = dict(DEFAULT_CASE_PARAMS[6])
    params["a2"] = 0
    system, ops = table_case(6, params, P="exp(x+2*t)")
    rep = verify_invariance(ops[0], system)
    assert rep.passed, f"heat-gate P failed: {rep.max_residual:.3e}"
    with pytest.raises(ModelError):
        table_case(6, params, P="exp(x+3*t)")
    with pytest.raises(RestrictionError):
        table_case(6, DEFAULT_CASE_PARAMS[6], P="exp(x+2*t)")


def test_case13_free_function():
    params = dict(DEFAULT_CASE_PARAMS[13])
    system, ops = table_case(13, params, P="exp(x+t/2)")
    rep = verify_invariance(ops[0], system)
    assert rep.passed, f"case 13 with P: {rep.max_residual:.3e}"


def test_drift_exponential_value():
    e = drift_exponential(Fraction(1, 10), 1, 2)
    got = evaluate(e, {"t": 0.7, "x": 1.3})
    import math
    c = 0.1 * (2 - 1) / (2 * 1 * 2)
    want = math.exp(c * (1.3 + 0.1 * (2 - 1) / (2 * 1) * 0.7))
    assert abs(got - want) < 1e-15, f"drift factor {got} vs {want}"


def test_perturbed_model_coefficient_breaks_every_case():
    """1% perturbation of a pinned reaction coefficient is loud: each
    case's first operator fails well above the reporting threshold."""
    from dataclasses import replace
    perturb = {1: "a2", 2: "a2", 3: "a2", 4: "a2", 5: "a4", 6: "a4",
               7: "a2", 8: "a2", 9: "a2", 10: "a2", 11: "a4", 12: "a4",
               13: "a4"}
    for case_id in (1, 2, 5, 13):
        system, ops = table_case(case_id, DEFAULT_CASE_PARAMS[case_id])
        name = perturb[case_id]
        bad = replace(system.params,
                      **{name: getattr(system.params, name) * Fraction(101, 100)})
        rep = verify_invariance(ops[0], hgf_system(bad))
        assert not rep.passed and rep.max_residual > 1e-4, \
            f"case {case_id} {name}*1.01 residual {rep.max_residual:.3e}"


def test_transform_to_dlv_case4_and_case5():
    for case_id in (4, 5):
        system, _ = table_case(case_id, DEFAULT_CASE_PARAMS[case_id])
        res = transform_to_dlv(system, "eq_2_1")
        assert res.dlv_form, \
            f"case {case_id} fit residuals {res.fit_residuals}"
        assert max(res.fit_residuals) <= 1e-9


def test_transform_to_dlv_u_plus_a1v():
    p = HGFParams(d1=1, d2=1, d3=Fraction(1, 2), a1=2, a2=1, a3=1,
                  a4=Fraction(1, 2), a5=Fraction(3, 4))
    res = transform_to_dlv(hgf_system(p), "u_plus_a1v")
    assert res.dlv_form, f"fit residuals {res.fit_residuals}"
    assert res.which == "u_plus_a1v"


def test_transform_gates():
    p = HGFParams(d1=1, d2=2, d3=Fraction(1, 2), a1=1, a2=1, a3=0,
                  a4=Fraction(1, 2), a5=Fraction(1, 2))
    with pytest.raises(RestrictionError):
        transform_to_dlv(hgf_system(p), "u_plus_a1v")
    with pytest.raises(ModelError):
        transform_to_dlv(hgf_system(p), "bogus-transform")


def test_raw_generic_system_is_not_dlv_form():
    """Without a transformation the second reaction is not of the shape
    v * (affine): the affine fit must reject it decisively."""
    p = HGFParams(d1=1, d2=1, d3=Fraction(1, 2), a1=2, a2=1, a3=1,
                  a4=Fraction(1, 2), a5=Fraction(3, 4))
    ok, residuals = reaction_affine_fit(hgf_system(p))
    assert not ok
    assert residuals[1] > 1e-2, \
        f"mixed u w term should defeat the fit, got {residuals[1]:.3e}"


def test_eq_2_1_transform_diffusivities():
    system, _ = table_case(4, DEFAULT_CASE_PARAMS[4])
    res = transform_to_dlv(system, "eq_2_1")
    d = res.system.d
    assert d[1] == 1 and d[2] == 1, f"normalized diffusivities, got {d}"


def test_load_definition_catalog_shape(tmp_path):
    path = tmp_path / "def.toml"
    path.write_text('case = 2\n[params]\nd1 = 1\nd2 = 2\nd3 = "1/2"\na1 = 1\n')
    system, ops = load_definition(str(path))
    assert len(ops) == 2
    assert system.params.a2 == 3


def test_load_definition_explicit_shape(tmp_path):
    record = {"d": [1, 2, "1/2"],
              "C": ["u*(1-u-v)", "3*v*(1-u-v)+u*w+v*w",
                    "-(1/2)*u*w-(1/2)*v*w"],
              "xi": "0", "eta": ["w", "-w", "-w"]}
    path = tmp_path / "def.json"
    path.write_text(json.dumps(record))
    system, ops = load_definition(str(path))
    assert len(ops) == 1
    rep = verify_invariance(ops[0], system)
    assert rep.passed, f"explicit record operator: {rep.max_residual:.3e}"


def test_load_definition_rejects_malformed():
    with pytest.raises(ModelError):
        load_definition({"params": {}})
    with pytest.raises(ModelError):
        load_definition({"d": [1, 2], "C": ["u", "v", "w"]})
    with pytest.raises(ModelError):
        read_definition_file("definitions.yaml")
