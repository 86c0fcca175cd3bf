"""Closed forms, brute-force search and agreement with the solver."""

import math
import numpy as np
import pytest

from supinf.common.SExceptions import SExceptionInfeasible, SExceptionInvalidMesh
from supinf.core.SMesh import BuildMesh
from supinf.core.SSolver import SolveP
from supinf.core.SFunctionals import BuildDensityF, BuildDensityG
from supinf.core.SConstraints import BuildConstraint
from supinf.core.SProblem import SProblem
from supinf.oracle.SOracle import (SOracleConfig, OracleSample, SOracleEvaluator, BruteForce, Analytic1DIsoperimetric,
                                   OracleDensityF, OracleDensityG, OracleInner,
                                   Analytic1DP2, LpClosedForm, FDCheck, BuildCase, ORACLE_CASES, RunCase, CaseNames)


def test_oracle_sampling_agrees_with_mesh_sampling():
    rng = np.random.default_rng(5)
    for mesh in (BuildMesh(1, [0.0, 2.0], 7), BuildMesh(2, [[0.0, 1.0], [-1.0, 1.0]], [3, 4])):
        values = rng.standard_normal((3, mesh.nNodes, 2))
        U, P = OracleSample(mesh, values)
        for b in range(3):
            Um, Pm = mesh.Sample(values[b])
            np.testing.assert_allclose(U[b], Um, atol=1e-12)
            np.testing.assert_allclose(P[b], Pm, atol=1e-12)


def test_closed_form_lp_values():
    table = LpClosedForm(256)
    for p in ("1", "2", "4", "8"):
        assert table[f"p={p}"]["computed"] == pytest.approx(table[f"p={p}"]["exact"], abs=1e-4)
    assert table["p=2"]["exact"] == pytest.approx(0.447214, abs=1e-6)
    assert table["sup"]["computed"] == pytest.approx(1.0, abs=1e-2)


def test_isoperimetric_closed_forms():
    assert Analytic1DIsoperimetric(0.2)[0] == pytest.approx(0.8)
    assert Analytic1DIsoperimetric(0.75, 1.0)[0] == pytest.approx(4.0)
    G = 1.0
    below = Analytic1DIsoperimetric(0.5 * G - 1e-9, G)[0]
    above = Analytic1DIsoperimetric(0.5 * G + 1e-9, G)[0]
    assert below == pytest.approx(above, abs=1e-7)
    with pytest.raises(SExceptionInfeasible):
        Analytic1DIsoperimetric(1.0, 1.0)
    with pytest.raises(ValueError):
        Analytic1DIsoperimetric(-0.1)
    _, profile = Analytic1DIsoperimetric(0.75, 1.0)
    np.testing.assert_allclose(profile([0.0, 0.125, 0.5, 1.0]), [0.0, 0.5, 1.0, 0.0])


def test_p2_closed_form():
    profile, F2 = Analytic1DP2(1.0 / 12.0)
    assert F2 == pytest.approx(1.0 / math.sqrt(12.0))
    assert F2 == pytest.approx(0.288675, abs=1e-6)
    assert profile([0.5])[0] == pytest.approx(0.125)


def test_fd_check():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert FDCheck(lambda x: 0.5 * x @ A @ x, lambda x: A @ x, np.array([0.3, -0.7])) <= 1e-8
    assert FDCheck(lambda x: 0.5 * x @ A @ x, lambda x: 2.0 * A @ x, np.array([0.3, -0.7])) > 0.1
    with pytest.raises(ValueError):
        FDCheck(lambda x: 0.0, lambda x: np.zeros(1), np.zeros(1), step=0.0)


def test_evaluator_treats_integral_equality_as_equation():
    problem = BuildCase(4, {"kind": "isoperimetric", "h": "component_0", "H": 0.25, "equality": True})
    evaluator = SOracleEvaluator(problem, 2.0)
    assert evaluator.integralEquation and evaluator.hasEquation
    F, inequality, equality = evaluator.Evaluate(np.array([[0.25, 0.25, 0.25], [0.0, 0.0, 0.0]]))
    # trapezoid integral of the plateau 0.25 with zero ends: 0.25·0.75
    np.testing.assert_allclose(equality, [0.25 - 0.1875, 0.25])
    np.testing.assert_allclose(inequality, 0.0)
    assert F[1] == 0.0


def test_unconstrained_brute_force_is_zero():
    value, field = BruteForce(BuildCase(4, {"kind": "none"}), 2.0)
    assert value == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(field.values, 0.0, atol=1e-6)


def test_brute_force_limits():
    with pytest.raises(SExceptionInvalidMesh):
        BruteForce(BuildCase(8, {"kind": "none"}), 2.0)
    with pytest.raises(SExceptionInvalidMesh):
        BruteForce(BuildCase(7, {"kind": "none"}), 2.0, SOracleConfig(resolution=101))


def test_brute_force_reports_infeasible_problems():
    problem = BuildCase(3, {"kind": "isoperimetric", "H": -0.75}, g="abs", G=0.5)
    value, field = BruteForce(problem, 2.0)
    assert value == math.inf and field is None


def test_p2_isoperimetric_agrees_with_solver():
    builder, p = ORACLE_CASES["isoperimetric_p2"]
    problem = builder()
    oracle, _ = BruteForce(problem, p)
    state = SolveP(problem, p)
    assert state.converged
    assert state.Fp == pytest.approx(oracle, abs=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["unilateral_lower_p2", "ball_center_p4", "box_p2", "cap_isoperimetric_p4"])
def test_constraint_kinds_agree_with_solver(name):
    builder, p = ORACLE_CASES[name]
    problem = builder()
    oracle, _ = BruteForce(problem, p)
    state = SolveP(problem, p)
    assert math.isfinite(oracle)
    assert state.Fp == pytest.approx(oracle, abs=1e-4)


def test_named_cases():
    names = CaseNames()
    assert set(ORACLE_CASES) <= set(names)
    assert {"triangle", "trapezoid", "p2_isoperimetric", "switch_continuity", "lp_closed_form"} <= set(names)
    assert RunCase("triangle")["slope"] == pytest.approx(0.8)
    switch = RunCase("switch_continuity")
    assert switch["at"] == pytest.approx(2.0)
    with pytest.raises(KeyError):
        RunCase("nonexistent")


@pytest.mark.slow
@pytest.mark.parametrize("p", [2.0, 4.0])
@pytest.mark.parametrize("name", ["unconstrained", "isoperimetric_p2", "cap_isoperimetric_p4", "unilateral_lower_p2",
                                  "ball_center_p4", "box_p2"])
def test_each_case_agrees_with_solver_at_low_exponents(name, p):
    builder, _ = ORACLE_CASES[name]
    problem = builder()
    oracle, _ = BruteForce(problem, p)
    state = SolveP(problem, p)
    assert math.isfinite(oracle)
    assert state.feasibility <= 1e-6
    assert state.Fp == pytest.approx(oracle, abs=1e-4)


@pytest.mark.parametrize("name", ["isoperimetric_p2", "box_p2"])
def test_multistart_search_agrees_with_grid_search(name):
    builder, p = ORACLE_CASES[name]
    problem = builder()
    grid, _ = BruteForce(problem, p)
    multistart, field = BruteForce(problem, p, SOracleConfig(mode="multistart", starts=12, seed=3))
    assert field is not None
    assert multistart == pytest.approx(grid, abs=1e-5)


@pytest.mark.parametrize("kind, options, components", [
    ("holonomic", {"pi": "sphere_squared", "radius": 0.4}, 2),
    ("unilateral", {"pi": "ball", "radius": 0.2}, 2),
    ("inclusion_ball", {"radius": 0.3, "center": [0.1, -0.1]}, 2),
    ("inclusion_box", {"bounds": [-0.2, 0.3]}, 2),
    ("isoperimetric", {"h": "dirichlet", "H": 0.5, "equality": True}, 2),
    ("isoperimetric", {"h": "mass", "H": 0.1}, 2),
])
def test_oracle_formulas_agree_with_problem_formulas(kind, options, components):
    rng = np.random.default_rng(41)
    mesh = BuildMesh(2, [[0.0, 1.0], [0.0, 1.0]], [3, 4])
    tensor = np.array([[2.0, 0.3, 0.0, 0.1], [0.3, 1.5, 0.2, 0.0], [0.0, 0.2, 1.0, 0.0], [0.1, 0.0, 0.0, 1.2]])
    problem = SProblem(mesh, BuildDensityF("gradient_norm", components, 2, tensor=tensor), BuildDensityG("abs"), 1.0,
                       BuildConstraint(kind, components, **options), components)
    values = rng.standard_normal((4, mesh.nNodes, components))
    U, P = OracleSample(mesh, values)
    x, w = mesh.quadPoints, mesh.quadWeights
    f, g = OracleDensityF(problem.densityF, x, P), OracleDensityG(problem.densityG, U)
    c = OracleInner(problem.constraint, U, P, w)
    for b in range(4):
        Ub, Pb = mesh.Sample(values[b])
        np.testing.assert_allclose(f[b], problem.densityF.ValuesFrom(x, Ub, Pb), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(g[b], problem.densityG.ValuesFrom(x, Ub, Pb), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(c[b], problem.constraint.InnerFrom(x, Ub, Pb, w), rtol=1e-12, atol=1e-14)
