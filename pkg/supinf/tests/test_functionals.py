"""Lp energies, their gradients and the density catalogues."""

import math
import numpy as np
import pytest

from supinf.common.SExceptions import SExceptionInvalidExponent, SExceptionInvalidTensor
from supinf.core.SMesh import BuildMesh, SField
from supinf.core.SFunctionals import (BuildDensityF, BuildDensityG, SQuadraticDensityF, EvalLp, EvalLinf, LpSequence, LpNorm,
                                      ScaledObjective, GradScaledObjective, ScaledConstraintG, GradScaledConstraintG,
                                      MinEllipticity, SafePower)
from supinf.oracle.SOracle import FieldFDCheck


@pytest.fixture
def parabola():
    mesh = BuildMesh(1, [0.0, 1.0], 256)
    return mesh, SField.FromFunction(mesh, lambda x: x[:, 0] * (1.0 - x[:, 0]))


@pytest.mark.parametrize("p", [1.0, 2.0, 4.0, 8.0])
def test_lp_of_squared_gradient_matches_closed_form(parabola, p):
    mesh, field = parabola
    value = EvalLp(BuildDensityF("dirichlet"), field, mesh, p).value
    assert value == pytest.approx((2.0 * p + 1.0) ** (-1.0 / p), abs=1e-4)


def test_discrete_sup_of_squared_gradient(parabola):
    mesh, field = parabola
    assert EvalLinf(BuildDensityF("dirichlet"), field, mesh).value == pytest.approx(1.0, abs=1e-2)


def test_lp_sequence_is_nondecreasing_and_below_sup(parabola):
    mesh, field = parabola
    sequence, sup = LpSequence(BuildDensityF("dirichlet"), field, mesh, kMax=10)
    assert all(a <= b + 1e-14 for a, b in zip(sequence, sequence[1:]))
    assert sequence[-1] <= sup + 1e-14
    assert sup - sequence[-1] < 1e-2


def test_lp_norm_survives_large_exponents():
    weights = np.full(4, 0.25)
    values = np.array([1e3, 5e2, 1.0, 0.0])
    value = LpNorm(values, weights, 1.0, 1000.0)
    assert math.isfinite(value)
    assert value == pytest.approx(1e3 * 0.25 ** 1e-3, rel=1e-12)
    assert LpNorm(np.zeros(3), np.ones(3), 3.0, 4.0) == 0.0


def test_safe_power():
    np.testing.assert_allclose(SafePower(np.array([0.0, 2.0, 4.0]), 0.5), [0.0, math.sqrt(2.0), 2.0])
    np.testing.assert_array_equal(SafePower(np.array([0.0, 3.0]), 0.0), [1.0, 1.0])


@pytest.mark.parametrize("p", [0.5, math.inf, math.nan])
def test_invalid_exponents(parabola, p):
    mesh, field = parabola
    with pytest.raises(SExceptionInvalidExponent):
        EvalLp(BuildDensityF("dirichlet"), field, mesh, p)


def test_gradient_of_scaled_objective_matches_finite_differences():
    rng = np.random.default_rng(3)
    mesh = BuildMesh(2, [[0.0, 1.0], [0.0, 1.0]], 4)
    density = BuildDensityF("dirichlet", components=2, dim=2)
    field = SField.FromFree(mesh, 0.1 * rng.standard_normal(len(mesh.interior) * 2), 2)
    error = FieldFDCheck(mesh,
                         lambda u: ScaledObjective(density, u, mesh, 3.0),
                         lambda u: GradScaledObjective(density, u, mesh, 3.0),
                         field, step=1e-5)
    assert error <= 1e-6


def test_gradient_of_root_density_matches_finite_differences():
    rng = np.random.default_rng(4)
    mesh = BuildMesh(1, [0.0, 1.0], 8)
    density = BuildDensityF("gradient_norm")
    field = SField.FromFree(mesh, rng.uniform(0.5, 1.5, 7))
    error = FieldFDCheck(mesh,
                         lambda u: ScaledObjective(density, u, mesh, 4.0, scale=2.0),
                         lambda u: GradScaledObjective(density, u, mesh, 4.0, scale=2.0),
                         field, step=1e-6)
    assert error <= 1e-6


def test_gradient_of_sublevel_energy_matches_finite_differences():
    rng = np.random.default_rng(5)
    mesh = BuildMesh(1, [0.0, 1.0], 8)
    density = BuildDensityG("abs")
    field = SField.FromFree(mesh, rng.uniform(0.2, 1.0, 7))
    error = FieldFDCheck(mesh,
                         lambda u: ScaledConstraintG(density, u, mesh, 2.0),
                         lambda u: GradScaledConstraintG(density, u, mesh, 2.0),
                         field, step=1e-5)
    assert error <= 1e-6


def test_gradient_free_catalogue():
    eta = np.array([[3.0, 4.0], [0.0, 0.0]])
    x = np.zeros((2, 1))
    np.testing.assert_allclose(BuildDensityG("abs").Value(x, eta), [5.0, 0.0])
    np.testing.assert_allclose(BuildDensityG("quad").Value(x, eta), [25.0, 0.0])
    np.testing.assert_allclose(BuildDensityG("const", 2.5).Value(x, eta), [2.5, 2.5])
    assert BuildDensityG(None) is None
    with pytest.raises(ValueError):
        BuildDensityG("cubic")


def test_min_ellipticity_of_oscillating_coefficient():
    mesh = BuildMesh(1, [0.0, 1.0], 256)
    density = SQuadraticDensityF(coefficient=lambda x: 2.0 + np.sin(2.0 * np.pi * x[:, 0]), name="weighted_dirichlet")
    assert MinEllipticity(density, mesh) == pytest.approx(1.0, abs=1e-9)
    table = BuildDensityF("weighted_dirichlet", coefficients={"x": [0.0, 1.0], "a": [3.0, 0.5]})
    assert MinEllipticity(table) == pytest.approx(0.5)


def test_tensor_validation():
    with pytest.raises(SExceptionInvalidTensor):
        BuildDensityF("dirichlet", 1, 2, tensor=[[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(SExceptionInvalidTensor):
        BuildDensityF("dirichlet", 1, 2, tensor=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(SExceptionInvalidTensor):
        BuildDensityF("dirichlet", 1, 2, tensor=[[1.0]])
    density = BuildDensityF("dirichlet", 1, 2, tensor=[[2.0, 0.5], [0.5, 1.0]])
    assert MinEllipticity(density) == pytest.approx((3.0 - math.sqrt(2.0)) / 2.0)


SEEDS = range(20)
EXPONENTS = [1.0, 2.0, 3.0, 8.0]


def RandomCase(seed: int, kind: str):
    rng = np.random.default_rng(seed)
    if kind == "dirichlet_2d":
        mesh = BuildMesh(2, [[0.0, 1.0], [0.0, 2.0]], [4, 3])
        return mesh, BuildDensityF("dirichlet", components=2, dim=2), \
            SField.FromFree(mesh, 0.25 * rng.standard_normal(len(mesh.interior) * 2), 2)
    mesh = BuildMesh(1, [0.0, 1.0], 8)
    if kind == "gradient_norm":
        return mesh, BuildDensityF("gradient_norm"), SField.FromFree(mesh, rng.standard_normal(7))
    return mesh, BuildDensityG("abs"), SField.FromFree(mesh, rng.uniform(0.2, 1.0, 7))


@pytest.mark.parametrize("kind", ["dirichlet_2d", "gradient_norm", "abs"])
@pytest.mark.parametrize("seed", SEEDS)
def test_holder_monotonicity_on_random_fields(seed, kind):
    mesh, density, field = RandomCase(seed, kind)
    values = [EvalLp(density, field, mesh, p).value for p in EXPONENTS]
    sup = EvalLinf(density, field, mesh).value
    assert all(a <= b * (1.0 + 1e-12) for a, b in zip(values, values[1:]))
    assert values[-1] <= sup * (1.0 + 1e-12)


@pytest.mark.parametrize("p", EXPONENTS)
@pytest.mark.parametrize("seed", SEEDS)
def test_gradients_of_random_fields_match_finite_differences(seed, p):
    for kind, scale in (("dirichlet_2d", 1.0), ("gradient_norm", 2.0)):
        mesh, density, field = RandomCase(seed, kind)
        error = FieldFDCheck(mesh,
                             lambda u: ScaledObjective(density, u, mesh, p, scale=scale),
                             lambda u: GradScaledObjective(density, u, mesh, p, scale=scale),
                             field, step=1e-6)
        assert error <= 1e-6, kind
    mesh, density, field = RandomCase(seed, "abs")
    error = FieldFDCheck(mesh,
                         lambda u: ScaledConstraintG(density, u, mesh, p),
                         lambda u: GradScaledConstraintG(density, u, mesh, p),
                         field, step=1e-6)
    assert error <= 1e-6
