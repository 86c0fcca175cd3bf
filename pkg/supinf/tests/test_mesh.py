"""Mesh sampling, boundary handling and the adjoint of sampling."""

import numpy as np
import pytest

from supinf.common.SExceptions import SExceptionInvalidMesh, SExceptionInvalidField, SExceptionShapeMismatch
from supinf.core.SMesh import BuildMesh, SField, Sample


def test_gradient_of_parabola_is_exact_at_midpoints():
    mesh = BuildMesh(1, [0.0, 1.0], 256)
    field = SField.FromFunction(mesh, lambda x: x[:, 0] * (1.0 - x[:, 0]))
    U, P = Sample(field, mesh)
    assert U.shape == (256, 1)
    assert P.shape == (256, 1, 1)
    np.testing.assert_allclose(P[:, 0, 0], 1.0 - 2.0 * mesh.quadPoints[:, 0], atol=1e-12)


def test_mesh_2d_layout():
    mesh = BuildMesh(2, [[0.0, 2.0], [0.0, 1.0]], [4, 3])
    assert mesh.nNodes == 20
    assert mesh.nQuad == 12
    assert len(mesh.interior) == 3 * 2
    assert mesh.measure == pytest.approx(2.0)
    assert mesh.quadWeights.sum() == pytest.approx(mesh.measure)
    assert mesh.h == pytest.approx((0.5, 1.0 / 3.0))


def test_bilinear_sampling_of_linear_function():
    mesh = BuildMesh(2, [[0.0, 1.0], [0.0, 1.0]], 5)
    values = 2.0 * mesh.nodeCoords[:, 0] - 3.0 * mesh.nodeCoords[:, 1]
    U, P = mesh.Sample(values[:, None])
    np.testing.assert_allclose(U[:, 0], 2.0 * mesh.quadPoints[:, 0] - 3.0 * mesh.quadPoints[:, 1], atol=1e-12)
    np.testing.assert_allclose(P[:, 0, 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(P[:, 0, 1], -3.0, atol=1e-12)


@pytest.mark.parametrize("dim, extent, cells", [
    (3, [[0, 1]] * 3, 4),
    (1, [1.0, 0.0], 4),
    (1, [0.0, 1.0], 1),
    (2, [[0.0, 1.0]], 4),
])
def test_invalid_meshes(dim, extent, cells):
    with pytest.raises(SExceptionInvalidMesh):
        BuildMesh(dim, extent, cells)


def test_field_rejects_boundary_values_and_nan():
    mesh = BuildMesh(1, [0.0, 1.0], 4)
    values = np.zeros(mesh.nNodes)
    values[0] = 1.0
    with pytest.raises(SExceptionInvalidField):
        SField(mesh, values)
    values[0] = 0.0
    values[2] = np.nan
    with pytest.raises(SExceptionInvalidField):
        SField(mesh, values)
    with pytest.raises(SExceptionShapeMismatch):
        SField(mesh, np.zeros(mesh.nNodes + 1))


def test_pullback_is_adjoint_of_sample():
    rng = np.random.default_rng(7)
    mesh = BuildMesh(2, [[0.0, 1.0], [0.0, 1.5]], [5, 4])
    N = 2
    v = SField.FromFree(mesh, rng.standard_normal(len(mesh.interior) * N), N)
    valueCot = rng.standard_normal((mesh.nQuad, N))
    gradCot = rng.standard_normal((mesh.nQuad, N, 2))
    U, P = mesh.Sample(v.values)
    lhs = np.sum(valueCot * U) + np.sum(gradCot * P)
    rhs = np.sum(mesh.PullBack(valueCot, gradCot, N) * v.values)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_embed_restrict_and_basis_norms():
    mesh = BuildMesh(1, [0.0, 1.0], 8)
    free = np.arange(7, dtype=float) + 1.0
    field = SField.FromFree(mesh, free)
    np.testing.assert_array_equal(field.Free(), free)
    assert field.values[0, 0] == 0.0 and field.values[-1, 0] == 0.0
    # hat function: max value 1, slope 1/h
    np.testing.assert_allclose(mesh.BasisNorms()[mesh.interior], 1.0 + 8.0)
