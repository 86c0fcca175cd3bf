import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from typing import Annotated

from supinf.common.SExceptions import SExceptionInvalidMesh, SExceptionShapeMismatch, SExceptionInvalidField


class SQuadPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: tuple[float, ...]
    w: Annotated[float, Field(gt=0.0)]


def Average1D(cells: int) -> sp.csr_matrix:
    return sp.diags([0.5, 0.5], [0, 1], shape=(cells, cells + 1), format="csr")

def Difference1D(cells: int, h: float) -> sp.csr_matrix:
    return sp.diags([-1.0 / h, 1.0 / h], [0, 1], shape=(cells, cells + 1), format="csr")


class SMesh():
    """Uniform tensor grid with P1 (1D) / bilinear (2D) nodal fields and one midpoint
    quadrature point per cell. Nodes and cells are numbered row-major, first axis slowest."""

    def __init__(self, dim: int, extent: list, cells: list):
        self.dim = dim
        self.extent = tuple((float(lo), float(hi)) for lo, hi in extent)
        self.cells = tuple(int(c) for c in cells)
        self.h = tuple((hi - lo) / c for (lo, hi), c in zip(self.extent, self.cells))
        self.nodeShape = tuple(c + 1 for c in self.cells)
        self.nNodes = int(np.prod(self.nodeShape))
        self.nQuad = int(np.prod(self.cells))
        self.measure = float(np.prod([hi - lo for lo, hi in self.extent]))

        axesNodes = [np.linspace(lo, hi, c + 1) for (lo, hi), c in zip(self.extent, self.cells)]
        axesMid = [lo + (np.arange(c) + 0.5) * h for (lo, hi), c, h in zip(self.extent, self.cells, self.h)]
        self.nodeCoords = np.stack([g.ravel() for g in np.meshgrid(*axesNodes, indexing="ij")], axis=1)
        self.quadPoints = np.stack([g.ravel() for g in np.meshgrid(*axesMid, indexing="ij")], axis=1)
        self.quadWeights = np.full(self.nQuad, float(np.prod(self.h)))

        boundary = np.zeros(self.nodeShape, dtype=bool)
        for axis in range(self.dim):
            index = [slice(None)] * self.dim
            index[axis] = 0
            boundary[tuple(index)] = True
            index[axis] = -1
            boundary[tuple(index)] = True
        self.boundaryMask = boundary.ravel()
        self.interior = np.flatnonzero(~self.boundaryMask)

        if self.dim == 1:
            self.interp = Average1D(self.cells[0])
            self.grads = [Difference1D(self.cells[0], self.h[0])]
        else:
            m0, m1 = Average1D(self.cells[0]), Average1D(self.cells[1])
            d0, d1 = Difference1D(self.cells[0], self.h[0]), Difference1D(self.cells[1], self.h[1])
            self.interp = sp.kron(m0, m1, format="csr")
            self.grads = [sp.kron(d0, m1, format="csr"), sp.kron(m0, d1, format="csr")]
        self.interpT = self.interp.T.tocsr()
        self.gradsT = [g.T.tocsr() for g in self.grads]
        return

    def QuadraturePoints(self) -> list:
        return [SQuadPoint(x=tuple(float(c) for c in x), w=float(w)) for x, w in zip(self.quadPoints, self.quadWeights)]

    def Sample(self, values: np.ndarray):
        if values.shape[0] != self.nNodes:
            raise SExceptionShapeMismatch(f"field has {values.shape[0]} nodes, mesh has {self.nNodes}.")
        U = self.interp @ values
        P = np.stack([g @ values for g in self.grads], axis=-1)
        return U, P

    def PullBack(self, valueCotangent=None, gradientCotangent=None, components: int = 1) -> np.ndarray:
        """Adjoint of Sample: nodal array whose pairing with a variation v equals
        Σ_q valueCotangent·v(x_q) + gradientCotangent:Dv(x_q). Boundary rows are zero."""
        out = np.zeros((self.nNodes, components))
        if valueCotangent is not None:
            out += self.interpT @ valueCotangent
        if gradientCotangent is not None:
            for k, gT in enumerate(self.gradsT):
                out += gT @ gradientCotangent[:, :, k]
        out[self.boundaryMask] = 0.0
        return out

    def BasisNorms(self) -> np.ndarray:
        """Discrete W^{1,∞} norm of each nodal hat function: max|φ| + max|Dφ|."""
        if not hasattr(self, "_basisNorms"):
            gradSq = None
            for g in self.grads:
                sq = g.multiply(g)
                gradSq = sq if gradSq is None else gradSq + sq
            gradMax = np.asarray(gradSq.sqrt().max(axis=0).todense()).ravel()
            valueMax = np.ones(self.nNodes)
            self._basisNorms = valueMax + gradMax
        return self._basisNorms

    def Embed(self, free: np.ndarray, components: int) -> np.ndarray:
        values = np.zeros((self.nNodes, components))
        values[self.interior] = free.reshape(len(self.interior), components)
        return values

    def Restrict(self, values: np.ndarray) -> np.ndarray:
        return values[self.interior].ravel().copy()

    def ModuleInfo(self):
        return {"dim": self.dim, "extent": [list(e) for e in self.extent], "cells": list(self.cells)}


class SField():
    def __init__(self, mesh: SMesh, values: np.ndarray, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != mesh.nNodes:
            raise SExceptionShapeMismatch(f"field has {values.shape[0]} nodes, mesh has {mesh.nNodes}.")
        if check:
            if not np.all(np.isfinite(values)):
                raise SExceptionInvalidField("field contains NaN or Inf entries.")
            if np.any(values[mesh.boundaryMask] != 0.0):
                raise SExceptionInvalidField("field has nonzero boundary values.")
        self.mesh = mesh
        self.values = values
        self.components = values.shape[1]
        return

    @classmethod
    def Zeros(cls, mesh: SMesh, components: int = 1):
        return cls(mesh, np.zeros((mesh.nNodes, components)))

    @classmethod
    def FromFree(cls, mesh: SMesh, free: np.ndarray, components: int = 1):
        return cls(mesh, mesh.Embed(free, components))

    @classmethod
    def FromFunction(cls, mesh: SMesh, func, components: int = 1):
        """Nodal interpolant of func(x) with the boundary trace set to zero."""
        values = np.asarray(func(mesh.nodeCoords), dtype=float).reshape(mesh.nNodes, components).copy()
        values[mesh.boundaryMask] = 0.0
        return cls(mesh, values)

    def Free(self) -> np.ndarray:
        return self.mesh.Restrict(self.values)

    def Copy(self):
        return SField(self.mesh, self.values.copy(), check=False)


def BuildMesh(dim: int, extent, cells) -> SMesh:
    if dim not in (1, 2):
        raise SExceptionInvalidMesh(f"dim must be 1 or 2, got {dim}.")
    if isinstance(cells, (int, np.integer)):
        cells = [int(cells)] * dim
    # A bare [lo, hi] pair is accepted for 1D.
    if dim == 1 and len(extent) == 2 and np.isscalar(extent[0]):
        extent = [extent]
    extent = [tuple(e) for e in extent]
    if (len(extent) != dim) or (len(cells) != dim):
        raise SExceptionInvalidMesh(f"extent and cells must have {dim} entries.")
    for (lo, hi), c in zip(extent, cells):
        if not (hi > lo):
            raise SExceptionInvalidMesh(f"empty extent [{lo}, {hi}].")
        if c < 2:
            raise SExceptionInvalidMesh(f"cells must be >= 2 per axis, got {c}.")
    return SMesh(dim, extent, cells)


def Sample(field: SField, mesh: SMesh):
    """(u(x_q), Du(x_q)) with shapes (nQuad, N) and (nQuad, N, dim)."""
    return mesh.Sample(field.values)
