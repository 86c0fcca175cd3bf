import math
import numpy as np
from typing import Annotated, Optional
from pydantic import BaseModel, Field

from supinf.common.SExceptions import SExceptionInvalidExponent, SExceptionNegativeDensity, SExceptionInvalidTensor
from supinf.core.SMesh import SMesh, SField

LOG_CLIP = 700.0


class SLpValue(BaseModel):
    p: float
    value: Annotated[float, Field(ge=0.0)]


def SafePower(ratio: np.ndarray, exponent: float) -> np.ndarray:
    """ratio**exponent for ratio >= 0 through the log domain, clipped below overflow.
    0**0 is taken as 1."""
    ratio = np.asarray(ratio, dtype=float)
    if exponent == 0.0:
        return np.ones_like(ratio)
    out = np.zeros_like(ratio)
    pos = ratio > 0.0
    out[pos] = np.exp(np.minimum(exponent * np.log(ratio[pos]), LOG_CLIP))
    return out


class SQuadraticDensityF():
    """f(x, P) = A(x):P⊗P, or its square root when root=True.

    A is either a scalar coefficient a(x) times the identity (a constant, a callable of
    the quadrature coordinates, or a piecewise-linear table {"x": [...], "a": [...]}
    along the first axis) or a constant symmetric tensor on the flattened N×n matrix."""

    DEPENDS_ON_GRADIENT = True

    def __init__(self, components: int = 1, dim: int = 1, coefficient=None, tensor=None, root: bool = False, name: str = "dirichlet"):
        self.components = components
        self.dim = dim
        self.root = root
        self.name = name
        self.coefficient = 1.0 if coefficient is None else coefficient
        self.tensor = None
        if tensor is not None:
            tensor = np.asarray(tensor, dtype=float)
            size = components * dim
            if tensor.shape != (size, size):
                raise SExceptionInvalidTensor(f"tensor must be {size}x{size}, got {tensor.shape}.")
            if np.max(np.abs(tensor - tensor.T)) > 1e-12 * max(1.0, np.max(np.abs(tensor))):
                raise SExceptionInvalidTensor("tensor is not symmetric.")
            if np.linalg.eigvalsh(tensor).min() <= 0.0:
                raise SExceptionInvalidTensor("tensor is not positive definite.")
            self.tensor = tensor
        return

    def CoefficientAt(self, x: np.ndarray) -> np.ndarray:
        if callable(self.coefficient):
            return np.asarray(self.coefficient(x), dtype=float).reshape(len(x))
        elif isinstance(self.coefficient, dict):
            return np.interp(x[:, 0], self.coefficient["x"], self.coefficient["a"])
        else:
            return np.full(len(x), float(self.coefficient))

    def Apply(self, x: np.ndarray, P: np.ndarray) -> np.ndarray:
        if self.tensor is not None:
            return (P.reshape(len(P), -1) @ self.tensor).reshape(P.shape)
        return self.CoefficientAt(x)[:, None, None] * P

    def Form(self, x: np.ndarray, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        return np.einsum("qij,qij->q", self.Apply(x, P), Q)

    def Quadratic(self, x: np.ndarray, P: np.ndarray) -> np.ndarray:
        return np.maximum(self.Form(x, P, P), 0.0)

    def Value(self, x: np.ndarray, P: np.ndarray) -> np.ndarray:
        q = self.Quadratic(x, P)
        return np.sqrt(q) if self.root else q

    def Derivative(self, x: np.ndarray, P: np.ndarray) -> np.ndarray:
        AP = self.Apply(x, P)
        if not self.root:
            return 2.0 * AP
        norm = np.sqrt(self.Quadratic(x, P))
        out = np.zeros_like(AP)
        pos = norm > 0.0
        out[pos] = AP[pos] / norm[pos][:, None, None]
        return out

    def Flux(self, x: np.ndarray, P: np.ndarray, p: float, scale: float = 1.0) -> np.ndarray:
        """(f/scale)^{p-1} f_P, zero where f vanishes."""
        return SafePower(self.Value(x, P) / scale, p - 1.0)[:, None, None] * self.Derivative(x, P)

    def ValuesFrom(self, x, U, P):
        return self.Value(x, P)

    def FluxFrom(self, x, U, P, p, scale=1.0):
        return None, self.Flux(x, P, p, scale)

    def Sample(self, mesh: SMesh, field: SField) -> np.ndarray:
        U, P = mesh.Sample(field.values)
        return self.ValuesFrom(mesh.quadPoints, U, P)


class SGradientFreeDensityG():
    """g(x, η) from the catalogue: "abs" |η|, "quad" |η|², "const" c."""

    DEPENDS_ON_GRADIENT = False
    KINDS = ("abs", "quad", "const")

    def __init__(self, kind: str = "abs", constant: float = 1.0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown g density '{kind}'.")
        self.name = kind
        self.constant = constant
        return

    def Value(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        if self.name == "abs":
            return np.linalg.norm(eta, axis=1)
        elif self.name == "quad":
            return np.sum(eta * eta, axis=1)
        return np.full(len(eta), float(self.constant))

    def Derivative(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        if self.name == "abs":
            norm = np.linalg.norm(eta, axis=1)
            out = np.zeros_like(eta)
            pos = norm > 0.0
            out[pos] = eta[pos] / norm[pos][:, None]
            return out
        elif self.name == "quad":
            return 2.0 * eta
        return np.zeros_like(eta)

    def Flux(self, x: np.ndarray, eta: np.ndarray, p: float, scale: float = 1.0) -> np.ndarray:
        return SafePower(self.Value(x, eta) / scale, p - 1.0)[:, None] * self.Derivative(x, eta)

    def ValuesFrom(self, x, U, P):
        return self.Value(x, U)

    def FluxFrom(self, x, U, P, p, scale=1.0):
        return self.Flux(x, U, p, scale), None

    def Sample(self, mesh: SMesh, field: SField) -> np.ndarray:
        U, P = mesh.Sample(field.values)
        return self.ValuesFrom(mesh.quadPoints, U, P)


F_DENSITIES = ("dirichlet", "weighted_dirichlet", "gradient_norm")
G_DENSITIES = SGradientFreeDensityG.KINDS

def BuildDensityF(name: str, components: int = 1, dim: int = 1, coefficients=None, tensor=None) -> SQuadraticDensityF:
    if name == "dirichlet":
        return SQuadraticDensityF(components, dim, tensor=tensor, name=name)
    elif name == "weighted_dirichlet":
        return SQuadraticDensityF(components, dim, coefficient=coefficients, tensor=tensor, name=name)
    elif name == "gradient_norm":
        return SQuadraticDensityF(components, dim, tensor=tensor, root=True, name=name)
    raise ValueError(f"unknown f density '{name}'.")

def BuildDensityG(name: Optional[str], constant: float = 1.0) -> Optional[SGradientFreeDensityG]:
    return None if name is None else SGradientFreeDensityG(name, constant)


def CheckedValues(density, field: SField, mesh: SMesh) -> np.ndarray:
    values = density.Sample(mesh, field)
    if values.size and values.min() < 0.0:
        raise SExceptionNegativeDensity(f"density '{density.name}' is negative ({values.min()}) at a quadrature point.")
    return values

def LpNorm(values: np.ndarray, weights: np.ndarray, measure: float, p: float) -> float:
    """((1/|Ω|) Σ w d^p)^{1/p}, normalized by max d before exponentiation."""
    if values.size == 0:
        return 0.0
    dMax = float(values.max())
    if dMax <= 0.0:
        return 0.0
    ratio = values / dMax
    return dMax * float(np.sum(weights * ratio ** p) / measure) ** (1.0 / p)

def EvalLp(density, field: SField, mesh: SMesh, p: float) -> SLpValue:
    CheckExponent(p)
    values = CheckedValues(density, field, mesh)
    return SLpValue(p=p, value=LpNorm(values, mesh.quadWeights, mesh.measure, p))

def EvalLinf(density, field: SField, mesh: SMesh) -> SLpValue:
    values = CheckedValues(density, field, mesh)
    return SLpValue(p=math.inf, value=float(values.max()) if values.size else 0.0)

def LpSequence(density, field: SField, mesh: SMesh, kMax: int = 10) -> tuple:
    """F_{2^k} for k = 0..kMax and the discrete sup."""
    values = CheckedValues(density, field, mesh)
    sequence = [LpNorm(values, mesh.quadWeights, mesh.measure, 2.0 ** k) for k in range(kMax + 1)]
    return sequence, float(values.max())


def ScaledPower(density, x, U, P, weights, measure, p, scale=1.0) -> float:
    return float(np.sum(weights * SafePower(density.ValuesFrom(x, U, P) / scale, p)) / measure) / p

def ScaledPowerGradient(density, mesh: SMesh, x, U, P, p, scale=1.0) -> np.ndarray:
    valueFlux, gradFlux = density.FluxFrom(x, U, P, p, scale)
    factor = (mesh.quadWeights / (mesh.measure * scale))
    return mesh.PullBack(None if valueFlux is None else factor[:, None] * valueFlux,
                         None if gradFlux is None else factor[:, None, None] * gradFlux,
                         U.shape[1])

def CheckExponent(p: float):
    if not (p >= 1.0) or math.isinf(p):
        raise SExceptionInvalidExponent(f"p must lie in [1, inf), got {p}.")
    return

def ScaledObjective(densityF: SQuadraticDensityF, field: SField, mesh: SMesh, p: float, scale: float = 1.0) -> float:
    """(1/p)⨍(f/scale)^p; scale = 1 gives (1/p)F_p^p."""
    CheckExponent(p)
    U, P = mesh.Sample(field.values)
    return ScaledPower(densityF, mesh.quadPoints, U, P, mesh.quadWeights, mesh.measure, p, scale)

def GradScaledObjective(densityF: SQuadraticDensityF, field: SField, mesh: SMesh, p: float, scale: float = 1.0) -> SField:
    CheckExponent(p)
    U, P = mesh.Sample(field.values)
    return SField(mesh, ScaledPowerGradient(densityF, mesh, mesh.quadPoints, U, P, p, scale), check=False)

def ScaledConstraintG(densityG: SGradientFreeDensityG, field: SField, mesh: SMesh, p: float, scale: float = 1.0) -> float:
    CheckExponent(p)
    U, P = mesh.Sample(field.values)
    return ScaledPower(densityG, mesh.quadPoints, U, P, mesh.quadWeights, mesh.measure, p, scale)

def GradScaledConstraintG(densityG: SGradientFreeDensityG, field: SField, mesh: SMesh, p: float, scale: float = 1.0) -> SField:
    CheckExponent(p)
    U, P = mesh.Sample(field.values)
    return SField(mesh, ScaledPowerGradient(densityG, mesh, mesh.quadPoints, U, P, p, scale), check=False)


def MinEllipticity(density: SQuadraticDensityF, mesh: Optional[SMesh] = None) -> float:
    """α₀ = min over x and |Q| = 1 of A(x):Q⊗Q."""
    if density.tensor is not None:
        alpha = float(np.linalg.eigvalsh(density.tensor).min())
    elif isinstance(density.coefficient, dict):
        alpha = float(np.min(density.coefficient["a"]))
    elif callable(density.coefficient):
        if mesh is None:
            raise SExceptionInvalidTensor("a mesh is needed to bound a coefficient function.")
        alpha = float(min(density.CoefficientAt(mesh.quadPoints).min(), density.CoefficientAt(mesh.nodeCoords).min()))
    else:
        alpha = float(density.coefficient)
    if alpha <= 0.0:
        raise SExceptionInvalidTensor(f"ellipticity constant {alpha} is not positive.")
    return alpha
