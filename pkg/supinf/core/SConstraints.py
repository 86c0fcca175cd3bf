import numpy as np
from typing import Optional

from supinf.common.SExceptions import SExceptionKindMismatch, SExceptionShapeMismatch, SExceptionInvalidConstraint
from supinf.core.SMesh import SMesh, SField


def PiRelax(t):
    """π(t) = t² for t > 0, 0 otherwise."""
    t = np.asarray(t, dtype=float)
    out = np.where(t > 0.0, t * t, 0.0)
    return float(out) if out.ndim == 0 else out

def PiRelaxPrime(t):
    t = np.asarray(t, dtype=float)
    out = np.maximum(2.0 * t, 0.0)
    return float(out) if out.ndim == 0 else out


class SConstraintResidual():
    def __init__(self, kind: str, values: np.ndarray, pointwise: bool, weights: Optional[np.ndarray] = None):
        if not np.all(np.isfinite(values)):
            raise SExceptionShapeMismatch("constraint residual has non-finite entries.")
        self.kind = kind
        self.values = values
        self.pointwise = pointwise
        self.weights = weights
        return

    def Norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        if self.pointwise:
            return float(np.sum(self.weights * np.sum(np.abs(self.values), axis=1)))
        return float(np.sum(np.abs(self.values)))


def UnitVector(count: int, components: int, axis: int, sign: float = 1.0) -> np.ndarray:
    out = np.zeros((count, components))
    out[:, axis] = sign
    return out

def PiPlane(eta, r):
    return eta[:, 0] - r, UnitVector(len(eta), eta.shape[1], 0)

def PiLower(eta, r):
    return r - eta[:, 0], UnitVector(len(eta), eta.shape[1], 0, -1.0)

def PiSphere(eta, r):
    return np.sum(eta * eta, axis=1) - r * r, 2.0 * eta

def PiSphereSquared(eta, r):
    s = np.sum(eta * eta, axis=1) - r * r
    return s * s, 4.0 * s[:, None] * eta

HOLONOMIC_PI = {"plane": PiPlane, "sphere": PiSphere, "sphere_squared": PiSphereSquared}
UNILATERAL_PI = {"upper": PiPlane, "lower": PiLower, "ball": PiSphere}


def HComponent0(x, U, P):
    return U[:, 0], UnitVector(len(U), U.shape[1], 0), np.zeros_like(P)

def HNegComponent0(x, U, P):
    return -U[:, 0], UnitVector(len(U), U.shape[1], 0, -1.0), np.zeros_like(P)

def HMass(x, U, P):
    return np.sum(U, axis=1), np.ones_like(U), np.zeros_like(P)

def HDirichlet(x, U, P):
    return np.einsum("qij,qij->q", P, P), np.zeros_like(U), 2.0 * P

ISOPERIMETRIC_H = {"component_0": HComponent0, "neg_component_0": HNegComponent0, "mass": HMass, "dirichlet": HDirichlet}


class SConstraint():
    """Q expressed through an inner constraint map c: equality entries give Q = c,
    inequality entries give Q = π(c). The none kind has no entries."""

    KIND = "none"
    POINTWISE = True

    def __init__(self, components: int = 1):
        self.components = components
        self.equality = np.zeros(0, dtype=bool)
        self.theoryBacked = True
        return

    @property
    def entries(self) -> int:
        return len(self.equality)

    @property
    def degenerate(self) -> bool:
        """True when dQ vanishes at every feasible point."""
        return bool(self.entries) and not bool(np.all(self.equality))

    def InnerFrom(self, x, U, P, weights):
        return np.zeros((len(U), 0))

    def InnerDifferentialFrom(self, x, U, P, weights, dU, dP):
        return np.zeros((len(U), 0))

    def InnerAdjointFrom(self, mesh: SMesh, x, U, P, dual) -> np.ndarray:
        return np.zeros((mesh.nNodes, U.shape[1]))

    def RelaxFactor(self, c: np.ndarray) -> np.ndarray:
        """dQ/dc entrywise."""
        return np.where(self.equality, 1.0, PiRelaxPrime(c))

    def Relax(self, c: np.ndarray) -> np.ndarray:
        return np.where(self.equality, c, PiRelax(c))

    def Violation(self, c: np.ndarray) -> float:
        """Largest violation of the inner constraints: |c| on equations, c_+ on inequalities."""
        if c.size == 0:
            return 0.0
        return float(np.max(np.where(self.equality, np.abs(c), np.maximum(c, 0.0))))

    def ModuleInfo(self):
        return {"kind": self.KIND, "entries": self.entries, "pointwise": self.POINTWISE,
                "theoryBacked": self.theoryBacked, "degenerate": self.degenerate}


class SConstraintPointwise(SConstraint):
    def Kernel(self, x, U):
        """(values (nq, M), η-derivatives (nq, M, N))."""
        raise NotImplementedError

    def InnerFrom(self, x, U, P, weights):
        return self.Kernel(x, U)[0]

    def InnerDifferentialFrom(self, x, U, P, weights, dU, dP):
        return np.einsum("qmn,qn->qm", self.Kernel(x, U)[1], dU)

    def InnerAdjointFrom(self, mesh: SMesh, x, U, P, dual) -> np.ndarray:
        valueCotangent = mesh.quadWeights[:, None] * np.einsum("qm,qmn->qn", dual, self.Kernel(x, U)[1])
        return mesh.PullBack(valueCotangent, None, U.shape[1])


class SConstraintHolonomic(SConstraintPointwise):
    KIND = "holonomic"

    def __init__(self, components: int, pi: str, radius: float = 0.0):
        super().__init__(components)
        if pi not in HOLONOMIC_PI:
            raise SExceptionInvalidConstraint(f"unknown holonomic pi '{pi}'.")
        self.pi, self.radius = pi, radius
        self.equality = np.ones(1, dtype=bool)
        # Multiplier theory needs Π_η = 0 on {Π = 0}.
        self.theoryBacked = (pi == "sphere_squared")
        return

    @property
    def degenerate(self) -> bool:
        return self.theoryBacked

    def Kernel(self, x, U):
        value, grad = HOLONOMIC_PI[self.pi](U, self.radius)
        return value[:, None], grad[:, None, :]


class SConstraintUnilateral(SConstraintPointwise):
    KIND = "unilateral"

    def __init__(self, components: int, pi: str, radius: float = 0.0):
        super().__init__(components)
        if pi not in UNILATERAL_PI:
            raise SExceptionInvalidConstraint(f"unknown unilateral pi '{pi}'.")
        self.pi, self.radius = pi, radius
        self.equality = np.zeros(1, dtype=bool)
        return

    def Kernel(self, x, U):
        value, grad = UNILATERAL_PI[self.pi](U, self.radius)
        return value[:, None], grad[:, None, :]


class SConstraintInclusionBall(SConstraintPointwise):
    KIND = "inclusion_ball"

    def __init__(self, components: int, radius: float, center=None):
        super().__init__(components)
        if not radius > 0.0:
            raise SExceptionInvalidConstraint(f"ball radius must be positive, got {radius}.")
        self.radius = radius
        self.center = np.zeros(components) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (components,)).copy()
        self.equality = np.zeros(1, dtype=bool)
        return

    def Kernel(self, x, U):
        shifted = U - self.center
        norm = np.linalg.norm(shifted, axis=1)
        grad = np.zeros_like(U)
        pos = norm > 0.0
        grad[pos] = shifted[pos] / norm[pos][:, None]
        return (norm - self.radius)[:, None], grad[:, None, :]


class SConstraintInclusionBox(SConstraintPointwise):
    KIND = "inclusion_box"

    def __init__(self, components: int, bounds):
        super().__init__(components)
        lo, hi = float(bounds[0]), float(bounds[1])
        if not hi > lo:
            raise SExceptionInvalidConstraint(f"box bounds must satisfy lo < hi, got {bounds}.")
        self.lo, self.hi = lo, hi
        # Entries alternate (η_k − hi, lo − η_k) per component.
        self.equality = np.zeros(2 * components, dtype=bool)
        return

    def Kernel(self, x, U):
        nq, N = U.shape
        values = np.empty((nq, 2 * N))
        values[:, 0::2] = U - self.hi
        values[:, 1::2] = self.lo - U
        grad = np.zeros((nq, 2 * N, N))
        for k in range(N):
            grad[:, 2 * k, k] = 1.0
            grad[:, 2 * k + 1, k] = -1.0
        return values, grad


class SConstraintIsoperimetric(SConstraint):
    KIND = "isoperimetric"
    POINTWISE = False

    def __init__(self, components: int, h: str, H: float, equality: bool = False):
        super().__init__(components)
        if h not in ISOPERIMETRIC_H:
            raise SExceptionInvalidConstraint(f"unknown isoperimetric h '{h}'.")
        self.h, self.H = h, float(H)
        self.signs = np.array([1.0, -1.0]) if equality else np.array([1.0])
        # ∫h = H is carried as the two one-sided inequalities.
        self.equality = np.zeros(len(self.signs), dtype=bool)
        return

    def Integral(self, x, U, P, weights) -> float:
        return float(np.sum(weights * ISOPERIMETRIC_H[self.h](x, U, P)[0]))

    def InnerFrom(self, x, U, P, weights):
        return self.signs * (self.Integral(x, U, P, weights) - self.H)

    def InnerDifferentialFrom(self, x, U, P, weights, dU, dP):
        _, hEta, hP = ISOPERIMETRIC_H[self.h](x, U, P)
        derivative = float(np.sum(weights * (np.einsum("qn,qn->q", hEta, dU) + np.einsum("qij,qij->q", hP, dP))))
        return self.signs * derivative

    def InnerAdjointFrom(self, mesh: SMesh, x, U, P, dual) -> np.ndarray:
        _, hEta, hP = ISOPERIMETRIC_H[self.h](x, U, P)
        coefficient = float(np.sum(self.signs * dual)) * mesh.quadWeights
        return mesh.PullBack(coefficient[:, None] * hEta, coefficient[:, None, None] * hP, U.shape[1])


CONSTRAINT_KINDS = ("none", "holonomic", "unilateral", "inclusion_ball", "inclusion_box", "isoperimetric")

def BuildConstraint(kind: str = "none", components: int = 1, pi: Optional[str] = None, radius: Optional[float] = None,
                    center=None, bounds=None, h: Optional[str] = None, H: Optional[float] = None, equality: bool = False) -> SConstraint:
    if kind == "none":
        return SConstraint(components)
    elif kind == "holonomic":
        return SConstraintHolonomic(components, pi or "plane", 0.0 if radius is None else radius)
    elif kind == "unilateral":
        return SConstraintUnilateral(components, pi or "upper", 0.0 if radius is None else radius)
    elif kind == "inclusion_ball":
        return SConstraintInclusionBall(components, 1.0 if radius is None else radius, center)
    elif kind == "inclusion_box":
        if bounds is None:
            raise SExceptionInvalidConstraint("inclusion_box needs bounds.")
        return SConstraintInclusionBox(components, bounds)
    elif kind == "isoperimetric":
        if H is None:
            raise SExceptionInvalidConstraint("isoperimetric constraint needs H.")
        return SConstraintIsoperimetric(components, h or "neg_component_0", H, equality)
    raise SExceptionInvalidConstraint(f"unknown constraint kind '{kind}'.")


def CheckComponents(constraint: SConstraint, field: SField, mesh: SMesh):
    if field.values.shape[0] != mesh.nNodes:
        raise SExceptionShapeMismatch(f"field has {field.values.shape[0]} nodes, mesh has {mesh.nNodes}.")
    if field.components != constraint.components:
        raise SExceptionShapeMismatch(f"constraint expects {constraint.components} components, field has {field.components}.")
    return

def EvalQ(constraint: SConstraint, field: SField, mesh: SMesh) -> SConstraintResidual:
    CheckComponents(constraint, field, mesh)
    U, P = mesh.Sample(field.values)
    c = constraint.InnerFrom(mesh.quadPoints, U, P, mesh.quadWeights)
    return SConstraintResidual(constraint.KIND, constraint.Relax(c), constraint.POINTWISE, mesh.quadWeights)

def ApplyDQ(constraint: SConstraint, field: SField, variation: SField, mesh: SMesh) -> SConstraintResidual:
    CheckComponents(constraint, field, mesh)
    CheckComponents(constraint, variation, mesh)
    U, P = mesh.Sample(field.values)
    dU, dP = mesh.Sample(variation.values)
    c = constraint.InnerFrom(mesh.quadPoints, U, P, mesh.quadWeights)
    dc = constraint.InnerDifferentialFrom(mesh.quadPoints, U, P, mesh.quadWeights, dU, dP)
    return SConstraintResidual(constraint.KIND, constraint.RelaxFactor(c) * dc, constraint.POINTWISE, mesh.quadWeights)

def Pairing(dual, residual: SConstraintResidual) -> float:
    """∫ψ·q (pointwise kinds) or ψ·q (scalar kind)."""
    dual = np.asarray(dual, dtype=float)
    values = residual.values
    if residual.pointwise:
        if dual.ndim == 0:
            raise SExceptionKindMismatch("a pointwise residual needs a pointwise dual element.")
        if dual.ndim == 1 and values.ndim == 2 and values.shape[1] == 1:
            dual = dual[:, None]
        if dual.shape != values.shape:
            raise SExceptionKindMismatch(f"dual shape {dual.shape} does not match residual shape {values.shape}.")
        return float(np.sum(residual.weights * np.sum(dual * values, axis=1)))
    if dual.ndim > 1 or (dual.ndim == 1 and dual.shape != values.shape):
        raise SExceptionKindMismatch(f"dual shape {dual.shape} does not match scalar residual shape {values.shape}.")
    return float(np.sum(dual * values))
