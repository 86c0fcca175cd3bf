import math
import numpy as np
from typing import Literal, Optional, Callable
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, PositiveFloat
from scipy.optimize import minimize

from supinf.common.SExceptions import SExceptionInfeasible, SExceptionInvalidMesh
from supinf.common.utils.SLogger import get_process_logger
from supinf.core.SMesh import SMesh, SField, BuildMesh
from supinf.core.SFunctionals import BuildDensityF, BuildDensityG
from supinf.core.SConstraints import BuildConstraint
from supinf.core.SProblem import SProblem

logger = get_process_logger("oracle")

MAX_FREE = 6
MAX_GRID = 10 ** 7


class SOracleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["grid", "multistart"] = "grid"
    lo: float = -1.0
    hi: float = 1.0
    resolution: int = Field(21, ge=2)
    starts: PositiveInt = 32
    seed: int = 0
    tol: PositiveFloat = 1e-6
    chunk: PositiveInt = 20000
    polish: PositiveInt = 3


def OracleSample(mesh: SMesh, values: np.ndarray):
    """Midpoint values and gradients for a batch of nodal arrays (B, nNodes, N), written
    directly on the grid; returns U (B, nq, N) and P (B, nq, N, dim)."""
    B, _, N = values.shape
    grid = values.reshape((B,) + mesh.nodeShape + (N,))
    if mesh.dim == 1:
        U = 0.5 * (grid[:, :-1] + grid[:, 1:])
        P = ((grid[:, 1:] - grid[:, :-1]) / mesh.h[0])[..., None]
        return U, P
    a, b = grid[:, :-1, :-1], grid[:, 1:, :-1]
    c, d = grid[:, :-1, 1:], grid[:, 1:, 1:]
    U = 0.25 * (a + b + c + d)
    d0 = ((b - a) + (d - c)) / (2.0 * mesh.h[0])
    d1 = ((c - a) + (d - b)) / (2.0 * mesh.h[1])
    nq = mesh.nQuad
    return U.reshape(B, nq, N), np.stack([d0, d1], axis=-1).reshape(B, nq, N, 2)


def OracleDensityF(density, x: np.ndarray, P: np.ndarray) -> np.ndarray:
    """f on a batch, P (B, nq, N, dim): a(x)|P|², Pᵀ A P with a tensor, square-rooted for gradient_norm."""
    B, nq = P.shape[:2]
    flat = P.reshape(B, nq, -1)
    if density.tensor is not None:
        q = np.einsum("bqi,ij,bqj->bq", flat, density.tensor, flat)
    else:
        q = density.CoefficientAt(x)[None, :] * np.sum(flat * flat, axis=2)
    q = np.maximum(q, 0.0)
    return np.sqrt(q) if density.name == "gradient_norm" else q


def OracleDensityG(density, U: np.ndarray) -> np.ndarray:
    if density.name == "abs":
        return np.sqrt(np.sum(U * U, axis=2))
    elif density.name == "quad":
        return np.sum(U * U, axis=2)
    return np.full(U.shape[:2], float(density.constant))


def OracleIntegrand(name: str, U: np.ndarray, P: np.ndarray) -> np.ndarray:
    if name == "component_0":
        return U[..., 0]
    elif name == "neg_component_0":
        return -U[..., 0]
    elif name == "mass":
        return np.sum(U, axis=2)
    return np.sum(P * P, axis=(2, 3))


def OracleInner(constraint, U: np.ndarray, P: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Inner constraint values, (B, nq, M) for pointwise kinds and (B, M) for the integral kind."""
    kind = constraint.KIND
    square = np.sum(U * U, axis=2)
    if kind == "holonomic":
        r = constraint.radius
        c = {"plane": U[..., 0] - r, "sphere": square - r * r, "sphere_squared": (square - r * r) ** 2}[constraint.pi]
        return c[..., None]
    elif kind == "unilateral":
        r = constraint.radius
        c = {"upper": U[..., 0] - r, "lower": r - U[..., 0], "ball": square - r * r}[constraint.pi]
        return c[..., None]
    elif kind == "inclusion_ball":
        return (np.sqrt(np.sum((U - constraint.center) ** 2, axis=2)) - constraint.radius)[..., None]
    elif kind == "inclusion_box":
        c = np.empty(U.shape[:2] + (2 * U.shape[2],))
        c[..., 0::2] = U - constraint.hi
        c[..., 1::2] = constraint.lo - U
        return c
    elif kind == "isoperimetric":
        integral = OracleIntegrand(constraint.h, U, P) @ weights
        return (integral[:, None] - constraint.H) * constraint.signs[None, :]
    return np.zeros(U.shape[:2] + (0,))


class SOracleEvaluator():
    """Plain-summation energies and constraint violations of a batch of free vectors."""

    def __init__(self, problem: SProblem, p: float):
        self.problem = problem
        self.p = p
        self.mesh = problem.mesh
        self.N = problem.components
        self.nFree = len(self.mesh.interior) * self.N
        constraint = problem.constraint
        # ∫h = H arrives as a pair of opposite inequalities; searched as one equation.
        self.integralEquation = (not constraint.POINTWISE) and len(constraint.equality) == 2
        self.hasEquation = bool(np.any(constraint.equality)) or self.integralEquation
        return

    def Batch(self, free: np.ndarray) -> np.ndarray:
        free = np.atleast_2d(free)
        values = np.zeros((len(free), self.mesh.nNodes, self.N))
        values[:, self.mesh.interior, :] = free.reshape(len(free), -1, self.N)
        return values

    def Evaluate(self, free: np.ndarray) -> tuple:
        """(F_p, inequality violation, equality residual) per batch row."""
        mesh, problem, p = self.mesh, self.problem, self.p
        U, P = OracleSample(mesh, self.Batch(free))
        w = mesh.quadWeights

        f = OracleDensityF(problem.densityF, mesh.quadPoints, P)
        F = (np.sum(w * f ** p, axis=1) / mesh.measure) ** (1.0 / p)

        inequality = np.zeros(len(U))
        equality = np.zeros(len(U))
        if problem.hasSublevel:
            g = OracleDensityG(problem.densityG, U)
            Gp = (np.sum(w * g ** p, axis=1) / mesh.measure) ** (1.0 / p)
            inequality = np.maximum(inequality, Gp - problem.G)
        constraint = problem.constraint
        if constraint.entries:
            c = OracleInner(constraint, U, P, w)
            if constraint.POINTWISE:
                eqMask = np.broadcast_to(constraint.equality, c.shape)
                inequality = np.maximum(inequality, np.max(np.where(eqMask, 0.0, c), axis=(1, 2)))
                equality = np.max(np.where(eqMask, np.abs(c), 0.0), axis=(1, 2))
            elif self.integralEquation:
                equality = np.abs(c[:, 0])
            else:
                inequality = np.maximum(inequality, np.max(c, axis=1))
        return F, np.maximum(inequality, 0.0), equality


def EqualitySlack(evaluator: SOracleEvaluator, step: float) -> float:
    """Half a grid cell times the summed sensitivity of the equality residual at the zero field."""
    if not evaluator.hasEquation:
        return 0.0
    center = np.zeros((1, evaluator.nFree))
    base = evaluator.Evaluate(center)[2][0]
    shifted = center + step * np.eye(evaluator.nFree)
    return 0.5 * float(np.sum(np.abs(evaluator.Evaluate(shifted)[2] - base)))


def Polish(evaluator: SOracleEvaluator, start: np.ndarray, tol: float) -> tuple:
    """SLSQP from start on the exact constrained problem, finite-difference gradients only."""
    problem, p = evaluator.problem, evaluator.p
    mesh = evaluator.mesh
    constraint = problem.constraint

    def Objective(z):
        return float(evaluator.Evaluate(z)[0][0] ** p / p)

    def Residuals(z):
        U, P = OracleSample(mesh, evaluator.Batch(z))
        ineq, eq = [], []
        if problem.hasSublevel:
            g = OracleDensityG(problem.densityG, U)[0]
            ineq.append(np.array([((np.sum(mesh.quadWeights * g ** p) / mesh.measure) - problem.G ** p) / p]))
        if constraint.entries:
            c = OracleInner(constraint, U, P, mesh.quadWeights)[0]
            if constraint.POINTWISE:
                ineq.append(c[:, ~constraint.equality].ravel())
                eq.append(c[:, constraint.equality].ravel())
            elif evaluator.integralEquation:
                eq.append(c[:1])
            else:
                ineq.append(c)
        return (np.concatenate(ineq) if ineq else np.zeros(0)), (np.concatenate(eq) if eq else np.zeros(0))

    constraints = []
    ineq0, eq0 = Residuals(start)
    if ineq0.size:
        constraints.append({"type": "ineq", "fun": lambda z: -Residuals(z)[0]})
    if eq0.size:
        constraints.append({"type": "eq", "fun": lambda z: Residuals(z)[1]})
    res = minimize(Objective, start, method="SLSQP", constraints=constraints, options={"ftol": 1e-12, "maxiter": 500})
    F, inequality, equality = evaluator.Evaluate(res.x)
    return res.x, float(F[0]), max(float(inequality[0]), float(equality[0]))


def GridCandidates(evaluator: SOracleEvaluator, cfg: SOracleConfig) -> list:
    """Best feasible grid points in lexicographic order of ties."""
    n = evaluator.nFree
    axis = np.linspace(cfg.lo, cfg.hi, cfg.resolution)
    step = axis[1] - axis[0]
    slack = cfg.tol + EqualitySlack(evaluator, step)
    total = cfg.resolution ** n
    best = []
    for start in range(0, total, cfg.chunk):
        index = np.arange(start, min(start + cfg.chunk, total))
        free = axis[np.stack(np.unravel_index(index, (cfg.resolution,) * n), axis=1)]
        F, inequality, equality = evaluator.Evaluate(free)
        ok = np.flatnonzero((inequality <= cfg.tol) & (equality <= slack))
        # Stable order keeps the lexicographically first of equal values.
        for k in ok[np.argsort(F[ok], kind="stable")][:cfg.polish]:
            best.append((float(F[k]), int(index[k]), free[k]))
        best = sorted(best, key=lambda item: (item[0], item[1]))[:cfg.polish]
    return [item[2] for item in best]


def BruteForce(problem: SProblem, p: float, cfg: Optional[SOracleConfig] = None) -> tuple:
    """(min F_p, minimising field) over the search set, or (inf, None) if nothing feasible was found."""
    cfg = cfg or SOracleConfig()
    evaluator = SOracleEvaluator(problem, p)
    n = evaluator.nFree
    if n > MAX_FREE:
        raise SExceptionInvalidMesh(f"brute force handles at most {MAX_FREE} free unknowns, got {n}.")
    if n == 0:
        F, inequality, equality = evaluator.Evaluate(np.zeros((1, 0)))
        if max(inequality[0], equality[0]) > cfg.tol:
            return math.inf, None
        return float(F[0]), SField.Zeros(problem.mesh, problem.components)

    if cfg.mode == "grid":
        if cfg.resolution ** n > MAX_GRID:
            raise SExceptionInvalidMesh(f"search grid {cfg.resolution}^{n} exceeds {MAX_GRID} points.")
        starts = GridCandidates(evaluator, cfg)
    else:
        starts = list(np.random.default_rng(cfg.seed).uniform(cfg.lo, cfg.hi, size=(cfg.starts, n)))

    bestValue, bestFree = math.inf, None
    for start in starts:
        if cfg.mode == "grid":
            F, inequality, equality = evaluator.Evaluate(start)
            if max(inequality[0], equality[0]) <= cfg.tol and F[0] < bestValue:
                bestValue, bestFree = float(F[0]), start
        free, value, violation = Polish(evaluator, start, cfg.tol)
        if violation <= cfg.tol and value < bestValue:
            bestValue, bestFree = value, free
    if bestFree is None:
        logger.warning(f"brute force found no feasible point at p = {p}")
        return math.inf, None
    return bestValue, SField.FromFree(problem.mesh, np.asarray(bestFree), problem.components)


def Analytic1DIsoperimetric(V: float, G: float = math.inf, mesh: Optional[SMesh] = None) -> tuple:
    """Least sup|u'| on (0,1) with ∫u ≥ V and sup|u| ≤ G: the triangle of slope 4V while its
    height 2V stays below G, else the trapezoid of slope G²/(G−V)."""
    if V < 0.0:
        raise ValueError(f"V must be nonnegative, got {V}.")
    if V >= G:
        raise SExceptionInfeasible(f"compatibility check failed: V = {V} >= G = {G}, since ∫u <= sup|u| on (0,1).")
    s = 4.0 * V if 4.0 * V <= 2.0 * G else G * G / (G - V)

    def Profile(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.minimum(np.minimum(s * x, s * (1.0 - x)), G)

    if mesh is None:
        return s, Profile
    return s, SField.FromFunction(mesh, lambda X: Profile(X[:, 0]))

def Analytic1DP2(V: float, mesh: Optional[SMesh] = None) -> tuple:
    """u = 6V·x(1−x) minimises ⨍|u'|² under ∫u = V; its L² gradient norm is 2√3|V|."""
    F2 = 2.0 * math.sqrt(3.0) * abs(V)

    def Profile(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return 6.0 * V * x * (1.0 - x)

    if mesh is None:
        return Profile, F2
    return SField.FromFunction(mesh, lambda X: Profile(X[:, 0])), F2


def FDCheck(func: Callable, grad: Callable, x: np.ndarray, step: float = 1e-5) -> float:
    """‖central differences − analytic gradient‖_∞ relative to the larger of the two."""
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step}.")
    x = np.asarray(x, dtype=float)
    analytic = np.asarray(grad(x), dtype=float).ravel()
    fd = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        fd.flat[i] = (func(x + e) - func(x - e)) / (2.0 * step)
    fd = fd.ravel()
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(fd)), 1e-300)
    return float(np.max(np.abs(fd - analytic)) / scale)

def FieldFDCheck(mesh: SMesh, func: Callable, grad: Callable, field: SField, step: float = 1e-5) -> float:
    """FDCheck over the interior nodal values of a field; func maps SField to a scalar and
    grad maps SField to an SField."""
    N = field.components
    return FDCheck(lambda z: func(SField.FromFree(mesh, z, N)),
                   lambda z: grad(SField.FromFree(mesh, z, N)).Free(),
                   field.Free(), step)


def BuildCase(cells: int, constraint: dict, g: Optional[str] = None, G: Optional[float] = None) -> SProblem:
    mesh = BuildMesh(1, [0.0, 1.0], cells)
    return SProblem(mesh, BuildDensityF("gradient_norm", 1, 1), BuildDensityG(g), G, BuildConstraint(components=1, **constraint), 1)

# name -> (problem builder, p); all convex, with at most five free nodes.
ORACLE_CASES = {
    "unconstrained": (lambda: BuildCase(4, {"kind": "none"}), 2.0),
    "isoperimetric_p2": (lambda: BuildCase(4, {"kind": "isoperimetric", "h": "component_0", "H": 1.0 / 12.0, "equality": True}), 2.0),
    "cap_isoperimetric_p4": (lambda: BuildCase(6, {"kind": "isoperimetric", "H": -0.3}, g="abs", G=0.4), 4.0),
    "unilateral_lower_p2": (lambda: BuildCase(6, {"kind": "unilateral", "pi": "lower", "radius": 0.1}), 2.0),
    "ball_center_p4": (lambda: BuildCase(6, {"kind": "inclusion_ball", "radius": 0.3, "center": [0.5]}), 4.0),
    "box_p2": (lambda: BuildCase(6, {"kind": "inclusion_box", "bounds": [0.1, 0.6]}), 2.0),
}

def LpClosedForm(cells: int = 256, exponents=(1.0, 2.0, 4.0, 8.0)) -> dict:
    """F_p of |u'|² for u = x(1−x) by plain midpoint summation, beside (2p+1)^{-1/p}."""
    mesh = BuildMesh(1, [0.0, 1.0], cells)
    field = SField.FromFunction(mesh, lambda X: X[:, 0] * (1.0 - X[:, 0]))
    _, P = OracleSample(mesh, field.values[None])
    f = P[0, :, 0, 0] ** 2
    out = {}
    for p in exponents:
        out[f"p={p:g}"] = {"computed": float((np.sum(mesh.quadWeights * f ** p) / mesh.measure) ** (1.0 / p)),
                           "exact": (2.0 * p + 1.0) ** (-1.0 / p)}
    out["sup"] = {"computed": float(f.max()), "exact": 1.0}
    return out

def AnalyticCases() -> dict:
    return {"triangle": lambda: {"V": 0.2, "G": math.inf, "slope": Analytic1DIsoperimetric(0.2)[0]},
            "trapezoid": lambda: {"V": 0.75, "G": 1.0, "slope": Analytic1DIsoperimetric(0.75, 1.0)[0]},
            "p2_isoperimetric": lambda: {"V": 1.0 / 12.0, "F2": Analytic1DP2(1.0 / 12.0)[1]},
            "switch_continuity": lambda: {"G": 1.0, "below": Analytic1DIsoperimetric(0.5 - 1e-9, 1.0)[0],
                                          "at": Analytic1DIsoperimetric(0.5, 1.0)[0],
                                          "above": Analytic1DIsoperimetric(0.5 + 1e-9, 1.0)[0]},
            "lp_closed_form": LpClosedForm}

def RunCase(name: str, cfg: Optional[SOracleConfig] = None) -> dict:
    """Certified values of a named oracle case."""
    analytic = AnalyticCases()
    if name in analytic:
        return {"case": name, **analytic[name]()}
    if name not in ORACLE_CASES:
        raise KeyError(f"unknown oracle case '{name}', expected one of {sorted(list(analytic) + list(ORACLE_CASES))}.")
    builder, p = ORACLE_CASES[name]
    problem = builder()
    value, field = BruteForce(problem, p, cfg)
    return {"case": name, "p": p, "F_p": value,
            "field": None if field is None else [float(v) for v in field.values[:, 0]]}

def CaseNames() -> list:
    return sorted(list(AnalyticCases()) + list(ORACLE_CASES))
