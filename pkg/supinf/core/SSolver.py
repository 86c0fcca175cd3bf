import math
import time
import numpy as np
from typing import Optional, Callable, Annotated
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, NonNegativeFloat
from scipy.optimize import minimize

from supinf.common.SExceptions import SExceptionInfeasible, SExceptionShapeMismatch
from supinf.common.SDataType import SRawMultipliers
from supinf.common.utils.SLogger import get_process_logger
from supinf.core.SMesh import SField
from supinf.core.SFunctionals import LpNorm, ScaledPower, ScaledPowerGradient, CheckExponent, LOG_CLIP
from supinf.core.SConstraints import PiRelax, PiRelaxPrime
from supinf.core.SKKT import BuildMeasures, Rescale, KKTResidualP, Slackness

logger = get_process_logger("solver")

# Energies below this fraction of the first objective scale count as zero when re-centring.
SCALE_FLOOR = 1e-8


class SSolveConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    innerTol: PositiveFloat = 1e-10
    outerTol: PositiveFloat = 1e-9
    maxOuter: PositiveInt = 40
    maxInner: PositiveInt = 20000
    penaltyInit: PositiveFloat = 10.0
    penaltyGrowth: float = Field(10.0, gt=1.0)
    penaltyMax: PositiveFloat = 1e12
    multiplierInit: float = 0.0
    compatMargin: NonNegativeFloat = 1e-6
    seed: int = 0
    # Cold solves at p above ladderStart·ladderGrowth climb p/ladderGrowth^k, k = K..1, first; null disables.
    ladderStart: Optional[Annotated[float, Field(ge=1.0)]] = 4.0
    ladderGrowth: float = Field(2.0, gt=1.0)


class SInnerResult():
    def __init__(self, x: np.ndarray, value: float, gradNorm: float, iterations: int, converged: bool):
        self.x = x
        self.value = value
        self.gradNorm = gradNorm
        self.iterations = iterations
        self.converged = converged
        return


def StationarityBound(value: float, innerTol: float) -> float:
    return innerTol * max(1.0, abs(value))

def InnerMinimize(func: Callable, x0: np.ndarray, innerTol: float = 1e-10, maxIter: int = 20000, restarts: int = 1) -> SInnerResult:
    """L-BFGS-B on func(x) -> (value, gradient) until ‖gradient‖_∞ ≤ innerTol·max(1, |value|).
    The best iterate seen is returned; converged is False when the bound was not reached."""
    x = np.asarray(x0, dtype=float).copy()
    value, grad = func(x)
    gradNorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    if gradNorm <= StationarityBound(value, innerTol):
        return SInnerResult(x, float(value), gradNorm, 0, True)

    iterations = 0
    for attempt in range(restarts + 1):
        res = minimize(func, x, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxIter, "maxfun": 2 * maxIter, "gtol": StationarityBound(value, innerTol),
                                "ftol": 1e-16, "maxcor": 20, "maxls": 50})
        iterations += int(res.nit)
        if res.fun <= value:
            x = np.asarray(res.x, dtype=float)
            value, grad = func(x)
            gradNorm = float(np.max(np.abs(grad)))
        if gradNorm <= StationarityBound(value, innerTol):
            return SInnerResult(x, float(value), gradNorm, iterations, True)
        logger.debug(f"inner attempt {attempt} stopped with |g| = {gradNorm:.3e}: {res.message}")
    return SInnerResult(x, float(value), gradNorm, iterations, False)


def AugmentedTerms(psi, c, penalty: float, equality):
    """Per-entry augmented Lagrangian terms and the multipliers they imply.
    Equations: ψc + ρc²/2. Inequalities c ≤ 0: (max(0, ψ+ρc)² − ψ²)/(2ρ)."""
    if penalty <= 0.0:
        return psi * c, psi + 0.0 * c
    shifted = np.maximum(0.0, psi + penalty * c)
    terms = np.where(equality, psi * c + 0.5 * penalty * c * c, (shifted * shifted - psi * psi) / (2.0 * penalty))
    effective = np.where(equality, psi + penalty * c, shifted)
    return terms, effective


def SublevelScale(problem) -> float:
    """t = G for a positive cap, 1 without one."""
    if problem.G is None or not problem.G > 0.0:
        return 1.0
    return problem.G

def SublevelOffset(problem, p: float, scale: float) -> float:
    if problem.G is None or not problem.G > 0.0:
        return 0.0
    return (problem.G / scale) ** p / p

def InitialPsi(problem, multiplierInit: float) -> np.ndarray:
    constraint = problem.constraint
    shape = (problem.mesh.nQuad, constraint.entries) if constraint.POINTWISE else (constraint.entries,)
    return np.full(shape, np.where(constraint.equality, multiplierInit, max(0.0, multiplierInit)))


class SAugmentedLagrangian():
    """L = lam·(1/p)⨍(f/s)^p + AL(mu, cG) + Σ AL(ψ, c) over the free nodal values."""

    def __init__(self, problem, p: float, raw: SRawMultipliers, penalty: float):
        CheckExponent(p)
        self.problem = problem
        self.p = p
        self.raw = raw
        self.penalty = penalty
        return

    def Parts(self, values: np.ndarray) -> dict:
        problem, mesh, p = self.problem, self.problem.mesh, self.p
        x, w = mesh.quadPoints, mesh.quadWeights
        N = problem.components
        U, P = mesh.Sample(values)
        value = self.raw.lam * ScaledPower(problem.densityF, x, U, P, w, mesh.measure, p, self.raw.objectiveScale)
        grad = self.raw.lam * ScaledPowerGradient(problem.densityF, mesh, x, U, P, p, self.raw.objectiveScale)
        mu, cG, psi, c = self.raw.mu, 0.0, self.raw.psi, None

        if problem.hasSublevel:
            t = self.raw.sublevelScale
            cG = ScaledPower(problem.densityG, x, U, P, w, mesh.measure, p, t) - SublevelOffset(problem, p, t)
            term, mu = AugmentedTerms(self.raw.mu, cG, self.penalty, False)
            value += float(term)
            mu = float(mu)
            if mu != 0.0:
                grad += mu * ScaledPowerGradient(problem.densityG, mesh, x, U, P, p, t)

        constraint = problem.constraint
        if constraint.entries:
            c = constraint.InnerFrom(x, U, P, w)
            terms, psi = AugmentedTerms(self.raw.psi, c, self.penalty, constraint.equality)
            value += float(np.sum(w[:, None] * terms)) if constraint.POINTWISE else float(np.sum(terms))
            grad += constraint.InnerAdjointFrom(mesh, x, U, P, psi)
        return {"value": value, "grad": grad, "mu": mu, "cG": cG, "psi": psi, "c": c, "components": N}

    def Evaluate(self, free: np.ndarray):
        parts = self.Parts(self.problem.mesh.Embed(free, self.problem.components))
        return parts["value"], self.problem.mesh.Restrict(parts["grad"])

    def UpdatedMultipliers(self, free: np.ndarray) -> SRawMultipliers:
        parts = self.Parts(self.problem.mesh.Embed(free, self.problem.components))
        psi = parts["psi"] if parts["c"] is not None else self.raw.psi
        return SRawMultipliers(self.raw.lam, max(0.0, parts["mu"]), np.asarray(psi, dtype=float).copy(),
                               self.raw.objectiveScale, self.raw.sublevelScale)


def ScaledLagrangian(field: SField, p: float, problem, mults: SRawMultipliers, penalty: float) -> float:
    """lam·(1/p)⨍(f/s)^p + AL(mu, sublevel) + ⟨ψ, Q(u)⟩ + (ρ/2)‖Q(u)‖², Q = π(c) on inequality entries.
    Unit scales give the unscaled form. The inner loop minimises SAugmentedLagrangian, which
    carries inequalities on c through the shifted penalty instead."""
    CheckExponent(p)
    mesh = problem.mesh
    x, w = mesh.quadPoints, mesh.quadWeights
    U, P = mesh.Sample(field.values)
    value = mults.lam * ScaledPower(problem.densityF, x, U, P, w, mesh.measure, p, mults.objectiveScale)
    if problem.hasSublevel:
        t = mults.sublevelScale
        cG = ScaledPower(problem.densityG, x, U, P, w, mesh.measure, p, t) - SublevelOffset(problem, p, t)
        value += float(AugmentedTerms(mults.mu, cG, penalty, False)[0])
    constraint = problem.constraint
    if constraint.entries:
        Q = constraint.Relax(constraint.InnerFrom(x, U, P, w))
        psi = mults.psi if mults.psi.size else np.zeros_like(Q)
        terms = psi * Q + 0.5 * penalty * Q * Q
        value += float(np.sum(w[:, None] * terms)) if constraint.POINTWISE else float(np.sum(terms))
    return value


def Feasibility(problem, field: SField, p: float) -> float:
    """max(inner constraint violation, (G_p − G)_+)."""
    mesh = problem.mesh
    U, P = mesh.Sample(field.values)
    out = problem.constraint.Violation(problem.constraint.InnerFrom(mesh.quadPoints, U, P, mesh.quadWeights))
    if problem.hasSublevel:
        Gp = LpNorm(problem.densityG.ValuesFrom(mesh.quadPoints, U, P), mesh.quadWeights, mesh.measure, p)
        out = max(out, Gp - problem.G)
    return out

def Complementarity(problem, parts: dict, constraint) -> float:
    out = abs(parts["mu"] * parts["cG"]) if problem.hasSublevel else 0.0
    if parts["c"] is not None and not np.all(constraint.equality):
        products = np.abs(np.asarray(parts["psi"]) * parts["c"])
        out = max(out, float(np.max(np.where(constraint.equality, 0.0, products))))
    return out


def CompatibilityCheck(problem, p: float, config: SSolveConfig, start: Optional[SField] = None) -> SField:
    """Minimise the constraint violation alone, with a margin pushing inequalities to the interior.
    Returns the feasible reference field or raises SExceptionInfeasible."""
    mesh, N = problem.mesh, problem.components
    if start is None:
        start = SField.Zeros(mesh, N)
    if not problem.constrained:
        return start
    if problem.hasSublevel and problem.G < 0.0:
        raise SExceptionInfeasible(f"compatibility check failed: G = {problem.G} is negative.")

    constraint = problem.constraint
    margin = config.compatMargin
    t = SublevelScale(problem) if problem.hasSublevel else 1.0
    offset = SublevelOffset(problem, p, t) if problem.hasSublevel else 0.0

    def Violation(free):
        values = mesh.Embed(free, N)
        x, w = mesh.quadPoints, mesh.quadWeights
        U, P = mesh.Sample(values)
        total, grad = 0.0, np.zeros((mesh.nNodes, N))
        if constraint.entries:
            c = constraint.InnerFrom(x, U, P, w)
            shifted = np.where(constraint.equality, c, c + margin)
            terms = np.where(constraint.equality, c * c, PiRelax(shifted))
            dual = np.where(constraint.equality, 2.0 * c, PiRelaxPrime(shifted))
            total += float(np.sum(w[:, None] * terms)) if constraint.POINTWISE else float(np.sum(terms))
            grad += constraint.InnerAdjointFrom(mesh, x, U, P, dual)
        if problem.hasSublevel:
            cG = ScaledPower(problem.densityG, x, U, P, w, mesh.measure, p, t) - offset + margin
            total += PiRelax(cG)
            if cG > 0.0:
                grad += PiRelaxPrime(cG) * ScaledPowerGradient(problem.densityG, mesh, x, U, P, p, t)
        return total, mesh.Restrict(grad)

    tol = min(config.innerTol, 1e-14)
    rng = np.random.default_rng(config.seed)
    candidate, violation = start, math.inf
    free = start.Free()
    # A stationary start (e.g. zero for sphere-type kernels) is retried from seeded random fields.
    for attempt in range(4):
        result = InnerMinimize(Violation, free, tol, config.maxInner)
        candidate = SField.FromFree(mesh, result.x, N)
        violation = Feasibility(problem, candidate, p)
        if violation <= config.outerTol:
            logger.info(f"compatibility check passed at p = {p} after {attempt + 1} attempt(s), violation {violation:.3e}")
            return candidate
        free = rng.standard_normal(free.size)
    raise SExceptionInfeasible(f"compatibility check failed: violation {violation:.3e} > {config.outerTol:.3e}")


class SSolveState():
    """Everything known about one finite-p solve."""

    def __init__(self, p: float, field: SField):
        self.p = p
        self.field = field
        self.Fp = 0.0
        self.Finf = 0.0
        self.Gp = None
        self.Ginf = None
        self.raw = SRawMultipliers()
        self.rescaled = None
        self.sigma = None
        self.tau = None
        self.feasibility = 0.0
        self.complementarity = 0.0
        self.kktResidual = math.nan
        self.slack = 0.0
        self.outerIters = 0
        self.innerIters = 0
        self.penalty = 0.0
        self.converged = False
        self.innerConverged = True
        self.degenerate = False
        self.checks = {}
        self.wallMs = 0.0
        return

    def ToRow(self, timing: bool = True) -> dict:
        return {"p": self.p, "F_p": self.Fp, "G_p": math.nan if self.Gp is None else self.Gp, "mu": self.raw.mu,
                "psi_norm": self.rescaled.PsiNorm(), "kkt_res": self.kktResidual, "slack": self.slack,
                "feasibility": self.feasibility, "outer_iters": self.outerIters, "wall_ms": self.wallMs if timing else 0.0}

    def ToJson(self):
        return {"p": self.p, "Fp": self.Fp, "Finf": self.Finf, "Gp": self.Gp, "Ginf": self.Ginf,
                "raw": self.raw.ToJson(),
                "rescaled": {"Lambda": self.rescaled.Lambda, "M": self.rescaled.M, "Psi": self.rescaled.Psi,
                             "R": self.rescaled.R, "logR": self.rescaled.logR},
                "sigma": self.sigma.weights, "tau": self.tau.weights,
                "feasibility": self.feasibility, "complementarity": self.complementarity,
                "kktResidual": self.kktResidual, "slack": self.slack, "outerIters": self.outerIters,
                "innerIters": self.innerIters, "penalty": self.penalty, "converged": self.converged,
                "innerConverged": self.innerConverged, "degenerate": self.degenerate, "checks": self.checks,
                "wallMs": self.wallMs}


def AssembleState(problem, p: float, field: SField, raw: SRawMultipliers) -> SSolveState:
    """Energies, measures, rescaled multipliers and residuals of a field with its multipliers."""
    mesh = problem.mesh
    state = SSolveState(p, field)
    state.raw = raw
    U, P = mesh.Sample(field.values)
    fValues = problem.densityF.ValuesFrom(mesh.quadPoints, U, P)
    state.Fp = LpNorm(fValues, mesh.quadWeights, mesh.measure, p)
    state.Finf = float(fValues.max()) if fValues.size else 0.0
    if problem.densityG is not None:
        gValues = problem.densityG.ValuesFrom(mesh.quadPoints, U, P)
        state.Gp = LpNorm(gValues, mesh.quadWeights, mesh.measure, p)
        state.Ginf = float(gValues.max()) if gValues.size else 0.0
    state.sigma, state.tau = BuildMeasures(field, p, problem, state.Fp, state.Gp)
    state.rescaled = Rescale(raw, state.Fp, state.Gp if problem.hasSublevel else None, p)
    state.feasibility = Feasibility(problem, field, p)
    state.degenerate = problem.constraint.degenerate
    state.kktResidual = KKTResidualP(state, problem)
    state.slack = Slackness(state, problem.G if problem.hasSublevel else None, p)
    return state


def Recentre(raw: SRawMultipliers, F: float, p: float) -> SRawMultipliers:
    """Move the objective scale to F keeping lam = 1; constraint multipliers follow by (s/F)^p."""
    logFactor = float(np.clip(p * (math.log(raw.objectiveScale) - math.log(F)), -LOG_CLIP, LOG_CLIP))
    factor = math.exp(logFactor)
    return SRawMultipliers(raw.lam, raw.mu * factor, raw.psi * factor, F, raw.sublevelScale)

def Centred(F: float, p: float, scale: float, firstScale: float) -> bool:
    if F <= SCALE_FLOOR * firstScale:
        return True
    return abs(p * (math.log(F) - math.log(scale))) <= 1.0


def WarmMultipliers(state: SSolveState, pNew: float, problem) -> SRawMultipliers:
    """Raw multipliers for pNew reproducing the rescaled triple of state at u_prev."""
    CheckExponent(pNew)
    mesh = problem.mesh
    U, P = mesh.Sample(state.field.values)
    F = LpNorm(problem.densityF.ValuesFrom(mesh.quadPoints, U, P), mesh.quadWeights, mesh.measure, pNew)
    s = F if F > 0.0 else 1.0
    t = SublevelScale(problem) if problem.hasSublevel else 1.0
    rescaled = state.rescaled
    psiShape = state.raw.psi.shape
    if rescaled is None or rescaled.Lambda <= 0.0:
        return SRawMultipliers(1.0, 0.0, np.zeros(psiShape), s, t)

    # λ̂' = F^{p-1}/s^p, R' = λ̂'/Λ
    logLamHat = ((pNew - 1.0) * math.log(F) if F > 0.0 else 0.0) - pNew * math.log(s)
    logR = logLamHat - math.log(rescaled.Lambda)
    mu = 0.0
    if problem.hasSublevel and rescaled.M > 0.0:
        G = LpNorm(problem.densityG.ValuesFrom(mesh.quadPoints, U, P), mesh.quadWeights, mesh.measure, pNew)
        logMu = math.log(rescaled.M) + logR + pNew * math.log(t) - ((pNew - 1.0) * math.log(G) if G > 0.0 else 0.0)
        mu = math.exp(min(logMu, LOG_CLIP))
    psi = rescaled.Psi * math.exp(min(logR, LOG_CLIP))
    return SRawMultipliers(1.0, mu, psi, s, t)


def LadderExponents(p: float, config: SSolveConfig) -> list:
    """p/γ^k for k = K..1, K the largest k with p/γ^k ≥ ladderStart; empty below ladderStart·γ."""
    if config.ladderStart is None or p < config.ladderStart * config.ladderGrowth:
        return []
    K = int(math.floor(math.log(p / config.ladderStart) / math.log(config.ladderGrowth) + 1e-12))
    return [p / config.ladderGrowth ** k for k in range(K, 0, -1)]


def SolveP(problem, p: float, config: Optional[SSolveConfig] = None, warmStart: Optional[SField] = None,
           warmMultipliers: Optional[SRawMultipliers] = None, reference: Optional[SField] = None,
           previousP: Optional[float] = None) -> SSolveState:
    """Constrained minimiser of F_p by an augmented Lagrangian outer loop around InnerMinimize."""
    config = config or SSolveConfig()
    CheckExponent(p)
    mesh, N = problem.mesh, problem.components
    if warmStart is not None and warmStart.components != N:
        raise SExceptionShapeMismatch(f"warm start has {warmStart.components} components, problem has {N}.")
    tic = time.perf_counter()

    ladder = LadderExponents(p, config) if warmStart is None else []
    if ladder:
        if reference is None:
            reference = CompatibilityCheck(problem, ladder[0], config)
        rung = None
        for q in ladder:
            rung = SolveP(problem, q, config,
                          warmStart=None if rung is None else rung.field,
                          warmMultipliers=None if rung is None else WarmMultipliers(rung, q, problem),
                          reference=reference, previousP=None if rung is None else rung.p)
        logger.info(f"p = {p}: cold start climbed {len(ladder)} rung(s) from p = {ladder[0]:g}")
        warmStart, warmMultipliers, previousP = rung.field, WarmMultipliers(rung, p, problem), rung.p

    if reference is None:
        reference = CompatibilityCheck(problem, p, config, warmStart)
    start = warmStart if warmStart is not None else reference

    t = SublevelScale(problem) if problem.hasSublevel else 1.0
    F0 = problem.densityF.Sample(mesh, start)
    F0 = LpNorm(F0, mesh.quadWeights, mesh.measure, p)
    psi0 = InitialPsi(problem, config.multiplierInit)
    if (warmMultipliers is not None) and (warmMultipliers.psi.shape == psi0.shape):
        raw = warmMultipliers
    else:
        raw = SRawMultipliers(1.0, max(0.0, config.multiplierInit) if problem.hasSublevel else 0.0, psi0, F0 if F0 > 0.0 else 1.0, t)
    firstScale = raw.objectiveScale

    free = start.Free()
    penalty = config.penaltyInit
    previous = math.inf
    converged, innerConverged, descent = False, True, True
    outer, innerIters = 0, 0
    feasibility, complementarity = math.inf, math.inf
    for outer in range(1, config.maxOuter + 1):
        al = SAugmentedLagrangian(problem, p, raw, penalty)
        before, _ = al.Evaluate(free)
        inner = InnerMinimize(al.Evaluate, free, config.innerTol, config.maxInner)
        innerIters += inner.iterations
        innerConverged = inner.converged
        descent = descent and (inner.value <= before + config.innerTol * max(1.0, abs(before)))
        free = inner.x

        parts = al.Parts(mesh.Embed(free, N))
        raw = al.UpdatedMultipliers(free)
        field = SField.FromFree(mesh, free, N)
        feasibility = Feasibility(problem, field, p)
        complementarity = Complementarity(problem, parts, problem.constraint)
        F = LpNorm(problem.densityF.Sample(mesh, field), mesh.quadWeights, mesh.measure, p)
        centred = Centred(F, p, raw.objectiveScale, firstScale)
        logger.debug(f"p = {p} outer {outer}: L = {inner.value:.6e}, feas = {feasibility:.3e}, compl = {complementarity:.3e}, rho = {penalty:.1e}, centred = {centred}")
        if feasibility <= config.outerTol and complementarity <= config.outerTol and centred:
            converged = True
            break
        if not centred:
            raw = Recentre(raw, F, p)
        measure = max(feasibility, complementarity)
        if measure > 0.25 * previous:
            penalty = min(penalty * config.penaltyGrowth, config.penaltyMax)
        previous = measure

    field = SField.FromFree(mesh, free, N)
    state = AssembleState(problem, p, field, raw)
    state.complementarity = complementarity
    state.outerIters = outer
    state.innerIters = innerIters
    state.penalty = penalty
    state.converged = converged
    state.innerConverged = innerConverged

    tol = 1e-10 * max(1.0, state.Fp)
    state.checks["feasible"] = state.feasibility <= config.outerTol
    state.checks["descent"] = descent
    if previousP is not None:
        Fprev = LpNorm(problem.densityF.Sample(mesh, field), mesh.quadWeights, mesh.measure, previousP)
        state.checks["holderMonotone"] = Fprev <= state.Fp + tol
    if Feasibility(problem, reference, p) <= config.outerTol:
        Fref = LpNorm(problem.densityF.Sample(mesh, reference), mesh.quadWeights, mesh.measure, p)
        state.checks["minimality"] = state.Fp <= Fref + config.outerTol * max(1.0, Fref)
    state.wallMs = 1000.0 * (time.perf_counter() - tic)

    if not converged:
        logger.warning(f"p = {p}: outer loop stopped after {outer} iterations, feasibility {feasibility:.3e}, complementarity {complementarity:.3e}")
    else:
        logger.info(f"p = {p}: F_p = {state.Fp:.10g}, outer {outer}, inner {innerIters}, kkt {state.kktResidual:.3e}")
    return state
