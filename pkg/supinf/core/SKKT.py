import math
import numpy as np
from typing import Optional

from supinf.common.SExceptions import SExceptionVanishingMultipliers
from supinf.common.SDataType import SRawMultipliers, SRescaledMultipliers, SDiscreteMeasure, SCheckReport, PsiNorm
from supinf.core.SMesh import SMesh, SField
from supinf.core.SFunctionals import LpNorm, MinEllipticity, LOG_CLIP


def MeasureFrom(values: np.ndarray, weights: np.ndarray, measure: float, p: float, energy: float) -> SDiscreteMeasure:
    """Atoms w_q/|Ω| · (d_q/energy)^{p-1}; the zero measure when the energy vanishes."""
    if energy <= 0.0:
        return SDiscreteMeasure.Zero(len(values))
    out = np.zeros(len(values))
    pos = values > 0.0
    logRatio = np.log(values[pos]) - math.log(energy)
    out[pos] = (weights[pos] / measure) * np.exp(np.minimum((p - 1.0) * logRatio, LOG_CLIP))
    return SDiscreteMeasure(out)

def BuildMeasures(field: SField, p: float, problem, Fp: Optional[float] = None, Gp: Optional[float] = None) -> tuple:
    mesh = problem.mesh
    U, P = mesh.Sample(field.values)
    fValues = problem.densityF.ValuesFrom(mesh.quadPoints, U, P)
    if Fp is None:
        Fp = LpNorm(fValues, mesh.quadWeights, mesh.measure, p)
    sigma = MeasureFrom(fValues, mesh.quadWeights, mesh.measure, p, Fp)
    if problem.densityG is None:
        return sigma, SDiscreteMeasure.Zero(mesh.nQuad)
    gValues = problem.densityG.ValuesFrom(mesh.quadPoints, U, P)
    if Gp is None:
        Gp = LpNorm(gValues, mesh.quadWeights, mesh.measure, p)
    return sigma, MeasureFrom(gValues, mesh.quadWeights, mesh.measure, p, Gp)


def LogPositive(x: float) -> float:
    return math.log(x) if x > 0.0 else -math.inf

def Rescale(raw: SRawMultipliers, Fp: float, Gp: Optional[float], p: float) -> SRescaledMultipliers:
    """λ̂ = λF_p^{p-1}, μ̂ = μG_p^{p-1} (λ, μ when the energy is zero), R = λ̂ + μ̂ + ‖ψ‖,
    all in the log domain; λ and μ include the scales the solver evaluated with."""
    logLam = LogPositive(raw.lam) - p * math.log(raw.objectiveScale)
    if Fp > 0.0:
        logLam += (p - 1.0) * math.log(Fp)
    logMu = LogPositive(raw.mu) - p * math.log(raw.sublevelScale)
    if (Gp is not None) and Gp > 0.0:
        logMu += (p - 1.0) * math.log(Gp)
    psiNorm = PsiNorm(raw.psi)
    logPsi = LogPositive(psiNorm)

    top = max(logLam, logMu, logPsi)
    if top == -math.inf:
        raise SExceptionVanishingMultipliers("all multipliers vanish, R = 0.")
    a, b = math.exp(logLam - top), math.exp(logMu - top)
    shift = math.exp(-top) if math.isfinite(logPsi) else 0.0
    c = psiNorm * shift
    total = a + b + c
    logR = top + math.log(total)
    R = math.exp(logR) if logR < LOG_CLIP else math.inf
    return SRescaledMultipliers(a / total, b / total, (raw.psi * shift) / total, R, logR)


def KKTResidualP(state, problem, testBasis=None, relaxed: bool = False, seed: int = 0) -> float:
    """max over hat functions φ of |LHS(φ) − RHS(φ)| / (1 + ‖φ‖_{W^{1,∞}}) for
    Λ∫f_P:Dφ dσ + M∫g_η·φ dτ = ⟨−Ψ, dc(φ)⟩, with dc the constraint linearisation
    (or the π-relaxed dQ when relaxed=True)."""
    mesh = problem.mesh
    x = mesh.quadPoints
    N = state.field.components
    U, P = mesh.Sample(state.field.values)
    rescaled = state.rescaled

    lhs = np.zeros((mesh.nNodes, N))
    if rescaled.Lambda > 0.0 and state.sigma.mass > 0.0:
        fP = problem.densityF.Derivative(x, P)
        lhs += rescaled.Lambda * mesh.PullBack(None, state.sigma.weights[:, None, None] * fP, N)
    if rescaled.M > 0.0 and problem.densityG is not None and state.tau.mass > 0.0:
        gEta = problem.densityG.Derivative(x, U)
        lhs += rescaled.M * mesh.PullBack(state.tau.weights[:, None] * gEta, None, N)

    rhs = np.zeros((mesh.nNodes, N))
    constraint = problem.constraint
    if constraint.entries and rescaled.Psi.size:
        dual = rescaled.Psi
        if relaxed:
            dual = dual * constraint.RelaxFactor(constraint.InnerFrom(x, U, P, mesh.quadWeights))
        rhs = -constraint.InnerAdjointFrom(mesh, x, U, P, dual)

    scaled = (np.abs(lhs - rhs)[mesh.interior] / (1.0 + mesh.BasisNorms()[mesh.interior])[:, None]).ravel()
    if testBasis is None:
        return float(scaled.max()) if scaled.size else 0.0
    if np.isscalar(testBasis):
        count = min(int(testBasis), scaled.size)
        testBasis = np.sort(np.random.default_rng(seed).choice(scaled.size, size=count, replace=False))
    return float(scaled[np.asarray(testBasis, dtype=int)].max())


def Slackness(state, G: Optional[float], p: Optional[float] = None) -> float:
    """|μ(G_p − G)| at finite p, |M(G_∞ − G)| when p is infinite; μ is the multiplier of the
    normalised sublevel inequality."""
    if G is None or state.Gp is None:
        return 0.0
    if p is not None and math.isinf(p):
        return abs(state.rescaled.M * (state.Ginf - G))
    return abs(state.raw.mu * (state.Gp - G))


def QuadraticIdentityGap(u: SField, v: SField, sigma: SDiscreteMeasure, density, mesh: SMesh) -> float:
    """|∫f(Dv−Du)dσ − (∫f(Dv)dσ − ∫f(Du)dσ + ∫f_P(Du):(Du−Dv)dσ)| for the quadratic form of the density."""
    x = mesh.quadPoints
    _, Pu = mesh.Sample(u.values)
    _, Pv = mesh.Sample(v.values)
    lhs = sigma.Pair(density.Form(x, Pv - Pu, Pv - Pu))
    rhs = (sigma.Pair(density.Form(x, Pv, Pv)) - sigma.Pair(density.Form(x, Pu, Pu))
           + sigma.Pair(np.einsum("qij,qij->q", 2.0 * density.Apply(x, Pu), Pu - Pv)))
    return abs(lhs - rhs)

def EnergyMeasureIdentity(u: SField, p: float, sigma: SDiscreteMeasure, density, mesh: SMesh) -> tuple:
    """(∫f(Du) dσ, F_p(u))."""
    values = density.Sample(mesh, u)
    return sigma.Pair(values), LpNorm(values, mesh.quadWeights, mesh.measure, p)

def EllipticityGap(u: SField, v: SField, sigma: SDiscreteMeasure, density, mesh: SMesh) -> tuple:
    """(∫A:(Du−Dv)⊗(Du−Dv) dσ, α₀∫|Du−Dv|² dσ); the first never falls below the second."""
    x = mesh.quadPoints
    _, Pu = mesh.Sample(u.values)
    _, Pv = mesh.Sample(v.values)
    D = Pu - Pv
    return sigma.Pair(density.Form(x, D, D)), MinEllipticity(density, mesh) * sigma.Pair(np.einsum("qij,qij->q", D, D))


def KKTResidualLimit(trace, problem) -> dict:
    """Limit system diagnostics at the largest solved p."""
    last = trace.states[-1]
    return {"p": last.p,
            "kktResidual": KKTResidualP(last, problem),
            "slackness": Slackness(last, problem.G if problem.hasSublevel else None, math.inf),
            "Lambda": last.rescaled.Lambda, "M": last.rescaled.M, "PsiNorm": last.rescaled.PsiNorm()}


def CheckState(state, problem, kktTol: float = 1e-6, massTol: float = 1e-12, slackTol: float = 1e-8, outerTol: float = 1e-9) -> SCheckReport:
    report = SCheckReport()
    G = problem.G if problem.hasSublevel else None

    report.Record("converged", state.converged, detail=f"outer loop stopped after {state.outerIters} iterations")
    # Solve-time checks: feasible, descent, holderMonotone, minimality.
    for name, ok in state.checks.items():
        report.Record(f"solve.{name}", ok, detail=f"{name} failed at p = {state.p}")
    report.Record("feasibility", state.feasibility <= outerTol, state.feasibility, f"{state.feasibility:.3e} > {outerTol:.3e}")
    report.Record("sigmaMass", state.sigma.mass <= 1.0 + massTol, state.sigma.mass, f"{state.sigma.mass!r}")
    report.Record("tauMass", state.tau.mass <= 1.0 + massTol, state.tau.mass, f"{state.tau.mass!r}")

    lhs, rhs = EnergyMeasureIdentity(state.field, state.p, state.sigma, problem.densityF, problem.mesh)
    report.Record("energyIdentity", abs(lhs - rhs) <= 1e-10 * (1.0 + rhs), abs(lhs - rhs), f"{lhs!r} vs {rhs!r}")

    total = state.rescaled.Total()
    report.Record("normalization", abs(total - 1.0) <= 1e-14, abs(total - 1.0), f"Lambda + M + |Psi| = {total!r}")
    report.Record("positiveR", math.isfinite(state.rescaled.logR), state.rescaled.logR)
    report.Record("multiplierRange", (0.0 <= state.rescaled.Lambda <= 1.0) and (0.0 <= state.rescaled.M <= 1.0))

    slack = Slackness(state, G, state.p)
    slackBound = slackTol * (1.0 + (G or 0.0))
    report.Record("slackness", slack <= slackBound, slack, f"{slack:.3e} > {slackBound:.3e}")

    residual = KKTResidualP(state, problem)
    report.Record("kktResidual", residual <= kktTol, residual, f"{residual:.3e} > {kktTol:.3e}")
    return report
