import math
import threading
import numpy as np
import pandas as pd
from typing import Optional
from pydantic import BaseModel, ConfigDict, Field, PositiveInt
from transitions.extensions import LockedMachine

from supinf.common.SExceptions import SExceptionInvalidExponent
from supinf.common.SDataType import SCheckReport
from supinf.common.utils.SLogger import get_process_logger
from supinf.common.utils.SDecorators import atomic_transition
from supinf.core.SSolver import SSolveConfig, SSolveState, SolveP, CompatibilityCheck, WarmMultipliers
from supinf.core.SKKT import CheckState, KKTResidualLimit

logger = get_process_logger("continuation")

TRACE_COLUMNS = ["j", "p", "F_p", "F_inf_of_up", "G_p", "mu", "Lambda", "M", "psi_norm", "kkt_res", "slack",
                 "sigma_mass", "tau_mass", "pairing_1", "pairing_x", "pairing_x2", "pairing_bump", "outer_iters", "wall_ms"]


def DefaultP0(dim: int) -> float:
    return float(max(dim, 2) + 1)


class SSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    p0: Optional[float] = None
    gamma: float = Field(2.0, gt=1.0)
    steps: PositiveInt = 6

    def Exponents(self, dim: int) -> list:
        p0 = DefaultP0(dim) if self.p0 is None else self.p0
        if not p0 > dim:
            raise SExceptionInvalidExponent(f"schedule must start above the dimension, got p0 = {p0} for dim {dim}.")
        return [p0 * self.gamma ** j for j in range(self.steps)]


class SContinuationTrace():
    def __init__(self, exponents: list):
        self.exponents = exponents
        self.states = []
        self.reports = []
        self.limitEstimates = {}
        self.consistency = None
        self.reference = None
        self.aborted = False
        self.reason = ""
        return

    def ToRows(self, problem, timing: bool = True) -> list:
        pairings, _ = MeasurePairingTrace(self, problem) if self.states else (None, {})
        rows = []
        for j, state in enumerate(self.states):
            row = state.ToRow(timing)
            row.update({"j": j, "F_inf_of_up": state.Finf, "Lambda": state.rescaled.Lambda, "M": state.rescaled.M,
                        "sigma_mass": state.sigma.mass, "tau_mass": state.tau.mass})
            row.update({f"pairing_{name}": pairings[f"pairing_{name}"].iloc[j] for name in ("1", "x", "x2", "bump")})
            rows.append({column: row[column] for column in TRACE_COLUMNS})
        return rows


def BumpFunction(mesh):
    """exp(−1/(1−r²)) on a ball at the centre of the domain, radius 0.2 of the shortest side."""
    center = np.array([0.5 * (lo + hi) for lo, hi in mesh.extent])
    radius = 0.2 * min(hi - lo for lo, hi in mesh.extent)

    def Bump(x):
        r2 = np.sum((x - center) ** 2, axis=1) / (radius * radius)
        out = np.zeros(len(x))
        inside = r2 < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        return out
    return Bump

def DefaultTestFunctions(mesh) -> dict:
    return {"1": lambda x: np.ones(len(x)),
            "x": lambda x: x[:, 0],
            "x2": lambda x: x[:, 0] ** 2,
            "bump": BumpFunction(mesh)}

def MeasurePairingTrace(trace: SContinuationTrace, problem, testFunctions: Optional[dict] = None) -> tuple:
    """∫φ dσ_{p_j} for every state and test function, with the tail gap |last − previous|."""
    mesh = problem.mesh
    testFunctions = DefaultTestFunctions(mesh) if testFunctions is None else testFunctions
    table = pd.DataFrame({"p": [state.p for state in trace.states]})
    tailGaps = {}
    for name, phi in testFunctions.items():
        values = np.asarray(phi(mesh.quadPoints), dtype=float)
        column = [state.sigma.Pair(values) for state in trace.states]
        table[f"pairing_{name}"] = column
        tailGaps[name] = abs(column[-1] - column[-2]) if len(column) >= 2 else math.nan
    return table, tailGaps


def SupEstimateConsistency(trace: SContinuationTrace, G: Optional[float] = None, tol: float = 1e-8) -> SCheckReport:
    report = SCheckReport()
    F = [state.Fp for state in trace.states]
    if not F:
        return report
    for j in range(1, len(F)):
        ok = F[j - 1] <= F[j] + tol * max(1.0, abs(F[j]))
        report.Record(f"nondecreasing_{j}", ok, F[j] - F[j - 1], f"F_p dropped from {F[j - 1]!r} to {F[j]!r}")
    bound = trace.states[-1].Finf + tol
    report.Record("supBound", max(F) <= bound, max(F) - trace.states[-1].Finf, f"max F_p {max(F)!r} exceeds F_inf(u_last) {bound!r}")
    if G is not None:
        for j, state in enumerate(trace.states):
            if state.Gp is not None:
                report.Record(f"sublevel_{j}", state.Gp <= G + tol, state.Gp - G, f"G_p = {state.Gp!r} > G = {G!r}")
    return report

def TailOscillation(trace: SContinuationTrace, window: int = 3) -> dict:
    tail = trace.states[-window:]
    out = {}
    for name, get in (("Lambda", lambda s: s.rescaled.Lambda), ("M", lambda s: s.rescaled.M), ("PsiNorm", lambda s: s.rescaled.PsiNorm())):
        values = [get(s) for s in tail]
        out[name] = max(values) - min(values) if values else 0.0
    return out


class SContinuationRunner():
    states = ["init", "running", "completed", "aborted"]

    def __init__(self, problem, schedule: SSchedule, config: Optional[SSolveConfig] = None, kktTol: float = 1e-6,
                 massTol: float = 1e-12, slackTol: float = 1e-8):
        self.problem = problem
        self.schedule = schedule
        self.config = config or SSolveConfig()
        self.tolerances = {"kktTol": kktTol, "massTol": massTol, "slackTol": slackTol}
        self.exponents = schedule.Exponents(problem.mesh.dim)
        self.trace = SContinuationTrace(self.exponents)
        self.reference = None

        self.machine = LockedMachine(model=self, states=SContinuationRunner.states, initial='init')
        self.machine.add_transition(trigger='start', source='init', dest='running')
        self.machine.add_transition(trigger='advance', source='running', dest='=')
        self.machine.add_transition(trigger='finish', source='running', dest='completed')
        self.machine.add_transition(trigger='abort', source='running', dest='aborted')
        self.methodLock = threading.RLock()
        return

    @atomic_transition("start")
    def Start(self):
        self.reference = CompatibilityCheck(self.problem, self.exponents[0], self.config)
        self.trace.reference = self.reference
        return

    @atomic_transition("advance")
    def Step(self, j: int) -> SSolveState:
        p = self.exponents[j]
        previous = self.trace.states[-1] if self.trace.states else None
        state = SolveP(self.problem, p, self.config,
                       warmStart=None if previous is None else previous.field,
                       warmMultipliers=None if previous is None else WarmMultipliers(previous, p, self.problem),
                       reference=self.reference,
                       previousP=None if previous is None else previous.p)
        self.trace.states.append(state)
        self.trace.reports.append(CheckState(state, self.problem, outerTol=self.config.outerTol, **self.tolerances))
        return state

    @atomic_transition("finish")
    def Finish(self):
        self.Summarize()
        logger.info(f"schedule completed: {len(self.trace.states)} states, F_p = {self.trace.states[-1].Fp:.10g}")
        return

    @atomic_transition("abort")
    def Abort(self, reason: str):
        self.trace.aborted = True
        self.trace.reason = reason
        if self.trace.states:
            self.Summarize()
        logger.warning(f"schedule aborted: {reason}")
        return

    def Summarize(self):
        last = self.trace.states[-1]
        self.trace.limitEstimates = {"F_inf_estimate": last.Finf, "F_p_last": last.Fp, "G_inf": last.Ginf,
                                     "Lambda": last.rescaled.Lambda, "M": last.rescaled.M, "PsiNorm": last.rescaled.PsiNorm(),
                                     "oscillation": TailOscillation(self.trace),
                                     "limit": KKTResidualLimit(self.trace, self.problem)}
        self.trace.consistency = SupEstimateConsistency(self.trace, self.problem.G if self.problem.hasSublevel else None)
        if not self.trace.consistency.passed:
            logger.warning(f"F_p trace is not monotone or exceeds its sup bound: {self.trace.consistency.failures}")
        return

    def Run(self) -> SContinuationTrace:
        self.Start()
        for j in range(len(self.exponents)):
            state = self.Step(j)
            if not state.converged:
                self.Abort(f"solve at p = {state.p} did not converge after {state.outerIters} outer iterations")
                return self.trace
        self.Finish()
        return self.trace


def RunSchedule(problem, schedule: SSchedule, config: Optional[SSolveConfig] = None, **tolerances) -> SContinuationTrace:
    return SContinuationRunner(problem, schedule, config, **tolerances).Run()
