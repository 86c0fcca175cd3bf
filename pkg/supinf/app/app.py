import os
import sys
import traceback
import appdirs
import numpy as np
import simplejson as json
from concurrent.futures import ProcessPoolExecutor
from termcolor import colored

from supinf.common.SConfig import config, LOG_LEVELS
from supinf.common.SExceptions import SExceptionConfig, SExceptionInfeasible
from supinf.common.SDataType import SRawMultipliers, SCheckReport
from supinf.common.SSerialization import SJSONEncoder, DumpJson, LoadJson, DumpField, LoadField, WriteCSV
from supinf.common.utils.SLogger import logger, set_log_level
from supinf.core.SMesh import SField
from supinf.core.SProblem import BuildProblem
from supinf.core.SSolver import SolveP, AssembleState
from supinf.core.SKKT import CheckState, QuadraticIdentityGap, EllipticityGap
from supinf.core.SContinuation import RunSchedule, MeasurePairingTrace, TRACE_COLUMNS
from supinf.oracle.SOracle import RunCase, CaseNames
from supinf.app.config import ParseConfig, OutputDirectory

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_ABORTED = 4

STATE_COLUMNS = ["p", "F_p", "G_p", "mu", "psi_norm", "kkt_res", "slack", "feasibility", "outer_iters", "wall_ms"]


def Tolerances(kwargs: dict) -> dict:
    return {"kktTol": kwargs.get("kktTol", config.kktTol), "massTol": kwargs.get("massTol", config.massTol),
            "slackTol": kwargs.get("slackTol", config.slackTol)}

def Failures(report: SCheckReport) -> list:
    return list(report.failures)

def ReportFailures(failures: list, outDir: str):
    print(json.dumps({"failures": failures}, indent=2))
    os.makedirs(outDir, exist_ok=True)
    with open(os.path.join(outDir, "failures.json"), "w") as f:
        json.dump({"failures": failures}, f, indent=2)
    return

def PrintVerdict(name: str, failures: list):
    if failures:
        print(colored(f"FAIL  {name}: {len(failures)} invariant(s) failed", "red"))
    else:
        print(colored(f"PASS  {name}", "green"))
    return


def WriteState(state, problem, runConfig, outDir: str):
    os.makedirs(outDir, exist_ok=True)
    if "csv" in runConfig.output.formats:
        WriteCSV([state.ToRow(runConfig.output.timing)], STATE_COLUMNS, os.path.join(outDir, "state.csv"))
    if "field" in runConfig.output.formats:
        DumpField(state.field, os.path.join(outDir, "u.field"))
    data = state.ToJson()
    if not runConfig.output.timing:
        data["wallMs"] = 0.0
    DumpJson(data, os.path.join(outDir, "state.json"))
    DumpJson(runConfig.model_dump(), os.path.join(outDir, "config.json"))
    return


def RunSolve(configPath: str, outDir: str, p=None, warm=None, **tolerances) -> tuple:
    runConfig = ParseConfig(configPath)
    outDir = OutputDirectory(runConfig, outDir, config.outputDirectory)
    problem = BuildProblem(runConfig)
    if not problem.constraint.theoryBacked:
        logger.warning(f"holonomic pi '{problem.constraint.pi}' is not covered by the multiplier theory; diagnostics are informational")
    p = runConfig.schedule.p0 if p is None else p
    warmStart = None if warm is None else LoadField(warm, problem.mesh)

    state = SolveP(problem, p, runConfig.solver, warmStart=warmStart)
    if state.degenerate:
        logger.warning("constraint differential vanishes on the feasible set; multiplier reported from the augmented Lagrangian")
    WriteState(state, problem, runConfig, outDir)
    report = CheckState(state, problem, outerTol=runConfig.solver.outerTol, **Tolerances(tolerances))
    failures = Failures(report)
    PrintVerdict(f"solve p = {p:g}", failures)
    if failures:
        ReportFailures(failures, outDir)
        return EXIT_INVARIANT, failures
    return EXIT_OK, []


def RunSweep(configPath: str, outDir: str, **tolerances) -> tuple:
    runConfig = ParseConfig(configPath)
    outDir = OutputDirectory(runConfig, outDir, config.outputDirectory)
    problem = BuildProblem(runConfig)
    tol = Tolerances(tolerances)
    trace = RunSchedule(problem, runConfig.schedule, runConfig.solver, **tol)

    os.makedirs(outDir, exist_ok=True)
    if trace.states:
        WriteCSV(trace.ToRows(problem, runConfig.output.timing), TRACE_COLUMNS, os.path.join(outDir, "trace.csv"))
    for j, state in enumerate(trace.states):
        WriteState(state, problem, runConfig, os.path.join(outDir, f"step_{j}"))

    failures = []
    for state, report in zip(trace.states, trace.reports):
        failures += [f"p={state.p:g}: {f}" for f in report.failures]
    if len(trace.states) >= 2:
        _, tailGaps = MeasurePairingTrace(trace, problem)
        failures += Failures(trace.consistency)
        DumpJson({"limitEstimates": trace.limitEstimates, "pairingTailGaps": tailGaps,
                  "aborted": trace.aborted, "reason": trace.reason}, os.path.join(outDir, "limit.json"))

    PrintVerdict(f"sweep {len(trace.states)}/{len(trace.exponents)} states", failures)
    if trace.aborted:
        logger.critical(f"sweep aborted after {len(trace.states)} state(s): {trace.reason}")
        ReportFailures(failures + [f"aborted: {trace.reason}"], outDir)
        return EXIT_ABORTED, failures + [f"aborted: {trace.reason}"]
    if failures:
        ReportFailures(failures, outDir)
        return EXIT_INVARIANT, failures
    return EXIT_OK, []


def RunCheck(stateDir: str, **tolerances) -> tuple:
    """Recompute every residual and identity of a dumped solve."""
    runConfig = ParseConfig(os.path.join(stateDir, "config.json"))
    problem = BuildProblem(runConfig)
    fieldPath = os.path.join(stateDir, "u.field")
    if not os.path.exists(fieldPath):
        raise SExceptionConfig([f"{fieldPath} is missing; the solve needs output.formats to include 'field'"])
    field = LoadField(fieldPath, problem.mesh)
    data = LoadJson(os.path.join(stateDir, "state.json"))
    state = AssembleState(problem, data["p"], field, SRawMultipliers.FromJson(data["raw"]))
    state.converged = data["converged"]
    state.outerIters = data["outerIters"]
    state.checks = dict(data.get("checks", {}))

    report = CheckState(state, problem, outerTol=runConfig.solver.outerTol, **Tolerances(tolerances))
    drift = abs(state.Fp - data["Fp"])
    report.Record("recordedEnergy", drift <= 1e-14 * max(1.0, abs(data["Fp"])), drift, f"F_p {state.Fp!r} vs recorded {data['Fp']!r}")

    rng = np.random.default_rng(runConfig.solver.seed)
    other = SField.FromFunction(problem.mesh, lambda x: rng.standard_normal((len(x), problem.components)), problem.components)
    scale = state.sigma.Pair(problem.densityF.Quadratic(problem.mesh.quadPoints, problem.mesh.Sample(field.values)[1])) + \
        state.sigma.Pair(problem.densityF.Quadratic(problem.mesh.quadPoints, problem.mesh.Sample(other.values)[1]))
    gap = QuadraticIdentityGap(field, other, state.sigma, problem.densityF, problem.mesh)
    report.Record("quadraticIdentity", gap <= 1e-12 * max(1.0, scale), gap)
    lhs, rhs = EllipticityGap(field, other, state.sigma, problem.densityF, problem.mesh)
    report.Record("ellipticity", lhs >= rhs - 1e-12 * max(1.0, abs(rhs)), lhs - rhs, f"{lhs!r} < {rhs!r}")

    failures = Failures(report)
    PrintVerdict(f"check {stateDir}", failures)
    print(json.dumps({"checks": report.checks, "values": report.values}, indent=2, cls=SJSONEncoder, ignore_nan=True))
    if failures:
        ReportFailures(failures, stateDir)
        return EXIT_INVARIANT, failures
    return EXIT_OK, []


def RunOracle(case: str, outDir=None) -> tuple:
    result = RunCase(case)
    print(colored(f"oracle case '{case}'", "yellow"))
    print(json.dumps(result, indent=2, cls=SJSONEncoder, ignore_nan=True))
    if outDir is not None:
        os.makedirs(outDir, exist_ok=True)
        DumpJson(result, os.path.join(outDir, f"oracle_{case}.json"))
    return EXIT_OK, []


def RunOne(command: str, configPath: str, outDir, kwargs: dict) -> tuple:
    """Exit code and failures of one run; exceptions are mapped to the documented exit codes."""
    try:
        if command == "solve":
            return RunSolve(configPath, outDir, p=kwargs.get("p"), warm=kwargs.get("warm"), **Tolerances(kwargs))
        return RunSweep(configPath, outDir, **Tolerances(kwargs))
    except SExceptionConfig as e:
        print(colored("configuration errors:", "red"))
        print(json.dumps({"errors": e.errors}, indent=2))
        return EXIT_CONFIG, e.errors
    except SExceptionInfeasible as e:
        print(colored(str(e), "red"))
        return EXIT_INFEASIBLE, [str(e)]


def RunMany(command: str, configPaths: list, outDir, jobs: int, kwargs: dict) -> int:
    if len(configPaths) == 1:
        return RunOne(command, configPaths[0], outDir, kwargs)[0]
    base = outDir or config.outputDirectory
    targets = [os.path.join(base, os.path.splitext(os.path.basename(path))[0]) for path in configPaths]
    if jobs <= 1:
        results = [RunOne(command, path, target, kwargs) for path, target in zip(configPaths, targets)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(RunOne, [command] * len(configPaths), configPaths, targets, [kwargs] * len(configPaths)))
    return max(code for code, _ in results)


def main(argv=None):
    config.Initialize(configFile=os.path.join(appdirs.user_config_dir("supinf"), "config.json"))

    import argparse
    parser = argparse.ArgumentParser(prog="supinf", description="Lp approximation of constrained supremal minimisation.")
    parser.add_argument('--logLevel', type=str, default=config.logLevel, choices=LOG_LEVELS, help="logLevel sets the level of the supinf loggers. Default: %(default)s")
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", help="Solve the constrained problem at one exponent p.")
    solve.add_argument('--config', type=str, nargs="+", required=True, help="config is one or more run config JSON files.")
    solve.add_argument('--p', type=float, default=None, help="p is the exponent to solve at; the schedule's p0 is used when unset. Default: %(default)s")
    solve.add_argument('--warm', type=str, default=None, help="warm is a u.field dump used as the starting field. Default: %(default)s")
    solve.add_argument('--out', type=str, default=None, help="out is the output directory; falls back to output.directory, then SUPINF_OUT. Default: %(default)s")
    solve.add_argument('--jobs', type=int, default=config.jobs, help="jobs is the number of worker processes for several config files. Default: %(default)s")

    sweep = subparsers.add_parser("sweep", help="Run the warm-started p schedule and write trace.csv.")
    sweep.add_argument('--config', type=str, nargs="+", required=True, help="config is one or more run config JSON files.")
    sweep.add_argument('--out', type=str, default=None, help="out is the output directory; falls back to output.directory, then SUPINF_OUT. Default: %(default)s")
    sweep.add_argument('--jobs', type=int, default=config.jobs, help="jobs is the number of worker processes for several config files. Default: %(default)s")

    for sub in (solve, sweep):
        sub.add_argument('--kkt-tol', dest="kktTol", type=float, default=config.kktTol, help="kkt-tol bounds the KKT residual of each state. Default: %(default)s")
        sub.add_argument('--mass-tol', dest="massTol", type=float, default=config.massTol, help="mass-tol bounds the excess measure mass over 1. Default: %(default)s")
        sub.add_argument('--slack-tol', dest="slackTol", type=float, default=config.slackTol, help="slack-tol bounds complementary slackness relative to 1 + G. Default: %(default)s")

    check = subparsers.add_parser("check", help="Recompute all residuals and identities of a dumped state.")
    check.add_argument('--state', type=str, required=True, help="state is a directory written by solve (or a sweep step_<j>).")
    check.add_argument('--kkt-tol', dest="kktTol", type=float, default=config.kktTol, help="kkt-tol bounds the KKT residual. Default: %(default)s")
    check.add_argument('--mass-tol', dest="massTol", type=float, default=config.massTol, help="mass-tol bounds the excess measure mass over 1. Default: %(default)s")
    check.add_argument('--slack-tol', dest="slackTol", type=float, default=config.slackTol, help="slack-tol bounds complementary slackness relative to 1 + G. Default: %(default)s")

    oracle = subparsers.add_parser("oracle", help="Print the certified values of a named oracle case.")
    oracle.add_argument('--case', type=str, required=True, choices=CaseNames(), help="case names the oracle case.")
    oracle.add_argument('--out', type=str, default=None, help="out optionally stores the result as JSON. Default: %(default)s")

    kwargs = vars(parser.parse_args(argv))
    config.Update({"logLevel": kwargs["logLevel"]})
    set_log_level(kwargs["logLevel"])

    try:
        if kwargs["command"] == "check":
            try:
                code = RunCheck(kwargs["state"], **Tolerances(kwargs))[0]
            except SExceptionConfig as e:
                print(json.dumps({"errors": e.errors}, indent=2))
                code = EXIT_CONFIG
        elif kwargs["command"] == "oracle":
            code = RunOracle(kwargs["case"], kwargs["out"])[0]
        else:
            code = RunMany(kwargs["command"], kwargs["config"], kwargs["out"], kwargs["jobs"], kwargs)
    except Exception as e:
        logger.critical(f"supinf is exiting on an unexpected exception: {str(e)}", exc_info=True)
        traceback.print_tb(e.__traceback__)
        raise
    sys.exit(code)

if __name__ == '__main__':
    main()
