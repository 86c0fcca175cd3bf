"""Warm-started p schedules, trace diagnostics and the runner state machine."""

import numpy as np
import pytest

from supinf.common.SExceptions import SExceptionInvalidExponent, SExceptionInfeasible, SExceptionNotReadyForOperation
from supinf.core.SSolver import SSolveConfig
from supinf.core.SContinuation import (SSchedule, DefaultP0, SContinuationRunner, RunSchedule, MeasurePairingTrace,
                                       SupEstimateConsistency, TailOscillation, TRACE_COLUMNS)
from supinf.oracle.SOracle import BuildCase, Analytic1DIsoperimetric


def test_schedule_exponents():
    assert SSchedule(p0=4.0, gamma=2.0, steps=6).Exponents(1) == [4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    assert SSchedule().Exponents(2) == [3.0 * 2.0 ** j for j in range(6)]
    assert DefaultP0(1) == 3.0
    with pytest.raises(SExceptionInvalidExponent):
        SSchedule(p0=2.0).Exponents(2)


def test_short_schedule_runs_to_completion():
    problem = BuildCase(32, {"kind": "isoperimetric", "H": -0.2}, g="abs", G=10.0)
    runner = SContinuationRunner(problem, SSchedule(p0=4.0, steps=3))
    trace = runner.Run()
    assert runner.state == "completed"
    assert not trace.aborted
    assert [s.p for s in trace.states] == [4.0, 8.0, 16.0]
    assert SupEstimateConsistency(trace, problem.G).passed
    assert trace.consistency.passed
    assert all(s.rescaled.M <= 1e-6 for s in trace.states)

    rows = trace.ToRows(problem, timing=False)
    assert len(rows) == 3
    assert list(rows[0]) == TRACE_COLUMNS
    assert all(row["wall_ms"] == 0.0 for row in rows)

    table, gaps = MeasurePairingTrace(trace, problem)
    assert list(table.columns) == ["p", "pairing_1", "pairing_x", "pairing_x2", "pairing_bump"]
    assert (table["pairing_1"] <= 1.0 + 1e-12).all()
    assert set(gaps) == {"1", "x", "x2", "bump"}

    assert set(trace.limitEstimates) >= {"F_inf_estimate", "Lambda", "M", "PsiNorm", "oscillation", "limit"}
    assert set(TailOscillation(trace)) == {"Lambda", "M", "PsiNorm"}
    with pytest.raises(SExceptionNotReadyForOperation):
        runner.Start()


def test_infeasible_schedule_never_starts():
    problem = BuildCase(16, {"kind": "isoperimetric", "H": -0.75}, g="abs", G=0.5)
    runner = SContinuationRunner(problem, SSchedule(p0=4.0, steps=2))
    with pytest.raises(SExceptionInfeasible):
        runner.Run()
    assert runner.state == "init"
    assert runner.trace.states == []


def test_unconverged_step_aborts():
    problem = BuildCase(32, {"kind": "isoperimetric", "H": -0.2}, g="abs", G=0.3)
    trace = RunSchedule(problem, SSchedule(p0=4.0, steps=3), SSolveConfig(maxOuter=1, penaltyInit=1e-3))
    assert trace.aborted
    assert "did not converge" in trace.reason
    assert len(trace.states) == 1


def test_sup_estimate_consistency_flags_drops():
    problem = BuildCase(32, {"kind": "isoperimetric", "H": -0.2}, g="abs", G=10.0)
    trace = RunSchedule(problem, SSchedule(p0=4.0, steps=2))
    trace.states[1].Fp = trace.states[0].Fp - 1e-3
    report = SupEstimateConsistency(trace, problem.G)
    assert not report.checks["nondecreasing_1"]
    assert report.checks["supBound"]


def test_schedule_summary_records_consistency():
    problem = BuildCase(32, {"kind": "isoperimetric", "H": -0.2}, g="abs", G=10.0)
    runner = SContinuationRunner(problem, SSchedule(p0=4.0, steps=2))
    trace = runner.Run()
    assert trace.consistency.passed
    assert {"nondecreasing_1", "supBound", "sublevel_0", "sublevel_1"} <= set(trace.consistency.checks)
    trace.states[1].Fp = trace.states[0].Fp - 1e-3
    runner.Summarize()
    assert not trace.consistency.passed
    assert trace.consistency.failures[0].startswith("nondecreasing_1")


@pytest.mark.slow
def test_trapezoid_benchmark():
    slope, _ = Analytic1DIsoperimetric(0.75, 1.0)
    assert slope == pytest.approx(4.0)
    problem = BuildCase(512, {"kind": "isoperimetric", "H": -0.75}, g="abs", G=1.0)
    trace = RunSchedule(problem, SSchedule(p0=4.0, gamma=2.0, steps=6))
    assert not trace.aborted
    assert trace.states[-1].Fp == pytest.approx(slope, rel=0.02)
    F = [s.Fp for s in trace.states]
    assert all(a <= b + 1e-8 for a, b in zip(F, F[1:]))
    _, profile = Analytic1DIsoperimetric(0.75, 1.0, problem.mesh)
    assert np.max(np.abs(trace.states[-1].field.values - profile.values)) <= 5e-2


@pytest.mark.slow
def test_slack_sublevel_benchmark():
    slope, _ = Analytic1DIsoperimetric(0.2)
    assert slope == pytest.approx(0.8)
    problem = BuildCase(256, {"kind": "isoperimetric", "H": -0.2}, g="abs", G=10.0)
    trace = RunSchedule(problem, SSchedule(p0=4.0, gamma=2.0, steps=6))
    assert not trace.aborted
    assert all(s.rescaled.M <= 1e-6 for s in trace.states)
    assert trace.states[-1].Fp == pytest.approx(slope, rel=0.02)
