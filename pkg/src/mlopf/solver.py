"""Primal-dual gradient iteration with pluggable coupling and voltage models.

One step is a Jacobi-style simultaneous update: the primal projected
gradient step uses the coupling terms at the current duals, the dual ascent
uses the current voltages, and only then are voltages recomputed at the new
setpoints (linearly, or through nonlinear power flow in feedback mode).
Every iteration appends a trace record; repeated runs of the same
configuration produce bitwise identical traces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import CouplingResult
from .opf import (
    DualState,
    Problem,
    SolverConfig,
    dual_update,
    lagrangian_value,
    saddle_residual,
    violation_extents,
)
from .powerflow import backward_forward_sweep
from .sensitivity import SensitivityMatrices, voltage_linear


class SolverError(RuntimeError):
    """Engine/problem mismatch or a failed voltage-model evaluation."""


class LinearVoltageModel:
    name = "linear"

    def __init__(self, sens: SensitivityMatrices):
        self.sens = sens

    def voltages(self, p: np.ndarray, q: np.ndarray, iteration: int) -> np.ndarray:
        return voltage_linear(self.sens, p, q)


class SweepVoltageModel:
    """Nonlinear feedback mode: voltages come from the sweep each iteration.

    refresh_every > 1 keeps the sweep for every k-th iteration and falls
    back to the linear model in between (a bench experiment knob).
    """

    name = "sweep"

    def __init__(
        self,
        net,
        sens: SensitivityMatrices,
        tol: float = 1e-8,
        max_sweeps: int = 100,
        refresh_every: int = 1,
    ):
        if refresh_every < 1:
            raise ValueError("refresh_every must be at least 1")
        self.net = net
        self.sens = sens
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.refresh_every = refresh_every

    def voltages(self, p: np.ndarray, q: np.ndarray, iteration: int) -> np.ndarray:
        if iteration % self.refresh_every == 0:
            sol = backward_forward_sweep(
                self.net, p, q, tol=self.tol, max_sweeps=self.max_sweeps
            )
            return sol.v
        return voltage_linear(self.sens, p, q)


@dataclass(frozen=True)
class SolverState:
    p: np.ndarray
    q: np.ndarray
    duals: DualState
    v: np.ndarray
    iteration: int


def initial_state(problem: Problem, vmodel) -> SolverState:
    """Preferred setpoints, zero duals, voltages from the model."""
    p = problem.p0.copy()
    q = problem.q0.copy()
    try:
        v = vmodel.voltages(p, q, 0)
    except Exception as exc:
        raise SolverError(f"voltage model failed at the initial point: {exc}") from exc
    return SolverState(p=p, q=q, duals=DualState(
        mu_upper=np.zeros(problem.n), mu_lower=np.zeros(problem.n)
    ), v=v, iteration=0)


def step(
    state: SolverState,
    problem: Problem,
    engine,
    vmodel,
    cfg: SolverConfig,
    coupling: CouplingResult | None = None,
) -> SolverState:
    """One simultaneous primal-dual update.

    The coupling result for the current duals may be passed in to avoid
    recomputing it when the caller already produced it for diagnostics.
    """
    if engine.n != problem.n:
        raise SolverError(
            f"engine is sized for {engine.n} indices but the problem has {problem.n}"
        )
    if coupling is None:
        coupling = engine.compute(state.duals.mu_upper, state.duals.mu_lower)
    cp, cq = problem.cost_gradients(state.p, state.q)
    p_new, q_new = problem.project(
        state.p - cfg.step_primal * (cp + coupling.g_p),
        state.q - cfg.step_primal * (cq + coupling.g_q),
    )
    duals_new = dual_update(state.duals, state.v, problem.bounds, cfg)
    try:
        v_new = vmodel.voltages(p_new, q_new, state.iteration + 1)
    except Exception as exc:
        raise SolverError(
            f"voltage model failed at iteration {state.iteration + 1}: {exc}"
        ) from exc
    return SolverState(
        p=p_new, q=q_new, duals=duals_new, v=v_new, iteration=state.iteration + 1
    )


TRACE_COLUMNS = (
    "iter",
    "objective",
    "lagrangian",
    "max_over_violation",
    "max_under_violation",
    "residual",
    "coupling_ops",
    "step_ns",
)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    lagrangian: float
    max_over_violation: float
    max_under_violation: float
    residual: float
    coupling_ops: int
    step_ns: int

    def row(self) -> str:
        return ",".join(
            [
                str(self.iteration),
                repr(self.objective),
                repr(self.lagrangian),
                repr(self.max_over_violation),
                repr(self.max_under_violation),
                repr(self.residual),
                str(self.coupling_ops),
                str(self.step_ns),
            ]
        )


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    def total_coupling_ops(self) -> int:
        return sum(r.coupling_ops for r in self.records)

    def to_csv(self, path: str | Path | None = None) -> str:
        text = "\n".join(
            [",".join(TRACE_COLUMNS)] + [r.row() for r in self.records]
        ) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class RunResult:
    trace: Trace
    state: SolverState
    converged: bool
    residual: float
    total_step_ns: int
    total_coupling_ns: int


def _record(problem, cfg, state, res, ops, step_ns) -> TraceRecord:
    over, under = violation_extents(state.v, problem.bounds)
    return TraceRecord(
        iteration=state.iteration,
        objective=problem.objective(state.p, state.q),
        lagrangian=lagrangian_value(
            problem, state.p, state.q,
            state.duals.mu_upper, state.duals.mu_lower, state.v, cfg.eta,
        ),
        max_over_violation=over,
        max_under_violation=under,
        residual=res,
        coupling_ops=ops,
        step_ns=step_ns,
    )


def run(
    state: SolverState,
    problem: Problem,
    engine,
    vmodel,
    cfg: SolverConfig,
) -> RunResult:
    """Iterate until max_iters or the saddle residual drops below tolerance.

    The trace holds one record for the initial state and one per executed
    iteration; each record's residual and coupling terms are evaluated at
    that record's own state.
    """
    trace = Trace()
    total_coupling_ns = 0
    total_step_ns = 0

    t0 = time.perf_counter_ns()
    coupling = engine.compute(state.duals.mu_upper, state.duals.mu_lower)
    total_coupling_ns += time.perf_counter_ns() - t0
    res = saddle_residual(
        problem, state.p, state.q, state.duals, state.v, cfg,
        coupling.g_p, coupling.g_q,
    )
    trace.append(_record(problem, cfg, state, res, coupling.op_count, 0))

    while state.iteration < cfg.max_iters and res > cfg.residual_tol:
        t0 = time.perf_counter_ns()
        state = step(state, problem, engine, vmodel, cfg, coupling=coupling)
        t1 = time.perf_counter_ns()
        coupling = engine.compute(state.duals.mu_upper, state.duals.mu_lower)
        t2 = time.perf_counter_ns()
        res = saddle_residual(
            problem, state.p, state.q, state.duals, state.v, cfg,
            coupling.g_p, coupling.g_q,
        )
        t3 = time.perf_counter_ns()
        total_coupling_ns += t2 - t1
        total_step_ns += t3 - t0
        trace.append(_record(problem, cfg, state, res, coupling.op_count, t3 - t0))

    return RunResult(
        trace=trace,
        state=state,
        converged=res <= cfg.residual_tol,
        residual=res,
        total_step_ns=total_step_ns,
        total_coupling_ns=total_coupling_ns,
    )
