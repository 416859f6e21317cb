"""End-to-end runs: flows -> operator -> SVD -> control -> verification."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .flow import build_flow_table
from .operator import OperatorMatrix, TargetVector, assemble_operator, assemble_target, check_shape
from .synthesis import (
    ControlSignal,
    SingularSystemApprox,
    SynthesisReport,
    choose_truncation,
    compute_svd,
    synthesize_control,
)
from .verify import EnsembleOutcome, evaluate_transfer


@dataclass
class SynthesisResult:
    operator: OperatorMatrix
    target: TargetVector
    svd: SingularSystemApprox
    control: ControlSignal
    report: SynthesisReport
    timings: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return self.report.truncation_count


def synthesize(cfg: ExperimentConfig, threads: Optional[int] = None,
               ratio_cap: Optional[float] = None, hard_cap: Optional[int] = None) -> SynthesisResult:
    system, pgrid, tgrid = cfg.system, cfg.pgrid, cfg.tgrid
    check_shape(system.n, system.m, pgrid.size, tgrid.N)
    timings = {}
    t0 = time.perf_counter()
    table = build_flow_table(system, pgrid, tgrid, cfg.integrator, threads=threads)
    timings["flow"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    W = assemble_operator(system, table, tgrid, pgrid)
    xi = assemble_target(system, table, cfg.transfer, pgrid, tgrid)
    timings["assembly"] = time.perf_counter() - t0
    del table

    t0 = time.perf_counter()
    svd = compute_svd(W)
    timings["svd"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cap = cfg.ratio_cap if ratio_cap is None else ratio_cap
    hard = cfg.hard_cap if hard_cap is None else hard_cap
    if hard is None:
        hard = system.m * pgrid.size
    J = choose_truncation(svd.singular_values, cap, hard) if svd.rank_bound else 0
    control, report = synthesize_control(svd, xi, J, tgrid, operator=W)
    timings["synthesis"] = time.perf_counter() - t0
    return SynthesisResult(operator=W, target=xi, svd=svd, control=control, report=report, timings=timings)


def verify(cfg: ExperimentConfig, control: ControlSignal, threads: Optional[int] = None,
           downsample: Optional[int] = None) -> EnsembleOutcome:
    return evaluate_transfer(cfg.system, cfg.pgrid, cfg.transfer, control, cfg.integrator,
                             downsample=downsample, threads=threads)


@dataclass
class ConvergenceStudy:
    rows: list           # (T, N, delta, k_norm_error, J)
    slopes: dict         # T -> slope of log(error) against log(1/delta), or None

    def retained_by_T(self) -> dict:
        """Retained count at the finest N for each horizon."""
        out = {}
        for T, N, _, _, J in sorted(self.rows, key=lambda r: (r[0], r[1])):
            out[T] = J
        return out


def fit_slope(inv_delta: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(error) versus log(1/delta); None if fewer
    than two distinct points or a non-positive error."""
    errors = np.asarray(errors, float)
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        return None
    x = np.log(np.asarray(inv_delta, float))
    y = np.log(errors)
    if len(np.unique(x)) < 2:
        return None
    return float(np.polyfit(x, y, 1)[0])


def convergence(cfg: ExperimentConfig, T_list: Sequence[float], N_list: Sequence[int],
                threads: Optional[int] = None) -> ConvergenceStudy:
    # reject every bad pair before doing any work
    for T in T_list:
        for N in N_list:
            cfg.with_time(T, N)
    rows = []
    slopes = {}
    for T in T_list:
        errs, inv = [], []
        for N in N_list:
            sub = cfg.with_time(T, N)
            res = synthesize(sub, threads=threads)
            out = verify(sub, res.control, threads=threads)
            rows.append((float(T), int(N), sub.tgrid.delta, out.k_norm_error, res.J))
            errs.append(out.k_norm_error)
            inv.append(1.0 / sub.tgrid.delta)
        slopes[float(T)] = fit_slope(inv, errs)
    return ConvergenceStudy(rows=rows, slopes=slopes)
