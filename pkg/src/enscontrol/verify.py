"""Forward simulation of the ensemble under a synthesized control."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, IntegrationError
from .model import LinearEnsembleSystem, ParameterGrid, TransferSpec
from .ode import IntegratorConfig, integrate
from .synthesis import ControlSignal

CHUNK = 64


@dataclass(frozen=True)
class EnsembleOutcome:
    points: np.ndarray
    terminal_states: np.ndarray
    target_states: np.ndarray
    member_errors: np.ndarray
    weights: np.ndarray
    trajectory_times: Optional[np.ndarray] = None
    trajectories: Optional[np.ndarray] = None

    @property
    def k_norm_error(self) -> float:
        """Discrete K-norm of the terminal error, midpoint weights."""
        total = 0.0
        for w, e in zip(self.weights, self.member_errors):
            total += w * e * e
        return float(np.sqrt(total))

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.member_errors))

    @property
    def max_error(self) -> float:
        return float(np.max(self.member_errors))


def _simulate(system, betas, x0, control, cfg, record_times):
    def rhs(t, X):
        u = control(t)
        return (np.matmul(system.A_many(t, betas), X[..., None])[..., 0]
                + system.B_many(t, betas) @ u)

    try:
        return integrate(rhs, x0, record_times, cfg)
    except IntegrationError as exc:
        j = exc.beta // system.n if exc.beta is not None else 0
        raise IntegrationError(
            f"simulation failed for member {j} beta={betas[j].tolist()} at t={exc.t:.6g}",
            beta=betas[j].copy(), t=exc.t) from exc


def _check_control(system: LinearEnsembleSystem, control: ControlSignal) -> None:
    if control.m != system.m:
        raise DimensionError(f"control has {control.m} channels, system has m={system.m}", "control")


def simulate_member(system: LinearEnsembleSystem, beta, control: ControlSignal, x0,
                    cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Terminal state of one member started at ``x0``."""
    _check_control(system, control)
    betas = np.atleast_1d(np.asarray(beta, float)).reshape(1, system.d)
    x0 = np.asarray(x0, float).reshape(1, system.n)
    out = _simulate(system, betas, x0, control, cfg, np.array([0.0, control.tgrid.T]))
    return out[-1, 0]


def evaluate_transfer(system: LinearEnsembleSystem, pgrid: ParameterGrid, transfer: TransferSpec,
                      control: ControlSignal, cfg: IntegratorConfig = IntegratorConfig(),
                      downsample: Optional[int] = None, threads: Optional[int] = None) -> EnsembleOutcome:
    """Simulate every grid member and collect terminal-error metrics.

    The integrator adapts its own steps and does not stop at the control
    nodes. With ``downsample`` set, states are also kept at every
    ``downsample``-th time node.
    """
    _check_control(system, control)
    transfer.check(system, pgrid.points)
    tgrid = control.tgrid
    x0 = transfer.initial_states(pgrid.points)
    xF = transfer.target_states(pgrid.points)
    if downsample:
        idx = np.unique(np.append(np.arange(0, tgrid.N + 1, int(downsample)), tgrid.N))
        record_times = tgrid.nodes[idx]
    else:
        record_times = np.array([0.0, tgrid.T])
    P = pgrid.size
    traj = np.empty((len(record_times), P, system.n))

    def work(start):
        stop = min(start + CHUNK, P)
        traj[:, start:stop] = _simulate(system, pgrid.points[start:stop], x0[start:stop],
                                        control, cfg, record_times)

    starts = range(0, P, CHUNK)
    if threads is not None and threads <= 1 or len(starts) == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))

    terminal = traj[-1].copy()
    if not np.all(np.isfinite(terminal)):
        raise IntegrationError("non-finite terminal states")
    errors = np.linalg.norm(terminal - xF, axis=1)
    return EnsembleOutcome(
        points=pgrid.points, terminal_states=terminal, target_states=xF, member_errors=errors,
        weights=pgrid.weights,
        trajectory_times=record_times if downsample else None,
        trajectories=traj if downsample else None,
    )
