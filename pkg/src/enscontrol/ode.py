"""Adaptive Dormand-Prince 5(4) integrator for batched array-valued ODEs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, IntegrationError


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances for the adaptive integrator.

    A step is accepted when every entry satisfies
    ``|err| <= abs_tol + rel_tol * |entry|``.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_step: Optional[float] = None
    initial_step: Optional[float] = None

    def __post_init__(self):
        if not (self.rel_tol > 0):
            raise ConfigError("must be positive", "integrator.rel_tol")
        if not (self.abs_tol > 0):
            raise ConfigError("must be positive", "integrator.abs_tol")
        if self.max_step is not None and not (self.max_step > 0):
            raise ConfigError("must be positive", "integrator.max_step")
        if self.initial_step is not None and not (self.initial_step > 0):
            raise ConfigError("must be positive", "integrator.initial_step")


# Dormand & Prince (1980), propagating the 5th order solution.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0


def _initial_step(f, t0, y0, f0, cfg, span):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    nodes: np.ndarray,
    cfg: IntegratorConfig = IntegratorConfig(),
    record: bool = True,
    stats: Optional[IntegrationStats] = None,
) -> np.ndarray:
    """Integrate ``y' = f(t, y)`` from ``nodes[0]`` through every node.

    Steps never cross a node, so each node value comes from an accepted
    step ending exactly on it. ``y0`` may have any shape; the error norm is
    the max over all entries, so a batch of independent systems advances
    with a common step.

    Returns an array of shape ``(len(nodes),) + y0.shape`` when ``record``
    is true, otherwise only the final state.

    Raises
    ------
    IntegrationError
        When the step size underflows. ``beta`` is set to the flat index of
        the entry with the largest scaled error; callers map it back.
    """
    nodes = np.asarray(nodes, float)
    y = np.array(y0, dtype=float, copy=True)
    if stats is None:
        stats = IntegrationStats()
    out = np.empty((len(nodes),) + y.shape) if record else None
    if record:
        out[0] = y
    if len(nodes) < 2:
        return out if record else y
    if np.any(np.diff(nodes) < 0):
        raise ValueError("nodes must be non-decreasing")

    t = nodes[0]
    k1 = f(t, y)
    h = cfg.initial_step or _initial_step(f, t, y, k1, cfg, nodes[-1] - nodes[0] or 1.0)
    if cfg.max_step is not None:
        h = min(h, cfg.max_step)
    ks = [None] * 7
    worst = None

    # overflow is caught by the error test and ends in IntegrationError
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, len(nodes)):
            target = nodes[i]
            while t < target:
                span = target - t
                last = h >= span * (1 - 1e-3)
                step = span if last else h
                if not last and step <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
                    raise IntegrationError(f"step size underflow at t={t:.6g}", beta=worst, t=float(t))
                ks[0] = k1
                for s in range(1, 7):
                    incr = _A[s][0] * ks[0]
                    for r in range(1, s):
                        if _A[s][r] != 0.0:
                            incr = incr + _A[s][r] * ks[r]
                    ks[s] = f(t + _C[s] * step, y + step * incr)
                y_new = y + step * (_B5[0] * ks[0] + _B5[2] * ks[2] + _B5[3] * ks[3]
                                    + _B5[4] * ks[4] + _B5[5] * ks[5])
                err = step * (_E[0] * ks[0] + _E[2] * ks[2] + _E[3] * ks[3]
                              + _E[4] * ks[4] + _E[5] * ks[5] + _E[6] * ks[6])
                scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
                ratio = np.abs(err) / scale
                err_norm = float(np.max(ratio)) if ratio.size else 0.0
                if not np.isfinite(err_norm):
                    err_norm = np.inf

                if err_norm <= 1.0:
                    t = target if last else t + step
                    y = y_new
                    k1 = ks[6]
                    stats.accepted += 1
                    factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
                    # a short landing step says nothing about the natural step size
                    if not last or step >= h:
                        h = step * factor
                else:
                    stats.rejected += 1
                    h = step * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2 if np.isfinite(err_norm) else _MIN_FACTOR)
                if cfg.max_step is not None:
                    h = min(h, cfg.max_step)
                if ratio.size:
                    worst = int(np.argmax(np.where(np.isnan(ratio), np.inf, ratio)))
            if record:
                out[i] = y
    return out if record else y
