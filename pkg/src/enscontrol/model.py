"""Ensemble systems, discretization grids and transfer specifications.

An ensemble is a family of linear time-varying systems

    dX/dt (t, beta) = A(t, beta) X(t, beta) + B(t, beta) u(t)

indexed by a parameter ``beta`` in a box ``K`` of R^d, all driven by one
shared input ``u``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError

MatrixFn = Callable[[float, np.ndarray], np.ndarray]
BatchMatrixFn = Callable[[float, np.ndarray], np.ndarray]
StateFn = Callable[[np.ndarray], np.ndarray]
Curve = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearEnsembleSystem:
    """Evaluators for A(t, beta) (n x n) and B(t, beta) (n x m).

    ``batch_A``/``batch_B`` are optional vectorized forms taking a time and
    a (P, d) array of parameters and returning (P, n, n) / (P, n, m). When
    absent the scalar evaluators are stacked.
    """

    n: int
    m: int
    d: int
    eval_A: MatrixFn
    eval_B: MatrixFn
    label: str = "system"
    batch_A: Optional[BatchMatrixFn] = field(default=None, repr=False, compare=False)
    batch_B: Optional[BatchMatrixFn] = field(default=None, repr=False, compare=False)

    def A(self, t: float, beta) -> np.ndarray:
        out = np.asarray(self.eval_A(float(t), np.atleast_1d(np.asarray(beta, float))), float)
        if out.shape != (self.n, self.n):
            raise DimensionError(f"eval_A returned shape {out.shape}, expected {(self.n, self.n)}")
        return out

    def B(self, t: float, beta) -> np.ndarray:
        out = np.asarray(self.eval_B(float(t), np.atleast_1d(np.asarray(beta, float))), float)
        if out.shape != (self.n, self.m):
            raise DimensionError(f"eval_B returned shape {out.shape}, expected {(self.n, self.m)}")
        return out

    def A_many(self, t: float, betas: np.ndarray) -> np.ndarray:
        betas = np.asarray(betas, float).reshape(-1, self.d)
        if self.batch_A is not None:
            out = np.asarray(self.batch_A(float(t), betas), float)
        else:
            out = np.stack([self.A(t, b) for b in betas])
        if out.shape != (len(betas), self.n, self.n):
            raise DimensionError(f"batch_A returned shape {out.shape}")
        return out

    def B_many(self, t: float, betas: np.ndarray) -> np.ndarray:
        betas = np.asarray(betas, float).reshape(-1, self.d)
        if self.batch_B is not None:
            out = np.asarray(self.batch_B(float(t), betas), float)
        else:
            out = np.stack([self.B(t, b) for b in betas])
        if out.shape != (len(betas), self.n, self.m):
            raise DimensionError(f"batch_B returned shape {out.shape}")
        return out


def harmonic_oscillator_system() -> LinearEnsembleSystem:
    """Planar oscillators with frequency ``omega``: A = [[0, -w], [w, 0]], B = I."""

    def eval_A(t, beta):
        w = beta[0]
        return np.array([[0.0, -w], [w, 0.0]])

    def eval_B(t, beta):
        return np.eye(2)

    def batch_A(t, betas):
        w = betas[:, 0]
        out = np.zeros((len(w), 2, 2))
        out[:, 0, 1] = -w
        out[:, 1, 0] = w
        return out

    def batch_B(t, betas):
        return np.broadcast_to(np.eye(2), (len(betas), 2, 2)).copy()

    return LinearEnsembleSystem(
        n=2, m=2, d=1, eval_A=eval_A, eval_B=eval_B, label="harmonic_oscillator",
        batch_A=batch_A, batch_B=batch_B,
    )


def random_timevarying_system(seed: int) -> LinearEnsembleSystem:
    """Four-state, three-input system with parameters ``beta = (r, c)``::

        A(t, r, c) = A0 + A1 sin(2 pi t) + A2 r
        B(t, r, c) = B0 + B1 / (1 + t) + B2 c

    The six coefficient matrices are standard-normal draws from
    ``numpy.random.default_rng(seed)`` (PCG64), taken in the order A0, A1,
    A2, B0, B1, B2, each filled row-major by ``standard_normal(shape)``.
    """
    rng = np.random.default_rng(seed)
    A0, A1, A2 = (rng.standard_normal((4, 4)) for _ in range(3))
    B0, B1, B2 = (rng.standard_normal((4, 3)) for _ in range(3))

    def eval_A(t, beta):
        return A0 + A1 * np.sin(2 * np.pi * t) + A2 * beta[0]

    def eval_B(t, beta):
        return B0 + B1 * (1.0 / (1.0 + t)) + B2 * beta[1]

    def batch_A(t, betas):
        base = A0 + A1 * np.sin(2 * np.pi * t)
        return base[None] + betas[:, 0, None, None] * A2[None]

    def batch_B(t, betas):
        base = B0 + B1 * (1.0 / (1.0 + t))
        return base[None] + betas[:, 1, None, None] * B2[None]

    sys = LinearEnsembleSystem(
        n=4, m=3, d=2, eval_A=eval_A, eval_B=eval_B, label=f"random_timevarying(seed={seed})",
        batch_A=batch_A, batch_B=batch_B,
    )
    object.__setattr__(sys, "coefficients", {"A0": A0, "A1": A1, "A2": A2, "B0": B0, "B1": B1, "B2": B2})
    return sys


def tabulated_affine_system(times, A_tables, B_tables, label: str = "tabulated") -> LinearEnsembleSystem:
    """System whose matrices are affine in the parameters and tabulated in time.

    ``A_tables`` has shape (d+1, K, n, n) and ``B_tables`` (d+1, K, n, m);
    slice 0 is the parameter-free part and slice i the coefficient of
    beta_i. Values are interpolated linearly in ``times`` (length K) and
    held constant outside it.
    """
    times = np.asarray(times, float)
    A_tables = np.asarray(A_tables, float)
    B_tables = np.asarray(B_tables, float)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ConfigError("times must be a strictly increasing 1-d array", "system.tables")
    if A_tables.ndim != 4 or B_tables.ndim != 4:
        raise ConfigError("A and B tables must be 4-d arrays", "system.tables")
    d = A_tables.shape[0] - 1
    n = A_tables.shape[2]
    m = B_tables.shape[3]
    if (A_tables.shape[1] != len(times) or A_tables.shape[3] != n
            or B_tables.shape[:3] != (d + 1, len(times), n)):
        raise DimensionError("inconsistent table shapes", "system.tables")

    def _at(tables, t):
        k = np.searchsorted(times, t, side="right") - 1
        if k < 0:
            return tables[:, 0]
        if k >= len(times) - 1:
            return tables[:, -1]
        lam = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - lam) * tables[:, k] + lam * tables[:, k + 1]

    def batch_A(t, betas):
        tab = _at(A_tables, t)
        return tab[0][None] + np.einsum("pi,iab->pab", betas, tab[1:])

    def batch_B(t, betas):
        tab = _at(B_tables, t)
        return tab[0][None] + np.einsum("pi,iab->pab", betas, tab[1:])

    return LinearEnsembleSystem(
        n=n, m=m, d=d,
        eval_A=lambda t, b: batch_A(t, b[None])[0],
        eval_B=lambda t, b: batch_B(t, b[None])[0],
        label=label, batch_A=batch_A, batch_B=batch_B,
    )


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, float))
        hi = np.atleast_1d(np.asarray(self.upper, float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("lower and upper must be vectors of equal length", "parameters")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("box bounds must be finite", "parameters")
        if np.any(lo > hi):
            raise ConfigError("lower must not exceed upper", "parameters")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class ParameterGrid:
    """Midpoint tensor grid over a box, flattened row-major (last axis fastest)."""

    box: ParameterBox
    counts: tuple
    points: np.ndarray
    cell_measure: float

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.cell_measure)

    def continuous_index(self, beta) -> float:
        """Flattened grid index as a continuous function of ``beta``; equals
        ``j`` exactly at grid point ``j``."""
        beta = np.atleast_1d(np.asarray(beta, float))
        width = self.box.upper - self.box.lower
        counts = np.asarray(self.counts)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(width > 0, (beta - self.box.lower) / width * counts - 0.5, 0.0)
        strides = np.array([int(np.prod(counts[i + 1:])) for i in range(len(counts))])
        return float(np.dot(c, strides))

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(np.asarray(self.counts, "<i8").tobytes())
        h.update(self.box.lower.astype("<f8").tobytes())
        h.update(self.box.upper.astype("<f8").tobytes())
        return h.digest()


def make_parameter_grid(box: ParameterBox, counts: Sequence[int]) -> ParameterGrid:
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != box.d:
        raise ConfigError(f"expected {box.d} counts, got {len(counts)}", "parameters.counts")
    if any(c < 1 for c in counts):
        raise ConfigError("every count must be >= 1", "parameters.counts")
    axes = []
    measure = 1.0
    for lo, hi, c in zip(box.lower, box.upper, counts):
        if hi == lo and c != 1:
            raise ConfigError("a degenerate axis takes exactly one point", "parameters.counts")
        h = (hi - lo) / c
        axes.append(lo + (np.arange(c) + 0.5) * h)
        if hi > lo:
            measure *= h
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=-1)
    return ParameterGrid(box=box, counts=counts, points=points, cell_measure=measure)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    @property
    def delta(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.delta

    def digest(self) -> bytes:
        return hashlib.sha256(np.array([self.T], "<f8").tobytes() + np.array([self.N], "<i8").tobytes()).digest()


def make_time_grid(T: float, N: int) -> TimeGrid:
    if not (np.isfinite(T) and T > 0):
        raise ConfigError(f"horizon must be positive, got {T}", "time.T")
    if int(N) != N or N < 1:
        raise ConfigError(f"step count must be a positive integer, got {N}", "time.N")
    return TimeGrid(T=float(T), N=int(N))


# ---------------------------------------------------------------------------
# transfers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferSpec:
    X0: StateFn
    XF: StateFn
    label: str = "transfer"

    def initial_states(self, points: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(self.X0(p), float) for p in np.atleast_2d(points)])

    def target_states(self, points: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(self.XF(p), float) for p in np.atleast_2d(points)])

    def check(self, system: LinearEnsembleSystem, points: np.ndarray) -> None:
        for name, arr in (("initial", self.initial_states(points[:1])), ("target", self.target_states(points[:1]))):
            if arr.shape[1] != system.n:
                raise DimensionError(
                    f"{name} state has length {arr.shape[1]}, system has n={system.n}", "transfer")


def constant_transfer(x0, xF) -> TransferSpec:
    x0 = np.asarray(x0, float).copy()
    xF = np.asarray(xF, float).copy()
    if x0.shape != xF.shape or x0.ndim != 1:
        raise DimensionError("x0 and xF must be vectors of equal length", "transfer")
    x0.setflags(write=False)
    xF.setflags(write=False)
    return TransferSpec(X0=lambda beta: x0, XF=lambda beta: xF, label="constant")


def curve_transfer(curve0: Curve, curveF: Curve, pgrid: ParameterGrid,
                   system: Optional[LinearEnsembleSystem] = None) -> TransferSpec:
    """Place ensemble members along two closed planar curves.

    Grid point ``j`` starts at ``curve0(j / P_total)`` and should end at
    ``curveF(j / P_total)``. Off-grid parameters use the continuous
    flattened index, so the assignment extends to refined grids.
    """
    if system is not None and system.n != 2:
        raise ConfigError(f"curve transfers need a planar system, got n={system.n}", "transfer")
    total = pgrid.size

    def position(beta):
        return pgrid.continuous_index(beta) / total

    return TransferSpec(
        X0=lambda beta: np.asarray(curve0(position(beta)), float),
        XF=lambda beta: np.asarray(curveF(position(beta)), float),
        label="curves",
    )


def star_curve(s):
    """Smoothed five-pointed star, one tip pointing up.

    Radius oscillates between 0.45 and 1.0 with period 1/5 in ``s``:
    ``r = 0.45 + 0.55 * ((1 + cos(5 phi)) / 2) ** 3`` with
    ``phi = 2 pi s``, polar angle ``phi + pi/2``.
    """
    s = np.asarray(s, float)
    phi = 2 * np.pi * s
    r = 0.45 + 0.55 * ((1 + np.cos(5 * phi)) / 2) ** 3
    ang = phi + np.pi / 2
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)


def leaf_curve(s):
    """Five-lobed leaf outline, wider at the top, shifted down by 0.2.

    ``r = 0.6 (1 + 0.35 sin phi)(1 + 0.3 cos(5 (phi - pi/2)))``.
    """
    s = np.asarray(s, float)
    phi = 2 * np.pi * s
    r = 0.6 * (1 + 0.35 * np.sin(phi)) * (1 + 0.3 * np.cos(5 * (phi - np.pi / 2)))
    return np.stack([r * np.cos(phi), r * np.sin(phi) - 0.2], axis=-1)


def circle_curve(s):
    s = np.asarray(s, float)
    phi = 2 * np.pi * s
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


CURVES = {"star": star_curve, "leaf": leaf_curve, "circle": circle_curve}
