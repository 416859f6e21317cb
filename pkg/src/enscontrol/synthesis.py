"""Truncated-SVD synthesis of the minimum-norm control."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DecompositionError
from .model import TimeGrid
from .operator import OperatorMatrix, TargetVector

DEFAULT_RATIO_CAP = 1e4


@dataclass(frozen=True)
class SingularSystemApprox:
    """Thin SVD of W restricted to its numerically nonzero part.

    ``left_vectors`` is (rows, r), ``right_vectors`` is (cols, r) and
    ``singular_values`` is descending, with r = ``rank_bound``.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    m: int = 1

    @property
    def rank_bound(self) -> int:
        return len(self.singular_values)


def compute_svd(W: OperatorMatrix) -> SingularSystemApprox:
    """SVD of the operator matrix (LAPACK gesdd via numpy).

    Singular values below ``max(shape) * eps * s_1`` are dropped, so a zero
    matrix yields an empty spectrum.
    """
    A = W.data
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        keep = 0
    else:
        keep = int(np.sum(s > max(A.shape) * np.finfo(float).eps * s[0]))
    return SingularSystemApprox(
        singular_values=s[:keep].copy(),
        left_vectors=U[:, :keep].copy(),
        right_vectors=Vt[:keep].T.copy(),
        m=W.m,
    )


def choose_truncation(s, ratio_cap: float = DEFAULT_RATIO_CAP, hard_cap: Optional[int] = None) -> int:
    """Largest J with ``s[0] / s[J-1] < ratio_cap``, clamped to ``hard_cap``."""
    s = np.asarray(s, float)
    if s.size == 0:
        raise ValueError("empty spectrum")
    if not ratio_cap > 1:
        raise ValueError("ratio_cap must exceed 1")
    J = int(np.sum(s[0] / s < ratio_cap))
    if hard_cap is not None:
        J = min(J, int(hard_cap))
    return max(J, 1)


@dataclass(frozen=True)
class ControlSignal:
    """Control samples ``samples[k-1] = u(t_k)``, k = 1..N.

    Evaluation interpolates linearly between nodes and holds ``u(t_1)``
    on ``[0, t_1]``.
    """

    samples: np.ndarray
    tgrid: TimeGrid

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.tgrid.nodes[1:]

    def __call__(self, t: float) -> np.ndarray:
        k = (t / self.tgrid.delta) if self.tgrid.N else 0.0
        if k <= 1.0:
            return self.samples[0].copy()
        if k >= self.tgrid.N:
            return self.samples[-1].copy()
        i = int(np.floor(k))
        lam = k - i
        # node i is row i-1
        return (1 - lam) * self.samples[i - 1] + lam * self.samples[i]

    def values(self, ts) -> np.ndarray:
        ts = np.asarray(ts, float)
        return np.stack([np.interp(ts, self.times, self.samples[:, c]) for c in range(self.m)], axis=-1)

    def l2_norm(self) -> float:
        """Riemann-sum L2 norm on [0, T], consistent with the grid."""
        return float(np.sqrt(self.tgrid.delta * np.sum(self.samples ** 2)))


@dataclass(frozen=True)
class SynthesisReport:
    truncation_count: int
    condition_ratio: float
    coefficients: np.ndarray
    singular_values: np.ndarray
    picard_partial_sums: np.ndarray
    residual_norm: float
    target_norm: float
    m: int = 1

    @property
    def per_channel_count(self) -> float:
        """Retained count divided by the number of input channels."""
        return self.truncation_count / self.m


def synthesize_control(svd: SingularSystemApprox, target: TargetVector, J: int, tgrid: TimeGrid,
                       operator: Optional[OperatorMatrix] = None):
    """Sum the first J terms ``(u_j . xi / s_j) v_j`` and unstack per time node.

    When ``operator`` is given the residual is evaluated directly as
    ``|W g - xi|``; otherwise from the discarded part of the expansion.
    Returns ``(ControlSignal, SynthesisReport)``.
    """
    s = svd.singular_values
    if not 0 <= J <= len(s):
        raise ValueError(f"J={J} outside 0..{len(s)}")
    xi = target.data
    cols = svd.right_vectors.shape[0]
    m = svd.m
    if cols % m:
        raise ValueError("right vectors do not split into m channels")
    coef = svd.left_vectors.T @ xi
    g = svd.right_vectors[:, :J] @ (coef[:J] / s[:J])
    if operator is not None:
        residual = float(np.linalg.norm(operator.data @ g - xi))
    else:
        residual = float(np.linalg.norm(xi - svd.left_vectors[:, :J] @ coef[:J]))
    with np.errstate(divide="ignore", invalid="ignore"):
        partial = np.cumsum((coef / s) ** 2) if len(s) else np.zeros(0)
    report = SynthesisReport(
        truncation_count=J,
        condition_ratio=float(s[0] / s[J - 1]) if J else float("nan"),
        coefficients=coef,
        singular_values=s.copy(),
        picard_partial_sums=partial,
        residual_norm=residual,
        target_norm=float(np.linalg.norm(xi)),
        m=m,
    )
    return ControlSignal(samples=g.reshape(cols // m, m), tgrid=tgrid), report


def picard_diagnostic(report: SynthesisReport) -> list:
    """Rows ``(j, s_j, |u_j . xi|, partial_sum)`` with j starting at 1.

    A tabulation for inspection of coefficient decay; it makes no
    controllability verdict.
    """
    return [
        (j + 1, float(s), float(abs(c)), float(p))
        for j, (s, c, p) in enumerate(zip(report.singular_values, report.coefficients,
                                          report.picard_partial_sums))
    ]
