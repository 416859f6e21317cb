"""Block-matrix discretization of the ensemble input-to-state operator.

Row block ``j`` (length n) belongs to parameter point ``beta_j``; column
block ``k - 1`` (length m) to time node ``t_k`` for k = 1..N. Block
``(j, k)`` is ``delta * Phi(0, t_k, beta_j) @ B(t_k, beta_j)`` (right-endpoint
Riemann rule).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, FileMismatchError, OverdeterminedShapeError
from .flow import FlowTable
from .model import LinearEnsembleSystem, ParameterGrid, TimeGrid, TransferSpec


@dataclass(frozen=True)
class OperatorMatrix:
    data: np.ndarray
    n: int
    m: int
    N: int
    P: int
    delta: float

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def block(self, j: int, k: int) -> np.ndarray:
        """Block for parameter index ``j`` and time node ``k`` (1..N)."""
        if not 1 <= k <= self.N:
            raise IndexError("time block index runs from 1 to N")
        return self.data[j * self.n:(j + 1) * self.n, (k - 1) * self.m:k * self.m]


@dataclass(frozen=True)
class TargetVector:
    data: np.ndarray
    n: int
    P: int

    def block(self, j: int) -> np.ndarray:
        return self.data[j * self.n:(j + 1) * self.n]


def check_shape(n: int, m: int, P: int, N: int) -> None:
    """Reject grids for which the discrete problem is overdetermined."""
    if n * P > m * N:
        raise OverdeterminedShapeError(n * P, m * N)


def _check_table(flow_table: FlowTable, tgrid: TimeGrid, pgrid: ParameterGrid, n: int) -> None:
    P, N1, a, b = flow_table.inverse_flows.shape
    if (P, N1 - 1, a, b) != (pgrid.size, tgrid.N, n, n):
        raise DimensionError(
            f"flow table shape {flow_table.inverse_flows.shape} does not match grids "
            f"(P={pgrid.size}, N={tgrid.N}, n={n})")


def assemble_operator(system: LinearEnsembleSystem, flow_table: FlowTable,
                      tgrid: TimeGrid, pgrid: ParameterGrid) -> OperatorMatrix:
    n, m, N, P = system.n, system.m, tgrid.N, pgrid.size
    check_shape(n, m, P, N)
    _check_table(flow_table, tgrid, pgrid, n)
    delta = tgrid.delta
    nodes = tgrid.nodes
    # (P, N, n, m) laid out so that a reshape gives rows (j, i), cols (k, l)
    blocks = np.empty((P, n, N, m))
    psi = flow_table.inverse_flows
    for k in range(1, N + 1):
        Bk = system.B_many(nodes[k], pgrid.points)
        blocks[:, :, k - 1, :] = delta * np.matmul(psi[:, k], Bk)
    data = blocks.reshape(n * P, m * N)
    if not np.all(np.isfinite(data)):
        raise DimensionError("operator has non-finite entries")
    return OperatorMatrix(data=data, n=n, m=m, N=N, P=P, delta=delta)


def assemble_target(system: LinearEnsembleSystem, flow_table: FlowTable, transfer: TransferSpec,
                    pgrid: ParameterGrid, tgrid: TimeGrid) -> TargetVector:
    """Stack ``Phi(0, T, beta_j) X_F(beta_j) - X_0(beta_j)`` over the grid."""
    n = system.n
    _check_table(flow_table, tgrid, pgrid, n)
    transfer.check(system, pgrid.points)
    x0 = transfer.initial_states(pgrid.points)
    xF = transfer.target_states(pgrid.points)
    xi = np.einsum("pab,pb->pa", flow_table.terminal(), xF) - x0
    return TargetVector(data=xi.reshape(-1), n=n, P=pgrid.size)


# ---------------------------------------------------------------------------
# binary dump, same layout family as the flow table cache
# ---------------------------------------------------------------------------

OPERATOR_MAGIC = b"ENSOPER1"
_HEADER = struct.Struct("<8sQQQQQ32s32sQ")


def save_operator(W: OperatorMatrix, path, pgrid: ParameterGrid, tgrid: TimeGrid,
                  target: Optional[TargetVector] = None) -> None:
    """Little-endian dump: magic, n, m, P_total, N, delta bits, grid
    digests, has-target flag, then W row-major and optionally the target."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(OPERATOR_MAGIC, W.n, W.m, W.P, W.N,
                              struct.unpack("<Q", struct.pack("<d", W.delta))[0],
                              pgrid.digest(), tgrid.digest(), int(target is not None)))
        fh.write(np.ascontiguousarray(W.data, dtype="<f8").tobytes())
        if target is not None:
            fh.write(np.ascontiguousarray(target.data, dtype="<f8").tobytes())


def load_operator(path):
    """Return ``(OperatorMatrix, TargetVector or None)`` from a dump."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FileMismatchError(f"{path}: truncated header")
    magic, n, m, P, N, dbits, _, _, has_target = _HEADER.unpack_from(raw)
    if magic != OPERATOR_MAGIC:
        raise FileMismatchError(f"{path}: not an operator dump")
    delta = struct.unpack("<d", struct.pack("<Q", dbits))[0]
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    size = n * P * m * N
    if body.size != size + (n * P if has_target else 0):
        raise FileMismatchError(f"{path}: payload size mismatch")
    W = OperatorMatrix(data=body[:size].reshape(n * P, m * N).copy(), n=n, m=m, N=N, P=P, delta=delta)
    target = TargetVector(data=body[size:].copy(), n=n, P=P) if has_target else None
    return W, target
