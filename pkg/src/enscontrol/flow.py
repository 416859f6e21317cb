"""State-transition matrices along the time grid.

For each parameter point the inverse flow ``Psi(t) = Phi(0, t, beta)`` is
obtained from the adjoint equation ``dPsi/dt = -Psi A(t, beta)``,
``Psi(0) = I``, integrated forward once through every grid node.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FileMismatchError, IntegrationError
from .model import LinearEnsembleSystem, ParameterGrid, TimeGrid
from .ode import IntegratorConfig, integrate

__all__ = [
    "IntegratorConfig",
    "FlowTable",
    "inverse_flow_trajectory",
    "forward_flow_step",
    "build_flow_table",
    "save_flow_table",
    "load_flow_table",
]

# members integrated together with a shared step; fixed so that results do
# not depend on the thread count
CHUNK = 64


@dataclass(frozen=True)
class FlowTable:
    """``inverse_flows[j, k]`` holds ``Phi(0, t_k, beta_j)``, shape (P, N+1, n, n)."""

    inverse_flows: np.ndarray
    pgrid: ParameterGrid
    tgrid: TimeGrid

    @property
    def n(self) -> int:
        return self.inverse_flows.shape[-1]

    def terminal(self) -> np.ndarray:
        return self.inverse_flows[:, -1]


def _adjoint_rhs(system: LinearEnsembleSystem, betas: np.ndarray):
    def rhs(t, psi):
        return -psi @ system.A_many(t, betas)
    return rhs


def _forward_rhs(system: LinearEnsembleSystem, betas: np.ndarray):
    def rhs(t, phi):
        return system.A_many(t, betas) @ phi
    return rhs


def _integrate_members(system, betas, tgrid, cfg) -> np.ndarray:
    n = system.n
    y0 = np.broadcast_to(np.eye(n), (len(betas), n, n)).copy()
    try:
        traj = integrate(_adjoint_rhs(system, betas), y0, tgrid.nodes, cfg)
    except IntegrationError as exc:
        j = exc.beta // (n * n) if exc.beta is not None else 0
        raise IntegrationError(
            f"inverse flow failed for beta={betas[j].tolist()} at t={exc.t:.6g}",
            beta=betas[j].copy(), t=exc.t,
        ) from exc
    return np.moveaxis(traj, 0, 1)


def inverse_flow_trajectory(system: LinearEnsembleSystem, beta, tgrid: TimeGrid,
                            cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Return ``Phi(0, t_k, beta)`` for k = 0..N as an (N+1, n, n) array."""
    betas = np.atleast_1d(np.asarray(beta, float)).reshape(1, system.d)
    return _integrate_members(system, betas, tgrid, cfg)[0]


def forward_flow_step(system: LinearEnsembleSystem, beta, t_a: float, t_b: float,
                      M0: np.ndarray, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Propagate ``dPhi/dt = A(t, beta) Phi`` from ``t_a`` to ``t_b`` starting at ``M0``."""
    if t_b < t_a:
        raise ValueError("t_b must not precede t_a")
    M0 = np.asarray(M0, float)
    if t_a == t_b:
        return M0.copy()
    betas = np.atleast_1d(np.asarray(beta, float)).reshape(1, system.d)
    try:
        out = integrate(_forward_rhs(system, betas), M0[None], np.array([t_a, t_b]), cfg, record=False)
    except IntegrationError as exc:
        raise IntegrationError(str(exc), beta=betas[0].copy(), t=exc.t) from exc
    return out[0]


def build_flow_table(system: LinearEnsembleSystem, pgrid: ParameterGrid, tgrid: TimeGrid,
                     cfg: IntegratorConfig = IntegratorConfig(),
                     threads: Optional[int] = None) -> FlowTable:
    """Inverse flows for every grid point.

    Members are integrated in fixed chunks of ``CHUNK`` with a shared
    adaptive step; chunks run concurrently on up to ``threads`` workers.
    """
    P = pgrid.size
    n = system.n
    table = np.empty((P, tgrid.N + 1, n, n))
    starts = range(0, P, CHUNK)

    def work(start):
        stop = min(start + CHUNK, P)
        table[start:stop] = _integrate_members(system, pgrid.points[start:stop], tgrid, cfg)

    if threads is not None and threads <= 1 or len(starts) == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    if not np.all(np.isfinite(table)):
        raise IntegrationError("non-finite entries in flow table")
    return FlowTable(inverse_flows=table, pgrid=pgrid, tgrid=tgrid)


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

FLOW_MAGIC = b"ENSFLOW1"
_HEADER = struct.Struct("<8sQQQ32s32s")


def save_flow_table(table: FlowTable, path) -> None:
    """Little-endian dump: magic, n, P_total, N (uint64), grid SHA-256
    digests, then the (P, N+1, n, n) float64 entries in row-major order."""
    P, N1, n, _ = table.inverse_flows.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FLOW_MAGIC, n, P, N1 - 1, table.pgrid.digest(), table.tgrid.digest()))
        fh.write(np.ascontiguousarray(table.inverse_flows, dtype="<f8").tobytes())


def load_flow_table(path, pgrid: ParameterGrid, tgrid: TimeGrid) -> FlowTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FileMismatchError(f"{path}: truncated header")
    magic, n, P, N, ph, th = _HEADER.unpack_from(raw)
    if magic != FLOW_MAGIC:
        raise FileMismatchError(f"{path}: not a flow table")
    if P != pgrid.size or N != tgrid.N or ph != pgrid.digest() or th != tgrid.digest():
        raise FileMismatchError(f"{path}: grids do not match")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != P * (N + 1) * n * n:
        raise FileMismatchError(f"{path}: payload size mismatch")
    return FlowTable(inverse_flows=data.reshape(P, N + 1, n, n).astype(float), pgrid=pgrid, tgrid=tgrid)
