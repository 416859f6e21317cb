"""Independent reference computations used by the tests.

None of these touch the package's integrator, assembly or SVD paths.
"""

import numpy as np


def expm_taylor(A, terms=30):
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    A = np.asarray(A, float)
    norm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    X = A / 2 ** s
    E = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def rotation(theta):
    """Planar rotation(s) by ``theta``; returns (..., 2, 2)."""
    theta = np.asarray(theta, float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def normal_equations_min_norm(W, xi):
    """g = W^T z with (W W^T) z = xi, solved by Cholesky."""
    G = W @ W.T
    L = np.linalg.cholesky(G)
    y = np.linalg.solve(L, xi)
    z = np.linalg.solve(L.T, y)
    return W.T @ z


def oscillator_terminal(omega, x0, times, samples, T, order=8):
    """Exact terminal state of the planar oscillator driven by a piecewise
    linear control (held constant before the first sample):

        X(T) = R(omega T) [x0 + int_0^T R(-omega s) u(s) ds]

    with the integral done by Gauss-Legendre on each control interval.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    tt = np.concatenate([[0.0], times])
    uu = np.vstack([samples[0], samples])
    a, b = tt[:-1], tt[1:]
    s = (a + b)[:, None] / 2 + (b - a)[:, None] / 2 * xg
    lam = (xg + 1) / 2
    u = uu[:-1, None, :] * (1 - lam)[None, :, None] + uu[1:, None, :] * lam[None, :, None]
    c, sn = np.cos(-omega * s), np.sin(-omega * s)
    wts = (b - a)[:, None] / 2 * wg
    ix = np.sum((c * u[..., 0] - sn * u[..., 1]) * wts)
    iy = np.sum((sn * u[..., 0] + c * u[..., 1]) * wts)
    z = np.asarray(x0, float) + np.array([ix, iy])
    return rotation(omega * T) @ z


def gauss_integral(f, a, b, pieces=200, order=10):
    """Composite Gauss-Legendre integral of a vector-valued f on [a, b]."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, pieces + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        for x, w in zip(xg, wg):
            total = total + w * (hi - lo) / 2 * np.asarray(f((lo + hi) / 2 + (hi - lo) / 2 * x))
    return total
