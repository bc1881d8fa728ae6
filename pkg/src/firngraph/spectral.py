"""Scaled graph Laplacian and Chebyshev polynomial convolution.

The spectral filter operates on L_tilde = (2 / lambda_max) * L_sym - I with
L_sym = I - D^{-1/2} A D^{-1/2}, which places the Laplacian spectrum inside
[-1, 1] so the Chebyshev recurrence T_0 = I, T_1 = L, T_k = 2 L T_{k-1} -
T_{k-2} is stable. A filter of order K mixes information from K-1 hops.

Forward and backward passes are plain numpy; the backward of the stack
recurrence runs it in reverse (the recurrence is linear in X, and L_tilde is
symmetric).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, ZeroGraph

LAMBDA_MAX_REL_TOL = 1e-12  # tighter than the 1e-6 contract; keeps outputs
# stable under node permutations
LAMBDA_MAX_ITERS = 10000


def scaled_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """Build L_tilde from a symmetric nonnegative zero-diagonal adjacency."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {a.shape}")
    if not a.any():
        raise ZeroGraph("all edge weights are zero")
    degree = a.sum(axis=1)
    inv_sqrt = np.zeros_like(degree)
    nonzero = degree > 0
    inv_sqrt[nonzero] = 1.0 / np.sqrt(degree[nonzero])
    l_sym = -a * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(l_sym, l_sym.diagonal() + 1.0)
    lam_max = _power_iteration_lambda_max(l_sym)
    l_tilde = (2.0 / lam_max) * l_sym
    np.fill_diagonal(l_tilde, l_tilde.diagonal() - 1.0)
    return l_tilde


def _power_iteration_lambda_max(l_sym: np.ndarray) -> float:
    """Largest eigenvalue of the PSD matrix L_sym by power iteration.

    Starts from the all-ones vector, which is permutation invariant, so the
    estimate is identical (up to roundoff) for relabeled graphs. Falls back to
    a fixed pseudorandom vector when the ones vector lies in the null space
    (regular bipartite-like graphs).
    """
    n = l_sym.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    w = l_sym @ v
    for _ in range(LAMBDA_MAX_ITERS):
        new_lam = float(v @ w)
        if lam != 0.0 and abs(new_lam - lam) <= LAMBDA_MAX_REL_TOL * abs(new_lam):
            return new_lam
        lam = new_lam
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            # ones vector sits in the null space (regular bipartite-like
            # graph); restart from a fixed pseudorandom direction
            v = np.random.default_rng(0).standard_normal(n)
            v /= np.linalg.norm(v)
            lam = 0.0
        else:
            v = w / norm
        w = l_sym @ v
    return lam


def cheb_stack(x: np.ndarray, l_tilde: np.ndarray | None, order: int) -> np.ndarray:
    """Stack [T_0(L)X, ..., T_{K-1}(L)X] of shape [K, N, C].

    `l_tilde` may be None when order == 1 (the filter never touches the
    graph).
    """
    out = np.empty((order,) + x.shape, dtype=np.float64)
    out[0] = x
    if order >= 2:
        out[1] = l_tilde @ x
    for k in range(2, order):
        out[k] = 2.0 * (l_tilde @ out[k - 1]) - out[k - 2]
    return out


def cheb_stack_backward(
    d_stack: np.ndarray, l_tilde: np.ndarray | None
) -> np.ndarray:
    """Gradient w.r.t. X of the stack; runs the linear recurrence in reverse."""
    order = d_stack.shape[0]
    g = d_stack.copy()
    for k in range(order - 1, 1, -1):
        g[k - 1] += 2.0 * (l_tilde @ g[k])
        g[k - 2] -= g[k]
    dx = g[0]
    if order >= 2:
        dx = dx + l_tilde @ g[1]
    return dx


def cheb_conv(
    x: np.ndarray, l_tilde: np.ndarray | None, theta: np.ndarray
) -> np.ndarray:
    """Spectral convolution Y = sum_k T_k(L) X Theta_k.

    theta has shape [K, C_in, C_out].
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 3:
        raise ShapeMismatch(f"theta must be [K, C_in, C_out], got {theta.shape}")
    order, c_in, c_out = theta.shape
    if order < 1:
        raise ShapeMismatch("Chebyshev order must be >= 1")
    if x.ndim != 2 or x.shape[1] != c_in:
        raise ShapeMismatch(f"x {x.shape} incompatible with theta {theta.shape}")
    if order > 1:
        if l_tilde is None or l_tilde.shape != (x.shape[0], x.shape[0]):
            raise ShapeMismatch("L_tilde must be [N, N] for order > 1")
    stack = cheb_stack(x, l_tilde, order)
    flat = stack.transpose(1, 0, 2).reshape(x.shape[0], order * c_in)
    return flat @ theta.reshape(order * c_in, c_out)


def cheb_conv_backward(
    dy: np.ndarray,
    stack: np.ndarray,
    l_tilde: np.ndarray | None,
    theta: np.ndarray,
    need_dx: bool = True,
) -> tuple[np.ndarray | None, np.ndarray]:
    """Gradients (dX, dTheta) of cheb_conv given dY and a cached stack."""
    order, n, c_in = stack.shape
    c_out = dy.shape[1]
    flat = stack.transpose(1, 0, 2).reshape(n, order * c_in)
    d_theta = (flat.T @ dy).reshape(order, c_in, c_out)
    dx = None
    if need_dx:
        d_stack = (dy @ theta.reshape(order * c_in, c_out).T).reshape(
            n, order, c_in
        ).transpose(1, 0, 2)
        dx = cheb_stack_backward(np.ascontiguousarray(d_stack), l_tilde)
    return dx, d_theta
