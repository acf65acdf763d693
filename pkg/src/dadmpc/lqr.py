"""Infinite-horizon discrete-time LQR by Riccati value iteration."""

import numpy as np

from .exceptions import NoConvergence


def riccati_iteration(A, B, Q, R, tol=1e-10, max_iter=10_000):
    """Iterate P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA from P = Q.

    Returns ``(P, iterations)``; raises NoConvergence when the sup-norm
    change does not drop below ``tol`` within ``max_iter`` sweeps.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for k in range(1, max_iter + 1):
        BtP = B.T @ P
        with np.errstate(over="ignore", invalid="ignore"):
            G = np.linalg.solve(R + BtP @ B, BtP @ A)
            P_next = Q + A.T @ P @ A - A.T @ P @ B @ G
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) <= tol:
            return P_next, k
        if not np.all(np.isfinite(P_next)):
            break
        P = P_next
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} iterations")


def design_lqr(A, B, Q, R, tol=1e-10, max_iter=10_000):
    """State-feedback gain K for u = -K x.

    Raises NoConvergence if the Riccati recursion stalls or the resulting
    closed loop is not Schur stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P, _ = riccati_iteration(A, B, Q, R, tol=tol, max_iter=max_iter)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = max(abs(np.linalg.eigvals(A - B @ K)))
    if rho >= 1.0:
        raise NoConvergence(f"LQR closed loop not stable (spectral radius {rho:.6f})")
    return K
