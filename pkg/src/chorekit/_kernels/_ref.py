"""Pure-numpy kernel fallbacks, algorithmically identical to the compiled core."""

from __future__ import annotations

import numpy as np


def ssm_scan(abar: np.ndarray, bx: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Diagonal state-space scan.

    h_t = abar[t] * h_{t-1} + bx[t]; y[t, d] = sum_n c[t, n] * h[d, n].
    Shapes: abar, bx (T, D, N); c (T, N); returns (T, D) f64. h_0 = 0.
    """
    T, D, N = abar.shape
    y = np.empty((T, D), dtype=np.float64)
    h = np.zeros((D, N), dtype=np.float64)
    for t in range(T):
        h = abar[t] * h + bx[t]
        y[t] = h @ c[t]
    return y


def _rotate(g: np.ndarray, h: np.ndarray, s: float, tau: float):
    return g - s * (h + g * tau), h + s * (g - h * tau)


def jacobi_eigh(a: np.ndarray, max_sweeps: int = 100, tol: float = 0.0):
    """Threshold cyclic Jacobi eigendecomposition of a symmetric matrix.

    Same algorithm as the compiled kernel: upper-triangle rotations with a
    shrinking skip threshold, tiny elements flushed to zero from sweep 5 on,
    convergence when the upper triangle is exactly annihilated. Returns
    (w, v) with eigenvalues ascending and a ~ v @ diag(w) @ v.T. ``tol`` is
    unused and kept for interface parity.
    """
    A = np.array(a, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    d = np.diagonal(A).copy()
    b = d.copy()
    z = np.zeros(n)
    for sweep in range(1, max_sweeps + 1):
        sm = float(np.sum(np.abs(A[np.triu_indices(n, 1)]))) if n > 1 else 0.0
        if sm == 0.0:
            order = np.argsort(d, kind="stable")
            return d[order], V[:, order]
        tresh = 0.2 * sm / (n * n) if sweep < 4 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = 100.0 * abs(A[p, q])
                if sweep > 4 and abs(d[p]) + g == abs(d[p]) and abs(d[q]) + g == abs(d[q]):
                    A[p, q] = 0.0
                elif abs(A[p, q]) > tresh:
                    h = d[q] - d[p]
                    if abs(h) + g == abs(h):
                        t = A[p, q] / h
                    else:
                        theta = 0.5 * h / A[p, q]
                        t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    cth = 1.0 / np.sqrt(1.0 + t * t)
                    sth = t * cth
                    tau = sth / (1.0 + cth)
                    h = t * A[p, q]
                    z[p] -= h
                    z[q] += h
                    d[p] -= h
                    d[q] += h
                    A[p, q] = 0.0
                    A[:p, p], A[:p, q] = _rotate(A[:p, p], A[:p, q], sth, tau)
                    A[p, p + 1:q], A[p + 1:q, q] = _rotate(
                        A[p, p + 1:q], A[p + 1:q, q], sth, tau
                    )
                    A[p, q + 1:], A[q, q + 1:] = _rotate(A[p, q + 1:], A[q, q + 1:], sth, tau)
                    V[:, p], V[:, q] = _rotate(V[:, p], V[:, q], sth, tau)
        b += z
        d = b.copy()
        z[:] = 0.0
    raise RuntimeError(f"jacobi_eigh did not converge in {max_sweeps} sweeps")
