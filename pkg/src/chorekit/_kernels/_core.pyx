# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: diagonal state-space scan and cyclic Jacobi eigensolver.

Both mirror the numpy fallbacks in _ref.py exactly; the test suite asserts
backend agreement on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def ssm_scan(double[:, :, ::1] abar, double[:, :, ::1] bx, double[:, ::1] c):
    """h_t = abar[t]*h_{t-1} + bx[t]; y[t,d] = sum_n c[t,n]*h[d,n]; h_0 = 0."""
    cdef Py_ssize_t T = abar.shape[0]
    cdef Py_ssize_t D = abar.shape[1]
    cdef Py_ssize_t N = abar.shape[2]
    if bx.shape[0] != T or bx.shape[1] != D or bx.shape[2] != N:
        raise ValueError("abar and bx shapes differ")
    if c.shape[0] != T or c.shape[1] != N:
        raise ValueError("c shape does not match (T, N)")
    h_arr = np.zeros((D, N), dtype=np.float64)
    y_arr = np.empty((T, D), dtype=np.float64)
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t t, d, n
    cdef double acc, hv
    for t in range(T):
        for d in range(D):
            acc = 0.0
            for n in range(N):
                hv = abar[t, d, n] * h[d, n] + bx[t, d, n]
                h[d, n] = hv
                acc += c[t, n] * hv
            y[t, d] = acc
    return y_arr


def jacobi_eigh(double[:, ::1] a, int max_sweeps=100, double tol=0.0):
    """Threshold cyclic Jacobi for symmetric matrices; ascending (w, v).

    Only the upper triangle is read/updated. Early sweeps skip rotations
    below a shrinking threshold; from sweep 5 on, elements too small to move
    the diagonal are flushed to exact zero, so late sweeps are compare-only.
    ``tol`` is accepted for interface parity with the fallback; convergence
    is the exact annihilation of the upper triangle.
    """
    cdef Py_ssize_t n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("matrix must be square")
    A_arr = np.array(a, dtype=np.float64, copy=True)
    V_arr = np.eye(n, dtype=np.float64)
    d_arr = np.diagonal(A_arr).copy()
    b_arr = d_arr.copy()
    z_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    cdef double[::1] d = d_arr
    cdef double[::1] b = b_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t sweep, p, q, j
    cdef double sm, tresh, g, h, t, theta, cth, sth, tau, gj, hj
    cdef bint converged = False

    for sweep in range(1, max_sweeps + 1):
        sm = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                sm += fabs(A[p, q])
        if sm == 0.0:
            converged = True
            break
        tresh = 0.2 * sm / (n * n) if sweep < 4 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = 100.0 * fabs(A[p, q])
                if sweep > 4 and fabs(d[p]) + g == fabs(d[p]) and fabs(d[q]) + g == fabs(d[q]):
                    A[p, q] = 0.0
                elif fabs(A[p, q]) > tresh:
                    h = d[q] - d[p]
                    if fabs(h) + g == fabs(h):
                        t = A[p, q] / h
                    else:
                        theta = 0.5 * h / A[p, q]
                        t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    cth = 1.0 / sqrt(1.0 + t * t)
                    sth = t * cth
                    tau = sth / (1.0 + cth)
                    h = t * A[p, q]
                    z[p] -= h
                    z[q] += h
                    d[p] -= h
                    d[q] += h
                    A[p, q] = 0.0
                    for j in range(p):
                        gj = A[j, p]
                        hj = A[j, q]
                        A[j, p] = gj - sth * (hj + gj * tau)
                        A[j, q] = hj + sth * (gj - hj * tau)
                    for j in range(p + 1, q):
                        gj = A[p, j]
                        hj = A[j, q]
                        A[p, j] = gj - sth * (hj + gj * tau)
                        A[j, q] = hj + sth * (gj - hj * tau)
                    for j in range(q + 1, n):
                        gj = A[p, j]
                        hj = A[q, j]
                        A[p, j] = gj - sth * (hj + gj * tau)
                        A[q, j] = hj + sth * (gj - hj * tau)
                    for j in range(n):
                        gj = V[j, p]
                        hj = V[j, q]
                        V[j, p] = gj - sth * (hj + gj * tau)
                        V[j, q] = hj + sth * (gj - hj * tau)
        for p in range(n):
            b[p] += z[p]
            d[p] = b[p]
            z[p] = 0.0
    if not converged:
        raise RuntimeError(f"jacobi_eigh did not converge in {max_sweeps} sweeps")
    order = np.argsort(d_arr, kind="stable")
    return d_arr[order], V_arr[:, order]
