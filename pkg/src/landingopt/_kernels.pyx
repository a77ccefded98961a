# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: cyclic Jacobi, Householder QR and the fused landing field.

The pure-numpy twin lives in ``_pykernels``; both expose the same names.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def jacobi_eigh(double[:, ::1] a_in, int max_sweeps=100, double tol=1e-15):
    """Cyclic Jacobi on a copy of ``a_in``; returns (values, vectors, sweeps).

    Values are unsorted. ``sweeps`` is -1 when the cap was hit.
    """
    cdef Py_ssize_t n = a_in.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a_arr = np.array(a_in, dtype=np.float64, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double off, total, apq, theta, t, c, s, tau, g, h
    total = 0.0
    for p in range(n):
        for q in range(n):
            total += a[p, q] * a[p, q]
    total = sqrt(total)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if total == 0.0 or sqrt(2.0 * off) <= tol * total:
            return np.diagonal(a_arr).copy(), v_arr, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                a[p, p] -= t * apq
                a[q, q] += t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k == p or k == q:
                        continue
                    g = a[k, p]
                    h = a[k, q]
                    g, h = g - s * (h + g * tau), h + s * (g - h * tau)
                    a[k, p] = g
                    a[p, k] = g
                    a[k, q] = h
                    a[q, k] = h
                for k in range(n):
                    g = v[k, p]
                    h = v[k, q]
                    v[k, p] = g - s * (h + g * tau)
                    v[k, q] = h + s * (g - h * tau)
    return np.diagonal(a_arr).copy(), v_arr, -1


def householder_qr(double[:, ::1] a_in):
    """Thin Householder QR with the positive-diagonal convention.

    Returns (q, r). A zero pivot column leaves a zero on the diagonal of r.
    """
    cdef Py_ssize_t m = a_in.shape[0], n = a_in.shape[1]
    # columns stored as rows for contiguous access
    cdef cnp.ndarray[cnp.float64_t, ndim=2] at_arr = np.array(a_in.T, dtype=np.float64, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vs_arr = np.zeros((n, m), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] qt_arr = np.zeros((n, m), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] at = at_arr
    cdef double[:, ::1] vs = vs_arr
    cdef double[:, ::1] qt = qt_arr
    cdef double[:, ::1] r = r_arr
    cdef Py_ssize_t i, j, k
    cdef double sigma, alpha, vnorm, dot
    cdef bint active
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] used = used_arr

    for j in range(n):
        sigma = 0.0
        for i in range(j, m):
            sigma += at[j, i] * at[j, i]
        sigma = sqrt(sigma)
        if sigma == 0.0:
            continue
        alpha = -sigma if at[j, j] >= 0.0 else sigma
        for i in range(j, m):
            vs[j, i] = at[j, i]
        vs[j, j] -= alpha
        vnorm = 0.0
        for i in range(j, m):
            vnorm += vs[j, i] * vs[j, i]
        vnorm = sqrt(vnorm)
        for i in range(j, m):
            vs[j, i] /= vnorm
        used[j] = 1
        at[j, j] = alpha
        for i in range(j + 1, m):
            at[j, i] = 0.0
        for k in range(j + 1, n):
            dot = 0.0
            for i in range(j, m):
                dot += vs[j, i] * at[k, i]
            dot *= 2.0
            for i in range(j, m):
                at[k, i] -= dot * vs[j, i]

    for k in range(n):
        qt[k, k] = 1.0
    for j in range(n - 1, -1, -1):
        if not used[j]:
            continue
        for k in range(n):
            dot = 0.0
            for i in range(j, m):
                dot += vs[j, i] * qt[k, i]
            if dot == 0.0:
                continue
            dot *= 2.0
            for i in range(j, m):
                qt[k, i] -= dot * vs[j, i]

    for j in range(n):
        for k in range(j, n):
            r[j, k] = at[k, j]
        if r[j, j] < 0.0:
            for k in range(j, n):
                r[j, k] = -r[j, k]
            for i in range(m):
                qt[j, i] = -qt[j, i]
    return np.ascontiguousarray(qt_arr.T), r_arr


cdef class LandingWorkspace:
    """Scratch buffers for repeated landing-field evaluations at fixed (d, r)."""

    cdef readonly Py_ssize_t d, r
    cdef double[::1, :] xtx
    cdef double[::1, :] gtx
    cdef double[::1, :] e
    cdef double[:, ::1] gr
    cdef double[:, ::1] pg

    def __init__(self, Py_ssize_t d, Py_ssize_t r):
        self.d = d
        self.r = r
        self.xtx = np.empty((r, r), order="F")
        self.gtx = np.empty((r, r), order="F")
        self.e = np.empty((r, r), order="F")
        self.gr = np.empty((d, r))
        self.pg = np.empty((d, r))

    def field(self, double[:, ::1] x, double[:, ::1] g, double lam, double[:, ::1] out):
        """Write grad f + lam * grad p into ``out``.

        Returns (grad_norm, penalty_grad_norm, gap, field_norm).
        """
        cdef int d = <int>self.d, r = <int>self.r
        cdef double one = 1.0, zero = 0.0, half = 0.5, mhalf = -0.5
        cdef char *N = b"N"
        cdef char *T = b"T"
        cdef Py_ssize_t i, j
        cdef double gn = 0.0, pn = 0.0, gap = 0.0, fn = 0.0, a, b, v
        if x.shape[0] != d or x.shape[1] != r or g.shape[0] != d or g.shape[1] != r:
            raise ValueError("workspace shape mismatch")
        if out.shape[0] != d or out.shape[1] != r:
            raise ValueError("output shape mismatch")
        # a row-major (d, r) array is a column-major (r, d) array
        dgemm(N, T, &r, &r, &d, &one, &x[0, 0], &r, &x[0, 0], &r, &zero, &self.xtx[0, 0], &r)
        dgemm(N, T, &r, &r, &d, &one, &g[0, 0], &r, &x[0, 0], &r, &zero, &self.gtx[0, 0], &r)
        dgemm(N, N, &r, &d, &r, &half, &self.xtx[0, 0], &r, &g[0, 0], &r, &zero, &self.gr[0, 0], &r)
        dgemm(T, N, &r, &d, &r, &mhalf, &self.gtx[0, 0], &r, &x[0, 0], &r, &one, &self.gr[0, 0], &r)
        for j in range(r):
            for i in range(r):
                v = self.xtx[i, j] - (1.0 if i == j else 0.0)
                self.e[i, j] = v
                gap += v * v
        dgemm(N, N, &r, &d, &r, &one, &self.e[0, 0], &r, &x[0, 0], &r, &zero, &self.pg[0, 0], &r)
        for i in range(d):
            for j in range(r):
                a = self.gr[i, j]
                b = self.pg[i, j]
                v = a + lam * b
                out[i, j] = v
                gn += a * a
                pn += b * b
                fn += v * v
        return sqrt(gn), sqrt(pn), sqrt(gap), sqrt(fn)
