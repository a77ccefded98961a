"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same return conventions; used when the extension is not
built or ``LANDINGOPT_PURE=1`` is set.
"""

import numpy as np


def jacobi_eigh(a_in, max_sweeps=100, tol=1e-15):
    a = np.array(a_in, dtype=np.float64, order="C")
    n = a.shape[0]
    v = np.eye(n)
    total = np.sqrt(np.sum(a * a))
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        off = np.sum(a[iu] ** 2)
        if total == 0.0 or np.sqrt(2.0 * off) <= tol * total:
            return np.diagonal(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                app = a[p, p] - t * apq
                aqq = a[q, q] + t * apq
                g = a[:, p].copy()
                h = a[:, q].copy()
                gp = g - s * (h + g * tau)
                hq = h + s * (g - h * tau)
                a[:, p] = gp
                a[p, :] = gp
                a[:, q] = hq
                a[q, :] = hq
                a[p, p] = app
                a[q, q] = aqq
                a[p, q] = 0.0
                a[q, p] = 0.0
                g = v[:, p].copy()
                h = v[:, q]
                v[:, p] = g - s * (h + g * tau)
                v[:, q] = h + s * (g - h * tau)
    return np.diagonal(a).copy(), v, -1


def householder_qr(a_in):
    a = np.array(a_in, dtype=np.float64)
    m, n = a.shape
    at = np.ascontiguousarray(a.T)
    vs = np.zeros((n, m))
    used = np.zeros(n, dtype=bool)
    for j in range(n):
        x = at[j, j:]
        sigma = np.sqrt(x @ x)
        if sigma == 0.0:
            continue
        alpha = -sigma if x[0] >= 0.0 else sigma
        v = x.copy()
        v[0] -= alpha
        v /= np.sqrt(v @ v)
        vs[j, j:] = v
        used[j] = True
        at[j, j] = alpha
        at[j, j + 1:] = 0.0
        if j + 1 < n:
            block = at[j + 1:, j:]
            block -= 2.0 * np.outer(block @ v, v)
    qt = np.zeros((n, m))
    qt[np.arange(n), np.arange(n)] = 1.0
    for j in range(n - 1, -1, -1):
        if not used[j]:
            continue
        v = vs[j, j:]
        block = qt[:, j:]
        block -= 2.0 * np.outer(block @ v, v)
    r = np.triu(at.T[:n, :n])
    neg = np.diagonal(r) < 0.0
    r[neg, :] *= -1.0
    qt[neg, :] *= -1.0
    return np.ascontiguousarray(qt.T), r


class LandingWorkspace:
    """Scratch buffers for repeated landing-field evaluations at fixed (d, r)."""

    def __init__(self, d, r):
        self.d = d
        self.r = r
        self._eye = np.eye(r)

    def field(self, x, g, lam, out):
        if x.shape != (self.d, self.r) or g.shape != (self.d, self.r):
            raise ValueError("workspace shape mismatch")
        if out.shape != (self.d, self.r):
            raise ValueError("output shape mismatch")
        xtx = x.T @ x
        gr = 0.5 * (g @ xtx - x @ (g.T @ x))
        e = xtx - self._eye
        pg = x @ e
        np.add(gr, lam * pg, out=out)
        return (
            float(np.sqrt(np.vdot(gr, gr))),
            float(np.sqrt(np.vdot(pg, pg))),
            float(np.sqrt(np.vdot(e, e))),
            float(np.sqrt(np.vdot(out, out))),
        )
