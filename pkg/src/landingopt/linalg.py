"""Dense kernels on row-major float64 arrays.

Matrices are plain C-contiguous ``numpy.ndarray`` objects. Products go through
numpy's BLAS; the Jacobi eigensolver and Householder QR are our own and run on
the compiled core when it is built (see ``landingopt._backend``).
"""

from dataclasses import dataclass

import numpy as np

from landingopt import _backend
from landingopt.rng import Rng


class LinAlgError(ValueError):
    """Shape, rank or convergence failure in a dense kernel."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


@dataclass(frozen=True)
class SymEigDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns match eigenvalues
    sweeps: int = 0


def as_matrix(a):
    """Coerce to a 2-D C-contiguous float64 array (copying only if needed)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise LinAlgError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def check_finite(a, what="result"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite entries in {what}")
    return a


def _square(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise LinAlgError(f"expected a square matrix, got {a.shape}")
    return a


def matmul(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise LinAlgError(f"dimension mismatch: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul")


def sym(a):
    a = _square(a)
    return 0.5 * (a + a.T)


def skew(a):
    a = _square(a)
    return 0.5 * (a - a.T)


def inner(a, b):
    """Frobenius inner product Tr(a b^T)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LinAlgError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def fro_norm(a):
    a = np.asarray(a, dtype=np.float64)
    ss = float(np.vdot(a, a))
    if 1e-280 < ss < 1e280:
        return float(np.sqrt(ss))
    # rescale so tiny or huge entries neither underflow nor overflow
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return scale
    b = a / scale
    return scale * float(np.sqrt(np.vdot(b, b)))


def thin_qr(a):
    """Householder QR ``a = q @ r`` with ``diag(r) > 0``.

    Raises LinAlgError when a diagonal entry of ``r`` falls below
    ``1e-12 * ||a||_F``.
    """
    a = check_finite(as_matrix(a), "qr input")
    m, n = a.shape
    if m < n:
        raise LinAlgError(f"thin_qr needs rows >= cols, got {a.shape}")
    q, r = _backend.householder_qr(a)
    scale = fro_norm(a)
    if n and (scale == 0.0 or np.min(np.diagonal(r)) < 1e-12 * scale):
        raise LinAlgError("rank-deficient input to thin_qr")
    return q, r


def jacobi_eigh(c, max_sweeps=100, sym_tol=1e-10):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Eigenvalues come back descending. Each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """
    c = check_finite(_square(c), "eigh input")
    scale = fro_norm(c)
    if fro_norm(c - c.T) > sym_tol * max(scale, 1e-300):
        raise LinAlgError("jacobi_eigh input is not symmetric")
    w, v, sweeps = _backend.jacobi_eigh(0.5 * (c + c.T), max_sweeps)
    if sweeps < 0:
        raise LinAlgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(-w, kind="stable")
    w = np.ascontiguousarray(w[order])
    v = np.ascontiguousarray(v[:, order])
    if v.size:
        pivot = np.argmax(np.abs(v), axis=0)
        signs = np.sign(v[pivot, np.arange(v.shape[1])])
        signs[signs == 0] = 1.0
        v *= signs
    return SymEigDecomposition(w, v, sweeps)


def polar_factor(x, return_sweeps=False):
    """Orthonormal polar factor ``x (x^T x)^{-1/2}``, via ``jacobi_eigh``."""
    x = as_matrix(x)
    if x.shape[0] < x.shape[1]:
        raise LinAlgError(f"polar_factor needs rows >= cols, got {x.shape}")
    eig = jacobi_eigh(x.T @ x)
    w = eig.eigenvalues
    if w.size and w[-1] < 1e-14:
        raise LinAlgError("rank-deficient input to polar_factor")
    v = eig.eigenvectors
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    q = check_finite(x @ inv_sqrt, "polar factor")
    return (q, eig.sweeps) if return_sweeps else q


def gaussian_matrix(rng: Rng, rows, cols):
    """rows x cols i.i.d. N(0, 1), filled row-major from the stream."""
    return rng.normal(rows * cols).reshape(rows, cols)
