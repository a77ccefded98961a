"""Objective models: the weighted PCA quadratic and generic callables.

Objectives are minimised. The PCA model negates the trace objective
``<A^T A x, x D>`` so that the top-r principal subspace is the minimiser.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from landingopt.linalg import LinAlgError, as_matrix, fro_norm, jacobi_eigh
from landingopt.manifold import project_tangent, retract_polar, riemannian_grad


class DegenerateOracleError(LinAlgError):
    """The solution set is not a finite sign-flip family (eigengap too small)."""


class ObjectiveModel:
    """Base class: ``value(x)`` and ``euclid_grad(x)`` on d x r matrices.

    Subclasses may provide analytic norm bounds over the safety region; the
    default ``None`` tells callers to fall back to sampling.
    """

    name = "objective"

    def value(self, x):
        raise NotImplementedError

    def euclid_grad(self, x):
        raise NotImplementedError

    @property
    def descriptor(self):
        return {"name": self.name}

    lipschitz_bound = None

    def grad_bound(self, epsilon):
        """Upper bound on ||grad f(x)||_F over the safety region, or None."""
        return None

    def euclid_grad_sup(self, epsilon):
        """Upper bound on ||nabla f(x)||_F over the safety region, or None."""
        return None

    def sym_sup(self, epsilon):
        """Upper bound on ||sym(x^T nabla f(x))||_F over the safety region, or None."""
        return None

    def grad_flops(self, d, r):
        """Flops for one Euclidean gradient; 0 when unknown."""
        return 0

    def scaled(self, t):
        return ScaledObjective(self, t)


class FunctionObjective(ObjectiveModel):
    def __init__(self, value, grad, name="function", lipschitz_bound=None):
        self._value = value
        self._grad = grad
        self.name = name
        self.lipschitz_bound = lipschitz_bound

    def value(self, x):
        return float(self._value(x))

    def euclid_grad(self, x):
        return as_matrix(self._grad(x))


def zero_objective():
    return FunctionObjective(lambda x: 0.0, np.zeros_like, name="zero", lipschitz_bound=0.0)


class ScaledObjective(ObjectiveModel):
    def __init__(self, base, t):
        if t <= 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.t = float(t)
        self.name = f"{base.name}*{t:g}"
        if base.lipschitz_bound is not None:
            self.lipschitz_bound = self.t * base.lipschitz_bound

    def value(self, x):
        return self.t * self.base.value(x)

    def euclid_grad(self, x):
        return self.t * self.base.euclid_grad(x)

    def _scale(self, v):
        return None if v is None else self.t * v

    def grad_bound(self, epsilon):
        return self._scale(self.base.grad_bound(epsilon))

    def euclid_grad_sup(self, epsilon):
        return self._scale(self.base.euclid_grad_sup(epsilon))

    def sym_sup(self, epsilon):
        return self._scale(self.base.sym_sup(epsilon))

    def grad_flops(self, d, r):
        return self.base.grad_flops(d, r) + d * r


class PcaObjective(ObjectiveModel):
    """f(x) = -Tr(c x D x^T) with c = A^T A precomputed and D diagonal.

    ``dmat`` holds the diagonal of D, strictly decreasing and positive.
    """

    name = "pca"

    def __init__(self, c, dmat, a_rows=None, meta=None, eigenvalues=None):
        c = as_matrix(c)
        dmat = np.asarray(dmat, dtype=np.float64).ravel()
        if c.shape[0] != c.shape[1]:
            raise LinAlgError("Gram matrix must be square")
        if dmat.size == 0 or dmat.size > c.shape[0]:
            raise ValueError("need 1 <= r <= d weights")
        if np.any(dmat <= 0) or np.any(np.diff(dmat) >= 0):
            raise ValueError("weights must be positive and strictly decreasing")
        if fro_norm(c - c.T) > 1e-10 * max(fro_norm(c), 1e-300):
            raise LinAlgError("Gram matrix is not symmetric")
        self.c = c
        self.dmat = dmat
        self.a_rows = a_rows
        self.meta = dict(meta or {})
        self._m2d = -2.0 * dmat
        self._eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues, float)
        self._eig = None

    @property
    def d(self):
        return self.c.shape[0]

    @property
    def r(self):
        return self.dmat.size

    @property
    def descriptor(self):
        return {"name": self.name, "d": self.d, "r": self.r, "m": self.a_rows, **self.meta}

    def _check(self, x):
        if x.shape != (self.d, self.r):
            raise LinAlgError(f"expected shape {(self.d, self.r)}, got {x.shape}")

    def value(self, x):
        x = as_matrix(x)
        self._check(x)
        return -float(np.vdot(x * self.dmat, self.c @ x))

    def euclid_grad(self, x):
        x = as_matrix(x)
        self._check(x)
        return (self.c @ x) * self._m2d

    def euclid_grad_into(self, x, out):
        """In-place gradient for the solver loops; skips validation."""
        np.matmul(self.c, x, out=out)
        out *= self._m2d
        return out

    def value_from_grad(self, x, g):
        """f(x) = <x, nabla f(x)> / 2 for this quadratic."""
        return 0.5 * float(np.vdot(x, g))

    def hess_vec(self, x, v):
        return (self.c @ v) * self._m2d

    # spectral data -------------------------------------------------------
    def eigh(self):
        if self._eig is None:
            self._eig = jacobi_eigh(self.c)
            self._eigenvalues = self._eig.eigenvalues
        return self._eig

    @property
    def lambda_max(self):
        if self._eigenvalues is None:
            self.eigh()
        return float(max(self._eigenvalues[0], 0.0))

    @property
    def lipschitz_bound(self):
        return 2.0 * self.lambda_max * float(self.dmat[0])

    def weighted_spectral_norm(self):
        """sqrt(sum_i s_i^2 D_i^2), s_i the r largest |eigenvalues| of c."""
        if self._eigenvalues is None:
            self.eigh()
        s = np.sort(np.abs(self._eigenvalues))[::-1][: self.r]
        return float(np.sqrt(np.sum((s * self.dmat) ** 2)))

    def euclid_grad_sup(self, epsilon):
        # ||c x D||_F^2 = Tr(c^2 x D^2 x^T) <= sum_i s_i^2 eig_i(D x^T x D), and x^T x <= (1 + eps) I
        return 2.0 * np.sqrt(1.0 + epsilon) * self.weighted_spectral_norm()

    def grad_bound(self, epsilon):
        # ||skew(G x^T) x||_F <= ||G||_F ||x||_2^2
        return self.euclid_grad_sup(epsilon) * (1.0 + epsilon)

    def sym_sup(self, epsilon):
        return self.euclid_grad_sup(epsilon) * np.sqrt(1.0 + epsilon)

    def grad_flops(self, d, r):
        return 2 * d * d * r + d * r

    def scaled(self, t):
        if t <= 0:
            raise ValueError("scale must be positive")
        ev = None if self._eigenvalues is None else t * self._eigenvalues
        return PcaObjective(t * self.c, self.dmat, self.a_rows, {**self.meta, "scaled": t}, ev)

    # serialisation -------------------------------------------------------
    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.c).tobytes())
        h.update(np.ascontiguousarray(self.dmat).tobytes())
        h.update(json.dumps(self.meta, sort_keys=True, default=str).encode())
        return h.hexdigest()[:16]

    def save(self, path):
        """Write an ``.npz`` container: c, D, known spectrum, JSON metadata, hash."""
        meta = {**self.meta, "a_rows": self.a_rows, "hash": self.content_hash()}
        arrays = {"c": self.c, "dmat": self.dmat, "meta": np.array(json.dumps(meta, default=str))}
        if self._eigenvalues is not None:
            arrays["eigenvalues"] = self._eigenvalues
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        return meta["hash"]

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            stored = meta.pop("hash")
            a_rows = meta.pop("a_rows")
            ev = z["eigenvalues"] if "eigenvalues" in z.files else None
            obj = cls(z["c"], z["dmat"], a_rows, meta, ev)
        if obj.content_hash() != stored:
            raise ValueError(f"instance hash mismatch in {path}")
        return obj


@dataclass
class SolutionOracle:
    f_star: float
    v_top: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    sign_freedom: bool = True

    def member(self, signs):
        return self.v_top * np.asarray(signs, dtype=float)


def optimum_oracle(obj: PcaObjective, gap_tol=1e-8):
    """Top-r eigenpairs of c by Jacobi; f* = -sum sigma_i D_i."""
    eig = obj.eigh()
    w = eig.eigenvalues
    r = obj.r
    k = min(r + 1, w.size)
    gaps = -np.diff(w[:k])
    if gaps.size and np.min(gaps) <= gap_tol * max(1.0, abs(w[0])):
        raise DegenerateOracleError(
            f"eigengap {np.min(gaps):.3e} among the top {k} eigenvalues is too small"
        )
    f_star = -float(np.dot(w[:r], obj.dmat))
    return SolutionOracle(f_star, np.ascontiguousarray(eig.eigenvectors[:, :r]), w.copy())


def column_distances(oracle, x):
    """Per-column sign-aligned distances min(||x_i - v_i||, ||x_i + v_i||)."""
    x = as_matrix(x)
    v = oracle.v_top
    minus = np.sum((x - v) ** 2, axis=0)
    plus = np.sum((x + v) ** 2, axis=0)
    return np.sqrt(np.minimum(minus, plus))


def dist_to_solution(oracle, x):
    return float(np.sqrt(np.sum(column_distances(oracle, x) ** 2)))


def finite_diff_grad(obj, x, h=1e-5):
    """Entrywise central differences of ``obj.value`` (or of a callable)."""
    f = obj if callable(obj) else obj.value
    x = as_matrix(x).copy()
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        keep = x[idx]
        x[idx] = keep + h
        up = f(x)
        x[idx] = keep - h
        down = f(x)
        x[idx] = keep
        out[idx] = (up - down) / (2.0 * h)
    return out


def sample_near_solution(obj, oracle, rng, radius, max_tries=1000):
    """On-manifold point retracted from a random member of S.

    The tangent step length is uniform on (0, 2 * radius]; points farther than
    ``radius`` from S are rejected.
    """
    d, r = oracle.v_top.shape
    for _ in range(max_tries):
        signs = np.where(rng.uniform(r) < 0.5, -1.0, 1.0)
        base = oracle.member(signs)
        eta = project_tangent(rng.normal(d * r).reshape(d, r), base)
        nrm = fro_norm(eta)
        if nrm == 0.0:
            continue
        u = 2.0 * radius * (1.0 - float(rng.uniform(1)[0]))
        x = retract_polar(base, (u / nrm) * eta)
        if dist_to_solution(oracle, x) <= radius:
            return x
    raise RuntimeError("could not sample inside the requested neighbourhood")


def pl_ratios(obj, oracle, delta, samples, rng):
    """Ratios ||grad f||^2 / (2 |f - f*|) at on-manifold samples within 2*delta of S.

    Samples with |f - f*| < 1e-14 are dropped.
    """
    out = []
    for _ in range(samples):
        x = sample_near_solution(obj, oracle, rng, 2.0 * delta)
        gap = abs(obj.value(x) - oracle.f_star)
        if gap < 1e-14:
            continue
        g = riemannian_grad(obj.euclid_grad(x), x)
        out.append(float(np.vdot(g, g)) / (2.0 * gap))
    return np.array(out)


def estimate_pl_constant(obj, oracle, delta, samples, rng):
    """Running-minimum estimate of the local Riemannian PL constant."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    ratios = pl_ratios(obj, oracle, delta, samples, rng)
    if ratios.size == 0:
        raise RuntimeError("every PL sample was skipped (all at the optimum)")
    mu = float(np.min(ratios))
    if not mu > 0:
        raise RuntimeError("PL estimate is not positive")
    return mu
