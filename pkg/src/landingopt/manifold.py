"""Stiefel geometry: feasibility, safety region, relative gradient, retractions."""

from dataclasses import dataclass

import numpy as np

from landingopt.linalg import (
    LinAlgError,
    as_matrix,
    fro_norm,
    gaussian_matrix,
    polar_factor,
    skew,
    sym,
    thin_qr,
)

GATE_TOL = 1e-8


@dataclass(frozen=True)
class StiefelParams:
    d: int
    r: int
    epsilon: float = 0.5

    def __post_init__(self):
        if not (self.d >= self.r >= 1):
            raise ValueError(f"need d >= r >= 1, got d={self.d}, r={self.r}")
        if not (0.0 < self.epsilon < 0.75):
            raise ValueError(f"epsilon must lie in (0, 3/4), got {self.epsilon}")


def _shape_check(x, params):
    if params is not None and x.shape != (params.d, params.r):
        raise LinAlgError(f"expected shape {(params.d, params.r)}, got {x.shape}")


def feasibility_gap(x, params=None):
    """||x^T x - I||_F."""
    x = as_matrix(x)
    _shape_check(x, params)
    e = x.T @ x
    e[np.diag_indices_from(e)] -= 1.0
    return fro_norm(e)


def in_safety_region(x, params):
    return feasibility_gap(x, params) <= params.epsilon


def riemannian_grad(euclid_grad, x):
    """Relative gradient skew(G x^T) x, evaluated as (G x^Tx - x G^Tx) / 2.

    Same value as the canonical-metric Riemannian gradient on the manifold,
    and still defined off it.
    """
    g, x = as_matrix(euclid_grad), as_matrix(x)
    if g.shape != x.shape:
        raise LinAlgError(f"shape mismatch: {g.shape} vs {x.shape}")
    return 0.5 * (g @ (x.T @ x) - x @ (g.T @ x))


def relative_grad_dense(euclid_grad, x):
    """skew(G x^T) x with the d x d product formed; O(d^2 r). Test oracle only."""
    g, x = as_matrix(euclid_grad), as_matrix(x)
    return skew(g @ x.T) @ x


def project_tangent(xi, x):
    x, xi = as_matrix(x), as_matrix(xi)
    if xi.shape != x.shape:
        raise LinAlgError(f"shape mismatch: {xi.shape} vs {x.shape}")
    if feasibility_gap(x) > GATE_TOL:
        raise LinAlgError("project_tangent needs x on the manifold")
    return xi - x @ sym(x.T @ xi)


def _retraction_input(x, step):
    x, step = as_matrix(x), as_matrix(step)
    if step.shape != x.shape:
        raise LinAlgError(f"shape mismatch: {step.shape} vs {x.shape}")
    if feasibility_gap(x) > GATE_TOL:
        raise LinAlgError("retraction base point is off the manifold")
    return x + step


def retract_qr(x, step):
    q, _ = thin_qr(_retraction_input(x, step))
    return q


def retract_polar(x, step):
    return polar_factor(_retraction_input(x, step))


RETRACTIONS = {"qr": retract_qr, "polar": retract_polar}


def random_stiefel(rng, params):
    """Q factor of a d x r Gaussian matrix."""
    q, _ = thin_qr(gaussian_matrix(rng, params.d, params.r))
    return q


def random_safety_point(rng, params, gap=None):
    """A point u P with u on the manifold and x^T x = I + E, ||E||_F = gap.

    ``gap`` defaults to a uniform draw on [0, epsilon]. Every point of the
    safety region has this polar form, so sweeping ``gap`` covers it.
    """
    u = random_stiefel(rng, params)
    if gap is None:
        gap = params.epsilon * float(rng.uniform(1)[0])
    return inflate(u, rng, gap)


def inflate(u, rng, gap):
    """Move an on-manifold ``u`` off the manifold to feasibility gap ``gap``.

    Requires gap < 1 so that I + E stays positive definite.
    """
    r = u.shape[1]
    if gap == 0.0:
        return u.copy()
    if not 0.0 < gap < 1.0:
        raise ValueError("gap must lie in [0, 1)")
    basis = random_stiefel(rng, StiefelParams(r, r, 0.5))
    e = rng.normal(r)
    e *= gap / np.linalg.norm(e)
    return u @ ((basis * np.sqrt(1.0 + e)) @ basis.T)


def sample_pair(rng, params, max_tries=100):
    """Two points of the safety region at a log-uniform distance in [1e-3, 0.5]."""
    for _ in range(max_tries):
        x = random_safety_point(rng, params)
        z = rng.normal(params.d * params.r).reshape(params.d, params.r)
        t = 10.0 ** (-3.0 + 2.7 * float(rng.uniform(1)[0]))
        y = x + (t / fro_norm(z)) * z
        if feasibility_gap(y) <= params.epsilon:
            return x, y
    raise RuntimeError("could not sample a pair inside the safety region")


def lipschitz_ratio(fn, params, pairs, rng):
    """Empirical Lipschitz constant of ``fn`` over sampled pairs in the safety region."""
    best = 0.0
    for _ in range(pairs):
        x, y = sample_pair(rng, params)
        best = max(best, fro_norm(fn(x) - fn(y)) / fro_norm(x - y))
    return best
