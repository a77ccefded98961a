"""The landing field and the retraction-free landing iteration."""

import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from landingopt import _backend
from landingopt.linalg import as_matrix, fro_norm
from landingopt.manifold import StiefelParams, feasibility_gap, random_safety_point, riemannian_grad
from landingopt.rng import ALGORITHM as RNG_ALGORITHM
from landingopt.rng import Rng
from landingopt.trace import NullSink, RunReport, TraceRecord


@dataclass
class LandingConfig:
    alpha: Optional[float] = None  # None: use the safe step
    lambda_: float = 1.0
    epsilon: float = 0.5
    max_iter: int = 10_000
    grad_tol: float = 1e-6
    enforce_safe_step: bool = False
    g_bound: Optional[float] = None  # None: analytic if available, else sampled
    g_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.lambda_ > 0:
            raise ValueError("lambda must be positive")
        if not 0.0 < self.epsilon < 0.75:
            raise ValueError("epsilon must lie in (0, 3/4)")


def penalty(x):
    """p(x) = ||x^T x - I||_F^2 / 4."""
    return 0.25 * feasibility_gap(x) ** 2


def penalty_grad(x):
    """x (x^T x - I)."""
    x = as_matrix(x)
    e = x.T @ x
    e[np.diag_indices_from(e)] -= 1.0
    return x @ e


def landing_field(obj, x, lambda_):
    """grad f(x) + lambda * x (x^T x - I)."""
    x = as_matrix(x)
    return riemannian_grad(obj.euclid_grad(x), x) + lambda_ * penalty_grad(x)


def safe_step(g_bound, lambda_, epsilon):
    """Largest step that keeps the next iterate in the safety region.

    min{ lam eps (1-eps) / (G^2 + lam^2 (1+eps) eps^2), sqrt(eps / (2 G^2)), 1 / (2 lam) }
    """
    if g_bound < 0 or lambda_ <= 0 or not 0 < epsilon < 0.75:
        raise ValueError("need G >= 0, lambda > 0, epsilon in (0, 3/4)")
    first = lambda_ * epsilon * (1 - epsilon) / (g_bound**2 + lambda_**2 * (1 + epsilon) * epsilon**2)
    with np.errstate(over="ignore"):  # tiny G: the bound is simply inf
        second = np.inf if g_bound == 0 else np.sqrt(epsilon / 2) / np.float64(g_bound)
    return float(min(first, second, 1 / (2 * lambda_)))


def grad_bound_with_provenance(obj, params, samples=1000, rng=None, method="auto"):
    """(G, provenance) with provenance 'analytic' or 'sampled'.

    The sampled path returns 1.5 x the largest ||grad f|| seen at random
    points of the safety region.
    """
    if method in ("auto", "analytic"):
        g = obj.grad_bound(params.epsilon)
        if g is not None:
            return float(g), "analytic"
        if method == "analytic":
            raise ValueError(f"{obj.name} has no analytic gradient bound")
    rng = rng or Rng(0)
    best = 0.0
    for _ in range(max(1, samples)):
        x = random_safety_point(rng, params)
        best = max(best, fro_norm(riemannian_grad(obj.euclid_grad(x), x)))
    return 1.5 * best, "sampled"


def estimate_grad_bound(obj, params, samples=1000, rng=None, method="auto"):
    return grad_bound_with_provenance(obj, params, samples, rng, method)[0]


def landing_flops(obj, d, r):
    return obj.grad_flops(d, r) + 10 * d * r * r + 5 * d * r


def _grad_fn(obj, d, r):
    """A gradient callable for the loop, in-place when the objective allows it."""
    if hasattr(obj, "euclid_grad_into"):
        buf = np.empty((d, r))

        def grad(x):
            return obj.euclid_grad_into(x, buf)

        return grad
    return obj.euclid_grad


def _value_fn(obj):
    if hasattr(obj, "value_from_grad"):
        return obj.value_from_grad
    return lambda x, g: obj.value(x)


def run_landing(obj, x0, cfg: LandingConfig, hooks=None, monitors=None, instance_hash=None):
    """Iterate x <- x - alpha * Lambda(x) until ||Lambda||_F <= grad_tol.

    ``monitors`` maps trace columns ('merit', 'dist_s') to callables of x; they
    run outside the timed section. A step that leaves the safety region stops
    the run with exit_reason 'safety_violation'.
    """
    hooks = NullSink() if hooks is None else hooks
    monitors = monitors or {}
    x = np.array(as_matrix(x0), copy=True)
    d, r = x.shape
    params = StiefelParams(d, r, cfg.epsilon)
    if feasibility_gap(x) > cfg.epsilon:
        raise ValueError("initial point is outside the safety region")

    notes = {}
    alpha = cfg.alpha
    if alpha is None or cfg.enforce_safe_step:
        if cfg.g_bound is not None:
            g_bound, prov = float(cfg.g_bound), "given"
        else:
            g_bound, prov = grad_bound_with_provenance(
                obj, params, cfg.g_samples, Rng(cfg.seed).spawn(7)
            )
        a_safe = safe_step(g_bound, cfg.lambda_, cfg.epsilon)
        notes.update(g_bound=g_bound, g_provenance=prov, alpha_safe=a_safe)
        if alpha is None:
            alpha = a_safe
        elif alpha > a_safe * (1 + 1e-12):
            raise ValueError(f"alpha={alpha:.6g} exceeds the safe step {a_safe:.6g}")

    ws = _backend.LandingWorkspace(d, r)
    field = np.empty((d, r))
    grad = _grad_fn(obj, d, r)
    value = _value_fn(obj)
    merit_fn = monitors.get("merit")
    dist_fn = monitors.get("dist_s")
    lam = cfg.lambda_
    tol = cfg.grad_tol
    eps = cfg.epsilon

    wall = 0
    exit_reason = "max_iter"
    k = 0
    gn = pn = gap = fn = f = float("nan")
    while True:
        t0 = time.perf_counter_ns()
        g = grad(x)
        f = value(x, g)
        gn, pn, gap, fn = ws.field(x, g, lam, field)
        wall += time.perf_counter_ns() - t0

        if not np.isfinite(fn) or not np.isfinite(f):
            exit_reason = "non_finite"
        elif gap > eps:
            exit_reason = "safety_violation"
            notes["violation"] = {"iter": k, "gap": gap}
        hooks.record(
            TraceRecord(
                k,
                f,
                gn,
                gap,
                None if merit_fn is None else merit_fn(x),
                None if dist_fn is None else dist_fn(x),
                wall,
            )
        )
        if exit_reason in ("non_finite", "safety_violation"):
            break
        if fn <= tol:
            exit_reason = "converged"
            break
        if k >= cfg.max_iter:
            exit_reason = "max_iter"
            break

        t0 = time.perf_counter_ns()
        field *= alpha
        x -= field
        wall += time.perf_counter_ns() - t0
        k += 1

    config = asdict(cfg)
    config["alpha"] = alpha
    return RunReport(
        algorithm="landing",
        config=config,
        exit_reason=exit_reason,
        n_iter=k,
        final={
            "f_val": f,
            "grad_norm": gn,
            "gap": gap,
            "field_norm": fn,
            "penalty_grad_norm": pn,
        },
        instance_hash=instance_hash,
        seed=cfg.seed,
        rng=RNG_ALGORITHM,
        backend=_backend.BACKEND,
        flops_per_iter=landing_flops(obj, d, r),
        wall_time_s=wall * 1e-9,
        notes=notes,
        x_final=x,
    )


def estimate_field_lipschitz(obj, params, lambda_, pairs, rng):
    """Largest ||Lambda(x) - Lambda(y)|| / ||x - y|| over sampled pairs in the safety region."""
    from landingopt.manifold import lipschitz_ratio

    return lipschitz_ratio(lambda z: landing_field(obj, z, lambda_), params, pairs, rng)
