"""Baselines: Riemannian gradient descent with a retraction, ExPen, and a
plain quadratic penalty.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from landingopt import _backend
from landingopt.linalg import LinAlgError, as_matrix, fro_norm, polar_factor, thin_qr
from landingopt.manifold import GATE_TOL, feasibility_gap, riemannian_grad
from landingopt.rng import ALGORITHM as RNG_ALGORITHM
from landingopt.trace import NullSink, RunReport, TraceRecord


@dataclass
class BaselineConfig:
    alpha: float = 0.1
    retraction: str = "polar"
    beta: float = 1.0
    max_iter: int = 10_000
    grad_tol: float = 1e-6
    epsilon: float = 0.5  # safety radius the retraction-free baselines must start in
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.retraction not in ("qr", "polar"):
            raise ValueError("retraction must be 'qr' or 'polar'")


def jacobi_flops(n, sweeps):
    # per rotation: two rows/columns of the matrix and two eigenvector columns
    return max(sweeps, 1) * (n * (n - 1) // 2) * (16 * n + 20)


def householder_flops(m, n):
    return 4 * m * n * n - (4 * n**3) // 3


class _Run:
    """Timing, trace records and exit bookkeeping shared by the loops."""

    def __init__(self, obj, hooks, monitors):
        self.obj = obj
        self.hooks = NullSink() if hooks is None else hooks
        self.monitors = monitors or {}
        self.wall = 0
        self.flops = 0
        self.updates = 0
        self._t0 = 0

    def start(self):
        self._t0 = time.perf_counter_ns()

    def stop(self):
        self.wall += time.perf_counter_ns() - self._t0

    def record(self, k, x, f, gn, gap):
        m = self.monitors
        self.hooks.record(
            TraceRecord(
                k,
                f,
                gn,
                gap,
                m["merit"](x) if "merit" in m else None,
                m["dist_s"](x) if "dist_s" in m else None,
                self.wall,
            )
        )

    def report(self, name, cfg, reason, k, x, final, instance_hash, d, r, base_flops):
        per_iter = self.flops // self.updates if self.updates else base_flops
        return RunReport(
            algorithm=name,
            config=asdict(cfg),
            exit_reason=reason,
            n_iter=k,
            final=final,
            instance_hash=instance_hash,
            seed=cfg.seed,
            rng=RNG_ALGORITHM,
            backend=_backend.BACKEND,
            flops_per_iter=int(per_iter),
            wall_time_s=self.wall * 1e-9,
            x_final=x,
        )


def _value(obj, x, g):
    if hasattr(obj, "value_from_grad"):
        return obj.value_from_grad(x, g)
    return obj.value(x)


def run_rgd(obj, x0, cfg: BaselineConfig, hooks=None, monitors=None, instance_hash=None):
    """x <- R_x(-alpha grad f(x)) with the QR or polar retraction."""
    x = np.array(as_matrix(x0), copy=True)
    d, r = x.shape
    if feasibility_gap(x) > 1e-10:
        raise ValueError("RGD needs an on-manifold starting point")
    run = _Run(obj, hooks, monitors)
    gf = obj.grad_flops(d, r)
    base = gf + 8 * d * r * r + 3 * d * r + 2 * d * r * r
    reason = "max_iter"
    k = 0
    while True:
        run.start()
        g = obj.euclid_grad(x)
        f = _value(obj, x, g)
        rg = riemannian_grad(g, x)
        gn = fro_norm(rg)
        run.stop()
        gap = feasibility_gap(x)
        if not (np.isfinite(gn) and np.isfinite(f)):
            reason = "non_finite"
            run.record(k, x, f, gn, gap)
            break
        run.record(k, x, f, gn, gap)
        if gn <= cfg.grad_tol:
            reason = "converged"
            break
        if k >= cfg.max_iter:
            break
        run.start()
        try:
            z = x - cfg.alpha * rg
            if feasibility_gap(x) > GATE_TOL:
                raise LinAlgError("RGD iterate drifted off the manifold")
            if cfg.retraction == "qr":
                x, _ = thin_qr(z)
                extra = householder_flops(d, r)
            else:
                x, sweeps = polar_factor(z, return_sweeps=True)
                extra = 2 * d * r * r + jacobi_flops(r, sweeps) + 2 * r**3 + 2 * d * r * r
        except LinAlgError:
            run.stop()
            reason = "retraction_failure"
            break
        run.stop()
        run.flops += base + extra
        run.updates += 1
        k += 1
    final = {"f_val": f, "grad_norm": gn, "gap": feasibility_gap(x)}
    name = f"rgd-{cfg.retraction}"
    return run.report(name, cfg, reason, k, x, final, instance_hash, d, r, base)


def expen_map(x):
    """y(x) = x (3/2 I - x^T x / 2)."""
    x = as_matrix(x)
    return x @ (1.5 * np.eye(x.shape[1]) - 0.5 * (x.T @ x))


def expen_value(obj, x, beta):
    """E(x) = f(y(x)) + beta/4 ||x^T x - I||_F^2."""
    return obj.value(expen_map(x)) + 0.25 * beta * feasibility_gap(x) ** 2


def expen_grad(obj, x, beta):
    """Chain rule through y(x): G M - x sym(x^T G) + beta x (x^T x - I), G = nabla f(y)."""
    x = as_matrix(x)
    xtx = x.T @ x
    m = 1.5 * np.eye(x.shape[1]) - 0.5 * xtx
    g = obj.euclid_grad(x @ m)
    e = xtx - np.eye(x.shape[1])
    s = x.T @ g
    return g @ m - 0.5 * x @ (s + s.T) + beta * (x @ e)


def _check_start(x, cfg):
    gap = feasibility_gap(x)
    if gap > cfg.epsilon:
        raise ValueError(f"initial gap {gap:.3g} exceeds epsilon {cfg.epsilon}")


def _divergence_limit(f0):
    return 1e6 * max(abs(f0), 1e-300)


def run_expen(obj, x0, cfg: BaselineConfig, hooks=None, monitors=None, instance_hash=None):
    """Plain gradient descent on the ExPen function E(x)."""
    x = np.array(as_matrix(x0), copy=True)
    d, r = x.shape
    _check_start(x, cfg)
    run = _Run(obj, hooks, monitors)
    eye = np.eye(r)
    beta = cfg.beta
    per_iter = obj.grad_flops(d, r) + 12 * d * r * r + 8 * d * r
    limit = _divergence_limit(obj.value(x))
    reason = "max_iter"
    k = 0
    while True:
        run.start()
        xtx = x.T @ x
        m = 1.5 * eye - 0.5 * xtx
        g = obj.euclid_grad(x @ m)
        e = xtx - eye
        s = x.T @ g
        grad = g @ m - 0.5 * x @ (s + s.T) + beta * (x @ e)
        gnorm = fro_norm(grad)
        run.stop()
        # reported metrics are taken at x itself, outside the timed section
        gx = obj.euclid_grad(x)
        f = _value(obj, x, gx)
        gn = fro_norm(riemannian_grad(gx, x))
        gap = fro_norm(e)
        run.record(k, x, f, gn, gap)
        if not (np.isfinite(gnorm) and np.isfinite(f)):
            reason = "non_finite"
            break
        if abs(f) > limit:
            reason = "diverged"
            break
        if gnorm <= cfg.grad_tol:
            reason = "converged"
            break
        if k >= cfg.max_iter:
            break
        run.start()
        grad *= cfg.alpha
        x -= grad
        run.stop()
        run.flops += per_iter
        run.updates += 1
        k += 1
    final = {"f_val": f, "grad_norm": gn, "gap": gap, "expen_grad_norm": gnorm}
    return run.report("expen", cfg, reason, k, x, final, instance_hash, d, r, per_iter)


def penalty_objective_grad(obj, x, beta):
    """Gradient of f + beta/4 ||x^T x - I||^2."""
    x = as_matrix(x)
    e = x.T @ x - np.eye(x.shape[1])
    return obj.euclid_grad(x) + beta * (x @ e)


def run_penalty(obj, x0, cfg: BaselineConfig, hooks=None, monitors=None, instance_hash=None):
    """Plain gradient descent on f + beta p; converges to an infeasible point."""
    x = np.array(as_matrix(x0), copy=True)
    d, r = x.shape
    _check_start(x, cfg)
    run = _Run(obj, hooks, monitors)
    eye = np.eye(r)
    beta = cfg.beta
    per_iter = obj.grad_flops(d, r) + 4 * d * r * r + 3 * d * r
    limit = _divergence_limit(obj.value(x))
    reason = "max_iter"
    k = 0
    while True:
        run.start()
        g = obj.euclid_grad(x)
        e = x.T @ x - eye
        grad = g + beta * (x @ e)
        gnorm = fro_norm(grad)
        run.stop()
        f = _value(obj, x, g)
        gn = fro_norm(riemannian_grad(g, x))
        gap = fro_norm(e)
        run.record(k, x, f, gn, gap)
        if not (np.isfinite(gnorm) and np.isfinite(f)):
            reason = "non_finite"
            break
        if abs(f) > limit:
            reason = "diverged"
            break
        if gnorm <= cfg.grad_tol:
            reason = "converged"
            break
        if k >= cfg.max_iter:
            break
        run.start()
        grad *= cfg.alpha
        x -= grad
        run.stop()
        run.flops += per_iter
        run.updates += 1
        k += 1
    final = {"f_val": f, "grad_norm": gn, "gap": gap, "penalty_grad_norm": gnorm}
    return run.report("penalty", cfg, reason, k, x, final, instance_hash, d, r, per_iter)


def expen_flops(obj, d, r):
    return obj.grad_flops(d, r) + 12 * d * r * r + 8 * d * r
