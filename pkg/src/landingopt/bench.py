"""Instance generation, experiment orchestration and report export."""

import csv
import io
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from landingopt.baselines import BaselineConfig, run_expen, run_penalty, run_rgd
from landingopt.landing import LandingConfig, grad_bound_with_provenance, run_landing, safe_step
from landingopt.linalg import LinAlgError, gaussian_matrix, thin_qr
from landingopt.manifold import StiefelParams, random_stiefel
from landingopt.objectives import PcaObjective
from landingopt.rng import Rng
from landingopt.trace import IterateTrace, RateFitError, RunReport, fit_linear_rate

ALGORITHMS = ("landing", "rgd-qr", "rgd-polar", "expen", "penalty")
COMPARISON_HEADER = (
    "algorithm",
    "seed",
    "instance_hash",
    "exit_reason",
    "n_iter",
    "final_gap",
    "final_grad_norm",
    "iters_to_tol",
    "wall_time_s",
    "flops_per_iter",
)
# raw Gaussian instances above this size skip the O(d^3) eigengap computation
EIGENGAP_MAX_D = 500
# below this size runs also trace the distance to the oracle solution set
ORACLE_AUTO_MAX_D = 200


def parse_spectrum(spec):
    """'geometric:q', 'geometric' (q = 0.9), 'spaced' or None."""
    if spec is None or spec == "gaussian":
        return None
    name, _, arg = str(spec).partition(":")
    if name == "geometric":
        q = float(arg) if arg else 0.9
        if not 0 < q < 1:
            raise ValueError("geometric ratio must lie in (0, 1)")
        return ("geometric", q)
    if name == "spaced":
        return ("spaced", None)
    raise ValueError(f"unknown spectrum '{spec}'")


def singular_values(kind, n, r):
    """Singular values of A (sorted descending) for a controlled spectrum."""
    name, q = kind
    i = np.arange(n, dtype=np.float64)
    if name == "geometric":
        return q**i
    # spaced: top r eigenvalues of c evenly spaced in (0, 1], tail strictly below
    ev = np.empty(n)
    top = min(r, n)
    ev[:top] = (r + 1 - i[:top]) / (r + 1)
    if n > top:
        tail = np.arange(n - top, dtype=np.float64)
        ev[top:] = (1.0 - 1e-3) / (r + 1) * (1.0 - tail / (n - top))
    return np.sqrt(ev)


def auto_scale(obj, lambda_=1.0, epsilon=0.5):
    """Factor for c that maximises the safe-step contraction.

    alpha_safe * lambda_max peaks where the gradient bound G equals
    lambda * eps * sqrt(1 + eps); G is linear in the scale of c.
    """
    return lambda_ * epsilon * np.sqrt(1.0 + epsilon) / obj.grad_bound(epsilon)


def generate_pca_instance(
    d,
    r,
    m,
    seed,
    spectrum=None,
    scale=None,
    dmat=None,
    lambda_=1.0,
    epsilon=0.5,
):
    """A = m x d Gaussian (or U diag(s) V^T with Haar U, V), c = A^T A.

    ``scale`` multiplies c; 'auto' applies ``auto_scale`` for the given
    lambda and epsilon. Returns (objective, hash).
    """
    if not (d >= r >= 1 and m >= 1):
        raise ValueError("need d >= r >= 1 and m >= 1")
    dmat = np.arange(r, 0, -1, dtype=np.float64) / r if dmat is None else np.asarray(dmat, float)
    if dmat.size != r:
        raise ValueError("D must have r entries")
    rng = Rng(seed, stream=1)
    kind = parse_spectrum(spectrum)
    info = {}
    eigenvalues = None
    if kind is None:
        a = gaussian_matrix(rng, m, d)
        c = a.T @ a
        _check_rank(a, r)
    else:
        k = min(m, d)
        s = singular_values(kind, k, r)
        if s[r - 1] <= 1e-12 * s[0]:
            raise LinAlgError("rank deficiency after spectrum control")
        u, _ = thin_qr(gaussian_matrix(rng.spawn(2), m, k))
        v, _ = thin_qr(gaussian_matrix(rng.spawn(3), d, k))
        a = (u * s) @ v.T
        c = a.T @ a
        eigenvalues = np.zeros(d)
        eigenvalues[:k] = s**2
    c = 0.5 * (c + c.T)

    factor = 1.0
    if scale == "auto":
        factor = auto_scale(PcaObjective(c, dmat, eigenvalues=eigenvalues), lambda_, epsilon)
    elif scale is not None:
        factor = float(scale)
        if not factor > 0:
            raise ValueError("scale must be positive")
    if factor != 1.0:
        c = c * factor
        if eigenvalues is not None:
            eigenvalues = eigenvalues * factor

    meta = {"generator": "pca", "d": d, "r": r, "seed": int(seed), "spectrum": spectrum}
    if scale is not None:
        meta["scale"] = scale if scale != "auto" else f"auto(lambda={lambda_},eps={epsilon})"
    obj = PcaObjective(c, dmat, m, meta, eigenvalues)
    if eigenvalues is not None:
        info["eigengap"] = float(eigenvalues[r - 1] - (eigenvalues[r] if d > r else 0.0))
    elif d <= EIGENGAP_MAX_D:
        w = obj.eigh().eigenvalues
        info["eigengap"] = float(w[r - 1] - (w[r] if d > r else 0.0))
    if "eigengap" in info:
        info["lambda_max"] = obj.lambda_max
    obj.info = info
    return obj, obj.content_hash()


def _check_rank(a, r):
    try:
        thin_qr(a[:, :r])  # r independent columns already give rank >= r
        return
    except LinAlgError:
        pass
    if np.linalg.matrix_rank(a) < r:
        raise LinAlgError(f"rank(A) < r = {r}")


# experiments ------------------------------------------------------------------
@dataclass
class ExperimentSpec:
    d: int = 500
    r: int = 20
    m: int = 1000
    algos: tuple = ("landing", "rgd-qr", "expen")
    seeds: tuple = (0,)
    alpha: Optional[float] = None  # None: the landing safe step, shared by every algorithm
    lambda_: float = 1.0
    epsilon: float = 0.5
    gamma: Union[str, float] = "auto"
    beta: float = 1.0
    max_iter: int = 10_000
    tol: float = 1e-6
    out: Optional[str] = None
    diagnostics: bool = False
    safe_step: bool = False
    spectrum: Optional[str] = None
    scale: Optional[Union[str, float]] = None
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.algos = tuple(self.algos)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.algos:
            raise ValueError("nothing to run: the algorithm list is empty")
        bad = [a for a in self.algos if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms: {', '.join(bad)}")
        if not self.seeds:
            raise ValueError("nothing to run: no seeds")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 1 <= self.r <= self.d:
            raise ValueError(f"need 1 <= r <= d, got d={self.d}, r={self.r}")


def _monitors(obj, spec):
    from landingopt.merit import DiagnosticsConfig, estimate_constants, merit_eval
    from landingopt.objectives import dist_to_solution, optimum_oracle

    oracle = optimum_oracle(obj)
    monitors = {"dist_s": lambda x: dist_to_solution(oracle, x)}
    consts = None
    if spec.diagnostics:
        gamma = None if spec.gamma == "auto" else float(spec.gamma)
        cfg = DiagnosticsConfig(sample_count=200, lipschitz_pairs=100)
        consts = estimate_constants(obj, oracle, spec.lambda_, spec.epsilon, cfg, gamma=gamma)
        g = consts.gamma
        monitors["merit"] = lambda x: merit_eval(obj, x, g, oracle.f_star)
    return monitors, consts


def _iters_to_tol(trace, tol):
    hit = np.nonzero(trace.column("grad_norm") <= tol)[0]
    return int(trace.column("iter")[hit[0]]) if hit.size else None


def _run_one(spec, algo, seed):
    """Run one (algorithm, seed) pair; returns (report dict, csv text)."""
    try:
        obj, ihash = generate_pca_instance(
            spec.d, spec.r, spec.m, seed, spec.spectrum, spec.scale, None, spec.lambda_, spec.epsilon
        )
        params = StiefelParams(spec.d, spec.r, spec.epsilon)
        x0 = random_stiefel(Rng(seed, stream=2), params)
        alpha = spec.alpha
        notes = {}
        if alpha is None:
            g, prov = grad_bound_with_provenance(obj, params, rng=Rng(seed).spawn(7))
            alpha = safe_step(g, spec.lambda_, spec.epsilon)
            notes.update(g_bound=g, g_provenance=prov, alpha_safe=alpha)
        monitors, consts = (None, None)
        if spec.diagnostics or spec.d <= ORACLE_AUTO_MAX_D:
            monitors, consts = _monitors(obj, spec)
        trace = IterateTrace()
        if algo == "landing":
            cfg = LandingConfig(
                alpha=alpha,
                lambda_=spec.lambda_,
                epsilon=spec.epsilon,
                max_iter=spec.max_iter,
                grad_tol=spec.tol,
                enforce_safe_step=spec.safe_step,
                seed=seed,
            )
            rep = run_landing(obj, x0, cfg, trace, monitors, ihash)
        else:
            cfg = BaselineConfig(
                alpha=alpha,
                retraction="qr" if algo == "rgd-qr" else "polar",
                beta=spec.beta,
                max_iter=spec.max_iter,
                grad_tol=spec.tol,
                seed=seed,
            )
            runner = {"expen": run_expen, "penalty": run_penalty}.get(algo, run_rgd)
            rep = runner(obj, x0, cfg, trace, monitors, ihash)
        rep.notes.update(notes)
        rep.notes["iters_to_tol"] = _iters_to_tol(trace, spec.tol)
        if consts is not None:
            rep.constants = consts.to_dict()
        try:
            rep.rate = fit_linear_rate(trace, "grad_norm", 0.5)
        except RateFitError as exc:
            rep.rate = {"error": str(exc)}
        return rep.to_dict(), trace.to_csv()
    except Exception as exc:  # recorded, the batch keeps going
        rep = RunReport(
            algorithm=algo,
            config=asdict(spec),
            exit_reason="error",
            n_iter=0,
            final={},
            seed=seed,
            notes={"error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()},
        )
        return rep.to_dict(), None


def comparison_rows(reports):
    rows = []
    for rep in reports:
        fin = rep.final or {}
        rows.append(
            {
                "algorithm": rep.algorithm,
                "seed": rep.seed,
                "instance_hash": rep.instance_hash or "",
                "exit_reason": rep.exit_reason,
                "n_iter": rep.n_iter,
                "final_gap": fin.get("gap", ""),
                "final_grad_norm": fin.get("grad_norm", ""),
                "iters_to_tol": "" if rep.notes.get("iters_to_tol") is None else rep.notes["iters_to_tol"],
                "wall_time_s": rep.wall_time_s,
                "flops_per_iter": rep.flops_per_iter,
            }
        )
    return rows


def comparison_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COMPARISON_HEADER, lineterminator="\n")
    w.writeheader()
    for row in comparison_rows(reports):
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def run_experiment(spec: ExperimentSpec):
    """Every (algorithm, seed) pair; files are written by this process only.

    Returns the list of RunReports in (seed, algorithm) order.
    """
    jobs = [(algo, seed) for seed in spec.seeds for algo in spec.algos]
    if spec.workers == 1:
        results = [_run_one(spec, a, s) for a, s in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(_run_one, spec, a, s) for a, s in jobs]
            results = [f.result() for f in futures]
    reports = [RunReport.from_dict(d) for d, _ in results]
    if spec.out is not None:
        os.makedirs(spec.out, exist_ok=True)
        for (algo, seed), (d, text) in zip(jobs, results):
            stem = os.path.join(spec.out, f"{algo}_seed{seed}")
            if text is not None:
                with open(stem + ".csv", "w") as fh:
                    fh.write(text)
            RunReport.from_dict(d).to_json(stem + ".json")
        with open(os.path.join(spec.out, "comparison.csv"), "w") as fh:
            fh.write(comparison_csv(reports))
    return reports
