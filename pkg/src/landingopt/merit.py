"""Merit function L(x) = f(x) + h(x) + gamma p(x), its constants, and runnable
checks of the descent, gradient-domination, quadratic-growth and linear-rate
inequalities.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from landingopt.landing import estimate_grad_bound, landing_field, penalty, penalty_grad
from landingopt.linalg import as_matrix, fro_norm, inner, sym
from landingopt.manifold import (
    StiefelParams,
    feasibility_gap,
    inflate,
    lipschitz_ratio,
    random_safety_point,
)
from landingopt.objectives import (
    dist_to_solution,
    estimate_pl_constant,
    finite_diff_grad,
)
from landingopt.trace import fit_linear_rate

SAMPLED_INFLATION = 1.5


class OutsideRegionError(ValueError):
    """A check was asked about a point outside its stated neighbourhood."""


@dataclass
class DiagnosticsConfig:
    delta: float = 0.5
    sample_count: int = 1000
    tolerance_slack: float = 1.0 + 1e-8
    abs_tol: float = 1e-13  # scaled by 1 + |f*|; absorbs rounding at exact minima
    lipschitz_pairs: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass
class ConstantsEstimate:
    l_smooth: float
    l_hat: float
    s_sym: float
    g_bound: float
    gamma_lo: float
    gamma: float
    rho: float
    mu: float
    mu_prime: float
    l_prime: float
    l_lambda: float
    l_merit: float
    lambda_: float
    epsilon: float
    delta: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class CheckResult:
    name: str
    lhs: float
    rhs: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class RateReport:
    passed: bool
    monotone: bool
    monotone_violations: int
    envelope_ok: bool
    envelope_violations: int
    theoretical_factor: float
    max_step_ratio: Optional[float]
    step_ratio_ok: bool
    fit: Optional[dict]
    clamped: bool = False
    detail: dict = field(default_factory=dict)


# merit function ---------------------------------------------------------------
def _gap_matrix(x):
    e = x.T @ x
    e[np.diag_indices_from(e)] -= 1.0
    return e


def h_term(obj, x):
    """-<sym(x^T nabla f), x^T x - I> / 2."""
    x = as_matrix(x)
    return -0.5 * inner(sym(x.T @ obj.euclid_grad(x)), _gap_matrix(x))


def merit_eval(obj, x, gamma, f_star=0.0):
    """(f - f*) + h + gamma p."""
    x = as_matrix(x)
    return (obj.value(x) - f_star) + h_term(obj, x) + gamma * penalty(x)


def h_grad(obj, x, h=1e-6):
    """Gradient of h.

    With a Hessian-vector product (quadratic family) this is exact:
    -(G E + H[x E]) / 2 - x sym(x^T G), G = nabla f, E = x^T x - I.
    Otherwise central differences.
    """
    x = as_matrix(x)
    if hasattr(obj, "hess_vec"):
        g = obj.euclid_grad(x)
        e = _gap_matrix(x)
        return -0.5 * (g @ e + obj.hess_vec(x, x @ e)) - x @ sym(x.T @ g)
    return finite_diff_grad(lambda z: h_term(obj, z), x, h)


def merit_grad(obj, x, gamma):
    x = as_matrix(x)
    return obj.euclid_grad(x) + h_grad(obj, x) + gamma * penalty_grad(x)


# constants --------------------------------------------------------------------
def gamma_lower_bound(consts, lambda_, epsilon):
    """2/(3-4eps) (L(1-eps) + 3s + Lhat^2 (1+eps)^2 / (lam (1-eps)))."""
    if epsilon >= 0.75:
        raise ValueError("epsilon must be below 3/4")
    L, s, lh = consts.l_smooth, consts.s_sym, consts.l_hat
    return (2.0 / (3.0 - 4.0 * epsilon)) * (
        L * (1 - epsilon) + 3 * s + lh**2 * (1 + epsilon) ** 2 / (lambda_ * (1 - epsilon))
    )


def rho_constant(gamma, lambda_, epsilon):
    return min(0.5, gamma / (4.0 * lambda_ * (1.0 + epsilon)))


def mu_prime_constant(consts, lambda_, epsilon):
    """1/mu' = max{1/mu, (2(3+2eps)^2 Lhat^2 + mu L') / (2 mu lam^2 (1-eps)^2)}."""
    mu, lh, lp = consts.mu, consts.l_hat, consts.l_prime
    if not mu > 0:
        raise ValueError("mu must be positive")
    second = (2 * (3 + 2 * epsilon) ** 2 * lh**2 + mu * lp) / (2 * mu * lambda_**2 * (1 - epsilon) ** 2)
    return 1.0 / max(1.0 / mu, second)


@dataclass
class _Partial:
    l_smooth: float
    s_sym: float
    l_hat: float


def estimate_constants(obj, oracle, lambda_, epsilon, cfg=None, rng=None, gamma=None):
    """All theory constants for one (objective, lambda, epsilon) triple.

    Suprema use the objective's analytic bounds when it has them and
    otherwise 1.5 x sampled maxima. L_Lambda and L_merit are always sampled
    (x 1.5); L_merit is capped by L_{f+h} + (2 + 3 eps) gamma.
    """
    from landingopt.rng import Rng

    cfg = cfg or DiagnosticsConfig()
    rng = rng or Rng(cfg.seed)
    d, r = oracle.v_top.shape
    params = StiefelParams(d, r, epsilon)
    prov = {}

    def sampled_sup(fn):
        sub = rng.spawn(len(prov) + 1)
        best = 0.0
        for _ in range(cfg.sample_count):
            best = max(best, fn(random_safety_point(sub, params)))
        return SAMPLED_INFLATION * best

    l_smooth = obj.lipschitz_bound
    if l_smooth is None:
        l_smooth = SAMPLED_INFLATION * lipschitz_ratio(obj.euclid_grad, params, cfg.lipschitz_pairs, rng.spawn(11))
        prov["l_smooth"] = "sampled"
    else:
        prov["l_smooth"] = "analytic"

    gsup = obj.euclid_grad_sup(epsilon)
    if gsup is None:
        gsup = sampled_sup(lambda x: fro_norm(obj.euclid_grad(x)))
        prov["l_hat"] = "sampled"
    else:
        prov["l_hat"] = "analytic"
    l_hat = max(l_smooth, gsup)

    s = obj.sym_sup(epsilon)
    if s is None:
        s = sampled_sup(lambda x: fro_norm(sym(x.T @ obj.euclid_grad(x))))
        prov["s_sym"] = "sampled"
    else:
        prov["s_sym"] = "analytic"

    g_bound = estimate_grad_bound(obj, params, cfg.sample_count, rng.spawn(12))
    prov["g_bound"] = "analytic" if obj.grad_bound(epsilon) is not None else "sampled"

    gamma_lo = gamma_lower_bound(_Partial(l_smooth, s, l_hat), lambda_, epsilon)
    if gamma is None:
        gamma = gamma_lo
    elif gamma < gamma_lo:
        raise ValueError(f"gamma={gamma:.6g} is below the lower bound {gamma_lo:.6g}")
    rho = rho_constant(gamma, lambda_, epsilon)

    pairs = cfg.lipschitz_pairs
    l_lambda = SAMPLED_INFLATION * lipschitz_ratio(
        lambda z: landing_field(obj, z, lambda_), params, pairs, rng.spawn(13)
    )
    l_fh = SAMPLED_INFLATION * lipschitz_ratio(
        lambda z: obj.euclid_grad(z) + h_grad(obj, z), params, pairs, rng.spawn(14)
    )
    l_merit_sampled = SAMPLED_INFLATION * lipschitz_ratio(
        lambda z: merit_grad(obj, z, gamma), params, pairs, rng.spawn(15)
    )
    l_merit = min(l_merit_sampled, l_fh + (2 + 3 * epsilon) * gamma)
    prov["l_lambda"] = "sampled"
    prov["l_merit"] = "sampled" if l_merit == l_merit_sampled else "bound"
    l_prime = max(l_hat, l_lambda, l_merit)

    mu = estimate_pl_constant(obj, oracle, cfg.delta, cfg.sample_count, rng.spawn(16))
    prov["mu"] = "sampled"
    consts = ConstantsEstimate(
        l_smooth=l_smooth,
        l_hat=l_hat,
        s_sym=s,
        g_bound=g_bound,
        gamma_lo=gamma_lo,
        gamma=gamma,
        rho=rho,
        mu=mu,
        mu_prime=0.0,
        l_prime=l_prime,
        l_lambda=l_lambda,
        l_merit=l_merit,
        lambda_=lambda_,
        epsilon=epsilon,
        delta=cfg.delta,
        provenance=prov,
    )
    consts.mu_prime = mu_prime_constant(consts, lambda_, epsilon)
    return consts


def theorem_step(consts):
    """min{rho / L', alpha_safe}."""
    from landingopt.landing import safe_step

    return min(consts.rho / consts.l_prime, safe_step(consts.g_bound, consts.lambda_, consts.epsilon))


# sampling ---------------------------------------------------------------------
def sample_near_optimal(obj, oracle, rng, delta, epsilon, off_manifold=True, max_tries=1000):
    """A point of St^eps within delta of S.

    Retract a tangent step of length in [1e-4, delta/2] from a random member
    of S, then (optionally) inflate off the manifold to a gap of at most
    epsilon/2.
    """
    d, r = oracle.v_top.shape
    for _ in range(max_tries):
        u = float(np.exp(np.log(1e-4) + (np.log(delta / 2) - np.log(1e-4)) * rng.uniform(1)[0]))
        signs = np.where(rng.uniform(r) < 0.5, -1.0, 1.0)
        base = oracle.member(signs)
        x = _tangent_retract(base, rng, u)
        if off_manifold:
            x = inflate(x, rng, 0.5 * epsilon * float(rng.uniform(1)[0]))
        if dist_to_solution(oracle, x) <= delta and feasibility_gap(x) <= epsilon:
            return x
    raise RuntimeError("could not sample a near-optimal point")


def _tangent_retract(base, rng, length):
    from landingopt.manifold import project_tangent, retract_polar

    d, r = base.shape
    eta = project_tangent(rng.normal(d * r).reshape(d, r), base)
    return retract_polar(base, (length / fro_norm(eta)) * eta)


# checks -----------------------------------------------------------------------
def _within(lhs, rhs, slack, atol):
    return lhs <= rhs * slack + atol


def check_descent_inequality(obj, x, lambda_, gamma, epsilon=0.5, cfg=None, f_star=0.0):
    """<Lambda(x), nabla L(x)> >= rho ||Lambda(x)||^2 at x in St^eps."""
    cfg = cfg or DiagnosticsConfig()
    x = as_matrix(x)
    gap = feasibility_gap(x)
    if gap > epsilon:
        raise OutsideRegionError(f"gap {gap:.3g} exceeds epsilon {epsilon}")
    lam_field = landing_field(obj, x, lambda_)
    lhs = inner(lam_field, merit_grad(obj, x, gamma))
    rho = rho_constant(gamma, lambda_, epsilon)
    rhs = rho * inner(lam_field, lam_field)
    atol = cfg.abs_tol * (1 + abs(f_star))
    # the inequality reads lhs >= rhs
    passed = _within(rhs, lhs, cfg.tolerance_slack, atol)
    return CheckResult("prop2", lhs, rhs, bool(passed), {"gap": gap, "rho": rho})


def _neighbourhood(oracle, x, consts):
    gap = feasibility_gap(x)
    dist = dist_to_solution(oracle, x)
    if gap > consts.epsilon or dist > consts.delta:
        raise OutsideRegionError(f"point outside St^eps ∩ D(S, delta): gap={gap:.3g}, dist={dist:.3g}")
    return gap, dist


def check_pseudo_grad_domination(obj, oracle, x, consts, cfg=None):
    """L(x) <= ||Lambda(x)||^2 / mu'."""
    cfg = cfg or DiagnosticsConfig()
    x = as_matrix(x)
    gap, dist = _neighbourhood(oracle, x, consts)
    lhs = merit_eval(obj, x, consts.gamma, oracle.f_star)
    lam_field = landing_field(obj, x, consts.lambda_)
    rhs = inner(lam_field, lam_field) / consts.mu_prime
    atol = cfg.abs_tol * (1 + abs(oracle.f_star))
    passed = _within(lhs, rhs, cfg.tolerance_slack, atol)
    return CheckResult("lemma1", lhs, rhs, bool(passed), {"gap": gap, "dist": dist})


def check_quadratic_growth(obj, oracle, x, consts, cfg=None):
    """L(x) >= (mu' rho^2 / 4) dist(S, x)^2."""
    cfg = cfg or DiagnosticsConfig()
    x = as_matrix(x)
    gap, dist = _neighbourhood(oracle, x, consts)
    lhs = merit_eval(obj, x, consts.gamma, oracle.f_star)
    rhs = consts.mu_prime * consts.rho**2 / 4.0 * dist**2
    atol = cfg.abs_tol * (1 + abs(oracle.f_star))
    passed = _within(rhs, lhs, cfg.tolerance_slack, atol)
    return CheckResult("lemma2", lhs, rhs, bool(passed), {"gap": gap, "dist": dist})


def check_linear_rate(trace, consts, alpha, cfg=None, window=0.5):
    """Monotonicity, the (1 - alpha rho mu'/2)^k envelope, and a log-linear fit of L(x_k)."""
    cfg = cfg or DiagnosticsConfig()
    merit = trace.column("merit")
    if np.any(np.isnan(merit)):
        raise ValueError("trace has no merit column")
    factor = 1.0 - alpha * consts.rho * consts.mu_prime / 2.0
    slack = cfg.tolerance_slack
    clamped = bool(np.any(merit <= 0.0))
    m = np.maximum(merit, 1e-300)

    if len(m) > 1:
        mono_viol = int(np.sum(m[1:] > m[:-1] * slack))
        ratios = m[1:] / m[:-1]
        max_ratio = float(np.max(ratios))
    else:
        mono_viol, max_ratio = 0, None
    k = np.arange(len(m))
    envelope = factor**k * m[0] * slack
    env_viol = int(np.sum(m > envelope))
    step_ok = max_ratio is None or max_ratio <= factor * slack

    fit = None
    if len(m) >= 20:
        fit = fit_linear_rate(trace, "merit", window)
    passed = mono_viol == 0 and env_viol == 0 and step_ok
    return RateReport(
        passed=bool(passed),
        monotone=mono_viol == 0,
        monotone_violations=mono_viol,
        envelope_ok=env_viol == 0,
        envelope_violations=env_viol,
        theoretical_factor=factor,
        max_step_ratio=max_ratio,
        step_ratio_ok=bool(step_ok),
        fit=fit,
        clamped=clamped,
        detail={
            "alpha": alpha,
            "alpha_max": theorem_step(consts),
            "merit_0": float(merit[0]),
            "merit_final": float(merit[-1]),
            "initial_condition": bool(
                merit[0] <= consts.mu_prime * consts.rho**2 * consts.delta**2 / 16.0
            ),
        },
    )


def truncate_at_floor(trace, floor=1e-10):
    """Drop the records from the first one whose merit falls below ``floor``.

    Past that point the merit is at rounding level and its per-step changes
    carry no information about the contraction.
    """
    from landingopt.trace import IterateTrace

    m = trace.column("merit")
    below = np.nonzero(m < floor)[0]
    stop = int(below[0]) if below.size else len(m)
    return IterateTrace(trace.records[:stop])
