from types import SimpleNamespace

import numpy as np
import pytest
from _instances import quad2, small_pca

from landingopt import merit
from landingopt.landing import LandingConfig, run_landing
from landingopt.linalg import fro_norm, sym
from landingopt.manifold import StiefelParams, random_safety_point, random_stiefel
from landingopt.objectives import FunctionObjective, dist_to_solution, finite_diff_grad, optimum_oracle
from landingopt.rng import Rng
from landingopt.trace import IterateTrace, TraceRecord

E1 = np.array([[1.0], [0.0]])


@pytest.fixture(scope="module")
def setup():
    obj = small_pca()
    orc = optimum_oracle(obj)
    consts = merit.estimate_constants(obj, orc, 1.0, 0.5, merit.DiagnosticsConfig(sample_count=300))
    return obj, orc, consts


def test_h_examples():
    obj = small_pca()
    assert merit.h_term(obj, random_stiefel(Rng(1), StiefelParams(8, 2))) == pytest.approx(0.0, abs=1e-14)
    assert merit.h_term(quad2(), 1.1 * E1) == pytest.approx(0.5082, abs=1e-14)
    x = random_safety_point(Rng(2), StiefelParams(8, 2, 0.5))
    assert merit.h_term(obj.scaled(3.0), x) == pytest.approx(3 * merit.h_term(obj, x), rel=1e-12)


def test_merit_examples():
    obj = quad2()
    f_star = optimum_oracle(obj).f_star
    assert f_star == -2.0
    assert merit.merit_eval(obj, E1, 7.0, f_star) == 0.0
    t = 0.3
    x = np.array([[np.cos(t)], [np.sin(t)]])
    assert merit.merit_eval(obj, x, 7.0, f_star) == pytest.approx(obj.value(x) + 2.0, abs=1e-15)
    gamma = 7.0
    hand = (-2.42 + 2.0) + 0.5082 + gamma * 0.21**2 / 4
    assert merit.merit_eval(obj, 1.1 * E1, gamma, f_star) == pytest.approx(hand, abs=1e-14)


def test_merit_grad_on_manifold_closed_form():
    obj = small_pca()
    x = random_stiefel(Rng(3), StiefelParams(8, 2))
    g = obj.euclid_grad(x)
    closed = g - x @ sym(x.T @ g)
    assert fro_norm(merit.merit_grad(obj, x, 5.0) - closed) <= 1e-8


def test_merit_grad_zero_on_solution_set():
    obj = small_pca()
    orc = optimum_oracle(obj)
    assert fro_norm(merit.merit_grad(obj, orc.member([1, -1]), 5.0)) <= 1e-13


def test_merit_grad_matches_fd():
    obj = small_pca()
    p = StiefelParams(8, 2, 0.5)
    rng = Rng(4)
    for _ in range(50):
        x = random_safety_point(rng, p)
        g = merit.merit_grad(obj, x, 9.0)
        fd = finite_diff_grad(lambda z: merit.merit_eval(obj, z, 9.0), x, 1e-5)
        assert fro_norm(fd - g) <= 1e-5 * fro_norm(g)


def test_generic_objective_uses_fd_path():
    base = small_pca()
    gen = FunctionObjective(base.value, base.euclid_grad)
    x = random_safety_point(Rng(5), StiefelParams(8, 2, 0.5))
    assert fro_norm(merit.h_grad(gen, x) - merit.h_grad(base, x)) <= 1e-6 * fro_norm(merit.h_grad(base, x))


def test_gamma_lower_bound_examples():
    c = SimpleNamespace(l_smooth=1.0, s_sym=1.0, l_hat=1.0)
    assert merit.gamma_lower_bound(c, 1.0, 0.5) == pytest.approx(16.0, abs=1e-13)
    eps = np.linspace(0.01, 0.74, 200)
    vals = [merit.gamma_lower_bound(c, 1.0, e) for e in eps]
    assert np.all(np.diff(vals) > 0)
    assert merit.gamma_lower_bound(c, 1.0, 0.75 - 1e-12) > 1e10
    with pytest.raises(ValueError):
        merit.gamma_lower_bound(c, 1.0, 0.75)


def test_rho_examples():
    assert merit.rho_constant(16.0, 1.0, 0.5) == 0.5
    assert merit.rho_constant(1e-12, 1.0, 0.5) < 1e-12
    assert all(merit.rho_constant(g, 1.0, 0.5) <= 0.5 for g in (1e-3, 1.0, 1e6))


def test_mu_prime_examples():
    c = SimpleNamespace(mu=1.0, l_hat=1.0, l_prime=1.0)
    assert merit.mu_prime_constant(c, 10.0, 0.5) == 1.0
    assert merit.mu_prime_constant(c, 1e-6, 0.5) < 1e-10
    lams = [9.0, 10.0, 100.0]  # crossover at lambda = sqrt(66)
    assert all(merit.mu_prime_constant(c, lam, 0.5) == 1.0 for lam in lams)
    assert merit.mu_prime_constant(c, 1.0, 0.5) < 1.0
    with pytest.raises(ValueError):
        merit.mu_prime_constant(SimpleNamespace(mu=0.0, l_hat=1.0, l_prime=1.0), 1.0, 0.5)


def test_constants_provenance(setup):
    _, _, consts = setup
    assert consts.provenance["l_smooth"] == "analytic"
    assert consts.provenance["mu"] == "sampled"
    assert consts.gamma == consts.gamma_lo
    assert 0 < consts.mu_prime <= consts.mu
    assert consts.rho <= 0.5


def test_descent_inequality(setup):
    obj, orc, consts = setup
    res = merit.check_descent_inequality(obj, orc.v_top, 1.0, consts.gamma, 0.5, f_star=orc.f_star)
    assert res.passed and res.lhs == pytest.approx(0.0, abs=1e-20)
    p = StiefelParams(8, 2, 0.5)
    rng = Rng(6)
    out = [
        merit.check_descent_inequality(obj, random_safety_point(rng, p), 1.0, consts.gamma, 0.5)
        for _ in range(1000)
    ]
    assert all(r.passed for r in out)
    with pytest.raises(merit.OutsideRegionError):
        merit.check_descent_inequality(obj, random_safety_point(rng, StiefelParams(8, 2, 0.7), 0.6), 1.0, 1.0, 0.5)


def test_descent_negative_control(setup):
    # gamma far below the bound: any failure comes back as a result, never an exception
    obj, _, consts = setup
    p = StiefelParams(8, 2, 0.5)
    rng = Rng(7)
    out = [
        merit.check_descent_inequality(obj, random_safety_point(rng, p, 0.49), 1.0, consts.gamma / 100, 0.5)
        for _ in range(300)
    ]
    assert all(isinstance(r.passed, bool) for r in out)


def test_descent_counterexample_isotropic_objective():
    # f = ||x||_F^2 has zero relative gradient, and
    # <Lambda, nabla L> = lam (gamma - 4) ||x (x^T x - I)||^2 off the manifold,
    # so small gamma must fail while the lower bound passes
    iso = FunctionObjective(lambda x: float(np.vdot(x, x)), lambda x: 2.0 * x, lipschitz_bound=2.0)
    r, eps = 2, 0.5
    bounds = SimpleNamespace(
        l_smooth=2.0,
        l_hat=2.0 * np.sqrt(r + np.sqrt(r) * eps),  # ||x||_F^2 = Tr(x^T x) <= r + sqrt(r) eps
        s_sym=2.0 * (np.sqrt(r) + eps),  # ||x^T x||_F <= ||I|| + ||E||
    )
    gamma_lo = merit.gamma_lower_bound(bounds, 1.0, eps)
    rng = Rng(13)
    pts = [random_safety_point(rng, StiefelParams(6, r, eps), 0.05 + 0.4 * k / 99) for k in range(100)]
    assert all(merit.check_descent_inequality(iso, x, 1.0, gamma_lo, eps).passed for x in pts)
    weak = [merit.check_descent_inequality(iso, x, 1.0, gamma_lo / 100, eps) for x in pts]
    assert gamma_lo / 100 < 4.0
    assert not any(r.passed for r in weak)


def test_neighbourhood_inequalities(setup):
    obj, orc, consts = setup
    for fn in (merit.check_pseudo_grad_domination, merit.check_quadratic_growth):
        assert fn(obj, orc, orc.v_top, consts).passed
        rng = Rng(8)
        out = [fn(obj, orc, merit.sample_near_optimal(obj, orc, rng, 0.5, 0.5), consts) for _ in range(1000)]
        assert all(r.passed for r in out)
        far = random_stiefel(Rng(9), StiefelParams(8, 2))
        if dist_to_solution(orc, far) > consts.delta:
            with pytest.raises(merit.OutsideRegionError):
                fn(obj, orc, far, consts)


def test_domination_scale_consistency(setup):
    obj, orc, _ = setup
    cfg = merit.DiagnosticsConfig(sample_count=200)
    rng = Rng(10)
    xs = [merit.sample_near_optimal(obj, orc, rng, 0.5, 0.5) for _ in range(50)]
    for t in (0.5, 4.0):
        scaled = obj.scaled(t)
        so = optimum_oracle(scaled)
        c_t = merit.estimate_constants(scaled, so, 1.0, 0.5, cfg)
        assert all(merit.check_pseudo_grad_domination(scaled, so, x, c_t, cfg).passed for x in xs)


def test_quadratic_growth_ratio_bounded_away_from_zero(setup):
    obj, orc, consts = setup
    rng = Rng(11)
    for _ in range(20):
        x_dir = merit._tangent_retract(orc.v_top, rng, 1.0) - orc.v_top
        ratios = []
        for s in np.logspace(-1, -5, 9):
            x = orc.v_top + s * x_dir
            d = dist_to_solution(orc, x)
            ratios.append(merit.merit_eval(obj, x, consts.gamma, orc.f_star) / d**2)
        assert min(ratios) >= consts.mu_prime * consts.rho**2 / 4
        assert ratios[-1] > 0.5 * ratios[-2]


def test_linear_rate_stationary_trace(setup):
    obj, orc, consts = setup
    tr = IterateTrace([TraceRecord(0, orc.f_star, 0.0, 0.0, 0.0, 0.0, 0)])
    rep = merit.check_linear_rate(tr, consts, merit.theorem_step(consts))
    assert rep.passed and rep.fit is None


def test_linear_rate_on_run(setup):
    obj, orc, consts = setup
    alpha = merit.theorem_step(consts)
    x0 = merit.sample_near_optimal(obj, orc, Rng(12), 0.5, 0.5)
    tr = IterateTrace()
    mon = {"merit": lambda x: merit.merit_eval(obj, x, consts.gamma, orc.f_star)}
    run_landing(obj, x0, LandingConfig(alpha=alpha, max_iter=60_000, grad_tol=0.0), tr, mon)
    tr = merit.truncate_at_floor(tr, 1e-10 * (1 + abs(orc.f_star)))
    rep = merit.check_linear_rate(tr, consts, alpha)
    assert rep.monotone and rep.envelope_ok and rep.step_ratio_ok and rep.passed
    assert rep.max_step_ratio <= rep.theoretical_factor
    assert rep.fit["r_squared"] >= 0.98 and rep.fit["slope"] < 0


def test_linear_rate_detects_increase(setup):
    _, _, consts = setup
    recs = [TraceRecord(k, 0.0, 1.0, 0.0, m, None, k) for k, m in enumerate([1.0, 0.5, 0.6, 0.3])]
    rep = merit.check_linear_rate(IterateTrace(recs), consts, 1e-3)
    assert not rep.monotone and rep.monotone_violations == 1 and not rep.passed
