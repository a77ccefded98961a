import numpy as np
import pytest
from _instances import small_pca

from landingopt import baselines
from landingopt.baselines import (
    BaselineConfig,
    expen_grad,
    expen_map,
    expen_value,
    run_expen,
    run_penalty,
    run_rgd,
)
from landingopt.landing import landing_flops, safe_step
from landingopt.linalg import LinAlgError, fro_norm
from landingopt.manifold import StiefelParams, random_safety_point, random_stiefel
from landingopt.objectives import dist_to_solution, finite_diff_grad, optimum_oracle, zero_objective
from landingopt.rng import Rng
from landingopt.trace import IterateTrace


@pytest.fixture(scope="module")
def inst():
    obj = small_pca()
    return obj, optimum_oracle(obj), safe_step(obj.grad_bound(0.5), 1.0, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(alpha=0.0)
    with pytest.raises(ValueError):
        BaselineConfig(beta=-1.0)
    with pytest.raises(ValueError):
        BaselineConfig(retraction="cayley")


def test_rgd_stationary_start(inst):
    obj, orc, a = inst
    rep = run_rgd(obj, orc.v_top, BaselineConfig(alpha=a, grad_tol=1e-12))
    assert rep.exit_reason == "converged" and rep.n_iter == 0


@pytest.mark.parametrize("retraction", ["qr", "polar"])
def test_rgd_converges_and_stays_feasible(inst, retraction):
    obj, orc, a = inst
    x0 = random_stiefel(Rng(4), StiefelParams(8, 2))
    tr = IterateTrace()
    rep = run_rgd(obj, x0, BaselineConfig(alpha=a, retraction=retraction, max_iter=20_000, grad_tol=1e-9), tr)
    assert rep.exit_reason == "converged"
    assert dist_to_solution(orc, rep.x_final) <= 1e-6
    assert np.all(tr.column("gap") <= 1e-9)
    assert rep.algorithm == f"rgd-{retraction}"


def test_rgd_rejects_infeasible_start(inst):
    obj, _, a = inst
    x0 = random_safety_point(Rng(4), StiefelParams(8, 2), 1e-6)
    with pytest.raises(ValueError):
        run_rgd(obj, x0, BaselineConfig(alpha=a))


def test_rgd_reports_retraction_failure(inst, monkeypatch):
    obj, _, a = inst

    def broken(z):
        raise LinAlgError("rank-deficient input to thin_qr")

    monkeypatch.setattr(baselines, "thin_qr", broken)
    x0 = random_stiefel(Rng(4), StiefelParams(8, 2))
    rep = run_rgd(obj, x0, BaselineConfig(alpha=a, retraction="qr"))
    assert rep.exit_reason == "retraction_failure" and rep.n_iter == 0


def test_expen_on_manifold_collapse(inst):
    obj, _, _ = inst
    x = random_stiefel(Rng(5), StiefelParams(8, 2))
    assert fro_norm(expen_map(x) - x) <= 1e-14
    assert expen_value(obj, x, 3.0) == pytest.approx(obj.value(x), rel=1e-13)


def test_expen_grad_matches_fd(inst):
    obj, _, _ = inst
    rng = Rng(6)
    for _ in range(30):
        x = random_safety_point(rng, StiefelParams(8, 2, 0.5))
        g = expen_grad(obj, x, 2.0)
        fd = finite_diff_grad(lambda z: expen_value(obj, z, 2.0), x, 1e-5)
        assert fro_norm(fd - g) <= 1e-5 * fro_norm(g)


def test_expen_converges(inst):
    obj, orc, a = inst
    x0 = random_safety_point(Rng(7), StiefelParams(8, 2, 0.5))
    rep = run_expen(obj, x0, BaselineConfig(alpha=a, max_iter=50_000, grad_tol=1e-9))
    assert rep.exit_reason == "converged"
    assert rep.final["gap"] <= 1e-6
    assert dist_to_solution(orc, rep.x_final) <= 1e-5


def test_expen_divergence_guard(inst):
    obj, _, _ = inst
    x0 = random_safety_point(Rng(7), StiefelParams(8, 2, 0.5))
    rep = run_expen(obj, x0, BaselineConfig(alpha=50.0, beta=10.0, max_iter=1000))
    assert rep.exit_reason in ("diverged", "non_finite")


def test_retraction_free_baselines_need_safety_region(inst):
    obj, _, a = inst
    x0 = random_safety_point(Rng(7), StiefelParams(8, 2, 0.7), 0.6)
    for run in (run_expen, run_penalty):
        with pytest.raises(ValueError):
            run(obj, x0, BaselineConfig(alpha=a))


def test_penalty_gap_shrinks_with_beta(inst):
    obj, _, _ = inst
    x0 = random_stiefel(Rng(8), StiefelParams(8, 2))
    gaps = []
    for beta in (1.0, 10.0, 100.0):
        rep = run_penalty(obj, x0, BaselineConfig(alpha=0.25 / beta, beta=beta, max_iter=10**6, grad_tol=1e-8))
        assert rep.exit_reason == "converged"
        gaps.append(rep.final["gap"])
    assert gaps[0] > gaps[1] > gaps[2] > 1e-6


def test_penalty_zero_objective_lands_on_manifold():
    x0 = random_safety_point(Rng(9), StiefelParams(6, 3, 0.5), 0.4)
    rep = run_penalty(zero_objective(), x0, BaselineConfig(alpha=0.25, beta=1.0, max_iter=10**5, grad_tol=1e-12))
    assert rep.exit_reason == "converged" and rep.final["gap"] <= 1e-10


def test_flop_counters_order(inst):
    obj, _, a = inst
    x0 = random_stiefel(Rng(10), StiefelParams(8, 2))
    cfg = BaselineConfig(alpha=a, max_iter=5, grad_tol=0.0)
    polar = run_rgd(obj, x0, cfg).flops_per_iter
    assert run_rgd(obj, x0, cfg).flops_per_iter == polar  # deterministic
    expen = run_expen(obj, x0, cfg).flops_per_iter
    land = landing_flops(obj, 8, 2)
    assert land < expen < polar
    for d, r in ((500, 20), (2000, 500)):
        assert landing_flops(obj, d, r) < baselines.expen_flops(obj, d, r)
