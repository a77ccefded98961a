"""Command line entry point: ``bench pca``, ``bench verify``, ``bench rate``."""

import argparse
import json
import sys

import numpy as np

from landingopt.bench import ALGORITHMS, ExperimentSpec, run_experiment

CHECKS = ("prop2", "lemma1", "lemma2", "thm1")


def _csv_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _gamma(text):
    return text if text == "auto" else float(text)


def _scale(text):
    return text if text == "auto" else float(text)


def build_parser():
    p = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pca = sub.add_parser("pca", help="run algorithms on generated PCA instances")
    pca.add_argument("--config", help="JSON file with default values; flags override it")
    pca.add_argument("--d", type=int)
    pca.add_argument("--r", type=int)
    pca.add_argument("--m", type=int)
    pca.add_argument("--algos", type=_csv_list, help=",".join(ALGORITHMS))
    pca.add_argument("--alpha", type=float)
    pca.add_argument("--lambda", dest="lambda_", type=float)
    pca.add_argument("--epsilon", type=float)
    pca.add_argument("--gamma", type=_gamma)
    pca.add_argument("--beta", type=float)
    pca.add_argument("--seed", type=int, action="append", dest="seeds")
    pca.add_argument("--max-iter", dest="max_iter", type=int)
    pca.add_argument("--tol", type=float)
    pca.add_argument("--out")
    pca.add_argument("--spectrum", help="gaussian | geometric[:q] | spaced")
    pca.add_argument("--scale", type=_scale, help="factor for c, or 'auto'")
    pca.add_argument("--workers", type=int)
    pca.add_argument("--diagnostics", action="store_true", default=None)
    pca.add_argument("--safe-step", dest="safe_step", action="store_true", default=None)

    ver = sub.add_parser("verify", help="sample the merit-function inequalities on an instance")
    ver.add_argument("--instance", required=True, help=".npz written by PcaObjective.save")
    ver.add_argument("--checks", type=_csv_list, default=CHECKS)
    ver.add_argument("--samples", type=int, default=1000)
    ver.add_argument("--lambda", dest="lambda_", type=float, default=1.0)
    ver.add_argument("--epsilon", type=float, default=0.5)
    ver.add_argument("--delta", type=float, default=0.5)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--iters", type=int, default=2000, help="iterations of the rate run")

    rate = sub.add_parser("rate", help="fit a linear rate to a trace CSV")
    rate.add_argument("--trace", required=True)
    rate.add_argument("--metric", default="merit", choices=("merit", "grad_norm", "dist_s", "gap"))
    rate.add_argument("--window", type=float, default=0.5)
    return p


def spec_from_args(args):
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
        if "lambda" in values:
            values["lambda_"] = values.pop("lambda")
        if "seed" in values:
            values["seeds"] = [values.pop("seed")]
        if isinstance(values.get("algos"), str):
            values["algos"] = _csv_list(values["algos"])
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        values[key] = val
    return ExperimentSpec(**values)


def cmd_pca(args, out):
    spec = spec_from_args(args)
    reports = run_experiment(spec)
    failed = 0
    for rep in reports:
        fin = rep.final or {}
        print(
            f"{rep.algorithm:10s} seed={rep.seed} exit={rep.exit_reason} iters={rep.n_iter} "
            f"grad={fin.get('grad_norm', float('nan')):.3e} gap={fin.get('gap', float('nan')):.3e} "
            f"flops/iter={rep.flops_per_iter}",
            file=out,
        )
        failed += rep.exit_reason in ("error", "non_finite", "safety_violation", "retraction_failure", "diverged")
    return 1 if failed else 0


def cmd_verify(args, out):
    from landingopt import merit
    from landingopt.landing import LandingConfig, run_landing
    from landingopt.manifold import StiefelParams, random_safety_point
    from landingopt.objectives import PcaObjective, optimum_oracle
    from landingopt.rng import Rng
    from landingopt.trace import IterateTrace

    unknown = [c for c in args.checks if c not in CHECKS]
    if unknown:
        print(f"unknown checks: {', '.join(unknown)}", file=sys.stderr)
        return 2
    obj = PcaObjective.load(args.instance)
    oracle = optimum_oracle(obj)
    cfg = merit.DiagnosticsConfig(delta=args.delta, sample_count=args.samples, seed=args.seed)
    rng = Rng(args.seed)
    consts = merit.estimate_constants(obj, oracle, args.lambda_, args.epsilon, cfg, rng.spawn(1))
    params = StiefelParams(obj.d, obj.r, args.epsilon)
    all_ok = True

    def report(name, results):
        nonlocal all_ok
        passed = sum(r.passed for r in results)
        ok = passed == len(results)
        all_ok &= ok
        print(f"{name}: {'PASS' if ok else 'FAIL'} {passed}/{len(results)}", file=out)

    if "prop2" in args.checks:
        sub = rng.spawn(2)
        res = [
            merit.check_descent_inequality(
                obj, random_safety_point(sub, params), args.lambda_, consts.gamma, args.epsilon, cfg, oracle.f_star
            )
            for _ in range(args.samples)
        ]
        report("prop2", res)
    for name, fn in (("lemma1", merit.check_pseudo_grad_domination), ("lemma2", merit.check_quadratic_growth)):
        if name in args.checks:
            sub = rng.spawn(3 if name == "lemma1" else 4)
            res = [
                fn(obj, oracle, merit.sample_near_optimal(obj, oracle, sub, args.delta, args.epsilon), consts, cfg)
                for _ in range(args.samples)
            ]
            report(name, res)
    if "thm1" in args.checks:
        alpha = merit.theorem_step(consts)
        x0 = merit.sample_near_optimal(obj, oracle, rng.spawn(5), args.delta, args.epsilon)
        trace = IterateTrace()
        mon = {"merit": lambda x: merit.merit_eval(obj, x, consts.gamma, oracle.f_star)}
        run_landing(
            obj,
            x0,
            LandingConfig(alpha=alpha, lambda_=args.lambda_, epsilon=args.epsilon, max_iter=args.iters, grad_tol=0.0),
            trace,
            mon,
        )
        trace = merit.truncate_at_floor(trace, 1e-10 * (1 + abs(oracle.f_star)))
        rr = merit.check_linear_rate(trace, consts, alpha, cfg)
        all_ok &= rr.passed
        print(
            f"thm1: {'PASS' if rr.passed else 'FAIL'} monotone={rr.monotone} envelope={rr.envelope_ok} "
            f"factor={rr.theoretical_factor:.12f} iters={len(trace)}",
            file=out,
        )
    print(json.dumps({"gamma": consts.gamma, "rho": consts.rho, "mu_prime": consts.mu_prime}), file=out)
    return 0 if all_ok else 1


def cmd_rate(args, out):
    from landingopt.trace import IterateTrace, RateFitError, fit_linear_rate

    trace = IterateTrace.from_csv(args.trace)
    try:
        fit = fit_linear_rate(trace, args.metric, args.window)
    except RateFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fit["factor"] = float(np.exp(fit["slope"]))
    print(json.dumps(fit, indent=2), file=out)
    return 0 if fit["flag"] is None and fit["slope"] < 0 else 1


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return {"pca": cmd_pca, "verify": cmd_verify, "rate": cmd_rate}[args.command](args, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
