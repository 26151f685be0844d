"""Command-line entry points.

`invgen run <spec-file>` executes a config-driven experiment;
`invgen verify-theory` runs the brute-force bound suites;
`invgen selftest` certifies every analytic gradient against finite
differences. Exit codes: 0 success, 2 config error, 3 threshold failure
under --check, 4 data-file error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .experiments import ConfigError, ExperimentSpec, parse_spec, run_experiment
from .losses import (
    Batch,
    balanced_risk,
    cdann_loss,
    cross_entropy_batch,
    dann_loss,
    irm_penalty,
)
from .nets import (
    finite_diff_check,
    forward,
    backward,
    grad_jacobian_penalty_batch,
    jacobian_frobenius_sq_batch,
    network_new,
)

__all__ = ["main", "selftest", "verify_theory"]


def _rand_net(rng, dims=None, act="tanh"):
    dims = dims or [int(rng.integers(2, 5)), int(rng.integers(3, 7)), int(rng.integers(2, 4))]
    return network_new(dims, act, int(rng.integers(2**31)))


def _check_family(name, n_trials, make_case, tol):
    """Run finite-difference checks; returns (max relative error, ok)."""
    worst = 0.0
    for i in range(n_trials):
        rng = np.random.Generator(np.random.Philox([77, hash(name) % 2**31, i]))
        loss_fn, net = make_case(rng)
        worst = max(worst, finite_diff_check(loss_fn, net))
    return worst, worst < tol


def _family_cases():
    def _batch(rng, d, k=2, t=2, n=12):
        # force every (env, class) cell and both envs to be present
        ys = np.concatenate([np.arange(k * t) % k, rng.integers(0, k, n - k * t)])
        es = np.concatenate([np.arange(k * t) // k, rng.integers(0, t, n - k * t)])
        return Batch(rng.standard_normal((n, d)), ys, es)

    def ce_case(rng):
        net = _rand_net(rng)
        X = rng.standard_normal((6, net.in_dim))
        ys = rng.integers(0, net.out_dim, 6)

        def loss(n):
            out, tape = forward(n, X)
            losses, dl = cross_entropy_batch(out, ys)
            g, _ = backward(n, tape, dl / len(ys))
            return float(losses.mean()), g
        return loss, net

    def _pair(rng):
        phi = _rand_net(rng)
        h = network_new([phi.out_dim, 3, 2], "tanh", int(rng.integers(2**31)))
        return phi, h, _batch(rng, phi.in_dim)

    def balanced_case(rng):
        phi, h, batch = _pair(rng)
        check_h = rng.random() < 0.5

        def loss(net):
            val, gh, gphi = balanced_risk(
                h if not check_h else net, phi if check_h else net, batch, 2, 2)
            return val, gh if check_h else gphi
        return loss, h if check_h else phi

    def dann_case(rng, conditional=False):
        phi = _rand_net(rng)
        disc = network_new([phi.out_dim + (2 if conditional else 0), 4, 2],
                           "tanh", int(rng.integers(2**31)))
        batch = _batch(rng, phi.in_dim)
        check_disc = rng.random() < 0.5

        def loss(net):
            p = phi if check_disc else net
            d = net if check_disc else disc
            if conditional:
                val, gphi, gdisc = cdann_loss(p, d, batch, 2, 2)
            else:
                val, gphi, gdisc = dann_loss(p, d, batch, 2)
            if check_disc:
                return val, gdisc
            # phi receives the exact negation of the discriminator-path
            # gradient; certify it against the descent direction of -ce
            return -val, gphi
        return loss, disc if check_disc else phi

    def irm_case(rng):
        phi, h, batch = _pair(rng)
        check_h = rng.random() < 0.5

        def loss(net):
            val, gh, gphi = irm_penalty(
                h if not check_h else net, phi if check_h else net, batch, 2, 2)
            return val, gh if check_h else gphi
        return loss, h if check_h else phi

    def jac_case(rng):
        net = _rand_net(rng, act=["tanh", "softplus"][int(rng.integers(2))])
        X = rng.standard_normal((4, net.layers[0].W.shape[1]))

        def loss(n):
            val = float(jacobian_frobenius_sq_batch(n, X).mean())
            return val, grad_jacobian_penalty_batch(n, X)
        return loss, net

    return [
        ("cross_entropy", ce_case),
        ("balanced_risk", balanced_case),
        ("dann_reversal", lambda rng: dann_case(rng, False)),
        ("cdann", lambda rng: dann_case(rng, True)),
        ("irm_penalty", irm_case),
        ("jacobian_penalty", jac_case),
    ]


def selftest(n_trials: int = 100, tol: float = 1e-4, stream=sys.stdout) -> bool:
    """Finite-difference certification of every gradient family."""
    ok_all = True
    for name, case in _family_cases():
        worst, ok = _check_family(name, n_trials, case, tol)
        ok_all &= ok
        print(f"{name:<18} max fd rel err {worst:.3e}  "
              f"{'ok' if ok else 'FAIL'}", file=stream)
    return ok_all


def verify_theory(counts=(1000, 500, 1000, 100), seed: int = 0, out_dir: str = "out",
                  stream=sys.stdout):
    spec = ExperimentSpec(kind="theory_suite", seed=seed, output_dir=out_dir,
                          suite_counts=tuple(counts))
    report = run_experiment(spec)
    ok = True
    for name, s in report["suites"].items():
        line = f"{name:<16} n={s['count']:<5} violations={s['violations']} " \
               f"worst_slack={s['worst_slack']:.3e}"
        if "per_dim_factor_flags" in s:
            line += f" per_dim_flags={s['per_dim_factor_flags']}"
        print(line, file=stream)
        ok &= s["violations"] == 0
    return ok


CHECKS = {
    "colormnist_table": lambda r: all(g >= 0.015 for g in r["gains"].values()),
    "lambda_sweep": lambda r: bool(r["interior_max"]),
    "pt_sweep": lambda r: r["reg_wins"] >= 6 and r["observed_min_acc"] >= 0.90,
    "counterexample": lambda r: all(
        a["ber_s1"] == 0.0 and a["ber_s2"] == 0.0
        and abs(a["ber_t"] - a["eps"]) <= 2.0 / np.sqrt(10_000)
        for a in r["analytic"]),
    "theory_suite": lambda r: all(s["violations"] == 0 for s in r["suites"].values()),
    "taylor_check": lambda r: all(
        s["holds_pair"] and s["taylor_gap"] / s["R_aug"] < 1e-2
        for s in r["scales"]),
    "evolution": lambda r: r["final_ratio"] < 0.5,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="invgen")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment spec file")
    p_run.add_argument("spec_file")
    p_run.add_argument("--check", action="store_true",
                       help="exit 3 if the run misses its trend threshold")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override seed")

    p_vt = sub.add_parser("verify-theory", help="run the bound-verification suites")
    p_vt.add_argument("--counts", default="1000,500,1000,100",
                      help="per-suite instance counts a,b,c,d")
    p_vt.add_argument("--seed", type=int, default=0)
    p_vt.add_argument("--out", default="out")

    sub.add_parser("selftest", help="finite-difference gradient certification")

    args = parser.parse_args(argv)

    if args.command == "selftest":
        return 0 if selftest() else 3

    if args.command == "verify-theory":
        try:
            counts = tuple(int(v) for v in args.counts.split(","))
            if len(counts) != 4 or any(c < 1 for c in counts):
                raise ValueError
        except ValueError:
            print("--counts must be four positive integers a,b,c,d", file=sys.stderr)
            return 2
        return 0 if verify_theory(counts, args.seed, args.out) else 3

    try:
        spec = parse_spec(args.spec_file)
        if args.out is not None:
            spec = replace(spec, output_dir=args.out)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(spec)
    except FileNotFoundError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 4
    if args.check and not CHECKS[spec.kind](report):
        print("check failed: trend threshold not met", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
