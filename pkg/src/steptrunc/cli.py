"""Batch command-line front end.

Subcommands: ``run`` (one integration), ``convergence`` (step-size sweep
against a shared reference), ``proptest`` (randomized property suites), and
``truncate`` (one-shot truncation of a tensor container file).

Every flag can also be supplied through ``--config FILE`` holding
``key = value`` lines (keys are the long option names without dashes;
flags on the command line win).  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import fokker_planck as fp
from . import htucker, kron, proptests, reference, report, spectral
from .dense import DenseTensor
from .errors import InputError, NumericalError
from .htucker import HTensor, TruncationControl
from .integrators import (
    IntegrationResult,
    SchemeSpec,
    ThresholdPolicy,
    error_constant,
    fit_order,
    integrate,
    write_records_csv,
)


def _parse_floats(text):
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _add_problem_args(p):
    p.add_argument("--preset", choices=fp.PRESETS, default="fp2d-paper",
                   help="named problem configuration")
    p.add_argument("--n", type=int, default=None, help="grid points per mode")
    p.add_argument("--gamma", default=None, help="drift factor override (builtin name)")
    p.add_argument("--xi", default=None)
    p.add_argument("--phi", default=None)
    p.add_argument("--sigma", type=float, default=None, help="diffusion coefficient")
    p.add_argument("--ic-terms", type=int, default=10,
                   help="separable terms in the 4D initial condition")
    p.add_argument("--tree", choices=("balanced", "linear"), default="balanced",
                   help="dimension tree layout")


def _add_scheme_args(p):
    p.add_argument("--scheme", default="euler",
                   help="euler, midpoint, or abS (e.g. ab2)")
    p.add_argument("--m1", type=float, default=100.0)
    p.add_argument("--m2", type=float, default=100.0)
    p.add_argument("--A", dest="a_const", type=float, default=1000.0)
    p.add_argument("--B", dest="b_const", type=float, default=1000.0)
    p.add_argument("--G", dest="g_const", default="100",
                   help="comma-separated inner-truncation constants")


def _add_output_args(p):
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True,
                   help="render figures next to the CSV output")
    p.add_argument("--timings", action="store_true",
                   help="record per-step wall time (breaks byte-reproducibility)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="steptrunc",
        description="Rank-adaptive step-truncation integration of tensor ODEs",
    )
    parser.add_argument("--config", default=None,
                        help="key = value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_problem_args(p_run)
    _add_scheme_args(p_run)
    _add_output_args(p_run)
    p_run.add_argument("--dt", type=float, default=6.25e-4)
    p_run.add_argument("--T", type=float, default=0.1)
    p_run.add_argument("--mode", choices=("adaptive", "fixed-rank"), default="adaptive")
    p_run.add_argument("--rank-cap", type=int, default=None)
    p_run.add_argument("--reference", choices=("none", "co-run", "from-file"),
                       default="none")
    p_run.add_argument("--reference-file", default=None,
                       help="dense tensor (.npy or .txt) holding the final-time reference")
    p_run.add_argument("--reference-dt", type=float, default=None,
                       help="co-run reference step size (defaults to dt)")
    p_run.add_argument("--checkpoint-stride", type=int, default=0)
    p_run.add_argument("--initial-state", default=None,
                       help="resume from an HT container file instead of the preset IC")
    p_run.add_argument("--seed", type=int, default=0,
                       help="recorded in the summary for provenance only")

    p_conv = sub.add_parser("convergence", help="error vs dt study at fixed T")
    _add_problem_args(p_conv)
    _add_scheme_args(p_conv)
    _add_output_args(p_conv)
    p_conv.add_argument("--dt-list", default="4e-3,2e-3,1e-3,5e-4")
    p_conv.add_argument("--T", type=float, default=1.0)
    p_conv.add_argument("--reference-dt", type=float, default=None,
                        help="reference RK4 step (defaults to min(dt)/2)")

    p_prop = sub.add_parser("proptest", help="run a randomized property suite")
    p_prop.add_argument("--suite", default="all",
                        help="truncation, prop5-equivalence, manifold, or all")
    p_prop.add_argument("--seed", type=int, default=0)
    p_prop.add_argument("--count", type=int, default=None,
                        help="instances per suite (defaults per suite)")

    p_trunc = sub.add_parser("truncate", help="one-shot truncation of a tensor file")
    p_trunc.add_argument("--input", required=True,
                         help="HT container (.npz) or dense tensor (.npy/.txt)")
    p_trunc.add_argument("--output", required=True)
    p_trunc.add_argument("--eps", type=float, default=None)
    p_trunc.add_argument("--rank", type=int, default=None)
    return parser


def _apply_config_file(parser, argv):
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        raise InputError("--config needs a file path") from None
    defaults = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{line_no}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            defaults[key.replace("-", "_")] = value
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        action.set_defaults(
            **{k: _coerce(action, k, v) for k, v in defaults.items() if k in known}
        )
    return argv


def _coerce(subparser, dest, value):
    for action in subparser._actions:
        if action.dest == dest:
            if action.type is not None:
                return action.type(value)
            if isinstance(action, argparse.BooleanOptionalAction) or isinstance(
                action.const, bool
            ):
                return value.lower() in ("1", "true", "yes", "on")
            return value
    return value


def _build_problem(args):
    problem = fp.make_problem(
        args.preset, n=args.n, terms=args.ic_terms, tree_kind=args.tree
    )
    overrides = {
        k: getattr(args, k)
        for k in ("gamma", "xi", "phi", "sigma")
        if getattr(args, k) is not None
    }
    if overrides:
        drift_kwargs = {
            "gamma": problem.drift.gamma,
            "xi": problem.drift.xi,
            "phi": problem.drift.phi,
            "sigma": problem.drift.sigma,
        }
        drift_kwargs.update(overrides)
        drift = fp.DriftSpec(**drift_kwargs)
        problem = fp.FPProblem(
            name=problem.name + "+custom-drift",
            d=problem.d,
            n=problem.n,
            drift=drift,
            operator=fp.build_fp_operator(problem.d, problem.n, drift),
            f0=problem.f0,
            grid=problem.grid,
        )
    return problem


def _policy_from(args):
    return ThresholdPolicy(
        m1=args.m1, m2=args.m2, a=args.a_const, b=args.b_const,
        g=_parse_floats(args.g_const),
    )


class _CoRunReference:
    """Advances a dense RK4 trajectory in lockstep with the adaptive run."""

    def __init__(self, op, f0, dt, substeps=1):
        self.op = op
        self.state = f0
        self.dt = dt
        self.substeps = substeps
        self.step = 0

    def __call__(self, k):
        while self.step < k:
            for _ in range(self.substeps):
                self.state = reference.rk4_step(self.op, self.state, self.dt)
            self.step += 1
        return self.state


def cmd_run(args):
    problem = _build_problem(args)
    scheme = SchemeSpec.parse(args.scheme)
    policy = _policy_from(args)
    f0 = problem.f0
    if args.initial_state:
        f0 = HTensor.load(args.initial_state)
    ref = None
    if args.reference == "co-run":
        ref_dt = args.reference_dt or args.dt
        ratio = args.dt / ref_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InputError("reference dt must divide dt evenly")
        ref = _CoRunReference(
            problem.operator, f0.to_dense(), ref_dt, substeps=round(ratio)
        )
    elif args.reference == "from-file":
        if not args.reference_file:
            raise InputError("--reference from-file needs --reference-file")
        final = _load_dense(args.reference_file)
        n_steps = round(args.T / args.dt)
        ref = lambda k: final if k == n_steps else None

    os.makedirs(args.out, exist_ok=True)
    checkpoint = None
    if args.checkpoint_stride:
        def save_checkpoint(k, state):
            state.save(os.path.join(args.out, f"state_{k:06d}.npz"))
        checkpoint = (args.checkpoint_stride, save_checkpoint)

    started = time.perf_counter()
    result = integrate(
        problem.operator,
        f0,
        scheme,
        args.dt,
        args.T,
        policy=policy,
        mode=args.mode,
        rank_cap=args.rank_cap,
        grid=problem.grid,
        reference=ref,
        checkpoint=checkpoint,
        collect_timings=args.timings,
    )
    elapsed = time.perf_counter() - started

    header = [
        f"problem={problem.name} d={problem.d} n={problem.n} scheme={scheme.label}",
        f"dt={args.dt!r} T={args.T!r} mode={args.mode} seed={args.seed}",
    ]
    csv_path = os.path.join(args.out, "steps.csv")
    write_records_csv(csv_path, result.records, extra_header=header)
    result.state.save(os.path.join(args.out, "final_state.npz"))

    final_err = next(
        (r.err_l2 for r in reversed(result.records) if r.err_l2 is not None), None
    )
    summary = [
        f"steps: {len(result.records)}",
        f"max rank over run: {result.max_rank_over_run()}",
        f"final mass: {result.records[-1].mass!r}",
        f"final L2 error: {final_err!r}",
        f"wall time s: {elapsed:.3f}",
    ]
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write("\n".join(header + summary) + "\n")
    for line in summary:
        print(line)
    if args.plots:
        report.save_run_figures(
            result.records, args.out, title=f"{problem.name} {scheme.label}"
        )
        if problem.d == 4:
            marg = fp.marginal_12(result.state, problem.grid)
            report.save_marginal_figure(
                marg, problem.grid, args.out, title=f"{problem.name} final marginal"
            )
    return 0


def cmd_convergence(args):
    problem = _build_problem(args)
    scheme = SchemeSpec.parse(args.scheme)
    policy = _policy_from(args)
    dts = sorted(_parse_floats(args.dt_list), reverse=True)
    if len(dts) < 3:
        raise InputError("convergence study needs at least 3 step sizes")
    ref_dt = args.reference_dt or min(dts) / 2.0
    n_ref = round(args.T / ref_dt)
    if abs(n_ref * ref_dt - args.T) > 1e-9:
        raise InputError("reference dt must divide T evenly")
    dense0 = problem.f0.to_dense()
    ref_final, _ = reference.integrate_dense(problem.operator, dense0, ref_dt, n_ref)

    errors = []
    for dt in dts:
        result = integrate(
            problem.operator, problem.f0, scheme, dt, args.T,
            policy=policy, grid=problem.grid,
        )
        diff = result.state.to_dense().array - ref_final.array
        err = problem.grid.weight ** (problem.d / 2.0) * float(np.linalg.norm(diff))
        errors.append(err)
        print(f"dt={dt!r} err_l2={err!r} max_rank={result.max_rank_over_run()}")

    slope, fitted_constant = fit_order(dts, errors)
    qhat = error_constant(dts, errors, scheme.order)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "convergence.csv")
    with open(csv_path, "w") as fh:
        fh.write("# steptrunc convergence csv v1\n")
        fh.write(f"# problem={problem.name} scheme={scheme.label} T={args.T!r}\n")
        fh.write("dt,err_l2\n")
        for dt, err in zip(dts, errors):
            fh.write(f"{dt!r},{err!r}\n")
    lines = [
        f"fitted slope: {slope:.4f}",
        f"error constant Qhat (order {scheme.order}): {qhat:.4f}",
    ]
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    if args.plots:
        report.save_convergence_figure(
            dts, errors, slope, fitted_constant, args.out,
            title=f"{problem.name} {scheme.label} T={args.T}",
        )
    return 0


def cmd_proptest(args):
    results = proptests.run_suite(args.suite, seed=args.seed, count=args.count)
    failures = 0
    for name, passed, detail in results:
        tag = "PASS" if passed else "FAIL"
        print(f"{tag} {name}: {detail}")
        failures += not passed
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


def _load_dense(path):
    if path.endswith(".npy"):
        return DenseTensor.load_npy(path)
    return DenseTensor.load_text(path)


def cmd_truncate(args):
    if args.eps is None and args.rank is None:
        raise InputError("truncate needs --eps and/or --rank")
    ctrl = TruncationControl(eps=args.eps, max_rank=args.rank)
    if args.input.endswith(".npz"):
        h = HTensor.load(args.input)
        out, est, ranks = htucker.truncate(h, ctrl)
        out.save(args.output)
    else:
        t = _load_dense(args.input)
        out, est = htucker.from_dense(t, ctrl)
        ranks = out.ranks()
        out.save(args.output)
    print(f"error estimate: {est!r}")
    print("ranks:", " ".join(f"{modes}:{r}" for modes, r in sorted(ranks.items())))
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        handler = {
            "run": cmd_run,
            "convergence": cmd_convergence,
            "proptest": cmd_proptest,
            "truncate": cmd_truncate,
        }[args.command]
        return handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
