"""Command-line interface.

Subcommands: generate, simulate, exact, bounds, infer, sweep, rules.  Inputs
that name a JSON document may be given as a path or inline (anything starting
with ``{``).  Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import booleannet, bounds, exactchain, harness, infer, model, simulate


def _json_arg(value: str) -> dict:
    if value.lstrip().startswith("{"):
        return json.loads(value)
    with open(value) as fh:
        return json.load(fh)


def _model_arg(value: str) -> model.BarModel:
    return model.model_from_dict(_json_arg(value))


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    parser.add_argument("--out", help="output path (defaults to stdout where sensible)")


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=1, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_generate(args) -> int:
    degrees = args.d
    if args.degrees:
        degrees = [int(v) for v in args.degrees.split(",")]
    m, _ = model.random_model(
        args.p,
        degrees,
        a_min=args.a_min,
        b_min=args.b_min,
        b_max=args.b_max,
        rho_w=args.rho_w,
        sign_prob=args.sign_prob,
        seed=args.seed,
    )
    _emit(m.canonical_dict(), args.out)
    return 0


def _cmd_simulate(args) -> int:
    m = _model_arg(args.model)
    init = args.init
    if init not in ("burn_in", "exact_stationary"):
        init = np.array([int(c) for c in init], dtype=np.uint8)
    traj = simulate.sample_trajectory(
        m, args.n, init=init, seed=args.seed, kind=args.kind, lazy_prob=args.lazy_prob
    )
    if not args.out:
        raise harness.ConfigError("simulate requires --out for the trajectory CSV")
    simulate.save_trajectory_csv(traj, args.out)
    return 0


def _cmd_exact(args) -> int:
    m = _model_arg(args.model)
    chain = exactchain.build_transition(m)
    doc = {
        "p": m.p,
        "mixing_time": exactchain.exact_mixing_time(chain, args.theta),
        "theta": args.theta,
        "stationary_min": float(chain.stationary.min()),
        "stationary_max": float(chain.stationary.max()),
        "fixed_point_marginals": [float(v) for v in exactchain.stationary_marginals(m)],
    }
    if args.tv_out:
        exactchain.save_tv_curve_csv(chain, args.tv_max, args.tv_out)
        doc["tv_curve"] = args.tv_out
    if args.stationary_out:
        exactchain.save_stationary_csv(chain, args.stationary_out)
        doc["stationary_csv"] = args.stationary_out
    _emit(doc, args.out)
    return 0


def _cmd_bounds(args) -> int:
    m = _model_arg(args.model)
    d = args.d if args.d else max(m.degrees)
    report = bounds.stationary_floors(m, d, theta=args.theta).to_dict()
    if args.rw:
        report["rw"] = bounds.rw_analysis(m, args.theta, lazy_prob=args.lazy_prob).to_dict()
    _emit(report, args.out)
    return 0


def _cmd_infer(args) -> int:
    traj = simulate.load_trajectory_csv(args.traj)
    stats = infer.accumulate(traj)
    estimate = infer.supergraph_select(stats, args.d)
    truth = None
    if args.truth:
        truth = model.GraphTruth.from_model(_model_arg(args.truth))
    if args.mode == "known_degrees":
        if truth is None and not args.degrees:
            raise harness.ConfigError("known_degrees needs --degrees or --truth")
        degrees = (
            [int(v) for v in args.degrees.split(",")] if args.degrees else list(truth.degrees)
        )
        estimate = infer.sign_from_selection(stats, estimate, degrees=degrees)
    elif args.mode == "full":
        if args.tau is None:
            raise harness.ConfigError("full mode requires --tau")
        sub = infer.accumulate_subsets(traj, estimate.parents)
        estimate = infer.trim(sub, estimate, args.tau, two_sided=args.two_sided)
    doc = estimate.to_dict()
    if truth is not None:
        doc["metrics"] = infer.metrics(estimate, truth)
    _emit(doc, args.out)
    return 0


def _cmd_sweep(args) -> int:
    doc = _json_arg(args.config)
    doc.setdefault("seed", args.seed)
    doc.setdefault("threads", args.threads)
    if args.out:
        doc["out"] = args.out
    config = harness.SweepConfig.from_dict(doc)
    rows = harness.run_sweep(config)
    print(f"wrote {len(rows)} data rows to {config.out}")
    return 0


def _cmd_rules(args) -> int:
    if args.random:
        p, fan_in = (int(v) for v in args.random.split(","))
        net = booleannet.random_andor_network(p, fan_in, noise=args.noise, seed=args.seed)
        text = net.rules_text()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            print(text, end="")
        return 0
    with open(args.file) as fh:
        net = booleannet.parse_rules(fh.read(), noise=args.noise)
    _emit(
        {
            "p": net.p,
            "noise": net.noise,
            "fan_in": [len(lits) for lits in net.literals],
            "ops": list(net.ops),
        },
        args.out,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="barnet")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a random valid model")
    _common(g)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--d", type=int, required=True, help="in-degree (all nodes)")
    g.add_argument("--degrees", help="comma-separated per-node in-degrees")
    g.add_argument("--a-min", type=float, default=0.1)
    g.add_argument("--b-min", type=float, default=0.1)
    g.add_argument("--b-max", type=float, default=0.2)
    g.add_argument("--rho-w", type=float, default=0.5)
    g.add_argument("--sign-prob", type=float, default=0.5)
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("simulate", help="sample a trajectory to CSV")
    _common(s)
    s.add_argument("--model", required=True, help="model JSON (path or inline)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--init", default="burn_in", help="burn_in | exact_stationary | bitstring")
    s.add_argument("--kind", default="bar", choices=["bar", "rw", "lazy_rw"])
    s.add_argument("--lazy-prob", type=float, default=0.0)
    s.set_defaults(func=_cmd_simulate)

    e = sub.add_parser("exact", help="exact chain analysis of a small model")
    _common(e)
    e.add_argument("--model", required=True)
    e.add_argument("--theta", type=float, default=0.125)
    e.add_argument("--tv-out", help="write the distance-to-stationarity curve CSV here")
    e.add_argument("--tv-max", type=int, default=50)
    e.add_argument("--stationary-out", help="write the stationary vector CSV here")
    e.set_defaults(func=_cmd_exact)

    b = sub.add_parser("bounds", help="print the analytic bounds report as JSON")
    _common(b)
    b.add_argument("--model", required=True)
    b.add_argument("--theta", type=float, default=0.125)
    b.add_argument("--d", type=int, help="subset size for the trimming floor")
    b.add_argument("--rw", action="store_true", help="include the hypercube-walk analysis")
    b.add_argument("--lazy-prob", type=float, default=0.0)
    b.set_defaults(func=_cmd_bounds)

    i = sub.add_parser("infer", help="run the structure observer on a trajectory CSV")
    _common(i)
    i.add_argument("--traj", required=True)
    i.add_argument("--mode", default="full", choices=list(harness.MODES))
    i.add_argument("--d", type=int, required=True)
    i.add_argument("--tau", type=float)
    i.add_argument("--two-sided", action="store_true")
    i.add_argument("--degrees", help="comma-separated known in-degrees")
    i.add_argument("--truth", help="model JSON to score against")
    i.set_defaults(func=_cmd_infer)

    w = sub.add_parser("sweep", help="run an experiment sweep from a config")
    _common(w)
    w.add_argument("--config", required=True, help="sweep config JSON (path or inline)")
    w.set_defaults(func=_cmd_sweep)

    r = sub.add_parser("rules", help="parse or generate boolean rule files")
    _common(r)
    r.add_argument("--file", help="rules file to parse and summarize")
    r.add_argument("--random", metavar="P,FAN_IN", help="generate a random AND/OR network")
    r.add_argument("--noise", type=float, default=0.0)
    r.set_defaults(func=_cmd_rules)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, model.ModelError, booleannet.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
