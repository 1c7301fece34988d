"""Command line: ``reactordb bench``, ``reactordb check-trace``, ``reactordb cost``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .bench import WorkloadSpec, run
from .costmodel import FORMULATIONS, Calibration, LatencyBreakdown, calibrate, decompose
from .deployment import parse_plan
from .errors import ReactorDBError
from .tracing import dump_profiles, load_profiles


def _delay(text):
    lo, _, hi = text.partition(":")
    lo, hi = float(lo), float(hi or lo)
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad delay range {text!r}")
    return lo, hi


def _mix(text):
    out = {}
    for part in text.split(","):
        name, _, pct = part.partition("=")
        if not pct:
            raise argparse.ArgumentTypeError(f"mix entries look like name=percent, got {part!r}")
        out[name.strip()] = float(pct)
    return out


def _sizes(text):
    if "-" in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def _spec(args):
    return WorkloadSpec(
        benchmark=args.benchmark, scale_factor=args.scale_factor, n_workers=args.workers, mix=args.mix,
        formulation=args.formulation, txn_size=args.txn_size, remote_pct=args.remote_pct,
        dest_strategy=args.dest_strategy, span=args.span, zipfian=args.zipfian, delay_us=args.delay_us,
        simrisk_load=args.simrisk_load, exchange_strategy=args.exchange_strategy, seed=args.seed,
        epochs=args.epochs, epoch_ms=args.epoch_ms, warmup_ms=args.warmup_ms,
        txns_per_worker=args.txns_per_worker)


def cmd_bench(args):
    spec = _spec(args)
    plan = parse_plan(args.config) if args.config else None
    profile = args.profile or bool(args.profile_out)
    res = run(spec, plan, strategy=args.strategy, n_executors=args.executors, trace=args.trace,
              profile=profile)
    if args.out:
        res.write_csv(args.out)
    if args.profile_out:
        dump_profiles(res.profiles, args.profile_out)
    summary = res.summary()
    summary["plan"] = res.plan.strategy_label
    summary["checks"] = res.checks
    summary["abort_reasons"] = res.abort_reasons
    if profile and res.breakdowns():
        m = res.mean_breakdown()
        summary["breakdown_us"] = {b: round(getattr(m, b), 3) for b in LatencyBreakdown.BUCKETS}
    print(json.dumps(summary, indent=2, default=str))
    return 0 if all(res.checks.values()) else 1


def cmd_check_trace(args):
    from .checker import check_trace
    with open(args.file) as fh:
        reactor_ok, classic_ok = check_trace(fh.read())
    print(f"reactor model: {'serializable' if reactor_ok else 'NOT serializable'}")
    print(f"classic projection: {'serializable' if classic_ok else 'NOT serializable'}")
    return 0 if reactor_ok and classic_ok else 1


def cmd_cost_calibrate(args):
    cal = calibrate(load_profiles(args.profiles))
    text = json.dumps(cal.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_cost_estimate(args):
    from .bench.predict import predict_smallbank
    with open(args.calibration) as fh:
        cal = Calibration.from_dict(json.load(fh))
    w = csv.writer(sys.stdout)
    w.writerow(["formulation", "size", "predicted_us"])
    for f in args.formulation:
        for size in args.sizes:
            w.writerow([f, size, f"{predict_smallbank(cal, f, size, args.containers):.3f}"])
    return 0


def cmd_cost_decompose(args):
    w = csv.writer(sys.stdout)
    w.writerow(["txn_id", "procedure", *LatencyBreakdown.BUCKETS, "total"])
    for p in load_profiles(args.profiles):
        if not p.committed or not p.t_client:
            continue
        b = decompose(p)
        w.writerow([p.txn_id, p.procedure, *(f"{getattr(b, k):.3f}" for k in LatencyBreakdown.BUCKETS),
                    f"{b.total:.3f}"])
    return 0


def cmd_cost_breakdown(args):
    """Calibrate on fully-sync size one, then measure and predict every
    (formulation, size) pair; one CSV row each."""
    from .bench.predict import calibrate_smallbank, predict_smallbank
    n = args.containers
    cal, _ = calibrate_smallbank(n, args.epochs, args.epoch_ms, args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["formulation", "size", "predicted_us", "measured_us", *LatencyBreakdown.BUCKETS])
        for f in args.formulation:
            for size in args.sizes:
                spec = WorkloadSpec("smallbank", scale_factor=n, n_workers=1, formulation=f, txn_size=size,
                                    dest_strategy="all-remote", epochs=args.epochs, epoch_ms=args.epoch_ms,
                                    seed=args.seed)
                res = run(spec, strategy="s3", n_executors=n, profile=True)
                m = res.mean_breakdown()
                pred = predict_smallbank(cal, f, size, n) + m.commit_plus_inputgen
                w.writerow([f, size, f"{pred:.3f}", f"{res.mean_latency_us:.3f}",
                            *(f"{getattr(m, b):.3f}" for b in LatencyBreakdown.BUCKETS)])
                out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="reactordb", description="Reactor database engine tools")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a benchmark and report per-epoch statistics")
    b.add_argument("--config", help="deployment plan JSON (default: the benchmark's canonical plan)")
    b.add_argument("--strategy", choices=["s1", "s2", "s3"], help="canonical plan when --config is absent")
    b.add_argument("--executors", type=int, help="executors for the canonical plan")
    b.add_argument("--benchmark", default="smallbank",
                   choices=["smallbank", "tpcc", "ycsb", "exchange", "noop"])
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--scale-factor", type=int, default=1)
    b.add_argument("--epochs", type=int, default=50)
    b.add_argument("--epoch-ms", type=float, default=100.0)
    b.add_argument("--warmup-ms", type=float, default=0.0)
    b.add_argument("--txns-per-worker", type=int, help="fixed transaction count instead of timed epochs")
    b.add_argument("--mix", type=_mix, help="e.g. new_order=50,payment=50")
    b.add_argument("--formulation")
    b.add_argument("--txn-size", type=int, default=1)
    b.add_argument("--remote-pct", type=float)
    b.add_argument("--dest-strategy", default="all-remote")
    b.add_argument("--span", type=int)
    b.add_argument("--zipfian", type=float, default=0.99)
    b.add_argument("--delay-us", type=_delay, default=(0, 0), help="LO:HI microseconds")
    b.add_argument("--simrisk-load", type=int, default=0)
    b.add_argument("--exchange-strategy", default="procedure-parallelism",
                   choices=["sequential", "query-parallelism", "procedure-parallelism"])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="per-epoch CSV")
    b.add_argument("--trace", help="write an operation trace for check-trace")
    b.add_argument("--profile", action="store_true", help="collect latency breakdowns")
    b.add_argument("--profile-out", help="write raw profiles (JSON lines) for `cost`")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check-trace", help="check a trace for conflict serializability")
    c.add_argument("file")
    c.set_defaults(func=cmd_check_trace)

    cost = sub.add_parser("cost", help="latency cost model")
    csub = cost.add_subparsers(dest="cost_command", required=True)
    cal = csub.add_parser("calibrate", help="cost parameters from profiles")
    cal.add_argument("--profiles", required=True)
    cal.add_argument("--out")
    cal.set_defaults(func=cmd_cost_calibrate)
    est = csub.add_parser("estimate", help="predict multi-transfer latency from a calibration")
    est.add_argument("--calibration", required=True)
    est.add_argument("--formulation", nargs="+", default=list(FORMULATIONS), choices=FORMULATIONS)
    est.add_argument("--sizes", type=_sizes, default=_sizes("1-7"))
    est.add_argument("--containers", type=int, default=7)
    est.set_defaults(func=cmd_cost_estimate)
    dec = csub.add_parser("decompose", help="per-transaction latency buckets")
    dec.add_argument("--profiles", required=True)
    dec.set_defaults(func=cmd_cost_decompose)
    br = csub.add_parser("breakdown", help="measured vs predicted table for multi-transfer")
    br.add_argument("--formulation", nargs="+", default=list(FORMULATIONS), choices=FORMULATIONS)
    br.add_argument("--sizes", type=_sizes, default=_sizes("1-7"))
    br.add_argument("--containers", type=int, default=7)
    br.add_argument("--epochs", type=int, default=10)
    br.add_argument("--epoch-ms", type=float, default=100.0)
    br.add_argument("--seed", type=int, default=0)
    br.add_argument("--out")
    br.set_defaults(func=cmd_cost_breakdown)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ReactorDBError, ValueError, OSError) as exc:
        print(f"reactordb: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
