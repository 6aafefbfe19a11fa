"""spikekern: event-driven sparse kernels, JIT connectivity and network simulation.

Exit status: 0 success, 2 invalid usage or input, 3 a benchmark or
comparison check failed. ``SPIKEKERN_SEED`` replaces the default seed of
every subcommand; an explicit ``--seed`` wins over it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench
from .errors import BenchmarkMismatch, ConfigError, DimensionError, SimulationError
from .jitconn import Homo, Normal, Uniform
from .sparse import set_threads

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 2, 3


def _default_seed():
    raw = os.environ.get("SPIKEKERN_SEED")
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"SPIKEKERN_SEED={raw!r} is not an integer") from None


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _shapes(text):
    """``1000,2000x500`` -> ``[1000, (2000, 500)]``."""
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            if "x" in item:
                rows, cols = item.split("x")
                out.append((int(rows), int(cols)))
            else:
                out.append(int(float(item)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad shape {item!r}; use N or MxN") from None
    return out


def _emit_json(dest, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, default=str)
    if dest == "-":
        print(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _bench_summary(results):
    return [dict(r.row(), **r.extra) for r in results]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_bench(args):
    seed = _default_seed() if args.seed is None else args.seed
    if args.what == "kernels":
        results = bench.bench_event_kernels(n=args.n, p=args.p, rates_hz=args.rates, dt=args.dt,
                                            reps=args.reps, seed=seed, dense=args.dense,
                                            loop_steps=args.loop_steps)
    elif args.what == "jitconn":
        dist = {"homo": Homo(1.0), "uniform": Uniform(-1.0, 1.0), "normal": Normal(0.0, 1.0)}[args.dist]
        results = bench.bench_jitconn(shapes=args.shapes, p=args.p, dist=dist, reps=args.reps, seed=seed,
                                      events_hz=args.events_hz)
    else:
        results = bench.bench_gap_samplers(p=args.p, draws=args.draws, reps=args.reps, seed=seed)
    if args.out:
        bench.write_csv(args.out, results)
    else:
        bench.write_csv(sys.stdout, results)
    if args.json:
        _emit_json(args.json, _bench_summary(results))
    return EXIT_OK


def _cmd_sim(args):
    from .network import build_ei_net, load_config, simulate, write_manifest, write_monitors, write_raster

    if args.what == "ei-net":
        seed = _default_seed() if args.seed is None else args.seed
        cfg = build_ei_net(scale=args.scale, comm_kind=args.comm, seed=seed,
                           duration=args.duration_ms, dt=args.dt)
    else:
        if not args.config:
            raise ConfigError("sim config needs a config file")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        elif "SPIKEKERN_SEED" in os.environ:
            cfg.seed = _default_seed()
    result = simulate(cfg)
    if args.out:
        write_raster(args.out, result)
    if args.monitors:
        write_monitors(args.monitors, result)
    if args.manifest:
        write_manifest(args.manifest, result)
    summary = {
        "n_steps": result.n_steps,
        "spikes": int(result.raster.shape[0]),
        "rates_hz": result.mean_rates(),
        "state_bytes": result.state_bytes,
        "seconds": result.timing,
    }
    if args.json:
        _emit_json(args.json, summary)
    else:
        rates = ", ".join(f"{k}={v:.2f} Hz" for k, v in summary["rates_hz"].items())
        print(f"{result.n_steps} steps, {summary['spikes']} spikes, {rates}, "
              f"{result.timing['total']:.3f} s")
    return EXIT_OK


def _cmd_train(args):
    from .reservoir import train_reservoir

    seed = _default_seed() if args.seed is None else args.seed
    report = train_reservoir(task=args.task, method=args.method, n_res=args.n_res, rho=args.rho,
                             alpha=args.alpha, p_rec=args.p_rec, seed=seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("step,error\n")
            for step, err in enumerate(report["errors"]):
                fh.write(f"{step},{err!r}\n")
    summary = {k: v for k, v in report.items() if k not in ("errors", "w_out", "prediction")}
    if args.json:
        _emit_json(args.json, summary)
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def _cmd_diff(args):
    lines = bench.diff_results(args.old, args.new, time_tol=args.time_tol)
    for line in lines:
        print(line)
    if args.json:
        _emit_json(args.json, {"differences": lines})
    return EXIT_CHECK if lines else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the main output (CSV or raster) here")
    common.add_argument("--json", nargs="?", const="-", metavar="PATH",
                        help="write a JSON summary to PATH (stdout when omitted)")
    common.add_argument("--threads", type=int, default=1, help="kernel threads (1 = sequential)")
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="spikekern", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_bench = sub.add_parser("bench", help="operator microbenchmarks")
    bsub = p_bench.add_subparsers(dest="what", required=True)
    b = bsub.add_parser("kernels", parents=[common], help="dense vs csrmv vs event_csrmv")
    b.add_argument("--n", type=int, default=50_000)
    b.add_argument("--p", type=float, default=0.01)
    b.add_argument("--rates", type=_floats, default=[10.0, 100.0, 1000.0], help="Hz, comma separated")
    b.add_argument("--dt", type=float, default=0.1, help="ms")
    b.add_argument("--reps", type=int, default=9)
    b.add_argument("--dense", choices=("auto", "full", "slab", "skip"), default="auto")
    b.add_argument("--loop-steps", type=int, default=0,
                   help="also time this many consecutive event steps (10000 = 1 s at 0.1 ms)")
    b = bsub.add_parser("jitconn", parents=[common], help="dense vs CSR vs JIT connectivity")
    b.add_argument("--shapes", "--shape", dest="shapes", type=_shapes, default=[1_000, 10_000, 100_000],
                   help="comma-separated N or MxN")
    b.add_argument("--p", "--prob", dest="p", type=float, default=0.01)
    b.add_argument("--events-hz", type=float, default=None, help="also time event-driven propagation")
    b.add_argument("--dist", choices=("homo", "uniform", "normal"), default="homo")
    b.add_argument("--reps", type=int, default=7)
    b = bsub.add_parser("samplers", parents=[common], help="uniform vs geometric gap draws")
    b.add_argument("--p", type=float, default=0.05)
    b.add_argument("--draws", type=int, default=10**7)
    b.add_argument("--reps", type=int, default=5)

    p_sim = sub.add_parser("sim", help="run a network")
    ssub = p_sim.add_subparsers(dest="what", required=True)
    s = ssub.add_parser("ei-net", parents=[common], help="COBA-LIF EI balance network")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--duration-ms", type=float, default=100.0)
    s.add_argument("--dt", type=float, default=0.1)
    s.add_argument("--comm", choices=("jitconn", "sparse", "dense"), default="jitconn")
    s = ssub.add_parser("config", parents=[common], help="network from a YAML config file")
    s.add_argument("config")
    for s in ssub.choices.values():
        s.add_argument("--monitors", help="CSV of monitored traces")
        s.add_argument("--manifest", help="JSON manifest with resolved seeds and state bytes")

    p_train = sub.add_parser("train", help="train a model")
    tsub = p_train.add_subparsers(dest="what", required=True)
    t = tsub.add_parser("reservoir", parents=[common], help="echo-state reservoir readout")
    t.add_argument("--task", choices=("sine", "memory"), default="sine")
    t.add_argument("--n-res", type=int, default=400)
    t.add_argument("--rho", type=float, default=1.0)
    t.add_argument("--alpha", type=float, default=0.9)
    t.add_argument("--p-rec", type=float, default=0.1)
    t.add_argument("--method", choices=("force", "ridge"), default="force")

    d = sub.add_parser("diff", help="compare two benchmark CSV files")
    d.add_argument("old")
    d.add_argument("new")
    d.add_argument("--time-tol", type=float, default=0.25)
    d.add_argument("--json", nargs="?", const="-", metavar="PATH")
    return parser


_COMMANDS = {"bench": _cmd_bench, "sim": _cmd_sim, "train": _cmd_train, "diff": _cmd_diff}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        set_threads(threads)
        return _COMMANDS[args.command](args)
    except BenchmarkMismatch as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ConfigError, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        set_threads(1)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
