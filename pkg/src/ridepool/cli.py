"""Command-line entry point: solve, validate, generate, stats, bench.

Parameter precedence: ``--param key=value`` flags beat a ``--config``
JSON file, which beats ``RIDEPOOL_<FIELD>`` environment variables, which
beat the tuned defaults. Dedicated flags (``--time-limit``,
``--workers``) override their parameter fields last.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import fleetmin, ils, io, model
from .params import Params

ENV_PREFIX = "RIDEPOOL_"
MODES = ("sequential", "integrated", "hybrid", "classic-fleetmin")


def build_params(args: argparse.Namespace) -> Params:
    names = {f.name for f in dataclasses.fields(Params)}
    p = Params()
    env = {k[len(ENV_PREFIX):].lower(): v for k, v in os.environ.items()
           if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() in names}
    if env:
        p = p.with_overrides(env)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        p = p.with_overrides({k: str(v) for k, v in raw.items()})
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise SystemExit(f"--param expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        p = p.with_overrides({key: val})
    if getattr(args, "time_limit", None) is not None:
        p = p.replace(time_limit=args.time_limit)
    if getattr(args, "workers", None) is not None:
        p = p.replace(workers=args.workers)
    p.validate()
    return p


def _load_instance(args: argparse.Namespace):
    inst = io.load_instance(args.instance, fleet=getattr(args, "fleet", None))
    if getattr(args, "delta", None) is not None:
        inst = inst.with_buffer(args.delta, getattr(args, "tw_mode", "C"))
    return inst


def _solve_one(inst, mode: str, params: Params, rng, progress=None, warm=None):
    if mode == "classic-fleetmin":
        return fleetmin.hierarchical_run(inst, params, rng, warm=warm,
                                         progress=progress)
    if warm is not None and mode in ("integrated", "hybrid"):
        return ils.run(inst, params, rng, warm=warm, progress=progress)
    return ils.solve(inst, mode, params, rng, progress=progress)


def cmd_solve(args: argparse.Namespace) -> int:
    inst = _load_instance(args)
    params = build_params(args)
    rng = np.random.default_rng(args.seed)
    warm = io.parse_solution(args.warm_start, inst) if args.warm_start else None
    progress = open(args.progress, "w") if args.progress else None
    t0 = time.monotonic()
    try:
        sol, stats = _solve_one(inst, args.mode, params, rng,
                                progress=progress, warm=warm)
    finally:
        if progress is not None:
            progress.close()
    elapsed = time.monotonic() - t0
    bad = model.validate(inst, sol)
    if bad:
        print(f"internal error: produced an infeasible solution: {bad[0]}",
              file=sys.stderr)
        return 2
    obj = model.evaluate(inst, sol, check=False)
    io.write_solution(inst, sol, args.out if args.out else sys.stdout)
    if args.report:
        io.append_report(args.report, {
            "instance": inst.name, "mode": args.mode, "seed": args.seed,
            "buffer": inst.buffer, "unassigned": obj.unassigned,
            "cost": obj.cost, "wall_time_s": round(elapsed, 3),
            "rounds": stats.rounds, "rr_iterations": stats.rr_iterations,
        })
    print(f"{inst.name}: unassigned={obj.unassigned} cost={obj.cost} "
          f"time={elapsed:.1f}s", file=sys.stderr)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    inst = _load_instance(args)
    sol = io.parse_solution(args.solution, inst)
    bad = model.validate(inst, sol)
    for v in bad:
        print(v, file=sys.stderr)
    if bad:
        return 1
    obj = model.evaluate(inst, sol, check=False)
    print(f"feasible: unassigned={obj.unassigned} cost={obj.cost}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = io.GeneratorConfig(
        n_requests=args.requests, n_vehicles=args.vehicles,
        capacity=args.capacity, buffer=args.delta, horizon=args.horizon,
        area=args.area, speed=args.speed, tw_mode=args.tw_mode,
        service=args.service, seed=args.seed, name=args.name,
    )
    inst = io.generate(cfg)
    io.write_native(inst, args.out if args.out else sys.stdout)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    inst = _load_instance(args)
    sol = io.parse_solution(args.solution, inst)
    bad = model.validate(inst, sol)
    if bad:
        print(f"infeasible solution: {bad[0]}", file=sys.stderr)
        return 1
    out = io.stats_csv(inst, sol)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """Buffer sweep with warm-start chaining: each cell after the first
    starts from the previous cell's solution (when still feasible)."""
    base = io.load_instance(args.instance, fleet=getattr(args, "fleet", None))
    params = build_params(args)
    deltas = [int(x) for x in args.deltas.replace(",", " ").split()]
    if not deltas:
        raise SystemExit("--deltas must list at least one value")
    prev = None
    for i, delta in enumerate(deltas):
        inst = base.with_buffer(delta, args.tw_mode)
        rng = np.random.default_rng(args.seed)
        warm = None
        if prev is not None and not model.validate(inst, prev):
            warm = prev
        t0 = time.monotonic()
        sol, stats = _solve_one(inst, args.mode, params, rng, warm=warm)
        elapsed = time.monotonic() - t0
        bad = model.validate(inst, sol)
        if bad:
            print(f"internal error at delta={delta}: {bad[0]}", file=sys.stderr)
            return 2
        obj = model.evaluate(inst, sol, check=False)
        io.append_report(args.report, {
            "instance": inst.name, "mode": args.mode, "seed": args.seed,
            "buffer": delta, "unassigned": obj.unassigned, "cost": obj.cost,
            "wall_time_s": round(elapsed, 3), "rounds": stats.rounds,
            "rr_iterations": stats.rr_iterations,
        })
        print(f"delta={delta}: unassigned={obj.unassigned} cost={obj.cost} "
              f"warm={'yes' if warm is not None else 'no'}", file=sys.stderr)
        if args.out_dir:
            os.makedirs(args.out_dir, exist_ok=True)
            io.write_solution(inst, sol, os.path.join(
                args.out_dir, f"{inst.name}-d{delta}.sol"))
        prev = sol
    return 0


def _add_common(sp: argparse.ArgumentParser, instance: bool = True) -> None:
    if instance:
        sp.add_argument("--instance", required=True, help="instance file")
        sp.add_argument("--fleet", type=int, default=None,
                        help="vehicle count for benchmark-format files")
        sp.add_argument("--delta", type=int, default=None,
                        help="re-derive request windows for this buffer")
        sp.add_argument("--tw-mode", default="C", choices=("A", "B", "C"),
                        help="window mode used with --delta")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                    help="override one solver parameter")
    sp.add_argument("--config", help="JSON file with parameter overrides")
    sp.add_argument("--time-limit", type=float, default=None,
                    help="wall clock budget in seconds")
    sp.add_argument("--workers", type=int, default=None,
                    help="subproblem worker threads")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ridepool",
        description="Large-scale ride pooling and PDPTW solver suite.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve an instance")
    _add_common(sp)
    sp.add_argument("--mode", default="hybrid", choices=MODES)
    sp.add_argument("--out", help="solution output path (default stdout)")
    sp.add_argument("--report", help="append a CSV summary row here")
    sp.add_argument("--progress", help="stream per-round progress CSV here")
    sp.add_argument("--warm-start", help="start from this solution file")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("validate", help="check a solution file")
    _add_common(sp)
    sp.add_argument("--solution", required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("generate", help="sample a synthetic instance")
    sp.add_argument("--requests", type=int, required=True)
    sp.add_argument("--vehicles", type=int, required=True)
    sp.add_argument("--capacity", type=int, default=3)
    sp.add_argument("--delta", type=int, default=120, help="time buffer, seconds")
    sp.add_argument("--horizon", type=int, default=3600)
    sp.add_argument("--area", type=float, default=10_000.0)
    sp.add_argument("--speed", type=float, default=10.0)
    sp.add_argument("--tw-mode", default="C", choices=("A", "B", "C"))
    sp.add_argument("--service", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--name", default=None)
    sp.add_argument("--out", help="output path (default stdout)")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("stats", help="per-route structure metrics")
    _add_common(sp)
    sp.add_argument("--solution", required=True)
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("bench", help="buffer sweep with warm-start chaining")
    _add_common(sp)
    sp.add_argument("--mode", default="integrated", choices=MODES)
    sp.add_argument("--deltas", required=True,
                    help="buffer values, e.g. '0,60,120'")
    sp.add_argument("--report", required=True, help="CSV report path")
    sp.add_argument("--out-dir", help="write per-cell solution files here")
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (io.ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
