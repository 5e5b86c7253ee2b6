"""Command-line interface.

Subcommands: ``gen`` (Solomon file -> instance JSON), ``solve``,
``evaluate`` (re-score a stored assortment) and ``experiment`` (the
analysis runners; writes JSON + CSV and renders a PNG figure next to
them). One JSON config document feeds everything; command-line flags
override the matching config keys. Exit status is 0 only when every
requested run completed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, plots
from .evaluation import evaluate, make_router, worker_count
from .exact import exact_solve
from .model import Assortment, BehaviorSpec, Instance, load_solomon, sample_scenarios, \
    synthetic_instance
from .alns import SalnsParams

EXPERIMENT_KINDS = ("in-sample", "out-of-sample", "vss-evpi", "value-of-ml", "sweep",
                    "operator-stats")


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def instance_from_config(cfg: dict, instance_path=None) -> Instance:
    if instance_path:
        return Instance.load(instance_path)
    section = cfg.get("instance")
    if not section:
        raise ValueError("no instance given: pass --instance or a config with an instance section")
    return _build_instance(section)


def _build_instance(section: dict) -> Instance:
    if "path" in section:
        return Instance.load(section["path"])
    if "solomon" in section:
        opts = {k: v for k, v in section.items()
                if k not in ("solomon", "customers", "slots")}
        with open(section["solomon"]) as fh:
            return load_solomon(fh, section["customers"], section.get("slots", 3), **opts)
    if "synthetic" in section:
        return synthetic_instance(**section["synthetic"])
    raise ValueError("instance section needs one of: path, solomon, synthetic")


def behavior_from_config(cfg: dict) -> BehaviorSpec:
    return BehaviorSpec.from_json(cfg.get("behavior", {}))


def params_from_config(cfg: dict) -> SalnsParams:
    return SalnsParams.from_json(cfg.get("salns", {}))


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", "-o", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slotwise",
                                     description="time-slot assortment optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="build an instance JSON from a Solomon file")
    p_gen.add_argument("--solomon", required=True)
    p_gen.add_argument("--customers", type=int, required=True)
    p_gen.add_argument("--slots", type=int, default=3)
    p_gen.add_argument("--fee", type=float, default=40.0)
    p_gen.add_argument("--discounts", default="0,0.12",
                       help="comma-separated discount rates")
    p_gen.add_argument("--min-options", type=int, default=2)
    p_gen.add_argument("--vehicle-cost", type=float, default=50.0)
    _add_common(p_gen)

    p_solve = sub.add_parser("solve", help="solve an instance")
    p_solve.add_argument("--instance", help="instance JSON (overrides config)")
    p_solve.add_argument("--method", choices=("rfts", "salns", "exact"), default="salns")
    p_solve.add_argument("--router", choices=("cw", "icw", "cfrs", "exact"), default="cw")
    p_solve.add_argument("--scenarios", type=int, default=80)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--exact-cap", type=int, default=4)
    p_solve.add_argument("--threads", type=int, default=None)
    p_solve.add_argument("--trace", help="JSON-lines iteration trace output path")
    _add_common(p_solve)

    p_eval = sub.add_parser("evaluate", help="re-score a stored assortment")
    p_eval.add_argument("--instance", help="instance JSON (overrides config)")
    p_eval.add_argument("--solution", required=True,
                        help="solution JSON (or any JSON with an 'assortment' or 'gamma' key)")
    p_eval.add_argument("--router", choices=("cw", "icw", "cfrs", "exact"), default="cw")
    p_eval.add_argument("--scenarios", type=int, default=80)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--threads", type=int, default=None)
    _add_common(p_eval)

    p_exp = sub.add_parser("experiment", help="run an analysis experiment")
    p_exp.add_argument("kind", choices=EXPERIMENT_KINDS)
    p_exp.add_argument("--instance", help="instance JSON (overrides config)")
    p_exp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_exp.add_argument("--scenarios", type=int, help="override the experiment's R")
    p_exp.add_argument("--seed", type=int, help="replace the seed list with one seed")
    _add_common(p_exp)

    return parser


def cmd_gen(args) -> int:
    discounts = [float(h) for h in args.discounts.split(",") if h != ""]
    with open(args.solomon) as fh:
        inst = load_solomon(fh, args.customers, args.slots, discounts=discounts,
                            base_fee=args.fee, min_options=args.min_options,
                            vehicle_cost=args.vehicle_cost)
    out = args.out or f"{inst.name}.json"
    inst.save(out)
    print(f"wrote {out} ({inst.n_customers} customers, {inst.n_slots} slots)")
    return 0


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    inst = instance_from_config(cfg, args.instance)
    behavior = behavior_from_config(cfg)
    params = params_from_config(cfg)
    scen = sample_scenarios(behavior, inst, args.scenarios, args.seed)

    trace_fh = open(args.trace, "w") if args.trace else None
    trace = None
    if trace_fh is not None:
        trace = lambda rec: trace_fh.write(json.dumps(rec) + "\n")
    t0 = time.monotonic()
    try:
        sol = experiments.solve_once(args.method, inst, scen, params, args.seed,
                                     args.router, exact_cap=args.exact_cap, trace=trace,
                                     threads=args.threads)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    doc = {
        "instance": inst.name,
        "method": args.method,
        "router": args.router,
        "scenarios": args.scenarios,
        "seed": args.seed,
        "wall_ms": (time.monotonic() - t0) * 1000.0,
        **sol.to_json(),
    }
    out = args.out or f"solution-{inst.name}-{args.method}-s{args.seed}.json"
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"{args.method} profit {sol.profit:.4f} -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    inst = instance_from_config(cfg, args.instance)
    behavior = behavior_from_config(cfg)
    with open(args.solution) as fh:
        doc = json.load(fh)
    gamma_doc = doc.get("assortment", doc)
    assortment = Assortment.from_json(gamma_doc)
    scen = sample_scenarios(behavior, inst, args.scenarios, args.seed)
    sol = evaluate(assortment, inst, scen, router=make_router(args.router, seed=args.seed),
                   threads=args.threads)
    out = args.out or "evaluation.json"
    with open(out, "w") as fh:
        json.dump({"instance": inst.name, "scenarios": args.scenarios, "seed": args.seed,
                   "router": args.router, **sol.to_json()}, fh, indent=1)
    print(f"profit {sol.profit:.4f} -> {out}")
    return 0


def _experiment_instances(cfg: dict, section: dict, args) -> list:
    """Instance set for multi-instance experiments; labeled variants come
    from a list of instance configs or synthetic seeds."""
    if "instances" in section:
        return [_build_instance(s) for s in section["instances"]]
    if "instance_seeds" in section:
        base = dict(cfg.get("instance", {}).get("synthetic", {"n_customers": 4}))
        out = []
        for s in section["instance_seeds"]:
            base["seed"] = s
            out.append(synthetic_instance(**base))
        return out
    return [instance_from_config(cfg, args.instance)]


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    section = dict(cfg.get("experiment", {}))
    behavior = behavior_from_config(cfg)
    params = params_from_config(cfg) if "salns" in cfg else None
    kind = args.kind
    if args.scenarios is not None:
        section["R"] = args.scenarios
    if args.seed is not None:
        section["seeds"] = [args.seed]
        section.setdefault("seed", args.seed)
    seeds = section.get("seeds", [0])

    if kind == "in-sample":
        inst = instance_from_config(cfg, args.instance)
        report = experiments.run_in_sample(
            inst, behavior, section.get("R_list", [5, 10, 20, 50]),
            section.get("reference_R", 100), seeds, params=params,
            method=section.get("method", "salns"), router=section.get("router", "cw"),
        )
    elif kind == "out-of-sample":
        inst = instance_from_config(cfg, args.instance)
        report = experiments.run_out_of_sample(
            inst, behavior, section.get("R", 80), section.get("n_redraws", 10), seeds,
            params=params, method=section.get("method", "salns"),
            router=section.get("router", "cw"),
        )
    elif kind == "vss-evpi":
        insts = _experiment_instances(cfg, section, args)
        report = experiments.run_vss_evpi(insts, behavior, section.get("R", 80), seeds,
                                          cap=section.get("cap", 4))
    elif kind == "value-of-ml":
        inst = instance_from_config(cfg, args.instance)
        report = experiments.run_value_of_ml(
            inst, behavior, section.get("R", 80), seeds,
            method=section.get("method", "exact"), cap=section.get("cap", 4), params=params,
            router=section.get("router", "cw"),
        )
    elif kind == "sweep":
        inst = instance_from_config(cfg, args.instance)
        report = experiments.run_sensitivity_sweep(
            inst, behavior, _grid(section.get("time_grid", {"start": -1.3, "stop": 1.5, "step": 0.4})),
            _grid(section.get("price_grid", {"start": -0.12, "stop": 0.0, "step": 0.03})),
            section.get("R", 80), section.get("seed", seeds[0]),
            optimize=section.get("optimize", True), params=params,
            router=section.get("router", "cw"),
        )
    else:  # operator-stats
        inst = instance_from_config(cfg, args.instance)
        report = experiments.run_operator_stats(inst, behavior, section.get("R", 80), seeds,
                                                params=params,
                                                router=section.get("router", "cw"))

    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    paths = report.save(outdir / kind)
    if not args.no_figures:
        paths["png"] = plots.render(report, str(outdir / f"{kind}.png"))
    print(f"{kind}: {len(report.records)} records -> " + ", ".join(paths.values()))
    return 0


def _grid(spec) -> list:
    if isinstance(spec, dict):
        vals = np.arange(spec["start"], spec["stop"] + spec["step"] / 2.0, spec["step"])
        return [round(float(v), 10) for v in vals]
    return list(spec)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"gen": cmd_gen, "solve": cmd_solve, "evaluate": cmd_evaluate,
               "experiment": cmd_experiment}[args.command]
    try:
        return handler(args)
    except Exception as exc:  # surface a clean message, nonzero status
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
