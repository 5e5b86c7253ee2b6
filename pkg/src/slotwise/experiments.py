"""Experiment runners: scenario-count calibration, stochastic-value
diagnostics, model-comparison and sensitivity sweeps, operator accounting.

Each runner returns an :class:`ExperimentReport` whose records carry the
seeds needed to reproduce them; aggregates are plain mean/std over the
numeric record columns and can always be recomputed from the records.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import choice, exact
from .evaluation import evaluate, make_router
from .model import Assortment, BehaviorSpec, Instance, sample_scenarios
from .constructive import rfts
from .alns import DESTROY_KINDS, REPAIR_KINDS, SalnsParams, salns


@dataclass
class ExperimentReport:
    kind: str
    instances: list
    records: list
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.records)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "instances": list(self.instances),
            "records": [dict(r) for r in self.records],
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentReport":
        return cls(kind=doc["kind"], instances=list(doc["instances"]),
                   records=[dict(r) for r in doc["records"]],
                   aggregates=doc.get("aggregates", {}))

    def to_csv_text(self) -> str:
        """Records as CSV ('.' decimals, repr-precision floats) behind two
        comment lines carrying the report metadata."""
        out = io.StringIO()
        out.write(f"# kind: {self.kind}\n")
        out.write(f"# instances: {';'.join(self.instances)}\n")
        columns = []
        for rec in self.records:
            for key in rec:
                if key not in columns:
                    columns.append(key)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(columns)
        for rec in self.records:
            writer.writerow([_csv_cell(rec.get(c)) for c in columns])
        return out.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> "ExperimentReport":
        lines = text.splitlines()
        kind = lines[0].split(":", 1)[1].strip()
        raw = lines[1].split(":", 1)[1].strip()
        instances = [s for s in raw.split(";") if s]
        reader = csv.reader(lines[2:])
        columns = next(reader)
        records = []
        for row in reader:
            records.append({c: _csv_parse(v) for c, v in zip(columns, row)})
        return cls(kind=kind, instances=instances, records=records)

    def save(self, basepath) -> dict:
        """Write <basepath>.json and <basepath>.csv; returns the paths."""
        paths = {"json": f"{basepath}.json", "csv": f"{basepath}.csv"}
        with open(paths["json"], "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
        with open(paths["csv"], "w") as fh:
            fh.write(self.to_csv_text())
        return paths


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _csv_parse(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def aggregate(records: list) -> dict:
    """Column-wise mean and std over the numeric record fields."""
    if not records:
        return {"mean": {}, "std": {}}
    mean, std = {}, {}
    for key in records[0]:
        values = [r[key] for r in records if isinstance(r.get(key), (int, float))]
        if len(values) == len(records):
            mean[key] = float(np.mean(values))
            std[key] = float(np.std(values))
    return {"mean": mean, "std": std}


def _ms(t0: float) -> float:
    return (time.monotonic() - t0) * 1000.0


def solve_once(
    method: str,
    instance: Instance,
    scen,
    params: SalnsParams | None = None,
    seed: int = 0,
    router: str = "cw",
    exact_cap: int = 4,
    trace=None,
    threads=None,
):
    """One solve with the named method; shared by the runners and the CLI."""
    if method == "rfts":
        zeta = (params or SalnsParams()).zeta
        return rfts(instance, scen, zeta=zeta, seed=seed,
                    router=make_router(router, seed=seed), threads=threads)
    if method == "salns":
        return salns(instance, scen, params=params, seed=seed, router_name=router,
                     trace=trace, threads=threads)
    if method == "exact":
        return exact.exact_solve(instance, scen, cap=exact_cap, threads=threads)
    raise ValueError(f"unknown method {method!r}")


def run_in_sample(
    instance: Instance,
    behavior: BehaviorSpec,
    R_list,
    reference_R: int,
    seeds,
    params: SalnsParams | None = None,
    method: str = "salns",
    router: str = "cw",
) -> ExperimentReport:
    """Objective deviation versus a large-scenario reference solve.

    For every seed, the problem is solved at ``reference_R`` scenarios and
    at each R in ``R_list``; records carry the percentage deviation of each
    profit from the same seed's reference profit.
    """
    if reference_R < max(R_list):
        raise ValueError("reference_R must cover every tested scenario count")
    records = []
    for seed in seeds:
        ref_scen = sample_scenarios(behavior, instance, reference_R, seed)
        t0 = time.monotonic()
        ref = solve_once(method, instance, ref_scen, params, seed, router)
        ref_ms = _ms(t0)
        for R in R_list:
            scen = sample_scenarios(behavior, instance, R, seed)
            t0 = time.monotonic()
            sol = solve_once(method, instance, scen, params, seed, router)
            records.append({
                "instance": instance.name,
                "seed": seed,
                "R": R,
                "reference_R": reference_R,
                "profit": sol.profit,
                "reference_profit": ref.profit,
                "deviation_pct": 100.0 * abs(sol.profit - ref.profit) / max(abs(ref.profit), 1e-9),
                "wall_ms": _ms(t0),
                "reference_wall_ms": ref_ms,
            })
    return ExperimentReport(kind="in-sample", instances=[instance.name], records=records)


def run_out_of_sample(
    instance: Instance,
    behavior: BehaviorSpec,
    R: int,
    n_redraws: int,
    seeds,
    params: SalnsParams | None = None,
    method: str = "salns",
    router: str = "cw",
    redraw_seeds=None,
) -> ExperimentReport:
    """Robustness of a solved assortment under fresh random draws.

    The assortment optimized on one scenario set is re-scored on
    ``n_redraws`` independently drawn sets; the deviation between optimized
    and realized profit measures how much the solution overfits its sample.
    """
    if n_redraws < 1:
        raise ValueError("need at least one redraw")
    records = []
    eval_router = make_router(router)
    for seed in seeds:
        scen = sample_scenarios(behavior, instance, R, seed)
        t0 = time.monotonic()
        sol = solve_once(method, instance, scen, params, seed, router)
        solve_ms = _ms(t0)
        base = evaluate(sol.assortment, instance, scen, router=eval_router)
        for j in range(n_redraws):
            redraw_seed = redraw_seeds[j] if redraw_seeds is not None else _redraw_seed(seed, j)
            fresh = sample_scenarios(behavior, instance, R, redraw_seed)
            redone = evaluate(sol.assortment, instance, fresh, router=eval_router)
            records.append({
                "instance": instance.name,
                "seed": seed,
                "redraw_seed": redraw_seed,
                "R": R,
                "profit": base.profit,
                "redraw_profit": redone.profit,
                "deviation_pct": 100.0 * abs(redone.profit - base.profit)
                / max(abs(base.profit), 1e-9),
                "wall_ms": solve_ms,
            })
    return ExperimentReport(kind="out-of-sample", instances=[instance.name], records=records)


def _redraw_seed(seed: int, j: int) -> int:
    return (seed * 7919 + 104729 * (j + 1)) & 0x7FFFFFFF


def run_vss_evpi(
    instances,
    behavior: BehaviorSpec,
    R: int,
    seeds,
    cap: int = 4,
) -> ExperimentReport:
    """Stochastic-programming diagnostics per instance and seed."""
    records = []
    for inst in instances:
        for seed in seeds:
            scen = sample_scenarios(behavior, inst, R, seed)
            t0 = time.monotonic()
            diag = exact.stochastic_diagnostics(inst, scen, behavior, cap=cap)
            records.append({
                "instance": inst.name,
                "seed": seed,
                "R": R,
                "profit": diag["profit"],
                "vss": diag["vss"],
                "evpi": diag["evpi"],
                "vss_over_solution_pct": diag["vss_over_solution_pct"],
                "evpi_over_solution_pct": diag["evpi_over_solution_pct"],
                "vss_share_pct": diag["vss_share_pct"],
                "wall_ms": _ms(t0),
            })
    return ExperimentReport(kind="vss-evpi", instances=[i.name for i in instances],
                            records=records)


def run_value_of_ml(
    instance: Instance,
    behavior: BehaviorSpec,
    R: int,
    seeds,
    method: str = "exact",
    cap: int = 4,
    params: SalnsParams | None = None,
    router: str = "cw",
) -> ExperimentReport:
    """Percentage profit gained by optimizing under the heterogeneous-taste
    model instead of reusing the fixed-taste (MNL) model's assortment."""
    mnl_spec = behavior.as_mnl()
    records = []
    for seed in seeds:
        scen_ml = sample_scenarios(behavior, instance, R, seed)
        scen_mnl = sample_scenarios(mnl_spec, instance, R, seed)
        t0 = time.monotonic()
        if method == "exact":
            costs = exact.ProfileCosts(instance)
            enum_mnl = exact.AssortmentEnumerator(instance, scen_mnl)
            combo_mnl, _ = exact.best_combo(enum_mnl, costs)
            enum_ml = exact.AssortmentEnumerator(instance, scen_ml)
            combo_ml, ml_profit = exact.best_combo(enum_ml, costs)
            cross_profit = enum_ml.combo_profit(combo_mnl, costs)
        else:
            sol_mnl = solve_once(method, instance, scen_mnl, params, seed, router)
            cross_profit = evaluate(sol_mnl.assortment, instance, scen_ml,
                                    router=make_router(router)).profit
            ml_profit = solve_once(method, instance, scen_ml, params, seed, router).profit
        records.append({
            "instance": instance.name,
            "seed": seed,
            "R": R,
            "mnl_assortment_profit": cross_profit,
            "ml_profit": ml_profit,
            "value_of_ml_pct": 100.0 * (ml_profit - cross_profit)
            / max(abs(cross_profit), 1e-9),
            "wall_ms": _ms(t0),
        })
    return ExperimentReport(kind="value-of-ml", instances=[instance.name], records=records)


def run_sensitivity_sweep(
    instance: Instance,
    behavior: BehaviorSpec,
    time_grid,
    price_grid,
    R: int,
    seed: int,
    optimize: bool = True,
    params: SalnsParams | None = None,
    router: str = "cw",
) -> ExperimentReport:
    """Coverage rate over a grid of mean time/price sensitivities.

    Per grid point: coverage under the offer-everything-no-discount policy
    and (optionally) under the optimized policy. Draws are counter-based, so
    moving only the means keeps the underlying noise paired across points.
    """
    if not len(time_grid) or not len(price_grid):
        raise ValueError("sensitivity grids must be nonempty")
    records = []
    baseline = Assortment.full_no_discount(instance)
    for t_mean in time_grid:
        for p_mean in price_grid:
            spec = behavior.with_means(t_mean, p_mean)
            scen = sample_scenarios(spec, instance, R, seed)
            t0 = time.monotonic()
            base_choices = choice.choose(baseline, scen, instance)
            rec = {
                "instance": instance.name,
                "seed": seed,
                "R": R,
                "time_mean": float(t_mean),
                "price_mean": float(p_mean),
                "coverage_no_policy_pct": choice.coverage_rate(base_choices),
            }
            if optimize:
                sol = salns(instance, scen, params=params, seed=seed, router_name=router)
                rec["coverage_optimized_pct"] = choice.coverage_rate(sol.choices)
                rec["profit_optimized"] = sol.profit
            rec["wall_ms"] = _ms(t0)
            records.append(rec)
    return ExperimentReport(kind="sweep", instances=[instance.name], records=records)


def run_operator_stats(
    instance: Instance,
    behavior: BehaviorSpec,
    R: int,
    seeds,
    params: SalnsParams | None = None,
    router: str = "cw",
) -> ExperimentReport:
    """Per-operator outcome counts (best / better / accepted / rejected)
    collected from full search runs."""
    counts = {("destroy", k): dict.fromkeys(("best", "better", "accepted", "rejected", "uses"), 0)
              for k in DESTROY_KINDS}
    counts.update({("repair", k): dict.fromkeys(("best", "better", "accepted", "rejected", "uses"), 0)
                   for k in REPAIR_KINDS})
    wall = {}
    for seed in seeds:
        scen = sample_scenarios(behavior, instance, R, seed)
        t0 = time.monotonic()

        def tally(rec):
            for role in ("destroy", "repair"):
                slot = counts[(role, rec[role])]
                slot["uses"] += 1
                slot[rec["outcome"]] += 1

        salns(instance, scen, params=params, seed=seed, router_name=router, trace=tally)
        wall[seed] = _ms(t0)
    records = []
    for (role, name), c in counts.items():
        records.append({"role": role, "operator": name, **c})
    report = ExperimentReport(kind="operator-stats", instances=[instance.name], records=records)
    report.aggregates["wall_ms"] = wall
    return report
