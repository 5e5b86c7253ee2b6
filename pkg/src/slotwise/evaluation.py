"""Expected-profit evaluation of an assortment over a scenario set.

Profit is the scenario average of (delivery fees collected) minus (travel
plus vehicle costs of serving the customers that picked a slot). Scenarios
may be routed in parallel, but per-scenario profits are always combined in
scenario order so results are bit-stable across worker counts.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import choice, routing
from .model import OPT_OUT, Assortment, Instance, ScenarioSet

#: environment variable capping the evaluation worker pool (0 or unset = auto)
THREADS_ENV = "SLOTWISE_THREADS"


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        threads = int(raw) if raw else 1
    if threads == 0:
        threads = os.cpu_count() or 1
    return max(1, threads)


def make_router(name: str, seed: int = 0, ls_iterations: int = 25, exact_cap: int = 9):
    """A routing callable ``(requests, instance, scenario_index) -> RoutingPlan``.

    Seeded routers derive a per-scenario seed from (seed, scenario) so the
    same scenario always routes identically regardless of execution order.
    """
    if name == "cw":
        return lambda requests, instance, r: routing.cw_solve(requests, instance)
    if name == "icw":
        return lambda requests, instance, r: routing.icw_solve(
            requests, instance, ls_iterations=ls_iterations, seed=_mix(seed, r)
        )
    if name == "cfrs":
        return lambda requests, instance, r: routing.cfrs_solve(
            requests, instance, seed=_mix(seed, r)
        )
    if name == "exact":
        return lambda requests, instance, r: routing.exact_cvrptw(
            requests, instance, cap=exact_cap
        )
    raise ValueError(f"unknown router {name!r}")


def _mix(seed: int, r: int) -> int:
    return (seed * 1000003 + r) & 0x7FFFFFFF


@dataclass
class Solution:
    """An assortment together with its evaluation artifacts."""

    assortment: Assortment
    profit: float
    choices: choice.ChoiceMatrix
    plans: list
    scenario_costs: np.ndarray  # effective routing cost per scenario
    scenario_profits: np.ndarray

    def to_json(self) -> dict:
        return {
            "profit": self.profit,
            "assortment": self.assortment.to_json(),
            "choices": self.choices.to_json(),
            "plans": [p.to_json() for p in self.plans],
            "scenario_costs": self.scenario_costs.tolist(),
            "scenario_profits": self.scenario_profits.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Solution":
        return cls(
            assortment=Assortment.from_json(doc["assortment"]),
            profit=doc["profit"],
            choices=choice.ChoiceMatrix.from_json(doc["choices"]),
            plans=[routing.RoutingPlan.from_json(p) for p in doc["plans"]],
            scenario_costs=np.array(doc["scenario_costs"]),
            scenario_profits=np.array(doc["scenario_profits"]),
        )


def _make_solution(assortment, choices, plans, costs, instance) -> Solution:
    revenue = instance.option_price[choices.chosen].sum(axis=0)
    profits = revenue - costs
    return Solution(
        assortment=assortment.copy(),
        profit=float(profits.mean()),
        choices=choices,
        plans=plans,
        scenario_costs=costs,
        scenario_profits=profits,
    )


def requests_for_scenario(
    choices: choice.ChoiceMatrix, instance: Instance, r: int
) -> list:
    """Service requests of scenario ``r``: every customer that picked a slot,
    with that slot as their delivery window."""
    out = []
    for n in range(choices.n_customers):
        opt = instance.catalog[choices.chosen[n, r]]
        if opt.is_opt_out:
            continue
        slot = instance.slots[opt.slot]
        out.append(
            routing.ServiceRequest(
                customer=n,
                lower=slot.lower,
                upper=slot.upper,
                demand=instance.demand[n],
                service_time=instance.service_time[n],
            )
        )
    return out


def _route_scenario(choices, instance, router, penalty_factor, r):
    """Plan and effective cost for one scenario (penalized when infeasible)."""
    requests = requests_for_scenario(choices, instance, r)
    if not requests:
        return routing.empty_plan(), 0.0
    try:
        plan = router(requests, instance, r)
    except routing.InfeasibleRoutingError:
        plan = routing.RoutingPlan(routes=[], arrivals={}, travel_cost=0.0,
                                   vehicles_used=0, total_cost=0.0, feasible=False)
    if plan.feasible:
        return plan, plan.total_cost
    return plan, penalty_factor * routing.singleton_plan_cost(requests, instance)


def evaluate(
    assortment: Assortment,
    instance: Instance,
    scen: ScenarioSet,
    router=None,
    threads: int | None = None,
    penalty_factor: float = 10.0,
) -> Solution:
    """Score an assortment: simulate choices, route every scenario, average.

    A scenario whose request set cannot be feasibly served (window
    unreachable, fleet bound broken) contributes its revenue minus
    ``penalty_factor`` times the naive one-route-per-customer plan cost.
    """
    assortment.validate(instance)
    if router is None:
        router = make_router("cw")
    choices = choice._choose_unchecked(assortment.gamma, scen, instance)

    workers = worker_count(threads)
    job = partial(_route_scenario, choices, instance, router, penalty_factor)
    if workers > 1 and scen.R > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(scen.R)))
    else:
        results = [job(r) for r in range(scen.R)]

    plans = [plan for plan, _ in results]
    costs = np.array([cost for _, cost in results])
    return _make_solution(assortment, choices, plans, costs, instance)


def reevaluate_customers(
    solution: Solution,
    new_assortment: Assortment,
    changed,
    instance: Instance,
    scen: ScenarioSet,
    router=None,
    penalty_factor: float = 10.0,
) -> Solution:
    """Re-score after an offer change touching only ``changed`` customers.

    Scenarios where no changed customer's chosen *slot* moved keep their
    cached plan; the rest are re-routed. Produces exactly what a full
    :func:`evaluate` of the new assortment would.
    """
    if router is None:
        router = make_router("cw")
    new_assortment.validate(instance)
    changed = list(changed)
    chosen = solution.choices.chosen.copy()
    u = choice.utilities(instance, scen)
    for n in changed:
        masked = np.where(new_assortment.gamma[n][:, None] == 1, u[:, n, :], -np.inf)
        chosen[n] = masked.argmax(axis=0)

    old_slots = instance.option_slot[solution.choices.chosen[changed]]  # (|changed|, R)
    new_slots = instance.option_slot[chosen[changed]]
    dirty = np.where((old_slots != new_slots).any(axis=0))[0]

    choices = choice.ChoiceMatrix(chosen=chosen, n_options=instance.n_options)
    plans = list(solution.plans)
    costs = solution.scenario_costs.copy()
    for r in dirty:
        plan, cost = _route_scenario(choices, instance, router, penalty_factor, int(r))
        plans[int(r)] = plan
        costs[int(r)] = cost
    return _make_solution(new_assortment, choices, plans, costs, instance)
