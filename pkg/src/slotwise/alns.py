"""Simulation-based adaptive large neighborhood search over assortments.

Each iteration destroys the offers of a subset of customers, repairs them
with one of six insertion strategies, optionally polishes improving
candidates with a small local search, and accepts by record-to-record
travel (a candidate within ``phi`` of the incumbent is taken, with ``phi``
shrinking linearly). Operator selection is a roulette wheel whose weights
decay toward recent performance scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import choice, evaluation
from .cluster import kmeans
from .evaluation import Solution, evaluate, make_router, reevaluate_customers
from .model import Assortment, Instance, ScenarioSet
from .constructive import assign_discounts, rfts, win_rates

DESTROY_KINDS = ("random", "neighborhood", "worst", "adaptive")
REPAIR_KINDS = ("random", "high_utility", "greedy", "two_regret", "best", "discount_adjust")

_IMPROVE_EPS = 1e-9


@dataclass
class SalnsParams:
    """Search-control knobs. Score and threshold defaults are house choices
    (the method itself does not prescribe them); all are configurable."""

    epsilon: float = 0.5       # stop when best improves < epsilon% over the window
    window: int = 200          # iterations the stop criterion looks back
    phi0: float | None = None  # initial RRT threshold; None = 5% of |initial profit|
    phi_min: float = 0.0
    phi_step: float | None = None  # linear decrement; None = phi0 / 1000
    theta: float = 0.8         # weight decay
    score_best: float = 10.0
    score_better: float = 6.0
    score_accepted: float = 2.0
    score_rejected: float = 0.0
    p_local_search: float = 0.3
    kappa_max: float = 0.4     # destroy at most this fraction of customers
    zeta: int = 1              # cluster-count slack of the constructive phase
    max_iterations: int | None = None
    penalty_factor: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.phi0 is not None and self.phi_min > self.phi0:
            raise ValueError("phi_min must not exceed phi0")
        if not (self.score_best >= self.score_better >= self.score_accepted
                >= self.score_rejected >= 0.0):
            raise ValueError("scores must be ordered best >= better >= accepted >= rejected >= 0")
        if not 0.0 < self.kappa_max <= 1.0:
            raise ValueError("kappa_max must lie in (0, 1]")

    @classmethod
    def from_json(cls, doc: dict) -> "SalnsParams":
        return cls(**doc)


def rrt_accept(candidate_profit: float, incumbent_profit: float, phi: float) -> bool:
    """Record-to-record travel: accept unless the candidate falls more than
    ``phi`` below the incumbent (profits are maximized)."""
    return incumbent_profit - candidate_profit <= phi


def update_weight(omega: float, theta: float, score: float) -> float:
    return theta * omega + (1.0 - theta) * score


def _roulette(rng: np.random.Generator, weights: dict) -> str:
    names = list(weights)
    w = np.array([weights[k] for k in names], dtype=float)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


# ---------------------------------------------------------------------------
# destroy operators
# ---------------------------------------------------------------------------


def customer_profit_contribution(solution: Solution, instance: Instance) -> np.ndarray:
    """Average per-scenario (delivery revenue - marginal routing cost) of each
    customer; the marginal cost is the saving from splicing them out of their
    current route (plus the vehicle cost for singleton routes)."""
    n = instance.n_customers
    contrib = np.zeros(n)
    cost = instance.travel_cost
    R = solution.choices.R
    for r in range(R):
        revenue = instance.option_price[solution.choices.chosen[:, r]]
        for route in solution.plans[r].routes:
            for k, c in enumerate(route):
                prev = route[k - 1] + 1 if k > 0 else 0
                nxt = route[k + 1] + 1 if k + 1 < len(route) else 0
                delta = cost[prev, c + 1] + cost[c + 1, nxt] - cost[prev, nxt]
                if len(route) == 1:
                    delta += instance.vehicle_cost
                contrib[c] += revenue[c] - delta
    return contrib / R


def destroy(
    kind: str,
    solution: Solution,
    instance: Instance,
    kappa: float,
    rng: np.random.Generator,
    clusters: np.ndarray | None = None,
    success: np.ndarray | None = None,
):
    """Clear the slot offers of a subset of customers (opt-out always stays).

    Returns the partial offer matrix and the list ``D`` of affected
    customers. At least one customer is always removed.
    """
    if kind not in DESTROY_KINDS:
        raise ValueError(f"unknown destroy operator {kind!r}")
    n = instance.n_customers
    n_remove = min(n, max(1, math.ceil(kappa * n)))
    if kind == "random":
        D = sorted(int(c) for c in rng.choice(n, size=n_remove, replace=False))
    elif kind == "neighborhood":
        if clusters is None:
            clusters = neighborhood_clusters(instance, seed=0)
        seed_customer = int(rng.integers(n))
        D = sorted(int(c) for c in np.where(clusters == clusters[seed_customer])[0])
    elif kind == "worst":
        contrib = customer_profit_contribution(solution, instance)
        D = sorted(int(c) for c in np.argsort(contrib, kind="stable")[:n_remove])
    else:  # adaptive
        if success is None:
            success = np.ones(n)
        p = success / success.sum()
        D = sorted(int(c) for c in rng.choice(n, size=n_remove, replace=False, p=p))
    gamma = solution.assortment.gamma.copy()
    gamma[D, 1:] = 0
    return gamma, D


def neighborhood_clusters(instance: Instance, seed: int = 0) -> np.ndarray:
    """Geographic clusters used by neighborhood destroy and greedy repair."""
    n = instance.n_customers
    k = max(2, min(instance.fleet_size, math.ceil(n / 5)))
    k = min(k, n)
    labels, _ = kmeans(instance.xy[1:], k, np.random.default_rng([seed, 0x9E]))
    return np.asarray(labels)


# ---------------------------------------------------------------------------
# repair operators
# ---------------------------------------------------------------------------


def _slot_count(instance: Instance, rng: np.random.Generator) -> int:
    lo = max(1, instance.min_options - 1)  # opt-out already counts toward the floor
    return int(rng.integers(lo, instance.n_slots + 1))


def _greedy_discount(customer: int, slots, instance: Instance, scen, rates) -> list:
    return assign_discounts(customer, slots, scen, instance, rates)


def _ranked_slots(customer: int, instance: Instance, rates: np.ndarray) -> list:
    """Slots ordered by their best option's win rate, best first."""
    nH = len(instance.discounts)
    best_rate = [
        rates[1 + s * nH : 1 + (s + 1) * nH, customer].max() for s in range(instance.n_slots)
    ]
    return sorted(range(instance.n_slots), key=lambda s: (-best_rate[s], s))


def _cheap_insertion_slot_costs(
    customer: int, solution: Solution, instance: Instance
) -> np.ndarray:
    """Average over scenarios of the cheapest travel-cost delta of splicing
    the customer into an existing route (fallback: a fresh singleton route).
    Scores slots for the best-insertion repair; time windows are left to the
    evaluator, this is a cost-only ranking."""
    cost = instance.travel_cost
    node = customer + 1
    singleton = cost[0, node] + cost[node, 0] + instance.vehicle_cost
    out = np.zeros(instance.n_slots)
    R = solution.choices.R
    for r in range(R):
        best = singleton
        for route in solution.plans[r].routes:
            seq = [0] + [c + 1 for c in route if c != customer] + [0]
            for a, b in zip(seq, seq[1:]):
                delta = cost[a, node] + cost[node, b] - cost[a, b]
                if delta < best:
                    best = delta
        out += best
    return np.full(instance.n_slots, out / R)


def repair(
    kind: str,
    gamma: np.ndarray,
    D: list,
    before: Solution,
    instance: Instance,
    scen: ScenarioSet,
    rng: np.random.Generator,
    rates: np.ndarray | None = None,
    clusters: np.ndarray | None = None,
) -> np.ndarray:
    """Give every destroyed customer a fresh offer set (>= the option floor,
    one price per slot). ``before`` is the pre-destroy solution; only the
    discount-adjustment operator looks at it to keep slots unchanged."""
    if kind not in REPAIR_KINDS:
        raise ValueError(f"unknown repair operator {kind!r}")
    if rates is None:
        rates = win_rates(instance, scen)
    if clusters is None and kind == "greedy":
        clusters = neighborhood_clusters(instance, seed=0)
    nH = len(instance.discounts)
    gamma = gamma.copy()
    for n in D:
        if kind == "discount_adjust":
            slots = sorted(
                {instance.catalog[i].slot for i in np.where(before.assortment.gamma[n] == 1)[0]
                 if i != 0}
            )
            if not slots:  # nothing to re-price; fall back to a random offer
                slots = sorted(
                    int(s) for s in rng.choice(instance.n_slots, size=_slot_count(instance, rng),
                                               replace=False)
                )
            picks = [1 + s * nH + int(rng.integers(nH)) for s in slots]
        else:
            k = _slot_count(instance, rng)
            if kind == "random":
                slots = [int(s) for s in rng.choice(instance.n_slots, size=k, replace=False)]
                picks = [1 + s * nH + int(rng.integers(nH)) for s in slots]
            elif kind == "high_utility":
                order = np.argsort(-rates[1:, n], kind="stable") + 1
                picks, used = [], set()
                for oid in order:
                    slot = instance.catalog[int(oid)].slot
                    if slot in used:
                        continue
                    picks.append(int(oid))
                    used.add(slot)
                    if len(picks) == k:
                        break
            elif kind == "greedy":
                members = np.where(clusters == clusters[n])[0]
                usage = np.array([
                    gamma[members, 1 + s * nH : 1 + (s + 1) * nH].sum()
                    for s in range(instance.n_slots)
                ])
                slots = sorted(range(instance.n_slots), key=lambda s: (usage[s], s))[:k]
                picks = _greedy_discount(n, slots, instance, scen, rates)
            elif kind == "two_regret":
                ranked = _ranked_slots(n, instance, rates)
                order = ranked[1:] + ranked[:1]
                picks = _greedy_discount(n, order[:k], instance, scen, rates)
            else:  # best insertion
                costs = _cheap_insertion_slot_costs(n, before, instance)
                slots = sorted(range(instance.n_slots), key=lambda s: (costs[s], s))[:k]
                picks = _greedy_discount(n, slots, instance, scen, rates)
        gamma[n, 1:] = 0
        gamma[n, 0] = 1
        for oid in picks:
            gamma[n, oid] = 1
    return gamma


# ---------------------------------------------------------------------------
# local search
# ---------------------------------------------------------------------------


def local_search(
    solution: Solution,
    instance: Instance,
    scen: ScenarioSet,
    rng: np.random.Generator,
    router=None,
    penalty_factor: float = 10.0,
    rates: np.ndarray | None = None,
) -> Solution:
    """Five single-customer operators in fixed order, each stopping at its
    first improving move; never returns a worse solution than the input."""
    if rates is None:
        rates = win_rates(instance, scen)
    best = solution
    nH = len(instance.discounts)

    def probe(gamma, n):
        return reevaluate_customers(
            best, Assortment(gamma), [n], instance, scen, router, penalty_factor
        )

    # random option inclusion
    for n in rng.permutation(instance.n_customers):
        offered = np.where(best.assortment.gamma[n, 1:] == 1)[0] + 1
        used_slots = {instance.catalog[int(i)].slot for i in offered}
        free = [s for s in range(instance.n_slots) if s not in used_slots]
        if not free:
            continue
        slot = free[int(rng.integers(len(free)))]
        oid = 1 + slot * nH + int(rng.integers(nH))
        gamma = best.assortment.gamma.copy()
        gamma[n, oid] = 1
        cand = probe(gamma, int(n))
        if cand.profit > best.profit + _IMPROVE_EPS:
            best = cand
            break

    # random option elimination (respecting the option floor)
    for n in rng.permutation(instance.n_customers):
        offered = np.where(best.assortment.gamma[n, 1:] == 1)[0] + 1
        if len(offered) + 1 <= instance.min_options:
            continue
        oid = int(offered[int(rng.integers(len(offered)))])
        gamma = best.assortment.gamma.copy()
        gamma[n, oid] = 0
        cand = probe(gamma, int(n))
        if cand.profit > best.profit + _IMPROVE_EPS:
            best = cand
            break

    # discount-rate adjustment
    for n in rng.permutation(instance.n_customers):
        offered = np.where(best.assortment.gamma[n, 1:] == 1)[0] + 1
        if not len(offered):
            continue
        gamma = best.assortment.gamma.copy()
        gamma[n, 1:] = 0
        for i in offered:
            slot = instance.catalog[int(i)].slot
            gamma[n, 1 + slot * nH + int(rng.integers(nH))] = 1
        cand = probe(gamma, int(n))
        if cand.profit > best.profit + _IMPROVE_EPS:
            best = cand
            break

    # elimination of options offered to every customer
    common = [
        i for i in range(1, instance.n_options)
        if np.all(best.assortment.gamma[:, i] == 1)
    ]
    done = False
    for i in rng.permutation(len(common)) if common else []:
        oid = common[int(i)]
        for n in rng.permutation(instance.n_customers):
            if best.assortment.gamma[n].sum() <= instance.min_options:
                continue
            gamma = best.assortment.gamma.copy()
            gamma[n, oid] = 0
            cand = probe(gamma, int(n))
            if cand.profit > best.profit + _IMPROVE_EPS:
                best = cand
                done = True
                break
        if done:
            break

    # elimination of each customer's highest-win-rate option
    for n in rng.permutation(instance.n_customers):
        if best.assortment.gamma[n].sum() <= instance.min_options:
            continue
        offered = np.where(best.assortment.gamma[n, 1:] == 1)[0] + 1
        oid = int(offered[int(np.argmax(rates[offered, n]))])
        gamma = best.assortment.gamma.copy()
        gamma[n, oid] = 0
        cand = probe(gamma, int(n))
        if cand.profit > best.profit + _IMPROVE_EPS:
            best = cand
            break

    return best


# ---------------------------------------------------------------------------
# the search loop
# ---------------------------------------------------------------------------


def salns(
    instance: Instance,
    scen: ScenarioSet,
    params: SalnsParams | None = None,
    seed: int = 0,
    router_name: str = "cw",
    final_router: str | None = None,
    trace=None,
    threads: int | None = None,
) -> Solution:
    """Run the full search: constructive start, adaptive destroy/repair loop,
    and one final re-evaluation of the best assortment with a stronger
    router (defaults to the local-search-improved savings heuristic when the
    loop itself routed with plain savings).

    ``trace``, if given, is called once per iteration with a dict of the
    iteration's vitals (operators used, candidate profit, acceptance, phi).
    """
    params = params or SalnsParams()
    rng = np.random.default_rng(seed)
    router = make_router(router_name, seed=seed)

    incumbent = rfts(instance, scen, zeta=params.zeta, seed=seed, router=router,
                     threads=threads)
    best = incumbent

    phi0 = params.phi0 if params.phi0 is not None else 0.05 * abs(incumbent.profit)
    phi_step = params.phi_step if params.phi_step is not None else phi0 / 1000.0
    phi = max(phi0, params.phi_min)

    weights_d = {k: 1.0 for k in DESTROY_KINDS}
    weights_r = {k: 1.0 for k in REPAIR_KINDS}
    success = np.ones(instance.n_customers)  # adaptive-removal counters
    clusters = neighborhood_clusters(instance, seed=seed)
    rates = win_rates(instance, scen)

    best_history = [best.profit]
    iteration = 0
    while True:
        iteration += 1
        kappa = params.kappa_max * (1.0 - rng.random())  # uniform in (0, kappa_max]
        d_kind = _roulette(rng, weights_d)
        r_kind = _roulette(rng, weights_r)
        gamma_part, D = destroy(d_kind, incumbent, instance, kappa, rng,
                                clusters=clusters, success=success)
        gamma_cand = repair(r_kind, gamma_part, D, incumbent, instance, scen, rng,
                            rates=rates, clusters=clusters)
        candidate = reevaluate_customers(
            incumbent, Assortment(gamma_cand), D, instance, scen, router,
            params.penalty_factor,
        )

        used_ls = False
        if candidate.profit > incumbent.profit and rng.random() < params.p_local_search:
            candidate = local_search(candidate, instance, scen, rng, router,
                                     params.penalty_factor, rates)
            used_ls = True

        accepted = rrt_accept(candidate.profit, incumbent.profit, phi)
        if candidate.profit > best.profit + _IMPROVE_EPS:
            outcome, score = "best", params.score_best
        elif candidate.profit > incumbent.profit + _IMPROVE_EPS:
            outcome, score = "better", params.score_better
        elif accepted:
            outcome, score = "accepted", params.score_accepted
        else:
            outcome, score = "rejected", params.score_rejected

        improved_incumbent = candidate.profit > incumbent.profit + _IMPROVE_EPS
        if improved_incumbent:
            success[D] += 1.0
        if accepted:
            incumbent = candidate
        if candidate.profit > best.profit + _IMPROVE_EPS:
            best = candidate

        phi = max(params.phi_min, phi - phi_step)
        weights_d[d_kind] = update_weight(weights_d[d_kind], params.theta, score)
        weights_r[r_kind] = update_weight(weights_r[r_kind], params.theta, score)

        if trace is not None:
            trace({
                "iteration": iteration,
                "destroy": d_kind,
                "repair": r_kind,
                "n_destroyed": len(D),
                "candidate_profit": candidate.profit,
                "incumbent_profit": incumbent.profit,
                "best_profit": best.profit,
                "accepted": bool(accepted),
                "outcome": outcome,
                "local_search": used_ls,
                "phi": phi,
                "score": score,
            })

        best_history.append(best.profit)
        if iteration >= params.window:
            then = best_history[-params.window - 1]
            improvement = best.profit - then
            if improvement < (params.epsilon / 100.0) * max(abs(then), 1e-9):
                break
        if params.max_iterations is not None and iteration >= params.max_iterations:
            break

    if final_router is None:
        final_router = "icw" if router_name == "cw" else router_name
    if final_router != router_name:
        final = evaluate(best.assortment, instance, scen,
                         router=make_router(final_router, seed=seed),
                         threads=threads, penalty_factor=params.penalty_factor)
        if final.profit >= best.profit:
            best = final
    return best
