"""Desk-scale exact optimization over assortments, plus the two classic
stochastic-programming diagnostics (value of the stochastic solution and
expected value of perfect information).

The enumerator walks every admissible per-customer offer pattern in
lexicographic order. Routing costs depend only on which slot each customer
ends up choosing, so they are memoized per slot profile and shared across
candidate assortments and scenario slices. The diagnostics compare profits
produced by one and the same arithmetic path, which makes the VSS >= 0 and
EVPI >= 0 guarantees hold exactly rather than up to float noise.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import choice, routing
from .evaluation import Solution, evaluate, make_router
from .model import Assortment, BehaviorSpec, Instance, ScenarioSet, degenerate_scenarios


def admissible_patterns(instance: Instance) -> np.ndarray:
    """All per-customer offer rows satisfying the opt-out, one-price-per-slot
    and option-floor constraints, in lexicographic order; shape (P, |I|)."""
    nH = len(instance.discounts)
    T = instance.n_slots
    rows = []
    for assign in itertools.product(range(-1, nH), repeat=T):  # -1 = slot absent
        if 1 + sum(a >= 0 for a in assign) < instance.min_options:
            continue
        row = np.zeros(instance.n_options, dtype=np.int8)
        row[0] = 1
        for s, a in enumerate(assign):
            if a >= 0:
                row[1 + s * nH + a] = 1
        rows.append(row)
    return np.array(rows)


class ProfileCosts:
    """Memoized effective routing cost per joint slot profile.

    A profile assigns each customer a chosen slot (or -1 for opting out);
    its cost is the optimal plan cost, or the penalized singleton cost when
    no feasible plan exists. Windows do not vary across scenarios, so one
    memo serves every scenario and scenario slice.
    """

    def __init__(self, instance: Instance, penalty_factor: float = 10.0, routing_cap: int = 9):
        self.instance = instance
        self.penalty_factor = penalty_factor
        self.routing_cap = routing_cap
        self._memo = {}

    def cost(self, profile: tuple) -> float:
        cached = self._memo.get(profile)
        if cached is not None:
            return cached
        instance = self.instance
        requests = []
        for cust, slot in enumerate(profile):
            if slot < 0:
                continue
            s = instance.slots[slot]
            requests.append(routing.ServiceRequest(
                customer=cust, lower=s.lower, upper=s.upper,
                demand=instance.demand[cust], service_time=instance.service_time[cust],
            ))
        if not requests:
            value = 0.0
        else:
            try:
                plan = routing.exact_cvrptw(requests, instance, cap=self.routing_cap)
                value = plan.total_cost if plan.feasible else None
            except routing.InfeasibleRoutingError:
                value = None
            if value is None:
                value = self.penalty_factor * routing.singleton_plan_cost(requests, instance)
        self._memo[profile] = value
        return value


class AssortmentEnumerator:
    """Cross product of admissible per-customer patterns with pattern-level
    choice precomputation; the search space of the exact solver."""

    def __init__(self, instance: Instance, scen: ScenarioSet, max_product: float = 1e7):
        self.instance = instance
        self.scen = scen
        self.patterns = admissible_patterns(instance)
        n = instance.n_customers
        if len(self.patterns) ** n > max_product:
            raise ValueError(
                f"{len(self.patterns)}^{n} admissible assortments exceed the {max_product:.0f} cap"
            )
        u = choice.utilities(instance, scen)  # (|I|, n, R)
        P = len(self.patterns)
        self.chosen = np.empty((P, n, scen.R), dtype=np.int64)
        for p, row in enumerate(self.patterns):
            masked = np.where(row[:, None, None] == 1, u, -np.inf)
            self.chosen[p] = masked.argmax(axis=0)
        self.slot_choice = instance.option_slot[self.chosen]  # (P, n, R)
        self.revenue = instance.option_price[self.chosen]  # (P, n, R)
        T = instance.n_slots
        self.weights = [(T + 1) ** i for i in range(n)]
        self.enc = (self.slot_choice + 1) * np.array(self.weights)[None, :, None]

    def __len__(self) -> int:
        return len(self.patterns) ** self.instance.n_customers

    def assortment(self, combo) -> Assortment:
        return Assortment(np.array([self.patterns[p] for p in combo], dtype=np.int8))

    def dense_costs(self, costs: ProfileCosts) -> np.ndarray:
        """Profile costs laid out densely for vectorized gathering."""
        n = self.instance.n_customers
        T = self.instance.n_slots
        reachable = [sorted({int(s) for s in self.slot_choice[:, i, :].ravel()})
                     for i in range(n)]
        dense = np.full((T + 1) ** n, np.nan)
        for profile in itertools.product(*reachable):
            key = sum((s + 1) * self.weights[i] for i, s in enumerate(profile))
            dense[key] = costs.cost(profile)
        return dense

    def combo_profit(self, combo, costs: ProfileCosts) -> float:
        """Expected profit of one pattern combination.

        Uses the same left-to-right accumulation as :func:`best_combo`, so a
        combo scores identically whether probed here or inside the sweep.
        """
        n, R = self.instance.n_customers, self.scen.R
        total = np.float64(0.0)
        for r in range(R):
            rev = np.float64(self.revenue[combo[0], 0, r])
            key = int(self.enc[combo[0], 0, r])
            for i in range(1, n):
                rev = rev + self.revenue[combo[i], i, r]
                key += int(self.enc[combo[i], i, r])
            profile = tuple(int(self.slot_choice[combo[i], i, r]) for i in range(n))
            total = total + (rev - costs.cost(profile))
        return float(total / R)


def best_combo(enum: AssortmentEnumerator, costs: ProfileCosts, prune: bool = True):
    """Lexicographically-first profit maximizer over the pattern cross
    product; returns (combo, profit). Optional pruning skips blocks whose
    revenue-only upper bound cannot beat the incumbent."""
    instance, scen = enum.instance, enum.scen
    n, R = instance.n_customers, scen.R
    P = len(enum.patterns)
    dense = enum.dense_costs(costs)
    avg_rev = enum.revenue.mean(axis=2)  # (P, n)

    if n == 1:
        profits = np.zeros(P)
        for r in range(R):
            profits += enum.revenue[:, 0, r] - dense[enum.enc[:, 0, r].astype(np.int64)]
        profits /= R
        best = int(np.argmax(profits))
        return (best,), float(profits[best])

    rest_shape = [P] * (n - 1)
    ub_rest = sum(avg_rev[:, i].max() for i in range(1, n))
    best_combo_found, best_profit = None, -np.inf
    for p0 in range(P):
        if prune and best_combo_found is not None and avg_rev[p0, 0] + ub_rest < best_profit:
            continue
        acc = np.zeros(rest_shape)
        for r in range(R):
            rev = np.float64(enum.revenue[p0, 0, r])
            key = np.int64(enum.enc[p0, 0, r])
            for i in range(1, n):
                shape = [1] * (n - 1)
                shape[i - 1] = P
                rev = rev + enum.revenue[:, i, r].reshape(shape)
                key = key + enum.enc[:, i, r].reshape(shape).astype(np.int64)
            acc = acc + (rev - dense[key])
        acc = acc / R
        flat = acc.ravel()
        local = int(np.argmax(flat))
        if flat[local] > best_profit:
            best_profit = float(flat[local])
            best_combo_found = (p0,) + tuple(np.unravel_index(local, rest_shape))
    return best_combo_found, best_profit


def exact_solve(
    instance: Instance,
    scen: ScenarioSet,
    cap: int = 4,
    prune: bool = True,
    penalty_factor: float = 10.0,
    costs: ProfileCosts | None = None,
    threads: int | None = None,
) -> Solution:
    """Profit-maximal assortment by exhaustive (pruned) enumeration, with
    exact routing throughout. Ties go to the first assortment found."""
    if instance.n_customers > cap:
        raise ValueError(f"exact solver capped at {cap} customers, got {instance.n_customers}")
    if costs is None:
        costs = ProfileCosts(instance, penalty_factor=penalty_factor)
    enum = AssortmentEnumerator(instance, scen)
    combo, _ = best_combo(enum, costs, prune=prune)
    assortment = enum.assortment(combo)
    return evaluate(assortment, instance, scen, router=make_router("exact"),
                    threads=threads, penalty_factor=penalty_factor)


def deterministic_solve(
    instance: Instance,
    behavior: BehaviorSpec,
    cap: int = 4,
    penalty_factor: float = 10.0,
    costs: ProfileCosts | None = None,
) -> Solution:
    """Optimal assortment of the noise-free model: error terms dropped and
    taste coefficients pinned at their means (one scenario suffices)."""
    scen = degenerate_scenarios(behavior, instance)
    return exact_solve(instance, scen, cap=cap, penalty_factor=penalty_factor, costs=costs)


def stochastic_diagnostics(
    instance: Instance,
    scen: ScenarioSet,
    behavior: BehaviorSpec,
    cap: int = 4,
    penalty_factor: float = 10.0,
) -> dict:
    """VSS, EVPI and their ratios in one pass (shared routing memo).

    * VSS: stochastic optimum minus the stochastic value of the
      deterministic model's assortment.
    * EVPI: average over scenarios of (clairvoyant optimum for that scenario
      minus the stochastic optimum's profit in it); every term is
      nonnegative by construction.
    """
    if instance.n_customers > cap:
        raise ValueError(f"exact solver capped at {cap} customers")
    costs = ProfileCosts(instance, penalty_factor=penalty_factor)
    enum = AssortmentEnumerator(instance, scen)
    combo_star, profit_star = best_combo(enum, costs)

    det_scen = degenerate_scenarios(behavior, instance)
    det_enum = AssortmentEnumerator(instance, det_scen)
    det_combo, det_profit = best_combo(det_enum, costs)
    det_under_uncertainty = enum.combo_profit(det_combo, costs)
    vss_value = profit_star - det_under_uncertainty

    gaps = np.empty(scen.R)
    for r in range(scen.R):
        enum_r = AssortmentEnumerator(instance, scen.subset([r]))
        _, pi_profit = best_combo(enum_r, costs)
        gaps[r] = pi_profit - enum_r.combo_profit(combo_star, costs)
    evpi_value = float(gaps.mean())

    denom = abs(profit_star) if abs(profit_star) > 1e-12 else np.nan
    both = vss_value + evpi_value
    return {
        "profit": profit_star,
        "deterministic_profit": det_profit,
        "deterministic_under_uncertainty": det_under_uncertainty,
        "vss": vss_value,
        "evpi": evpi_value,
        "vss_over_solution_pct": 100.0 * vss_value / denom,
        "evpi_over_solution_pct": 100.0 * evpi_value / denom,
        "vss_share_pct": 100.0 * vss_value / both if both > 1e-12 else 0.0,
    }


def vss(instance: Instance, scen: ScenarioSet, behavior: BehaviorSpec, cap: int = 4) -> float:
    """Profit lost by committing to the deterministic model's assortment."""
    return stochastic_diagnostics(instance, scen, behavior, cap=cap)["vss"]


def evpi(instance: Instance, scen: ScenarioSet, behavior: BehaviorSpec | None = None,
         cap: int = 4) -> float:
    """Gap between clairvoyant per-scenario optima and the stochastic optimum."""
    if instance.n_customers > cap:
        raise ValueError(f"exact solver capped at {cap} customers")
    costs = ProfileCosts(instance)
    enum = AssortmentEnumerator(instance, scen)
    combo_star, _ = best_combo(enum, costs)
    gaps = np.empty(scen.R)
    for r in range(scen.R):
        enum_r = AssortmentEnumerator(instance, scen.subset([r]))
        _, pi_profit = best_combo(enum_r, costs)
        gaps[r] = pi_profit - enum_r.combo_profit(combo_star, costs)
    return float(gaps.mean())
