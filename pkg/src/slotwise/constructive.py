"""Route-first / time-second construction of an initial solution.

Customers are clustered into candidate routes, each route is ordered by
nearest neighbor, and a forward/backward timing pass derives the range of
slots each customer could be served in. Every slot in that range is offered
at the lowest discount that, on average across scenarios, beats opting out.
"""

from __future__ import annotations

import numpy as np

from . import choice, evaluation
from .cluster import kmeans
from .model import Assortment, Instance, ScenarioSet, slot_containing_latest, slot_for_time


def choose_clusters(instance: Instance, zeta: int = 1, seed: int = 0) -> list:
    """Cluster customers into candidate routes.

    K-means is run for every cluster count in ``[fleet_size - zeta,
    fleet_size]`` and the count whose nearest-neighbor-routed clusters give
    the lowest travel cost wins; clusters over capacity are then repaired by
    moving out as few customers as possible.
    """
    if zeta >= instance.fleet_size:
        raise ValueError("zeta must be smaller than the fleet size")
    n = instance.n_customers
    pts = instance.xy[1:]
    best = None
    k_hi = min(instance.fleet_size, n)
    k_lo = max(1, min(instance.fleet_size - zeta, k_hi))
    for k in range(k_lo, k_hi + 1):
        labels, _ = kmeans(pts, k, np.random.default_rng([seed, k]))
        clusters = [sorted(np.where(labels == j)[0]) for j in range(labels.max() + 1)]
        clusters = [list(map(int, c)) for c in clusters if len(c)]
        cost = sum(
            _route_cost(nearest_neighbor_route(c, instance), instance) for c in clusters
        )
        if best is None or cost < best[0] - 1e-9:
            best = (cost, clusters)
    return _repair_capacity(best[1], instance)


def _repair_capacity(clusters: list, instance: Instance) -> list:
    clusters = [list(c) for c in clusters]
    overflow = []
    for c in clusters:
        load = instance.demand[c].sum()
        while load > instance.capacity + 1e-9:
            # dropping the largest demand first empties the excess fastest
            drop = max(c, key=lambda cust: (instance.demand[cust], cust))
            c.remove(drop)
            overflow.append(drop)
            load -= instance.demand[drop]
    for cust in sorted(overflow):
        centers = [instance.xy[[m + 1 for m in c]].mean(axis=0) for c in clusters]
        order = sorted(
            range(len(clusters)),
            key=lambda j: float(((instance.xy[cust + 1] - centers[j]) ** 2).sum()),
        )
        for j in order:
            if instance.demand[clusters[j]].sum() + instance.demand[cust] <= instance.capacity + 1e-9:
                clusters[j].append(cust)
                break
        else:
            clusters.append([cust])
    return [sorted(c) for c in clusters if c]


def nearest_neighbor_route(customers: list, instance: Instance) -> list:
    """Order a customer set by repeatedly visiting the nearest unvisited one."""
    tt = instance.travel_time
    pool = set(customers)
    node = 0
    route = []
    while pool:
        nxt = min(pool, key=lambda c: (tt[node, c + 1], c))
        route.append(nxt)
        pool.discard(nxt)
        node = nxt + 1
    return route


def _route_cost(route: list, instance: Instance) -> float:
    cost = instance.travel_cost
    total, prev = 0.0, 0
    for c in route:
        total += cost[prev, c + 1]
        prev = c + 1
    return total + cost[prev, 0]


def forward_backward_windows(route: list, instance: Instance) -> dict:
    """Earliest and latest serviceable slot per customer on a fixed route.

    The forward pass accumulates travel and service from the depot to get
    each customer's earliest reachable time; the backward pass from the end
    of the horizon gives the latest arrival that still lets the rest of the
    route finish. Offered slots are the full contiguous range in between.
    """
    tt = instance.travel_time
    srv = instance.service_time
    earliest = np.empty(len(route))
    t, prev = 0.0, 0
    for k, c in enumerate(route):
        t += tt[prev, c + 1]
        earliest[k] = t
        t += srv[c]
        prev = c + 1
    latest = np.empty(len(route))
    latest[-1] = instance.horizon_end
    for k in range(len(route) - 2, -1, -1):
        c, nxt = route[k], route[k + 1]
        latest[k] = min(instance.horizon_end, latest[k + 1] - srv[c] - tt[c + 1, nxt + 1])
    out = {}
    for k, c in enumerate(route):
        if earliest[k] > instance.horizon_end + 1e-9 or latest[k] < earliest[k] - 1e-9:
            raise ValueError(f"route {route} is not schedulable within the horizon")
        lo_slot = slot_for_time(instance, earliest[k])
        hi_slot = slot_containing_latest(instance, latest[k])
        out[c] = (lo_slot, max(lo_slot, hi_slot))
    return out


def win_rates(instance: Instance, scen: ScenarioSet) -> np.ndarray:
    """Per (option, customer): share of scenarios where the option's utility
    beats the opt-out's. The opt-out row is exactly 0.5 by convention."""
    u = choice.utilities(instance, scen)
    rates = (u > u[0:1]).mean(axis=2)
    rates[0] = 0.5
    return rates


def assign_discounts(
    customer: int, offered_slots, scen: ScenarioSet, instance: Instance,
    rates: np.ndarray | None = None,
) -> list:
    """Pick one option per offered slot: the lowest discount whose win rate
    against opting out exceeds 1/2, or the highest discount as a fallback."""
    if rates is None:
        rates = win_rates(instance, scen)
    nH = len(instance.discounts)
    by_rate = sorted(range(nH), key=lambda j: instance.discounts[j])
    options = []
    for slot in offered_slots:
        pick = None
        for j in by_rate:
            oid = 1 + slot * nH + j
            if rates[oid, customer] > 0.5:
                pick = oid
                break
        if pick is None:
            pick = 1 + slot * nH + by_rate[-1]
        options.append(pick)
    return options


def rfts(
    instance: Instance,
    scen: ScenarioSet,
    zeta: int = 1,
    seed: int = 0,
    router=None,
    threads: int | None = None,
) -> evaluation.Solution:
    """Build and evaluate the constructive solution."""
    clusters = choose_clusters(instance, zeta=zeta, seed=seed)
    rates = win_rates(instance, scen)
    nH = len(instance.discounts)
    gamma = np.zeros((instance.n_customers, instance.n_options), dtype=np.int8)
    gamma[:, 0] = 1
    for cluster in clusters:
        route = nearest_neighbor_route(cluster, instance)
        windows = forward_backward_windows(route, instance)
        for c, (lo, hi) in windows.items():
            for oid in assign_discounts(c, range(lo, hi + 1), scen, instance, rates):
                gamma[c, oid] = 1
    _pad_to_floor(gamma, instance, rates)
    assortment = Assortment(gamma)
    assortment.validate(instance)
    return evaluation.evaluate(assortment, instance, scen, router=router, threads=threads)


def _pad_to_floor(gamma: np.ndarray, instance: Instance, rates: np.ndarray):
    """Top up customers below the option floor with the best remaining slots."""
    nH = len(instance.discounts)
    for n in range(instance.n_customers):
        while gamma[n].sum() < instance.min_options:
            offered_slots = {
                instance.catalog[i].slot for i in np.where(gamma[n] == 1)[0] if i != 0
            }
            candidates = [
                (slot, int(1 + slot * nH + np.argmax(rates[1 + slot * nH : 1 + (slot + 1) * nH, n])))
                for slot in range(instance.n_slots)
                if slot not in offered_slots
            ]
            if not candidates:
                break
            slot, oid = max(candidates, key=lambda t: (rates[t[1], n], -t[0]))
            gamma[n, oid] = 1
