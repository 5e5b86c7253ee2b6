"""Per-scenario capacitated routing with slot time windows.

Three construction heuristics (savings, savings + local search, cluster
first / route second) plus a desk-scale exact solver. All of them speak the
same contract: a list of :class:`ServiceRequest` in, a :class:`RoutingPlan`
out. Waiting at a customer until their slot opens is allowed; a route is
infeasible only when an arrival would exceed a window's upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import kmeans
from .model import Instance


class InfeasibleRoutingError(RuntimeError):
    """Raised when a request set admits no feasible plan at all."""


@dataclass(frozen=True)
class ServiceRequest:
    customer: int
    lower: float
    upper: float
    demand: float
    service_time: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("request window must have lower < upper")


@dataclass
class RoutingPlan:
    """Routes (customer ids, depot legs implicit), arrival times and costs."""

    routes: list
    arrivals: dict
    travel_cost: float
    vehicles_used: int
    total_cost: float
    feasible: bool = True

    def to_json(self) -> dict:
        return {
            "routes": [list(r) for r in self.routes],
            "arrivals": {str(c): t for c, t in self.arrivals.items()},
            "travel_cost": self.travel_cost,
            "vehicles_used": self.vehicles_used,
            "total_cost": self.total_cost,
            "feasible": self.feasible,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RoutingPlan":
        return cls(
            routes=[list(r) for r in doc["routes"]],
            arrivals={int(c): t for c, t in doc["arrivals"].items()},
            travel_cost=doc["travel_cost"],
            vehicles_used=doc["vehicles_used"],
            total_cost=doc["total_cost"],
            feasible=doc.get("feasible", True),
        )


_EPS = 1e-9


def schedule_route(sequence, requests, instance: Instance):
    """Forward schedule of one route starting at the depot at time 0.

    Arrival at each stop is ``max(previous departure + travel, window
    lower)``; returns the arrival times, or None if any arrival exceeds its
    window's upper bound.
    """
    req = _request_map(requests)
    tt = instance.travel_time
    arrivals = np.empty(len(sequence))
    prev_node = 0
    t = 0.0
    for k, c in enumerate(sequence):
        r = req[c]
        arr = t + tt[prev_node, c + 1]
        if arr < r.lower:
            arr = r.lower
        if arr > r.upper + _EPS:
            return None
        arrivals[k] = arr
        t = arr + r.service_time
        prev_node = c + 1
    return arrivals


def _request_map(requests):
    if isinstance(requests, dict):
        return requests
    return {r.customer: r for r in requests}


def _route_travel_cost(sequence, cost: np.ndarray) -> float:
    total = 0.0
    prev = 0
    for c in sequence:
        total += cost[prev, c + 1]
        prev = c + 1
    return total + cost[prev, 0]


def _assemble_plan(routes, requests, instance: Instance) -> RoutingPlan:
    req = _request_map(requests)
    routes = [list(r) for r in routes if r]
    arrivals = {}
    travel = 0.0
    for route in routes:
        arr = schedule_route(route, req, instance)
        if arr is None:
            raise AssertionError(f"internal error: assembled infeasible route {route}")
        travel += _route_travel_cost(route, instance.travel_cost)
        for c, a in zip(route, arr):
            arrivals[c] = float(a)
    vehicles = len(routes)
    return RoutingPlan(
        routes=routes,
        arrivals=arrivals,
        travel_cost=travel,
        vehicles_used=vehicles,
        total_cost=travel + vehicles * instance.vehicle_cost,
        feasible=vehicles <= instance.fleet_size,
    )


def empty_plan() -> RoutingPlan:
    return RoutingPlan(routes=[], arrivals={}, travel_cost=0.0, vehicles_used=0,
                       total_cost=0.0, feasible=True)


def singleton_plan_cost(requests, instance: Instance) -> float:
    """Cost of the naive one-route-per-customer plan (used as a penalty scale)."""
    cost = instance.travel_cost
    total = 0.0
    for r in _request_map(requests).values():
        total += cost[0, r.customer + 1] + cost[r.customer + 1, 0]
        total += instance.vehicle_cost
    return total


def _check_singletons(req, instance: Instance):
    for c, r in req.items():
        if schedule_route([c], req, instance) is None:
            raise InfeasibleRoutingError(
                f"customer {c}: window [{r.lower}, {r.upper}] unreachable from the depot"
            )


def cw_solve(requests, instance: Instance) -> RoutingPlan:
    """Savings construction: start from singleton routes, then apply merges in
    descending savings order whenever both endpoints are route-terminal and
    capacity and the merged schedule stay feasible."""
    req = _request_map(requests)
    if not req:
        return empty_plan()
    _check_singletons(req, instance)
    custs = sorted(req)
    cost = instance.travel_cost

    savings = []
    for a_idx, m in enumerate(custs):
        for n in custs[a_idx + 1 :]:
            s = cost[0, m + 1] + cost[0, n + 1] - cost[m + 1, n + 1]
            if s > _EPS:
                savings.append((s, m, n))
    savings.sort(key=lambda t: (-t[0], t[1], t[2]))

    routes = {c: [c] for c in custs}  # route id -> sequence
    owner = {c: c for c in custs}
    load = {c: req[c].demand for c in custs}

    for _, m, n in savings:
        rm, rn = owner[m], owner[n]
        if rm == rn:
            continue
        if load[rm] + load[rn] > instance.capacity + _EPS:
            continue
        seq_m, seq_n = routes[rm], routes[rn]
        if seq_m[-1] == m and seq_n[0] == n:
            merged = seq_m + seq_n
        elif seq_n[-1] == n and seq_m[0] == m:
            merged = seq_n + seq_m
        else:
            continue
        if schedule_route(merged, req, instance) is None:
            continue
        keep, drop = (rm, rn) if merged[0] == routes[rm][0] else (rn, rm)
        routes[keep] = merged
        load[keep] += load[drop]
        for c in routes[drop]:
            owner[c] = keep
        del routes[drop], load[drop]

    ordered = [routes[k] for k in sorted(routes, key=lambda k: routes[k][0])]
    return _assemble_plan(ordered, req, instance)


# ---------------------------------------------------------------------------
# savings + local search (one-point relocate, intra-route two-opt, two-point
# swap, move type picked by an adaptive roulette wheel)
# ---------------------------------------------------------------------------


def _try_routes(routes, req, instance, changed_idx):
    """Feasibility + travel cost of a tentative route set; None if infeasible."""
    for idx in changed_idx:
        if routes[idx] and schedule_route(routes[idx], req, instance) is None:
            return None
    return sum(_route_travel_cost(r, instance.travel_cost) for r in routes if r)


def _best_one_point(routes, loads, req, instance):
    best = None  # (delta, ra, i, rb, j)
    cost = instance.travel_cost
    for ra, seq_a in enumerate(routes):
        for i, c in enumerate(seq_a):
            base_a = _route_travel_cost(seq_a, cost)
            removed = seq_a[:i] + seq_a[i + 1 :]
            for rb, seq_b in enumerate(routes):
                target = removed if rb == ra else seq_b
                if rb != ra and loads[rb] + req[c].demand > instance.capacity + _EPS:
                    continue
                for j in range(len(target) + 1):
                    new_b = target[:j] + [c] + target[j:]
                    if rb == ra:
                        if new_b == seq_a:
                            continue
                        delta = _route_travel_cost(new_b, cost) - base_a
                        if delta < -(_EPS) and schedule_route(new_b, req, instance) is not None:
                            if best is None or delta < best[0] - _EPS:
                                best = (delta, ra, i, rb, j)
                    else:
                        delta = (
                            _route_travel_cost(removed, cost)
                            + _route_travel_cost(new_b, cost)
                            - base_a
                            - _route_travel_cost(seq_b, cost)
                        )
                        if not removed:
                            delta -= instance.vehicle_cost
                        if delta < -(_EPS):
                            if (not removed or schedule_route(removed, req, instance) is not None) \
                                    and schedule_route(new_b, req, instance) is not None:
                                if best is None or delta < best[0] - _EPS:
                                    best = (delta, ra, i, rb, j)
    return best


def _apply_one_point(routes, loads, req, move):
    _, ra, i, rb, j = move
    c = routes[ra][i]
    if ra == rb:
        seq = routes[ra][:i] + routes[ra][i + 1 :]
        routes[ra] = seq[:j] + [c] + seq[j:]
    else:
        routes[ra] = routes[ra][:i] + routes[ra][i + 1 :]
        routes[rb] = routes[rb][:j] + [c] + routes[rb][j:]
        loads[ra] -= req[c].demand
        loads[rb] += req[c].demand


def _best_two_opt(routes, loads, req, instance):
    best = None  # (delta, ridx, i, j)
    cost = instance.travel_cost
    for ridx, seq in enumerate(routes):
        if len(seq) < 3:
            continue
        base = _route_travel_cost(seq, cost)
        for i in range(len(seq) - 1):
            for j in range(i + 1, len(seq)):
                cand = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]
                delta = _route_travel_cost(cand, cost) - base
                if delta < -(_EPS) and schedule_route(cand, req, instance) is not None:
                    if best is None or delta < best[0] - _EPS:
                        best = (delta, ridx, i, j)
    return best


def _apply_two_opt(routes, loads, req, move):
    _, ridx, i, j = move
    seq = routes[ridx]
    routes[ridx] = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]


def _best_two_point(routes, loads, req, instance):
    best = None  # (delta, ra, i, rb, j)
    cost = instance.travel_cost
    for ra in range(len(routes)):
        for rb in range(ra, len(routes)):
            seq_a, seq_b = routes[ra], routes[rb]
            for i in range(len(seq_a)):
                for j in range(len(seq_b)):
                    if ra == rb and j <= i:
                        continue
                    ca, cb = seq_a[i], seq_b[j]
                    if ra != rb:
                        if loads[ra] - req[ca].demand + req[cb].demand > instance.capacity + _EPS:
                            continue
                        if loads[rb] - req[cb].demand + req[ca].demand > instance.capacity + _EPS:
                            continue
                        new_a = seq_a[:i] + [cb] + seq_a[i + 1 :]
                        new_b = seq_b[:j] + [ca] + seq_b[j + 1 :]
                        delta = (
                            _route_travel_cost(new_a, cost)
                            + _route_travel_cost(new_b, cost)
                            - _route_travel_cost(seq_a, cost)
                            - _route_travel_cost(seq_b, cost)
                        )
                        if delta < -(_EPS):
                            if schedule_route(new_a, req, instance) is not None and \
                                    schedule_route(new_b, req, instance) is not None:
                                if best is None or delta < best[0] - _EPS:
                                    best = (delta, ra, i, rb, j)
                    else:
                        new_a = list(seq_a)
                        new_a[i], new_a[j] = new_a[j], new_a[i]
                        delta = _route_travel_cost(new_a, cost) - _route_travel_cost(seq_a, cost)
                        if delta < -(_EPS) and schedule_route(new_a, req, instance) is not None:
                            if best is None or delta < best[0] - _EPS:
                                best = (delta, ra, i, rb, j)
    return best


def _apply_two_point(routes, loads, req, move):
    _, ra, i, rb, j = move
    ca, cb = routes[ra][i], routes[rb][j]
    routes[ra][i] = cb
    routes[rb][j] = ca
    if ra != rb:
        loads[ra] += req[cb].demand - req[ca].demand
        loads[rb] += req[ca].demand - req[cb].demand


_ICW_MOVES = (
    ("one_point", _best_one_point, _apply_one_point),
    ("two_opt", _best_two_opt, _apply_two_opt),
    ("two_point", _best_two_point, _apply_two_point),
)


def icw_solve(requests, instance: Instance, ls_iterations: int = 25, seed: int = 0) -> RoutingPlan:
    """Savings construction followed by roulette-driven local search.

    Each iteration picks a move type (relocate / two-opt / swap) with
    probability proportional to an adaptive weight, applies the best
    improving instance of that move, and rewards the move type on success.
    Never returns a plan costlier than :func:`cw_solve`.
    """
    base = cw_solve(requests, instance)
    if ls_iterations <= 0 or not base.routes:
        return base
    req = _request_map(requests)
    rng = np.random.default_rng(seed)
    routes = [list(r) for r in base.routes]
    loads = [sum(req[c].demand for c in r) for r in routes]
    weights = {name: 1.0 for name, _, _ in _ICW_MOVES}
    stale = set()
    for _ in range(ls_iterations):
        names = [n for n, _, _ in _ICW_MOVES]
        probs = np.array([weights[n] for n in names])
        pick = rng.choice(len(names), p=probs / probs.sum())
        name, finder, applier = _ICW_MOVES[pick]
        move = finder(routes, loads, req, instance)
        if move is None:
            stale.add(name)
            if len(stale) == len(_ICW_MOVES):
                break
            continue
        applier(routes, loads, req, move)
        if any(not r for r in routes):
            keep = [k for k, r in enumerate(routes) if r]
            routes = [routes[k] for k in keep]
            loads = [loads[k] for k in keep]
        weights[name] += 1.0
        stale.clear()
    return _assemble_plan(routes, req, instance)


# ---------------------------------------------------------------------------
# cluster first / route second
# ---------------------------------------------------------------------------


def cfrs_solve(requests, instance: Instance, seed: int = 0, k: int | None = None) -> RoutingPlan:
    """K-means clusters, nearest-neighbor routing inside each cluster.

    Customers that break capacity or time feasibility during construction are
    set aside, then reinserted at the cheapest feasible position of any route
    (or get a fresh route). With ``k=None`` a small range of cluster counts
    is tried and the cheapest plan wins.
    """
    req = _request_map(requests)
    if not req:
        return empty_plan()
    _check_singletons(req, instance)
    total_demand = sum(r.demand for r in req.values())
    k_floor = max(1, int(np.ceil(total_demand / instance.capacity)))
    if k is not None:
        k_values = [min(k, len(req))]
    else:
        k_hi = min(len(req), max(k_floor, instance.fleet_size))
        k_values = list(range(k_floor, k_hi + 1))
    best = None
    for k_try in k_values:
        plan = _cfrs_once(req, instance, seed, k_try)
        if best is None or plan.total_cost < best.total_cost - _EPS:
            best = plan
    return best


def _cfrs_once(req, instance: Instance, seed: int, k: int) -> RoutingPlan:
    custs = sorted(req)
    pts = instance.xy[[c + 1 for c in custs]]
    labels, _ = kmeans(pts, min(k, len(custs)), np.random.default_rng([seed, k, 0xC5]))
    clusters = {}
    for c, lab in zip(custs, labels):
        clusters.setdefault(int(lab), []).append(c)

    tt = instance.travel_time
    routes = []
    excluded = []
    for lab in sorted(clusters, key=lambda l: min(clusters[l])):
        pool = set(clusters[lab])
        seq = []
        load = 0.0
        t = 0.0
        node = 0
        while pool:
            order = sorted(pool, key=lambda c: (tt[node, c + 1], c))
            placed = False
            for c in order:
                r = req[c]
                if load + r.demand > instance.capacity + _EPS:
                    continue
                arr = max(t + tt[node, c + 1], r.lower)
                if arr > r.upper + _EPS:
                    continue
                seq.append(c)
                pool.discard(c)
                load += r.demand
                t = arr + r.service_time
                node = c + 1
                placed = True
                break
            if not placed:
                excluded.extend(sorted(pool))
                break
        if seq:
            routes.append(seq)

    loads = [sum(req[c].demand for c in r) for r in routes]
    for c in excluded:
        best = None  # (delta, ridx, pos)
        for ridx, seq in enumerate(routes):
            if loads[ridx] + req[c].demand > instance.capacity + _EPS:
                continue
            base = _route_travel_cost(seq, instance.travel_cost)
            for pos in range(len(seq) + 1):
                cand = seq[:pos] + [c] + seq[pos:]
                if schedule_route(cand, req, instance) is None:
                    continue
                delta = _route_travel_cost(cand, instance.travel_cost) - base
                if best is None or delta < best[0] - _EPS:
                    best = (delta, ridx, pos)
        if best is not None:
            _, ridx, pos = best
            routes[ridx] = routes[ridx][:pos] + [c] + routes[ridx][pos:]
            loads[ridx] += req[c].demand
        else:
            routes.append([c])  # singleton feasibility checked upfront
            loads.append(req[c].demand)

    return _assemble_plan(routes, req, instance)


# ---------------------------------------------------------------------------
# exact solver (set-partition DP over subsets, time-window Held-Karp tours)
# ---------------------------------------------------------------------------


def exact_cvrptw(requests, instance: Instance, cap: int = 9) -> RoutingPlan:
    """Certified-optimal plan for small request sets.

    Per subset, the cheapest feasible tour is found by dynamic programming
    over (visited set, last stop) states keeping a Pareto frontier of
    (travel cost, earliest departure); a set-partition DP then assembles
    subsets into at most ``fleet_size`` routes minimizing travel plus
    vehicle costs.
    """
    req = _request_map(requests)
    n = len(req)
    if n == 0:
        return empty_plan()
    if n > cap:
        raise ValueError(f"exact solver capped at {cap} requests, got {n}")
    custs = sorted(req)
    lo = np.array([req[c].lower for c in custs])
    hi = np.array([req[c].upper for c in custs])
    srv = np.array([req[c].service_time for c in custs])
    dem = np.array([req[c].demand for c in custs])
    nodes = [c + 1 for c in custs]
    tt = instance.travel_time
    cost = instance.travel_cost

    full = (1 << n) - 1
    mask_demand = np.zeros(full + 1)
    for m in range(1, full + 1):
        j = (m & -m).bit_length() - 1
        mask_demand[m] = mask_demand[m ^ (1 << j)] + dem[j]

    # frontier[mask][last] -> list of (travel_cost, departure, parent)
    frontier = [dict() for _ in range(full + 1)]
    for j in range(n):
        arr = max(tt[0, nodes[j]], lo[j])
        if arr <= hi[j] + _EPS and dem[j] <= instance.capacity + _EPS:
            frontier[1 << j][j] = [(cost[0, nodes[j]], arr + srv[j], None)]

    def _push(states, item):
        c_new, d_new, _ = item
        for c_old, d_old, _ in states:
            if c_old <= c_new + _EPS and d_old <= d_new + _EPS:
                return
        states[:] = [s for s in states if not (c_new <= s[0] + _EPS and d_new <= s[1] + _EPS)]
        states.append(item)

    for mask in range(1, full + 1):
        if mask_demand[mask] > instance.capacity + _EPS:
            continue
        for last, states in frontier[mask].items():
            for idx, (c_cur, dep, _) in enumerate(states):
                for nxt in range(n):
                    if mask & (1 << nxt):
                        continue
                    if mask_demand[mask] + dem[nxt] > instance.capacity + _EPS:
                        continue
                    arr = max(dep + tt[nodes[last], nodes[nxt]], lo[nxt])
                    if arr > hi[nxt] + _EPS:
                        continue
                    bucket = frontier[mask | (1 << nxt)].setdefault(nxt, [])
                    _push(bucket, (c_cur + cost[nodes[last], nodes[nxt]], arr + srv[nxt],
                                   (mask, last, idx)))

    INF = float("inf")
    tour_cost = np.full(full + 1, INF)
    tour_end = {}
    for mask in range(1, full + 1):
        for last, states in frontier[mask].items():
            for idx, (c_cur, dep, _) in enumerate(states):
                total = c_cur + cost[nodes[last], 0]
                if total < tour_cost[mask] - _EPS:
                    tour_cost[mask] = total
                    tour_end[mask] = (last, idx)

    kmax = min(n, instance.fleet_size)
    dp = np.full((full + 1, kmax + 1), INF)
    parent = {}
    dp[0, 0] = 0.0
    for mask in range(1, full + 1):
        lb = 1 << ((mask & -mask).bit_length() - 1)
        sub = mask
        while sub:
            if sub & lb and tour_cost[sub] < INF:
                rest = mask ^ sub
                for kk in range(1, kmax + 1):
                    cand = dp[rest, kk - 1] + tour_cost[sub] + instance.vehicle_cost
                    if cand < dp[mask, kk] - _EPS:
                        dp[mask, kk] = cand
                        parent[(mask, kk)] = sub
            sub = (sub - 1) & mask
    k_best = int(np.argmin(dp[full]))
    if not np.isfinite(dp[full, k_best]):
        raise InfeasibleRoutingError("no feasible plan for the request set")

    routes = []
    mask, kk = full, k_best
    while mask:
        sub = parent[(mask, kk)]
        last, idx = tour_end[sub]
        seq = []
        m, l, i = sub, last, idx
        while True:
            seq.append(custs[l])
            prev = frontier[m][l][i][2]
            if prev is None:
                break
            m, l, i = prev
        routes.append(seq[::-1])
        mask ^= sub
        kk -= 1
    routes.sort(key=lambda r: r[0])
    return _assemble_plan(routes, req, instance)


def validate_plan(plan: RoutingPlan, requests, instance: Instance, check_fleet: bool = True):
    """All feasibility checks in one place; returns a list of violations."""
    req = _request_map(requests)
    problems = []
    seen = []
    for route in plan.routes:
        if not route:
            problems.append("empty route")
            continue
        seen.extend(route)
        load = sum(req[c].demand for c in route if c in req)
        if load > instance.capacity + _EPS:
            problems.append(f"route {route}: load {load} exceeds capacity")
        arr = schedule_route([c for c in route if c in req], req, instance)
        if arr is None:
            problems.append(f"route {route}: schedule violates a time window")
        else:
            for c, a in zip(route, arr):
                if abs(plan.arrivals.get(c, np.nan) - a) > 1e-6:
                    problems.append(f"customer {c}: stored arrival differs from schedule")
    if sorted(seen) != sorted(req):
        problems.append("served customers do not match the request set")
    if len(seen) != len(set(seen)):
        problems.append("a customer appears in more than one route")
    if plan.vehicles_used != len(plan.routes):
        problems.append("vehicles_used does not match the route count")
    if check_fleet and plan.vehicles_used > instance.fleet_size:
        problems.append("fleet bound exceeded")
    travel = sum(_route_travel_cost(r, instance.travel_cost) for r in plan.routes)
    if abs(travel - plan.travel_cost) > 1e-6:
        problems.append("stored travel cost differs from recomputation")
    expected_total = plan.travel_cost + plan.vehicles_used * instance.vehicle_cost
    if abs(expected_total - plan.total_cost) > 1e-6:
        problems.append("total cost is not travel + vehicles * vehicle_cost")
    return problems
