import numpy as np
import pytest

from slotwise.alns import (
    DESTROY_KINDS,
    REPAIR_KINDS,
    SalnsParams,
    customer_profit_contribution,
    destroy,
    local_search,
    repair,
    rrt_accept,
    salns,
    update_weight,
)
from slotwise.evaluation import evaluate, make_router, reevaluate_customers
from slotwise.model import Assortment, BehaviorSpec, sample_scenarios

from conftest import desk_instance, manual_instance, manual_scenarios, random_assortment


def test_rrt_accept_boundaries():
    assert rrt_accept(100.0, 100.0, 5.0)          # equal
    assert rrt_accept(95.0, 100.0, 5.0)           # exactly phi below
    assert not rrt_accept(94.0, 100.0, 5.0)       # beyond phi
    assert rrt_accept(104.0, 100.0, 0.0)          # improvements always pass


def test_update_weight_formula():
    assert update_weight(7.0, 1.0, 99.0) == 7.0
    assert update_weight(7.0, 0.0, 99.0) == 99.0
    assert update_weight(4.0, 0.8, 10.0) == pytest.approx(5.2)


def test_params_guards():
    with pytest.raises(ValueError):
        SalnsParams(theta=1.5)
    with pytest.raises(ValueError):
        SalnsParams(score_best=1.0, score_better=5.0)
    with pytest.raises(ValueError):
        SalnsParams(kappa_max=0.0)


def _evaluated(inst, scen, assortment=None):
    a = assortment or Assortment.full_no_discount(inst)
    return evaluate(a, inst, scen, router=make_router("cw"))


def test_destroy_always_removes_someone():
    inst = desk_instance(5, seed=1)
    scen = sample_scenarios(BehaviorSpec(), inst, 6, seed=0)
    sol = _evaluated(inst, scen)
    rng = np.random.default_rng(3)
    gamma, D = destroy("random", sol, inst, kappa=0.01, rng=rng)
    assert len(D) == 1
    gamma, D = destroy("random", sol, inst, kappa=1.0, rng=rng)
    assert D == list(range(5))
    assert np.all(gamma[:, 0] == 1) and np.all(gamma[D][:, 1:] == 0)


def test_destroy_worst_targets_unprofitable_customer():
    # customer 2 is far away: highest marginal cost, same revenue
    coords = np.array([[5.0, 0.0], [6.0, 0.0], [200.0, 0.0]])
    inst, spec = manual_instance(3, slot_means=[9.0, 9.0, 9.0], coords=coords, fee=40.0)
    from slotwise.model import degenerate_scenarios

    scen = degenerate_scenarios(spec, inst)
    sol = _evaluated(inst, scen)
    contrib = customer_profit_contribution(sol, inst)
    assert np.argmin(contrib) == 2
    _, D = destroy("worst", sol, inst, kappa=0.1, rng=np.random.default_rng(0))
    assert D == [2]


def test_destroy_kinds_cover_all_and_validate():
    inst = desk_instance(6, seed=2)
    scen = sample_scenarios(BehaviorSpec(), inst, 8, seed=1)
    sol = _evaluated(inst, scen)
    for kind in DESTROY_KINDS:
        rng = np.random.default_rng(11)
        gamma, D = destroy(kind, sol, inst, kappa=0.4, rng=rng)
        assert len(D) >= 1
        assert np.all(gamma[:, 0] == 1)
    with pytest.raises(ValueError):
        destroy("nope", sol, inst, 0.2, np.random.default_rng(0))


def test_repair_restores_validity_for_all_kinds():
    inst = desk_instance(6, seed=5)
    scen = sample_scenarios(BehaviorSpec(), inst, 10, seed=3)
    sol = _evaluated(inst, scen)
    for kind in REPAIR_KINDS:
        rng = np.random.default_rng(7)
        gamma, D = destroy("random", sol, inst, kappa=0.5, rng=rng)
        repaired = repair(kind, gamma, D, sol, inst, scen, rng)
        a = Assortment(repaired)
        a.validate(inst)
        counts = a.gamma.sum(axis=1)
        assert np.all(counts >= inst.min_options)
        assert np.all(counts <= inst.n_slots + 1)


def test_repair_discount_adjust_keeps_slots():
    inst = desk_instance(5, seed=9)
    scen = sample_scenarios(BehaviorSpec(), inst, 6, seed=2)
    rng = np.random.default_rng(1)
    sol = _evaluated(inst, scen, random_assortment(inst, rng))
    gamma, D = destroy("random", sol, inst, kappa=0.6, rng=rng)
    repaired = repair("discount_adjust", gamma, D, sol, inst, scen, rng)
    nH = len(inst.discounts)
    for n in D:
        before = {inst.catalog[i].slot for i in np.where(sol.assortment.gamma[n] == 1)[0] if i}
        after = {inst.catalog[i].slot for i in np.where(repaired[n] == 1)[0] if i}
        assert before == after


def test_repair_high_utility_rank_order():
    # slot 0 beats the opt-out in 90% of draws, slot 1 only in 40%
    inst, _ = manual_instance(1, slot_means=[0.0, 0.0], min_options=1)
    R = 10
    beta_time = np.zeros((2, 1, R))
    beta_time[0, 0, :9] = 1.0
    beta_time[0, 0, 9] = -1.0
    beta_time[1, 0, :4] = 1.0
    beta_time[1, 0, 4:] = -1.0
    scen = manual_scenarios(inst, beta_time, np.zeros((1, R)),
                            np.zeros((inst.n_options, 1, R)))
    sol = _evaluated(inst, scen, Assortment.full_no_discount(inst))
    gamma = np.zeros_like(sol.assortment.gamma)
    gamma[:, 0] = 1
    # force a single-slot repair repeatedly: slot 0 must always come first
    for trial in range(5):
        rng = np.random.default_rng(trial)
        repaired = repair("high_utility", gamma.copy(), [0], sol, inst, scen, rng)
        offered = [inst.catalog[i].slot for i in np.where(repaired[0] == 1)[0] if i]
        assert offered[0] == 0


def test_reevaluate_matches_full_evaluate():
    inst = desk_instance(6, seed=13)
    scen = sample_scenarios(BehaviorSpec(), inst, 15, seed=4)
    rng = np.random.default_rng(2)
    sol = _evaluated(inst, scen, random_assortment(inst, rng))
    for _ in range(6):
        new = random_assortment(inst, rng)
        changed = [n for n in range(6)
                   if not np.array_equal(new.gamma[n], sol.assortment.gamma[n])]
        merged = sol.assortment.gamma.copy()
        merged[changed] = new.gamma[changed]
        incremental = reevaluate_customers(sol, Assortment(merged), changed, inst, scen,
                                           router=make_router("cw"))
        full = evaluate(Assortment(merged), inst, scen, router=make_router("cw"))
        assert incremental.profit == full.profit
        assert np.array_equal(incremental.choices.chosen, full.choices.chosen)
        assert np.array_equal(incremental.scenario_costs, full.scenario_costs)


def test_local_search_never_worse_and_respects_floor():
    inst = desk_instance(5, seed=21)
    scen = sample_scenarios(BehaviorSpec(), inst, 10, seed=5)
    rng = np.random.default_rng(9)
    sol = _evaluated(inst, scen, random_assortment(inst, rng))
    improved = local_search(sol, inst, scen, rng, router=make_router("cw"))
    assert improved.profit >= sol.profit
    improved.assortment.validate(inst)
    assert np.all(improved.assortment.gamma.sum(axis=1) >= inst.min_options)


def test_salns_smoke_terminates_fast():
    inst = desk_instance(3, seed=2)
    scen = sample_scenarios(BehaviorSpec(), inst, 5, seed=1)
    trace = []
    params = SalnsParams(window=1, epsilon=100.0)
    sol = salns(inst, scen, params, seed=0, trace=trace.append)
    assert len(trace) <= 5
    sol.assortment.validate(inst)


def test_salns_deterministic_and_improving():
    inst = desk_instance(5, seed=6)
    scen = sample_scenarios(BehaviorSpec(), inst, 10, seed=3)
    params = SalnsParams(window=30, epsilon=1.0)
    trace1, trace2 = [], []
    from slotwise.constructive import rfts

    base = rfts(inst, scen, seed=4)
    a = salns(inst, scen, params, seed=4, trace=trace1.append)
    b = salns(inst, scen, params, seed=4, trace=trace2.append)
    assert a.profit == b.profit
    assert np.array_equal(a.assortment.gamma, b.assortment.gamma)
    assert trace1 == trace2
    assert a.profit >= base.profit - 1e-9
    bests = [t["best_profit"] for t in trace1]
    assert all(y >= x for x, y in zip(bests, bests[1:]))


def test_salns_hill_climbs_with_zero_phi():
    inst = desk_instance(4, seed=11)
    scen = sample_scenarios(BehaviorSpec(), inst, 8, seed=2)
    trace = []
    params = SalnsParams(window=25, epsilon=1.0, phi0=0.0, phi_min=0.0)
    salns(inst, scen, params, seed=1, trace=trace.append)
    incumbents = [t["incumbent_profit"] for t in trace]
    assert all(y >= x - 1e-12 for x, y in zip(incumbents, incumbents[1:]))


def test_salns_trace_fields_and_weights():
    inst = desk_instance(4, seed=1)
    scen = sample_scenarios(BehaviorSpec(), inst, 5, seed=8)
    trace = []
    salns(inst, scen, SalnsParams(window=10, epsilon=5.0), seed=2, trace=trace.append)
    rec = trace[0]
    for key in ("iteration", "destroy", "repair", "candidate_profit", "accepted",
                "outcome", "phi", "local_search"):
        assert key in rec
    assert rec["destroy"] in DESTROY_KINDS and rec["repair"] in REPAIR_KINDS
