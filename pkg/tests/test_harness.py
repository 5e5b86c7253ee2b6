import json
import os

import numpy as np
import pytest

from slotwise.alns import SalnsParams
from slotwise.experiments import (
    ExperimentReport,
    run_in_sample,
    run_operator_stats,
    run_out_of_sample,
    run_sensitivity_sweep,
    run_value_of_ml,
    run_vss_evpi,
)
from slotwise.model import BehaviorSpec, sample_scenarios
from slotwise import plots

from conftest import desk_instance

FAST = SalnsParams(window=15, epsilon=2.0)


def test_in_sample_reference_identity_and_std():
    inst = desk_instance(3, seed=1)
    spec = BehaviorSpec()
    rep = run_in_sample(inst, spec, R_list=[5, 10], reference_R=10, seeds=[3],
                        params=FAST)
    by_R = {r["R"]: r for r in rep.records}
    # same R, same seed, same solver: zero deviation by construction
    assert by_R[10]["deviation_pct"] == 0.0
    assert by_R[5]["deviation_pct"] >= 0.0
    # a single seed means zero spread
    assert rep.aggregates["std"]["seed"] == 0.0
    with pytest.raises(ValueError):
        run_in_sample(inst, spec, R_list=[5, 50], reference_R=10, seeds=[0])


def test_out_of_sample_same_seed_zero_deviation():
    inst = desk_instance(3, seed=2)
    spec = BehaviorSpec()
    rep = run_out_of_sample(inst, spec, R=8, n_redraws=1, seeds=[5], params=FAST,
                            redraw_seeds=[5])
    assert rep.records[0]["deviation_pct"] == 0.0
    rep2 = run_out_of_sample(inst, spec, R=8, n_redraws=2, seeds=[5], params=FAST)
    assert all(r["deviation_pct"] >= 0.0 for r in rep2.records)
    assert len(rep2.records) == 2


def test_vss_evpi_runner_ratio_bounds():
    spec = BehaviorSpec()
    insts = [desk_instance(2, seed=s) for s in (11, 12)]
    rep = run_vss_evpi(insts, spec, R=4, seeds=[0, 1], cap=2)
    assert len(rep.records) == 4
    for r in rep.records:
        assert r["vss"] >= 0.0 and r["evpi"] >= 0.0
        assert 0.0 <= r["vss_share_pct"] <= 100.0


def test_value_of_ml_zero_when_models_coincide():
    inst = desk_instance(2, seed=3)
    spec = BehaviorSpec().as_mnl()  # "heterogeneous" spec already degenerate
    rep = run_value_of_ml(inst, spec, R=5, seeds=[1, 2], cap=2)
    for r in rep.records:
        assert r["value_of_ml_pct"] == pytest.approx(0.0, abs=1e-9)


def test_value_of_ml_nonnegative_under_exact():
    inst = desk_instance(2, seed=4)
    spec = BehaviorSpec()
    rep = run_value_of_ml(inst, spec, R=6, seeds=[0, 1, 2], cap=2)
    for r in rep.records:
        assert r["ml_profit"] >= r["mnl_assortment_profit"] - 1e-9
        assert r["value_of_ml_pct"] >= -1e-9


def test_sweep_extremes():
    inst = desk_instance(3, seed=5)
    spec = BehaviorSpec()
    rep = run_sensitivity_sweep(inst, spec, time_grid=[8.0], price_grid=[-10.0, 0.0],
                                R=300, seed=2, optimize=False)
    by_price = {r["price_mean"]: r for r in rep.records}
    # punitive price sensitivity drives everyone to opt out
    assert by_price[-10.0]["coverage_no_policy_pct"] == 0.0
    # price-blind customers with huge slot taste never opt out
    assert by_price[0.0]["coverage_no_policy_pct"] == 100.0


def test_sweep_optimized_column_present():
    inst = desk_instance(3, seed=6)
    rep = run_sensitivity_sweep(inst, BehaviorSpec(), [0.5], [-0.05], R=6, seed=1,
                                optimize=True, params=FAST)
    assert "coverage_optimized_pct" in rep.records[0]
    assert "profit_optimized" in rep.records[0]


def test_operator_stats_accounting():
    inst = desk_instance(4, seed=7)
    rep = run_operator_stats(inst, BehaviorSpec(), R=5, seeds=[0], params=FAST)
    roles = {r["role"] for r in rep.records}
    assert roles == {"destroy", "repair"}
    total_uses = sum(r["uses"] for r in rep.records if r["role"] == "destroy")
    assert total_uses >= 15  # one destroy pick per iteration
    for r in rep.records:
        assert r["uses"] == r["best"] + r["better"] + r["accepted"] + r["rejected"]


def test_report_round_trips(tmp_path):
    inst = desk_instance(3, seed=8)
    rep = run_in_sample(inst, BehaviorSpec(), [5], 8, seeds=[0, 1], params=FAST)
    assert ExperimentReport.from_json(rep.to_json()).to_json() == rep.to_json()
    back = ExperimentReport.from_csv_text(rep.to_csv_text())
    assert back.kind == rep.kind and back.instances == rep.instances
    assert back.records == rep.records
    assert back.aggregates == rep.aggregates  # recomputed from records
    paths = rep.save(tmp_path / "r")
    assert os.path.exists(paths["json"]) and os.path.exists(paths["csv"])


def test_reports_reproducible_modulo_timing():
    inst = desk_instance(3, seed=9)
    spec = BehaviorSpec()
    a = run_in_sample(inst, spec, [4], 6, seeds=[2], params=FAST)
    b = run_in_sample(inst, spec, [4], 6, seeds=[2], params=FAST)
    drop = ("wall_ms", "reference_wall_ms")
    clean = lambda recs: [{k: v for k, v in r.items() if k not in drop} for r in recs]
    assert clean(a.records) == clean(b.records)


def test_every_report_kind_renders(tmp_path):
    inst = desk_instance(3, seed=10)
    spec = BehaviorSpec()
    reports = [
        run_in_sample(inst, spec, [4], 6, seeds=[0], params=FAST),
        run_out_of_sample(inst, spec, R=5, n_redraws=1, seeds=[0], params=FAST),
        run_vss_evpi([desk_instance(2, seed=1)], spec, R=3, seeds=[0], cap=2),
        run_value_of_ml(desk_instance(2, seed=2), spec, R=3, seeds=[0], cap=2),
        run_sensitivity_sweep(inst, spec, [0.5], [-0.05, -0.02], R=20, seed=0,
                              optimize=False),
        run_operator_stats(inst, spec, R=4, seeds=[0], params=FAST),
    ]
    for rep in reports:
        out = plots.render(rep, str(tmp_path / f"{rep.kind}.png"))
        assert os.path.getsize(out) > 0
