import csv
from dataclasses import replace

import numpy as np
import pytest

from xfmr_tl import surrogate
from xfmr_tl.harness import (ExperimentPlan, PlanError, ResultRecord, Runner, best_ri,
                             compute_ri_table, data_reduction_check, load_plan, run_experiment)
from xfmr_tl.harness import runner as runner_mod
from xfmr_tl.harness.experiment import RESULT_COLUMNS, history_name, read_results
from xfmr_tl.harness.runner import read_history
from xfmr_tl.nn import TrainConfig
from conftest import tiny_spec

TINY_TRAIN = TrainConfig(epochs=2, hidden=8, batch_size=64, decay_start_epoch=1, decay_every=1)


def tiny_plan(tmp_path, **kw):
    techs = surrogate.load_profiles()
    base = dict(
        source=tiny_spec((3, 2, 2, 5, 5), tech="src45_oaob_30g", name="src"),
        targets=[tiny_spec((3, 2, 2, 5, 5), name="tgt")],
        techs=techs, source_densities=[0.5, 1.0], target_densities=[0.05, 1.0], seeds=[0],
        matched_grid=False, data_reduction=False, train=TINY_TRAIN, out_dir=tmp_path / "out",
    )
    base.update(kw)
    return ExperimentPlan(**base)


@pytest.fixture
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv("XFMR_CACHE_DIR", str(tmp_path / "cache"))
    return tmp_path / "cache"


def rec(grid, td, sd, seed, r2, matched=False):
    return ResultRecord(grid, td, sd, seed, matched, r2, r2)


# -- tables: oracles on hand-built records ----------------------------------

def test_ri_pairs_same_seed_and_averages():
    records = [rec("g", 0.01, 0.0, 0, 0.5), rec("g", 0.01, 0.0, 1, 0.6),
               rec("g", 0.01, 0.25, 0, 0.75), rec("g", 0.01, 0.25, 1, 0.6)]
    (row,) = compute_ri_table(records)
    assert row["ri_mean"] == pytest.approx(25.0)  # (50 + 0) / 2
    assert (row["ri_min"], row["ri_max"]) == (pytest.approx(0.0), pytest.approx(50.0))
    assert row["n_seeds"] == 2 and row["n_defined"] == 2


def test_ri_undefined_baseline_excluded():
    records = [rec("g", 0.01, 0.0, 0, -0.2), rec("g", 0.01, 0.0, 1, 0.5),
               rec("g", 0.01, 1.0, 0, 0.3), rec("g", 0.01, 1.0, 1, 0.55)]
    (row,) = compute_ri_table(records)
    assert row["n_defined"] == 1 and row["ri_mean"] == pytest.approx(10.0)


def test_best_ri_picks_winner():
    records = [rec("g", 0.01, 0.0, 0, 0.5)]
    records += [rec("g", 0.01, sd, 0, r) for sd, r in [(0.25, 0.7), (0.5, 0.6), (1.0, 0.65)]]
    (row,) = best_ri(records)
    assert row["best_source_density"] == 0.25 and row["best_ri"] == pytest.approx(40.0)


@pytest.mark.parametrize("tr,base,ok", [(0.92, 0.90, True), (0.9, 0.9, True), (0.8, 0.9, False)])
def test_data_reduction_comparison(tr, base, ok):
    records = [rec("g", 0.05, 0.5, 0, tr), rec("g", 0.05, 0.0, 0, 0.1), rec("g", 0.2, 0.0, 0, base)]
    (row,) = data_reduction_check(records)
    assert row["passed"] is ok
    assert (row["transfer_density"], row["baseline_density"]) == (0.05, 0.2)


def test_data_reduction_second_step():
    records = [rec("g", 0.05, 0.5, 0, 0.9), rec("g", 0.2, 0.0, 0, 0.8),
               rec("g", 0.01, 1.0, 0, 0.7), rec("g", 0.05, 0.0, 0, 0.75)]
    rows = data_reduction_check(records)
    assert [(r["transfer_density"], r["baseline_density"], r["passed"]) for r in rows] == [
        (0.05, 0.2, True), (0.01, 0.05, False)]


# -- plans ------------------------------------------------------------------

def test_default_plan_loads():
    plan = load_plan()
    assert len(plan.targets) == 4 and plan.seeds == [0, 1, 2]
    assert plan.source.size == 1_036_800 and all(t.size == 256_000 for t in plan.targets)
    assert plan.baseline_only_densities == [0.2]
    fast = load_plan(fast=True)
    assert fast.train.epochs == 50 and fast.train.hidden == 64


def test_desk_plan_run_count():
    plan = load_plan()
    per_grid = len(plan.target_densities) * (1 + len(plan.source_densities)) * len(plan.seeds)
    assert per_grid * len(plan.targets) == 240


def test_plan_invariants(tmp_path):
    with pytest.raises(PlanError):
        tiny_plan(tmp_path, target_densities=[0.0])
    with pytest.raises(PlanError):
        tiny_plan(tmp_path, seeds=[])


def test_plan_unknown_grid(tmp_path):
    p = tmp_path / "plan.yaml"
    p.write_text("source: nope\ntargets: []\n")
    with pytest.raises(PlanError, match="nope"):
        load_plan(p)


# -- runs -------------------------------------------------------------------

def test_target_stage_counting(tmp_path, cache):
    plan = tiny_plan(tmp_path, source_densities=[0.25, 0.5, 0.75, 1.0], target_densities=[0.01])
    r = Runner(plan)
    models, rows = r.run_source_stage()
    assert sorted(models) == [0.25, 0.5, 0.75, 1.0] and len(rows) == 4
    before = r.jobs_run
    records = r.run_target_stage(models)
    assert r.jobs_run - before == 5 and len(records) == 5
    assert sorted(x.source_density for x in records) == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_single_source_density(tmp_path, cache):
    models, _ = Runner(tiny_plan(tmp_path, source_densities=[1.0])).run_source_stage()
    assert list(models) == [1.0]


def test_experiment_outputs_and_resume(tmp_path, cache):
    plan = tiny_plan(tmp_path, matched_grid=True, data_reduction=True, reduction_density=0.05)
    first = run_experiment(plan)
    out = plan.out_dir
    for name in ("results.csv", "records.jsonl", "ri_table.csv", "best_ri.csv",
                 "data_reduction.csv", "source_r2.csv"):
        assert (out / name).exists(), name
    with open(out / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == RESULT_COLUMNS
    # 2 target densities x 3 runs + one 20% baseline, for each of non-matched and matched
    assert len(rows) == 2 * (2 * 3 + 1)
    assert first["failed"] == 0
    results1 = (out / "results.csv").read_bytes()
    again = run_experiment(plan)
    assert again["jobs_run"] == 0
    assert (out / "results.csv").read_bytes() == results1
    # every record has a history named by convention, one row per epoch
    for r in read_results(out / "results.csv"):
        h = out / "histories" / history_name(r.grid, r.matched, r.target_density,
                                               r.source_density, r.seed)
        assert len(read_history(h)) == plan.train.epochs


def test_worker_pool_same_results(tmp_path, monkeypatch):
    outs = []
    for workers in (1, 2):
        monkeypatch.setenv("XFMR_CACHE_DIR", str(tmp_path / f"cache{workers}"))
        plan = tiny_plan(tmp_path / f"w{workers}", workers=workers)
        run_experiment(plan)
        outs.append((plan.out_dir / "results.csv").read_bytes())
    assert outs[0] == outs[1]


def test_failed_cell_is_recorded(tmp_path, cache, monkeypatch):
    plan = tiny_plan(tmp_path, target_densities=[0.05])
    real = runner_mod.run_job

    def flaky(job):
        if job["init"] is None and job["density"] == 0.05:
            raise RuntimeError("boom")
        return real(job)

    monkeypatch.setattr(runner_mod, "run_job", flaky)
    summary = run_experiment(plan)
    failed = [r for r in summary["records"] if r.status == "failed"]
    assert len(failed) == 1 and "boom" in failed[0].error
    assert len(summary["records"]) == 3
    rows = read_results(plan.out_dir / "results.csv")
    assert len(rows) == 3 and sum(r.status == "failed" for r in rows) == 1


def test_pairing_differs_only_in_init(tmp_path, cache):
    plan = tiny_plan(tmp_path, target_densities=[0.05])
    r = Runner(plan)
    models, _ = r.run_source_stage()
    spec = plan.targets[0]
    path, key = runner_mod.get_dataset(r.root, spec, plan.tech(spec), plan.split_seed)
    base = r._job(path, key, 0.05, 0)
    tr = r._job(path, key, 0.05, 0, models[1.0])
    diff = {k for k in base if base[k] != tr[k]}
    assert diff == {"key", "init"}
