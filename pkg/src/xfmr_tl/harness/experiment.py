"""End-to-end experiment: source stage, target stage, optional matched grid, tables."""
from __future__ import annotations

import csv
import json
import logging
import shutil
from pathlib import Path

from .plan import ExperimentPlan
from .runner import ResultRecord, Runner, record_to_dict
from .tables import (best_ri, compute_ri_table, data_reduction_check, records_sorted,
                     ri_lookup, source_table)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["grid", "target_density", "source_density", "seed", "matched",
                  "r2_val", "r2_test", "ri_pct"]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])


def history_name(grid, matched, target_density, source_density, seed) -> str:
    """File name of a run's history under ``histories/``; report relies on it."""
    m = "m" if matched else "n"
    return f"{grid}__{m}__td{target_density!r}__sd{source_density!r}__s{seed}.csv"


def results_rows(records: list[ResultRecord]) -> list[dict]:
    ri = ri_lookup(records)
    rows = []
    for r in records_sorted(records):
        rows.append({"grid": r.grid, "target_density": r.target_density,
                     "source_density": r.source_density, "seed": r.seed,
                     "matched": r.matched, "r2_val": r.r2_val, "r2_test": r.r2_test,
                     "ri_pct": ri.get(r.cell)})
    return rows


def read_results(path) -> list[ResultRecord]:
    """Parse ``results.csv`` back into records (status is failed where R^2 is blank)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            r2v = float(row["r2_val"]) if row["r2_val"] else None
            r2t = float(row["r2_test"]) if row["r2_test"] else None
            out.append(ResultRecord(
                grid=row["grid"], target_density=float(row["target_density"]),
                source_density=float(row["source_density"]), seed=int(row["seed"]),
                matched=row["matched"] in ("1", "True", "true"), r2_val=r2v, r2_test=r2t,
                status="ok" if r2t is not None else "failed"))
    return out


def run_experiment(plan: ExperimentPlan) -> dict:
    """Run the whole plan and write every artifact into ``plan.out_dir``.

    Returns a summary dict with the record list, table rows and failure count.
    """
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = Runner(plan)
    journal = out / "records.jsonl"
    journal.write_text("")

    def log_records(recs):
        with open(journal, "a") as fh:
            for r in recs:
                fh.write(json.dumps(record_to_dict(r), sort_keys=True) + "\n")

    log.info("source stage: %s at densities %s", plan.source.name, plan.source_densities)
    models, source_rows = runner.run_source_stage()
    records = runner.run_target_stage(models)
    log_records(records)
    if plan.matched_grid:
        log.info("matched-grid variant")
        m_records, m_rows = runner.run_matched_grid_variant()
        log_records(m_records)
        records += m_records
        source_rows += m_rows

    hist_dir = out / "histories"
    hist_dir.mkdir(exist_ok=True)
    for r in records:
        if r.history:
            shutil.copyfile(r.history, hist_dir / history_name(
                r.grid, r.matched, r.target_density, r.source_density, r.seed))

    rows = results_rows(records)
    write_csv(out / "results.csv", rows, RESULT_COLUMNS)
    ri_table = compute_ri_table(records)
    best = best_ri(records)
    reduction = (data_reduction_check(records, plan.reduction_factor, plan.reduction_density)
                 if plan.data_reduction else [])
    write_csv(out / "ri_table.csv", ri_table,
              ["grid", "matched", "target_density", "source_density", "ri_mean", "ri_min",
               "ri_max", "n_seeds", "n_defined"])
    write_csv(out / "best_ri.csv", best,
              ["grid", "matched", "target_density", "best_ri", "best_source_density"])
    write_csv(out / "data_reduction.csv", reduction,
              ["grid", "transfer_density", "baseline_density", "best_source_density",
               "r2_transfer", "r2_baseline", "passed"])
    write_csv(out / "source_r2.csv", source_table(source_rows),
              ["grid", "matched", "source_density", "seed", "r2_val", "r2_test"])
    failed = sum(r.status != "ok" for r in records)
    return {"records": records, "ri_table": ri_table, "best_ri": best,
            "data_reduction": reduction, "source_r2": source_rows, "failed": failed,
            "jobs_run": runner.jobs_run}
