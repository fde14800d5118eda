"""Aggregations over result records: RI per cell, best RI, data-reduction check."""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..metrics import relative_improvement
from .runner import ResultRecord


def _ok(records):
    return [r for r in records if r.status == "ok" and r.r2_test is not None]


def _spread(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, None
    return float(np.mean(vals)), float(min(vals)), float(max(vals))


def baselines(records) -> dict:
    """(grid, matched, target_density, seed) -> non-transfer record."""
    return {(r.grid, r.matched, r.target_density, r.seed): r
            for r in _ok(records) if r.source_density == 0}


def per_seed_ri(records, metric: str = "r2_test") -> list[dict]:
    """RI of every transfer run against the non-transfer run of the same cell and seed."""
    base = baselines(records)
    rows = []
    for r in _ok(records):
        if r.source_density == 0:
            continue
        b = base.get((r.grid, r.matched, r.target_density, r.seed))
        ri = None if b is None else relative_improvement(getattr(r, metric), getattr(b, metric))
        rows.append({"grid": r.grid, "matched": r.matched, "target_density": r.target_density,
                     "source_density": r.source_density, "seed": r.seed, "ri_pct": ri})
    return rows


def compute_ri_table(records, metric: str = "r2_test") -> list[dict]:
    """Seed-averaged RI per (grid, matched, target density, source density).

    Seeds whose baseline R^2 is not positive have no RI and are left out of the
    mean; ``n_defined`` counts the seeds that contributed.
    """
    groups = defaultdict(list)
    for row in per_seed_ri(records, metric):
        groups[(row["grid"], row["matched"], row["target_density"], row["source_density"])].append(
            row["ri_pct"])
    table = []
    for (grid, matched, td, sd), vals in sorted(groups.items()):
        mean, lo, hi = _spread(vals)
        table.append({"grid": grid, "matched": matched, "target_density": td,
                      "source_density": sd, "ri_mean": mean, "ri_min": lo, "ri_max": hi,
                      "n_seeds": len(vals), "n_defined": sum(v is not None for v in vals)})
    return table


def best_ri(records, metric: str = "r2_test") -> list[dict]:
    """Per (grid, matched, target density): the source density with the highest mean RI."""
    groups = defaultdict(list)
    for row in compute_ri_table(records, metric):
        groups[(row["grid"], row["matched"], row["target_density"])].append(row)
    out = []
    for (grid, matched, td), rows in sorted(groups.items()):
        defined = [r for r in rows if r["ri_mean"] is not None]
        best = max(defined, key=lambda r: (r["ri_mean"], -r["source_density"])) if defined else None
        out.append({"grid": grid, "matched": matched, "target_density": td,
                    "best_ri": None if best is None else best["ri_mean"],
                    "best_source_density": None if best is None else best["source_density"]})
    return out


def mean_r2(records, metric: str = "r2_test") -> dict:
    """(grid, matched, target density, source density) -> seed-mean R^2."""
    groups = defaultdict(list)
    for r in _ok(records):
        groups[(r.grid, r.matched, r.target_density, r.source_density)].append(getattr(r, metric))
    return {k: float(np.mean(v)) for k, v in groups.items()}


def best_transfer_r2(records, grid, target_density, matched=False, metric="r2_test"):
    """Highest seed-mean R^2 over source models, with its source density."""
    means = mean_r2(records, metric)
    cands = [(v, k[3]) for k, v in means.items()
             if k[0] == grid and k[1] == matched and k[2] == target_density and k[3] > 0]
    if not cands:
        return None, None
    v, sd = max(cands, key=lambda c: (c[0], -c[1]))
    return v, sd


def data_reduction_check(records, factor: float = 4.0, density: float = 0.05,
                         metric: str = "r2_test") -> list[dict]:
    """Does transfer at ``density`` match non-transfer at ``density * factor``?

    Also reports the analogous comparison one step sparser (density / factor
    against density), skipped where either side is missing.
    """
    means = mean_r2(records, metric)
    grids = sorted({r.grid for r in _ok(records) if not r.matched})
    out = []
    for grid in grids:
        for lo in (density, round(density / 5, 12)):
            hi = round(lo * factor, 12) if lo == density else density
            tr, sd = best_transfer_r2(records, grid, lo, False, metric)
            base = means.get((grid, False, hi, 0.0))
            if tr is None or base is None:
                continue
            out.append({"grid": grid, "transfer_density": lo, "baseline_density": hi,
                        "best_source_density": sd, "r2_transfer": tr, "r2_baseline": base,
                        "passed": bool(tr >= base)})
    return out


def source_table(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (r["matched"], r["grid"], r["source_density"]))


def ri_lookup(records, metric: str = "r2_test") -> dict:
    """cell -> per-seed RI, for filling the ri_pct column of results.csv."""
    return {(r["grid"], r["matched"], r["target_density"], r["source_density"], r["seed"]):
            r["ri_pct"] for r in per_seed_ri(records, metric)}


def records_sorted(records: list[ResultRecord]) -> list[ResultRecord]:
    return sorted(records, key=lambda r: (r.grid, r.matched, r.target_density,
                                          r.source_density, r.seed))
