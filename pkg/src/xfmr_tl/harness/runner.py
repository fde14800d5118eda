"""Source / target training stages with content-hash caching.

Every training run is a job described by a plain dict, so it can run in a
worker process.  A job's cache key hashes everything that determines its
output (dataset identity, density, seed, config, init checkpoint bytes), which
makes reruns of an interrupted plan pick up where they stopped.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .. import __version__
from ..gridgen import GridSpec, load_dataset, prepare, save_dataset, subsample_density
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.train import TrainConfig, evaluate, train
from ..surrogate import TechnologyProfile
from .plan import ExperimentPlan

log = logging.getLogger(__name__)

CACHE_ENV = "XFMR_CACHE_DIR"


@dataclass
class ResultRecord:
    grid: str
    target_density: float
    source_density: float  # 0 = trained on target data only
    seed: int
    matched: bool
    r2_val: float | None
    r2_test: float | None
    history: str = ""
    status: str = "ok"
    error: str = ""

    @property
    def cell(self) -> tuple:
        return (self.grid, self.matched, self.target_density, self.source_density, self.seed)


def digest(obj) -> str:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.blake2b(raw, digest_size=12).hexdigest()


def file_digest(path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=12).hexdigest()


def cache_root(plan: ExperimentPlan) -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path(plan.out_dir) / "cache"


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def get_dataset(root: Path, spec: GridSpec, tech: TechnologyProfile, split_seed: int):
    """Generated, split and standardized dataset, cached on disk. Returns (path, key)."""
    key = digest({"spec": spec.to_dict(), "tech": tech.to_dict(), "split_seed": split_seed,
                  "v": __version__})
    path = root / "datasets" / f"{spec.name}-{key}.xgrd"
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        ds = prepare(spec, tech, split_seed)
        tmp = path.with_name(path.name + ".tmp")
        save_dataset(ds, tmp)
        os.replace(tmp, path)
    return path, key


def job_key(dataset_key: str, density: float, cfg: TrainConfig, init_path) -> str:
    return digest({
        "dataset": dataset_key,
        "density": density,
        "config": cfg.to_dict(),
        "init": file_digest(init_path) if init_path else None,
        "v": __version__,
    })


def run_job(job: dict) -> dict:
    """Train one model (or load it from cache) and return its metrics."""
    root = Path(job["cache"])
    runs = root / "runs"
    key = job["key"]
    result_path = runs / f"{key}.json"
    if result_path.exists():
        return json.loads(result_path.read_text())
    runs.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig.from_dict(job["config"])
    ds = load_dataset(job["dataset"])
    ds = subsample_density(ds, job["density"], cfg.seed)
    init = load_checkpoint(job["init"]) if job.get("init") else None
    ckpt, history = train(ds, cfg, init=init, provenance={"job": key})
    model = ckpt.to_model()
    result = {
        "key": key,
        "r2_val": evaluate(model, ds, "val").mean,
        "r2_test": evaluate(model, ds, "test").mean,
        "checkpoint": str(runs / f"{key}.xckp"),
        "history": str(runs / f"{key}.history.csv"),
    }
    tmp = runs / f"{key}.xckp.tmp"
    save_checkpoint(ckpt, tmp)
    os.replace(tmp, result["checkpoint"])
    _atomic_write(Path(result["history"]), history_csv(history).encode())
    _atomic_write(result_path, json.dumps(result, sort_keys=True).encode())
    return result


def safe_run_job(job: dict) -> dict:
    try:
        return run_job(job)
    except Exception as exc:  # one bad cell must not sink the plan
        log.error("job %s failed: %s", job.get("key"), exc)
        return {"key": job.get("key"), "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc()}


def history_csv(history: list[dict]) -> str:
    lines = ["epoch,lr,train_loss,val_r2"]
    for h in history:
        lines.append(f"{h['epoch']},{h['lr']!r},{h['train_loss']!r},{h['val_r2']!r}")
    return "\n".join(lines) + "\n"


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "lr": float(r["lr"]),
                 "train_loss": float(r["train_loss"]), "val_r2": float(r["val_r2"])}
                for r in csv.DictReader(fh)]


def execute(jobs: list[dict], workers: int = 1) -> list[dict]:
    """Run jobs in order; results come back in job order for any pool size."""
    if workers <= 1 or len(jobs) <= 1:
        return [safe_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(safe_run_job, jobs))


class Runner:
    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.root = cache_root(plan)
        self.root.mkdir(parents=True, exist_ok=True)
        self.jobs_run = 0

    def _cfg(self, seed: int) -> TrainConfig:
        return replace(self.plan.train, seed=seed)

    def _job(self, ds_path, ds_key, density, seed, init_path=None) -> dict:
        cfg = self._cfg(seed)
        return {
            "key": job_key(ds_key, density, cfg, init_path),
            "cache": str(self.root),
            "dataset": str(ds_path),
            "density": density,
            "config": cfg.to_dict(),
            "init": str(init_path) if init_path else None,
        }

    def _execute(self, jobs):
        fresh = sum(not (self.root / "runs" / f"{j['key']}.json").exists() for j in jobs)
        self.jobs_run += fresh
        return execute(jobs, self.plan.workers)

    def run_source_stage(self, source: GridSpec | None = None, matched: bool = False):
        """Train one source model per source density.

        Returns (density -> checkpoint path, list of source R^2 rows).
        """
        plan = self.plan
        spec = source or plan.source
        ds_path, ds_key = get_dataset(self.root, spec, plan.tech(spec), plan.split_seed)
        jobs = [self._job(ds_path, ds_key, d, plan.source_seed) for d in plan.source_densities]
        results = self._execute(jobs)
        models, rows = {}, []
        for d, res in zip(plan.source_densities, results):
            if "error" in res:
                raise RuntimeError(f"source model at density {d} failed: {res['error']}")
            models[d] = res["checkpoint"]
            rows.append({"grid": spec.name, "matched": matched, "source_density": d,
                         "seed": plan.source_seed, "r2_val": res["r2_val"],
                         "r2_test": res["r2_test"]})
        return models, rows

    def run_target_stage(self, source_models: dict, matched: bool = False,
                         targets: list[GridSpec] | None = None) -> list[ResultRecord]:
        """Non-transfer and transfer runs for every (target grid, density, seed)."""
        plan = self.plan
        cells, jobs = [], []
        for spec in targets or plan.targets:
            ds_path, ds_key = get_dataset(self.root, spec, plan.tech(spec), plan.split_seed)
            for td in plan.target_densities:
                for seed in plan.seeds:
                    cells.append((spec.name, td, 0.0, seed))
                    jobs.append(self._job(ds_path, ds_key, td, seed))
                    for sd, ckpt in sorted(source_models.items()):
                        cells.append((spec.name, td, sd, seed))
                        jobs.append(self._job(ds_path, ds_key, td, seed, ckpt))
            for td in plan.baseline_only_densities:
                for seed in plan.seeds:
                    cells.append((spec.name, td, 0.0, seed))
                    jobs.append(self._job(ds_path, ds_key, td, seed))
        results = self._execute(jobs)
        records = []
        for (grid, td, sd, seed), res in zip(cells, results):
            if "error" in res:
                records.append(ResultRecord(grid, td, sd, seed, matched, None, None,
                                            status="failed", error=res["error"]))
            else:
                records.append(ResultRecord(grid, td, sd, seed, matched, res["r2_val"],
                                            res["r2_test"], history=res["history"]))
        return records

    def run_matched_grid_variant(self):
        """Source models regenerated on each target's sweep values, then transfer."""
        plan = self.plan
        records, source_rows = [], []
        for spec in plan.targets:
            src = spec.with_tech(plan.source.tech, name=f"matched_{spec.name}")
            models, rows = self.run_source_stage(src, matched=True)
            source_rows += rows
            records += self.run_target_stage(models, matched=True, targets=[spec])
        return records, source_rows


def record_to_dict(r: ResultRecord) -> dict:
    return asdict(r)
