"""Experiment plans: which grids, densities, seeds and training config to run."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..gridgen import GridSpec, load_grid_specs
from ..nn.train import TrainConfig, fast_config
from ..surrogate import TechnologyProfile, load_profiles

DEFAULT_PLAN = Path(__file__).resolve().parent.parent / "configs" / "desk.yaml"


class PlanError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    source: GridSpec
    targets: list[GridSpec]
    techs: dict[str, TechnologyProfile]
    source_densities: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    target_densities: list[float] = field(default_factory=lambda: [0.005, 0.01, 0.05, 1.0])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    matched_grid: bool = True
    data_reduction: bool = True
    reduction_factor: float = 4.0
    reduction_density: float = 0.05
    split_seed: int = 0
    source_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    fast: bool = False
    out_dir: Path = Path("runs/experiment")
    workers: int = 1

    def __post_init__(self):
        for d in [*self.source_densities, *self.target_densities]:
            if not 0 < d <= 1:
                raise PlanError(f"density {d} outside (0, 1]")
        if not self.seeds:
            raise PlanError("plan needs at least one seed")
        for spec in [self.source, *self.targets]:
            if spec.tech not in self.techs:
                raise PlanError(f"grid {spec.name!r} references unknown technology {spec.tech!r}")

    @property
    def baseline_only_densities(self) -> list[float]:
        """Extra non-transfer densities needed by the data-reduction check."""
        if not self.data_reduction:
            return []
        hi = round(self.reduction_density * self.reduction_factor, 12)
        return [] if hi in self.target_densities or hi > 1 else [hi]

    def tech(self, spec: GridSpec) -> TechnologyProfile:
        return self.techs[spec.tech]


def load_plan(path=None, fast: bool = False, out_dir=None, workers: int | None = None,
              seeds: list[int] | None = None) -> ExperimentPlan:
    """Read a plan YAML; relative ``profiles`` paths resolve against the plan file."""
    path = Path(path or DEFAULT_PLAN)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    profiles = doc.get("profiles")
    if profiles:
        profiles = Path(profiles)
        if not profiles.is_absolute():
            profiles = path.parent / profiles
    techs = load_profiles(profiles)
    grids = load_grid_specs(profiles, fast=fast or bool(doc.get("fast", False)))

    def grid(name):
        try:
            return grids[name]
        except KeyError:
            raise PlanError(f"unknown grid {name!r}; known: {', '.join(sorted(grids))}") from None

    cfg = TrainConfig.from_dict(doc.get("train", {}))
    fast = fast or bool(doc.get("fast", False))
    if fast:
        cfg = fast_config(cfg)
    red = doc.get("data_reduction", {})
    plan = ExperimentPlan(
        source=grid(doc["source"]),
        targets=[grid(n) for n in doc["targets"]],
        techs=techs,
        source_densities=[float(x) for x in doc.get("source_densities", [0.25, 0.5, 0.75, 1.0])],
        target_densities=[float(x) for x in doc.get("target_densities", [0.005, 0.01, 0.05, 1.0])],
        seeds=[int(s) for s in (seeds if seeds is not None else doc.get("seeds", [0, 1, 2]))],
        matched_grid=bool(doc.get("matched_grid", True)),
        data_reduction=bool(red.get("enabled", True)),
        reduction_factor=float(red.get("factor", 4)),
        reduction_density=float(red.get("density", 0.05)),
        split_seed=int(doc.get("split_seed", 0)),
        source_seed=int(doc.get("source_seed", 0)),
        train=cfg,
        fast=fast,
        out_dir=Path(out_dir or doc.get("out_dir", "runs/experiment")),
        workers=int(workers if workers is not None else doc.get("workers", 1)),
    )
    return plan


def with_train(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    return replace(plan, train=replace(plan.train, **changes))
