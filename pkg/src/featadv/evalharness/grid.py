"""Seven-condition ablation grid over the disguise machinery.

Each condition toggles the generator parameterization and the three
disguise regularizer terms; total variation and the transform distribution
stay on everywhere. Attacks run with random target classes until a quota of
successfully disguised artifacts is met (or the attempt cap trips, which
marks the report partial).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import torch

from featadv.attack.config import AttackConfig
from featadv.attack.engine import AttackModels, run_attack, _child_seeds
from featadv.errors import InputError, OptimizationError
from featadv.evalharness.reports import GridReport, write_csv, write_json
from featadv.evalharness.universality import disguise_check
from featadv.regularizers import AblationFlags

GRID_COLUMNS = ("condition", "artifact_id", "disguise", "mean_confidence")


@dataclass(frozen=True)
class AblationCondition:
    name: str
    use_generator: bool
    use_disc_term: bool
    use_entropy_term: bool
    use_patch_xent_term: bool

    def flags(self) -> AblationFlags:
        return AblationFlags(use_generator=self.use_generator,
                             use_disc_term=self.use_disc_term,
                             use_entropy_term=self.use_entropy_term,
                             use_patch_xent_term=self.use_patch_xent_term)


CONDITIONS = (
    AblationCondition("All", True, True, True, True),
    AblationCondition("No Gen", False, True, True, True),
    AblationCondition("No Disc", True, False, True, True),
    AblationCondition("No Ent", True, True, False, True),
    AblationCondition("No Patch X-ent", True, True, True, False),
    AblationCondition("Only Gen", True, False, False, False),
    AblationCondition("Brown17", False, False, False, False),
)

_BY_NAME = {c.name: c for c in CONDITIONS}


def condition_by_name(name: str) -> AblationCondition:
    if name not in _BY_NAME:
        raise InputError(f"unknown ablation condition {name!r}; "
                         f"choose from {[c.name for c in CONDITIONS]}")
    return _BY_NAME[name]


def condition_config(base: AttackConfig, condition: AblationCondition,
                     target_class: int, seed: int) -> AttackConfig:
    """The base job with one condition's flags and a fresh target/seed."""
    return dataclasses.replace(base, ablation_flags=condition.flags(),
                               target_class=target_class, seed=seed)


def ablation_grid(models: AttackModels,
                  conditions: list | None = None, quota: int = 20,
                  attempt_cap: int | None = None, seed: int = 0,
                  base_config: AttackConfig | None = None,
                  out_dir: str | Path | None = None,
                  log=None) -> GridReport:
    """Run the grid. Per condition: draw a random target class, attack, and
    test the feature image's disguise, until `quota` disguised artifacts are
    collected or `attempt_cap` (default 5x quota) attempts are spent."""
    if quota < 0:
        raise InputError("quota must be >= 0")
    conds = [condition_by_name(c) if isinstance(c, str) else c
             for c in (conditions if conditions is not None else CONDITIONS)]
    cap = attempt_cap if attempt_cap is not None else 5 * quota
    base = base_config if base_config is not None else AttackConfig(
        mode="patch", steps=300, batch_size=8, init_search=16)
    victim = models.victim
    cond_seeds = _child_seeds(seed, max(1, len(conds)))

    report = GridReport(quota=quota, attempt_cap=cap, seed=seed)
    for cond, cseed in zip(conds, cond_seeds):
        g = torch.Generator().manual_seed(cseed)
        attempts = disguised = diverged = 0
        confidences: list[float] = []
        while disguised < quota and attempts < cap:
            attempts += 1
            target = int(torch.randint(victim.num_classes, (1,),
                                       generator=g))
            attack_seed = int(torch.randint(0, 2**31 - 1, (1,), generator=g))
            cfg = condition_config(base, cond, target, attack_seed)
            try:
                artifact = run_attack(cfg, models)
            except OptimizationError:
                diverged += 1
                continue
            flag, _, _ = disguise_check(artifact, victim)
            conf = artifact.metrics["mean_target_confidence"]
            report.rows.append({"condition": cond.name,
                                "artifact_id": artifact.artifact_id,
                                "disguise": flag,
                                "mean_confidence": conf})
            if flag:
                disguised += 1
                confidences.append(conf)
            if log:
                log(f"{cond.name}: attempt {attempts} target {target} "
                    f"disguised {disguised}/{quota} conf {conf:.4f}")
        partial = disguised < quota
        report.partial = report.partial or partial
        report.conditions.append({
            "condition": cond.name,
            "flags": cond.flags().to_dict(),
            "attempts": attempts,
            "diverged": diverged,
            "disguised": disguised,
            "disguise_rate": disguised / attempts if attempts else math.nan,
            "mean_confidences": confidences,
            "partial": partial})

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(report.rows, GRID_COLUMNS, out / "grid.csv")
        write_json(report.to_dict(), out / "grid_summary.json")
    return report
