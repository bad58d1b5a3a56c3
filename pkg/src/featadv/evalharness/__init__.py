"""Evaluation protocols for finished attacks: universality, disguise, the
ablation grid, natural baselines, realism proxy, ensemble transfer, class
impressions, copy/paste ranking, and the adversarial-training defense."""

from featadv.evalharness.baselines import (class_impressions, copy_paste_eval,
                                           natural_patch_baseline,
                                           random_crop_baseline)
from featadv.evalharness.blackbox import ensemble_attack, transfer_eval
from featadv.evalharness.defense import (adversarial_training_defense,
                                         build_defense_dataset)
from featadv.evalharness.grid import (CONDITIONS, GRID_COLUMNS,
                                      AblationCondition, ablation_grid,
                                      condition_by_name, condition_config)
from featadv.evalharness.reports import (CopyPasteReport, DefenseReport,
                                         EvalReport, GridReport, write_csv,
                                         write_json)
from featadv.evalharness.universality import (disguise_check, realism_proxy,
                                              universality_eval)

__all__ = [
    "AblationCondition", "CONDITIONS", "CopyPasteReport", "DefenseReport",
    "EvalReport", "GRID_COLUMNS", "GridReport",
    "ablation_grid", "adversarial_training_defense", "build_defense_dataset",
    "class_impressions", "condition_by_name", "condition_config",
    "copy_paste_eval", "disguise_check", "ensemble_attack",
    "natural_patch_baseline", "random_crop_baseline", "realism_proxy",
    "transfer_eval", "universality_eval", "write_csv", "write_json",
]
