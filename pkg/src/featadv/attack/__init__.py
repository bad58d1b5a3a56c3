from featadv.attack.config import (AttackConfig, LocationDistribution,
                                   SourceDistribution, validate_config_dict)
from featadv.attack.compose import SourceSample, compose_adversarial
from featadv.attack.engine import (AdversarialArtifact, AttackModels,
                                   attack_step_loss, load_artifact,
                                   run_attack, save_artifact)
from featadv.attack.insertion import (apply_channel, apply_region,
                                      channel_count,
                                      extract_generalized_patch, insert_patch,
                                      overlay_generalized_patch, patch_side,
                                      region_side)
from featadv.attack.perturbation import (ChannelPerturbation,
                                         GeneralizedPatchPerturbation,
                                         PatchPerturbation,
                                         PixelPatchPerturbation,
                                         RegionPerturbation,
                                         perturbation_from_tensors)

__all__ = [
    "AttackConfig", "LocationDistribution", "SourceDistribution",
    "validate_config_dict", "SourceSample", "compose_adversarial",
    "AdversarialArtifact", "AttackModels", "attack_step_loss",
    "load_artifact", "run_attack", "save_artifact",
    "apply_channel", "apply_region", "channel_count",
    "extract_generalized_patch", "insert_patch",
    "overlay_generalized_patch", "patch_side", "region_side",
    "ChannelPerturbation", "GeneralizedPatchPerturbation",
    "PatchPerturbation", "PixelPatchPerturbation", "RegionPerturbation",
    "perturbation_from_tensors",
]
