"""A(x, delta, t, l): build the adversarial input for one source sample.

This is the single composition definition shared by training, artifact
metrics, and the evaluation harness. The engine calls the same helpers in
batched loops; nothing here owns randomness, all sampled quantities arrive
as arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from featadv.attack import insertion as ins
from featadv.attack.config import AttackConfig
from featadv.attack.perturbation import (
    ChannelPerturbation,
    GeneralizedPatchPerturbation,
    PatchPerturbation,
    PixelPatchPerturbation,
    RegionPerturbation,
)
from featadv.errors import ConfigurationError
from featadv.models.handles import GeneratorHandle, onehot
from featadv.transforms import SampledTransform


@dataclass
class SourceSample:
    """One draw from the source distribution: either a concrete image or a
    generator draw (z, y) to be decoded."""

    image: torch.Tensor | None = None
    z: torch.Tensor | None = None
    y: int | None = None

    def materialize(self, generator: GeneratorHandle | None) -> torch.Tensor:
        if self.image is not None:
            return self.image
        if generator is None:
            raise ConfigurationError("generated source needs a generator")
        with torch.no_grad():
            return generator.generate(self.z, self.y)[0]


def decode_region_family(perturbation, generator: GeneratorHandle,
                         z: torch.Tensor, y: int) -> torch.Tensor:
    """Decode one generated image with the latent insertion applied. The
    shared input-latent delta shifts both the prefix input and the suffix
    conditioning."""
    zs = perturbation.shifted(z)
    y_vec = onehot(torch.tensor([y]), generator.num_classes).to(zs.dtype)
    act = generator.activations_at(zs, y, perturbation.layer_id)
    if isinstance(perturbation, ChannelPerturbation):
        act = ins.apply_channel(act[0], perturbation.insertion,
                                perturbation.channels)[None]
    else:
        act = ins.apply_region(act[0], perturbation.insertion,
                               perturbation.offset)[None]
    return generator.forward_from(perturbation.layer_id, act, (zs, y_vec))[0]


def extract_current_patch(perturbation: GeneralizedPatchPerturbation,
                          generator: GeneratorHandle,
                          smoothing_sigma: float
                          ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(mask, masked_patch, adversarial decode) for the fixed base image."""
    adv = decode_region_family(perturbation, generator,
                               perturbation.base_z, perturbation.base_y)
    with torch.no_grad():
        orig = generator.generate(perturbation.base_z, perturbation.base_y)[0]
    mask, masked = ins.extract_generalized_patch(orig, adv, smoothing_sigma)
    return mask, masked, adv


def compose_adversarial(config: AttackConfig, perturbation, models,
                        sample: SourceSample, t: SampledTransform,
                        location: tuple[int, int]) -> torch.Tensor:
    """Reference single-sample composition for every mode."""
    g = models.generator
    if isinstance(perturbation, (PatchPerturbation, PixelPatchPerturbation)):
        x = sample.materialize(g)
        patch = perturbation.patch_image(g)
        return t.apply(ins.insert_patch(x, patch, location, config.area_fraction))
    if isinstance(perturbation, GeneralizedPatchPerturbation):
        mask, masked, _ = extract_current_patch(perturbation, g,
                                                config.smoothing_sigma)
        x = sample.materialize(g)
        return t.apply(ins.overlay_generalized_patch(x, masked, mask, location))
    if isinstance(perturbation, (RegionPerturbation, ChannelPerturbation)):
        if sample.z is None:
            raise ConfigurationError(f"{config.mode} mode needs generated sources")
        return t.apply(decode_region_family(perturbation, g, sample.z, sample.y))
    raise ConfigurationError(
        f"unsupported perturbation {type(perturbation).__name__}")
