"""Trainable perturbation containers, one per attack mode.

Each container owns the mode's parameter groups, knows how to project
bounded parameters after an optimizer step, and serializes to/from plain
tensor dicts for artifact storage and replay.
"""

from __future__ import annotations

import torch

from featadv.errors import ConfigurationError


class PatchPerturbation:
    """Generator-parameterized patch: trainable latent + class vector.

    The latent itself is the optimization variable, so no separate bounded
    input-latent delta is kept; a delta would parameterize the same
    coordinates."""

    kind = "patch_latent"

    def __init__(self, z_p: torch.Tensor, y_vec: torch.Tensor):
        self.z_p = z_p.clone().requires_grad_(True)
        self.y_vec = y_vec.clone().requires_grad_(True)

    def parameters(self) -> list[torch.Tensor]:
        return [self.z_p, self.y_vec]

    def project_(self, eps_z: float) -> None:
        pass  # unbounded by design

    def patch_image(self, generator) -> torch.Tensor:
        return generator.generate_from_vector(self.z_p, self.y_vec)[0]

    def to_tensors(self) -> dict[str, torch.Tensor]:
        return {"z_p": self.z_p.detach().clone(),
                "y_vec": self.y_vec.detach().clone()}

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor]) -> "PatchPerturbation":
        return cls(t["z_p"], t["y_vec"])


class PixelPatchPerturbation:
    """Directly trainable pixels through a sigmoid (generator-free control)."""

    kind = "patch_pixel"

    def __init__(self, w: torch.Tensor):
        self.w = w.clone().requires_grad_(True)

    def parameters(self) -> list[torch.Tensor]:
        return [self.w]

    def project_(self, eps_z: float) -> None:
        pass

    def patch_image(self, generator=None) -> torch.Tensor:
        return torch.sigmoid(self.w)

    def to_tensors(self) -> dict[str, torch.Tensor]:
        return {"w": self.w.detach().clone()}

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor]) -> "PixelPatchPerturbation":
        return cls(t["w"])


class _LatentPerturbation:
    """Shared machinery for region/channel: a trainable insertion plus a
    bounded shared delta on the generator's input latent."""

    def __init__(self, insertion: torch.Tensor, delta_z: torch.Tensor | None):
        self.insertion = insertion.clone().requires_grad_(True)
        self.delta_z = (delta_z.clone().requires_grad_(True)
                        if delta_z is not None else None)

    def parameters(self) -> list[torch.Tensor]:
        ps = [self.insertion]
        if self.delta_z is not None:
            ps.append(self.delta_z)
        return ps

    def project_(self, eps_z: float) -> None:
        if self.delta_z is not None:
            with torch.no_grad():
                self.delta_z.clamp_(-eps_z, eps_z)

    def shifted(self, z: torch.Tensor) -> torch.Tensor:
        return z if self.delta_z is None else z + self.delta_z


class RegionPerturbation(_LatentPerturbation):
    """CxSxS replacement block at a fixed spatial offset of one layer."""

    kind = "region"

    def __init__(self, insertion: torch.Tensor, offset: tuple[int, int],
                 layer_id: str, delta_z: torch.Tensor | None = None):
        super().__init__(insertion, delta_z)
        self.offset = (int(offset[0]), int(offset[1]))
        self.layer_id = layer_id

    def to_tensors(self) -> dict[str, torch.Tensor]:
        t = {"insertion": self.insertion.detach().clone(),
             "offset": torch.tensor(self.offset, dtype=torch.float32)}
        if self.delta_z is not None:
            t["delta_z"] = self.delta_z.detach().clone()
        return t

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor], layer_id: str
                     ) -> "RegionPerturbation":
        off = tuple(int(v) for v in t["offset"])
        return cls(t["insertion"], off, layer_id, t.get("delta_z"))


class ChannelPerturbation(_LatentPerturbation):
    """Replacement values for a contiguous channel block, full spatial."""

    kind = "channel"

    def __init__(self, insertion: torch.Tensor, channel_start: int,
                 layer_id: str, delta_z: torch.Tensor | None = None):
        super().__init__(insertion, delta_z)
        self.channel_start = int(channel_start)
        self.layer_id = layer_id

    @property
    def channels(self) -> list[int]:
        return list(range(self.channel_start,
                          self.channel_start + self.insertion.shape[0]))

    def to_tensors(self) -> dict[str, torch.Tensor]:
        t = {"insertion": self.insertion.detach().clone(),
             "channel_start": torch.tensor([self.channel_start],
                                           dtype=torch.float32)}
        if self.delta_z is not None:
            t["delta_z"] = self.delta_z.detach().clone()
        return t

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor], layer_id: str
                     ) -> "ChannelPerturbation":
        return cls(t["insertion"], int(t["channel_start"][0]), layer_id,
                   t.get("delta_z"))


class GeneralizedPatchPerturbation(RegionPerturbation):
    """Region perturbation trained on one fixed generated base image; the
    emitted artifact is the extracted mask + masked pixels."""

    kind = "generalized_patch"

    def __init__(self, insertion: torch.Tensor, offset: tuple[int, int],
                 layer_id: str, base_z: torch.Tensor, base_y: int,
                 delta_z: torch.Tensor | None = None):
        super().__init__(insertion, offset, layer_id, delta_z)
        self.base_z = base_z.detach().clone()
        self.base_y = int(base_y)

    def to_tensors(self) -> dict[str, torch.Tensor]:
        t = super().to_tensors()
        t["base_z"] = self.base_z.clone()
        t["base_y"] = torch.tensor([self.base_y], dtype=torch.float32)
        return t

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor], layer_id: str
                     ) -> "GeneralizedPatchPerturbation":
        off = tuple(int(v) for v in t["offset"])
        return cls(t["insertion"], off, layer_id, t["base_z"],
                   int(t["base_y"][0]), t.get("delta_z"))


def perturbation_from_tensors(kind: str, tensors: dict, layer_id: str | None):
    if kind == "patch_latent":
        return PatchPerturbation.from_tensors(tensors)
    if kind == "patch_pixel":
        return PixelPatchPerturbation.from_tensors(tensors)
    if kind == "region":
        return RegionPerturbation.from_tensors(tensors, layer_id)
    if kind == "channel":
        return ChannelPerturbation.from_tensors(tensors, layer_id)
    if kind == "generalized_patch":
        return GeneralizedPatchPerturbation.from_tensors(tensors, layer_id)
    raise ConfigurationError(f"unknown perturbation kind {kind!r}")
