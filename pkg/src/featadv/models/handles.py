"""Inference adapters around the raw networks.

A handle freezes its model (eval mode, no parameter grads) at load time and
is immutable afterwards, so concurrent read-only inference is safe. Inputs
stay differentiable: nothing here runs under no_grad, the attack engine
decides what requires grad.
"""

from __future__ import annotations

from pathlib import Path

import torch
import torch.nn.functional as F

from featadv import tensorio
from featadv.errors import ConfigurationError, InputError
from featadv.models.architectures import (
    ConvClassifier,
    ProjectionDiscriminator,
    SkipZGenerator,
    build_model,
)


def onehot(y: torch.Tensor, num_classes: int) -> torch.Tensor:
    return F.one_hot(y.long(), num_classes).float()


def _freeze(model: torch.nn.Module) -> torch.nn.Module:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


class GeneratorHandle:
    def __init__(self, model: SkipZGenerator, content_hash: str = ""):
        self.model = _freeze(model)
        self.input_dim = model.z_dim
        self.num_classes = model.num_classes
        self.layer_catalog = model.layer_shapes()
        self.output_resolution = 32
        self.content_hash = content_hash
        self._shapes = dict(self.layer_catalog)

    def _check_z(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() == 1:
            z = z[None]
        if z.dim() != 2 or z.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"latent must have {self.input_dim} dims, got shape {tuple(z.shape)}")
        return z

    def _check_yvec(self, y_vec: torch.Tensor, batch: int) -> torch.Tensor:
        if y_vec.dim() == 1:
            y_vec = y_vec[None]
        if y_vec.shape[1] != self.num_classes:
            raise ConfigurationError(
                f"class vector must have {self.num_classes} entries, "
                f"got shape {tuple(y_vec.shape)}")
        if y_vec.shape[0] == 1 and batch > 1:
            y_vec = y_vec.expand(batch, -1)
        return y_vec

    def generate(self, z: torch.Tensor, y: int | torch.Tensor) -> torch.Tensor:
        """Decode latent(s) conditioned on a class id (or id tensor)."""
        squeeze = z.dim() == 1
        z = self._check_z(z)
        if isinstance(y, int):
            if not 0 <= y < self.num_classes:
                raise ConfigurationError(f"class id {y} out of range")
            y = torch.full((z.shape[0],), y, dtype=torch.long)
        y_vec = onehot(y, self.num_classes).to(z.dtype)
        out = self.model(z, y_vec)
        return out[0] if squeeze else out

    def generate_from_vector(self, z: torch.Tensor, y_vec: torch.Tensor) -> torch.Tensor:
        """Decode with an arbitrary (e.g. softmaxed, trainable) class vector."""
        squeeze = z.dim() == 1
        z = self._check_z(z)
        y_vec = self._check_yvec(y_vec, z.shape[0])
        out = self.model(z, y_vec)
        return out[0] if squeeze else out

    def _require_layer(self, layer_id: str) -> tuple[int, int, int]:
        if layer_id not in self._shapes:
            raise ConfigurationError(
                f"unknown layer {layer_id!r}; catalog: {[k for k, _ in self.layer_catalog]}")
        return self._shapes[layer_id]

    def activations_at(self, z: torch.Tensor, y: int | torch.Tensor,
                       layer_id: str) -> torch.Tensor:
        self._require_layer(layer_id)
        squeeze = z.dim() == 1
        z = self._check_z(z)
        if isinstance(y, int):
            y = torch.full((z.shape[0],), y, dtype=torch.long)
        y_vec = onehot(y, self.num_classes).to(z.dtype)
        act = self.model.forward_with_taps(z, y_vec, stop_at=layer_id)
        return act[0] if squeeze else act

    def forward_from(self, layer_id: str, activation: torch.Tensor,
                     conditioning: tuple[torch.Tensor, torch.Tensor]) -> torch.Tensor:
        """Run the generator suffix after layer_id on a (possibly modified)
        activation. `conditioning` is (z, y_vec) as used for the prefix; the
        modulation of the remaining blocks still depends on it."""
        shape = self._require_layer(layer_id)
        squeeze = activation.dim() == 3
        if squeeze:
            activation = activation[None]
        if tuple(activation.shape[1:]) != shape:
            raise ConfigurationError(
                f"activation shape {tuple(activation.shape[1:])} does not match "
                f"catalog entry {shape} for layer {layer_id!r}")
        z, y_vec = conditioning
        z = self._check_z(z)
        y_vec = self._check_yvec(y_vec, activation.shape[0])
        if z.shape[0] == 1 and activation.shape[0] > 1:
            z = z.expand(activation.shape[0], -1)
        out = self.model.forward_from_site(layer_id, activation, z, y_vec)
        return out[0] if squeeze else out


class ClassifierHandle:
    """Wraps a classifier; classify() returns simplex confidences.

    Preprocessing spec: float32 RGB in [0,1]; inputs at a different spatial
    size are bilinearly resized to `input_resolution`. No mean/std shift."""

    def __init__(self, model: ConvClassifier, content_hash: str = ""):
        self.model = _freeze(model)
        self.num_classes = model.num_classes
        self.input_resolution = 32
        self.content_hash = content_hash

    def _prep(self, images: torch.Tensor) -> tuple[torch.Tensor, bool]:
        squeeze = images.dim() == 3
        if squeeze:
            images = images[None]
        if images.dim() != 4 or images.shape[1] != 3:
            raise InputError(f"expected RGB image tensor, got shape {tuple(images.shape)}")
        if not torch.isfinite(images).all():
            raise InputError("non-finite pixel values")
        r = self.input_resolution
        if images.shape[2] != r or images.shape[3] != r:
            images = F.interpolate(images, size=(r, r), mode="bilinear",
                                   align_corners=False)
        return images, squeeze

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        images, squeeze = self._prep(images)
        out = self.model(images)
        return out[0] if squeeze else out

    def classify(self, images: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(images), dim=-1)


class DiscriminatorHandle:
    """Realness scorer. Higher logit = more real. Conditioned on a uniform
    class vector so the score is class-agnostic."""

    def __init__(self, model: ProjectionDiscriminator, content_hash: str = ""):
        self.model = _freeze(model)
        self.num_classes = model.num_classes
        self.input_resolution = 32
        self.content_hash = content_hash

    def discriminate(self, images: torch.Tensor) -> torch.Tensor:
        squeeze = images.dim() == 3
        if squeeze:
            images = images[None]
        if images.shape[1:] != (3, self.input_resolution, self.input_resolution):
            raise InputError(
                f"discriminator expects 3x{self.input_resolution}x"
                f"{self.input_resolution} images, got {tuple(images.shape[1:])}")
        if not torch.isfinite(images).all():
            raise InputError("non-finite pixel values")
        uniform = torch.full((images.shape[0], self.num_classes),
                             1.0 / self.num_classes, dtype=images.dtype)
        out = self.model(images, uniform)
        return out[0] if squeeze else out


def _load(dirpath: str | Path, expected: type) -> tuple[torch.nn.Module, str]:
    man = tensorio.load_manifest(dirpath)
    model = build_model(man["architecture"])
    if not isinstance(model, expected):
        raise ConfigurationError(
            f"{dirpath} holds {man['architecture']!r}, not a {expected.__name__}")
    model.load_state_dict(tensorio.load_state_dict(dirpath))
    return model, man["content_hash"]


def load_generator(dirpath: str | Path) -> GeneratorHandle:
    model, h = _load(dirpath, SkipZGenerator)
    return GeneratorHandle(model, content_hash=h)


def load_classifier(dirpath: str | Path) -> ClassifierHandle:
    model, h = _load(dirpath, ConvClassifier)
    return ClassifierHandle(model, content_hash=h)


def load_discriminator(dirpath: str | Path) -> DiscriminatorHandle:
    model, h = _load(dirpath, ProjectionDiscriminator)
    return DiscriminatorHandle(model, content_hash=h)
