"""Network definitions for the desk-scale model suite.

All normalization is GroupNorm so outputs are batch-independent and train
and eval behave identically. Architecture ids (strings like
"conv_classifier:lse:w24") are stored in weight manifests and parsed back
by build_model.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from featadv.errors import ConfigurationError


class FilmLayer(nn.Module):
    """Feature-wise affine modulation from a conditioning vector.

    Zero-initialized so modulation starts as identity."""

    def __init__(self, cond_dim: int, channels: int):
        super().__init__()
        self.fc = nn.Linear(cond_dim, 2 * channels)
        nn.init.zeros_(self.fc.weight)
        nn.init.zeros_(self.fc.bias)

    def forward(self, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        sb = self.fc(cond)[:, :, None, None]
        scale, shift = sb.chunk(2, dim=1)
        return h * (1 + scale) + shift


class SkipZGenerator(nn.Module):
    """Class-conditional generator, 32x32 RGB output.

    The conditioning vector cat(z, y) modulates every block through FiLM,
    not just the input projection; this keeps the latent influential at all
    scales, which matters when optimizing z directly.
    """

    def __init__(self, z_dim: int = 64, num_classes: int = 10, width: int = 32):
        super().__init__()
        self.z_dim = z_dim
        self.num_classes = num_classes
        self.width = width
        cond = z_dim + num_classes
        self.fc = nn.Linear(cond, 4 * width * 16)
        self.gn0 = nn.GroupNorm(8, 4 * width, affine=False)
        self.film0 = FilmLayer(cond, 4 * width)
        self.up1 = nn.ConvTranspose2d(4 * width, 2 * width, 4, 2, 1)
        self.gn1 = nn.GroupNorm(8, 2 * width, affine=False)
        self.film1 = FilmLayer(cond, 2 * width)
        self.up2 = nn.ConvTranspose2d(2 * width, width, 4, 2, 1)
        self.gn2 = nn.GroupNorm(8, width, affine=False)
        self.film2 = FilmLayer(cond, width)
        self.out = nn.ConvTranspose2d(width, 3, 4, 2, 1)

    # named post-nonlinearity activation sites, topologically ordered
    def layer_shapes(self) -> list[tuple[str, tuple[int, int, int]]]:
        w = self.width
        return [
            ("latent_input", (self.z_dim, 1, 1)),
            ("stem", (4 * w, 4, 4)),
            ("block1", (2 * w, 8, 8)),
            ("block2", (w, 16, 16)),
        ]

    def _stage(self, name: str, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if name == "stem":
            return F.relu(self.film0(self.gn0(h), cond))
        if name == "block1":
            return F.relu(self.film1(self.gn1(self.up1(h)), cond))
        if name == "block2":
            return F.relu(self.film2(self.gn2(self.up2(h)), cond))
        raise ConfigurationError(f"unknown generator stage {name!r}")

    def forward(self, z: torch.Tensor, y_vec: torch.Tensor) -> torch.Tensor:
        cond = torch.cat([z, y_vec], dim=1)
        h = self.fc(cond).view(-1, 4 * self.width, 4, 4)
        h = self._stage("stem", h, cond)
        h = self._stage("block1", h, cond)
        h = self._stage("block2", h, cond)
        return torch.sigmoid(self.out(h))

    def forward_with_taps(self, z: torch.Tensor, y_vec: torch.Tensor,
                          stop_at: str) -> torch.Tensor:
        """Run forward up to and including the named site, returning its
        post-nonlinearity activation."""
        if stop_at == "latent_input":
            return z[:, :, None, None]
        cond = torch.cat([z, y_vec], dim=1)
        h = self.fc(cond).view(-1, 4 * self.width, 4, 4)
        for name in ("stem", "block1", "block2"):
            h = self._stage(name, h, cond)
            if name == stop_at:
                return h
        raise ConfigurationError(f"unknown generator layer {stop_at!r}")

    def forward_from_site(self, start: str, h: torch.Tensor, z: torch.Tensor,
                          y_vec: torch.Tensor) -> torch.Tensor:
        """Run the suffix after the named site. `h` is the (possibly
        modified) activation at that site; (z, y_vec) supply the FiLM
        conditioning for the remaining blocks."""
        if start == "latent_input":
            return self.forward(h.flatten(1), y_vec)
        cond = torch.cat([z, y_vec], dim=1)
        names = ("stem", "block1", "block2")
        if start not in names:
            raise ConfigurationError(f"unknown generator layer {start!r}")
        remaining = names[names.index(start) + 1:]
        for name in remaining:
            h = self._stage(name, h, cond)
        return torch.sigmoid(self.out(h))


class ProjectionDiscriminator(nn.Module):
    """Conditional discriminator with a projection head and an auxiliary
    classification head over pooled features."""

    def __init__(self, num_classes: int = 10, width: int = 32):
        super().__init__()
        self.num_classes = num_classes
        self.width = width
        self.conv1 = nn.Conv2d(3, width, 4, 2, 1)
        self.conv2 = nn.Conv2d(width, 2 * width, 4, 2, 1)
        self.gn2 = nn.GroupNorm(8, 2 * width)
        self.conv3 = nn.Conv2d(2 * width, 4 * width, 4, 2, 1)
        self.gn3 = nn.GroupNorm(8, 4 * width)
        self.fc = nn.Linear(4 * width, 1)
        self.embed = nn.Linear(num_classes, 4 * width, bias=False)
        self.aux = nn.Linear(4 * width, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.gn2(self.conv2(h)), 0.2)
        h = F.leaky_relu(self.gn3(self.conv3(h)), 0.2)
        return h.sum(dim=(2, 3))

    def forward(self, x: torch.Tensor, y_vec: torch.Tensor) -> torch.Tensor:
        feat = self.features(x)
        return self.fc(feat)[:, 0] + (self.embed(y_vec) * feat).sum(dim=1)


class ConvClassifier(nn.Module):
    """Small convnet over 32x32 RGB with a configurable pooling head.

    pooling:
      "lse"    logsumexp over spatial positions (local evidence decisive,
               smooth gradients)
      "avg"    global average pool
      "avgmax" equal mix of average and max pool
    """

    POOLINGS = ("lse", "avg", "avgmax")

    def __init__(self, width: int = 24, num_classes: int = 10,
                 pooling: str = "lse"):
        super().__init__()
        if pooling not in self.POOLINGS:
            raise ConfigurationError(f"unknown pooling {pooling!r}")
        self.width = width
        self.num_classes = num_classes
        self.pooling = pooling
        self.features = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(2 * width, 4 * width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        )
        self.head = nn.Linear(4 * width, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        if self.pooling == "lse":
            pooled = torch.logsumexp(h.flatten(2), dim=2)
        elif self.pooling == "avg":
            pooled = h.mean(dim=(2, 3))
        else:
            pooled = 0.5 * h.mean(dim=(2, 3)) + 0.5 * h.amax(dim=(2, 3))
        return self.head(pooled)


def architecture_id(model: nn.Module) -> str:
    if isinstance(model, SkipZGenerator):
        return f"skipz_generator:z{model.z_dim}:w{model.width}:k{model.num_classes}"
    if isinstance(model, ProjectionDiscriminator):
        return f"projection_discriminator:w{model.width}:k{model.num_classes}"
    if isinstance(model, ConvClassifier):
        return f"conv_classifier:{model.pooling}:w{model.width}:k{model.num_classes}"
    raise ConfigurationError(f"unregistered model type {type(model).__name__}")


def build_model(arch: str) -> nn.Module:
    """Reconstruct a model from its architecture id string."""
    parts = arch.split(":")
    opts = {p[0]: int(p[1:]) for p in parts[1:] if p[1:].isdigit()}
    if parts[0] == "skipz_generator":
        return SkipZGenerator(z_dim=opts["z"], width=opts["w"], num_classes=opts["k"])
    if parts[0] == "projection_discriminator":
        return ProjectionDiscriminator(width=opts["w"], num_classes=opts["k"])
    if parts[0] == "conv_classifier":
        return ConvClassifier(width=opts["w"], num_classes=opts["k"], pooling=parts[1])
    raise ConfigurationError(f"unknown architecture id {arch!r}")
