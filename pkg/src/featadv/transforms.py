"""Photometric/geometric transformation distribution used for expectation-
over-transformation training and robust evaluation.

A TransformConfig names a preset and parameter ranges; sample_transform
draws one concrete SampledTransform (an ordered op list with fixed
parameters) from it. Applying a SampledTransform is deterministic given its
record (noise carries its own seed) and differentiable with respect to the
image; sampling grids and noise are constants per sample.

Presets:
  patch_full    color jitter, Gaussian blur, Gaussian noise, rotation,
                perspective (geometric ops included only here)
  region_light  Gaussian blur, horizontal flip
  identity      empty op list
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import torch
import torch.nn.functional as F

from featadv.errors import ConfigurationError

PRESETS = ("patch_full", "region_light", "identity")

DEFAULT_RANGES: dict[str, Any] = {
    "brightness": 0.25,
    "contrast": 0.25,
    "saturation": 0.25,
    "hue": 0.05,              # fraction of the color wheel
    "blur_sigma": [0.0, 1.5],
    "noise_std": [0.0, 0.05],
    "rotation_degrees": 15.0,
    "perspective_scale": 0.2,
    "flip_prob": 0.5,
}


@dataclass(frozen=True)
class TransformConfig:
    preset: str = "patch_full"
    ranges: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown transform preset {self.preset!r}")
        merged = dict(DEFAULT_RANGES)
        for k, v in self.ranges.items():
            if k not in DEFAULT_RANGES:
                raise ConfigurationError(f"unknown transform range {k!r}")
            merged[k] = v
        flat = []
        for v in merged.values():
            flat.extend(v if isinstance(v, list) else [v])
        if any(f < 0 for f in flat):
            raise ConfigurationError("transform ranges must be non-negative")
        object.__setattr__(self, "ranges", merged)

    def to_dict(self) -> dict:
        return {"preset": self.preset, "ranges": self.ranges}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformConfig":
        return cls(preset=d.get("preset", "patch_full"),
                   ranges=d.get("ranges", {}))


def _u(rng: torch.Generator, lo: float, hi: float) -> float:
    return float(torch.empty(1).uniform_(lo, hi, generator=rng))


def sample_transform(config: TransformConfig, rng: torch.Generator) -> "SampledTransform":
    """Draw one concrete transform from the configured distribution."""
    r = config.ranges
    ops: list[tuple[str, dict]] = []
    if config.preset == "identity":
        return SampledTransform(ops)
    if config.preset == "patch_full":
        ops.append(("color_jitter", {
            "brightness": _u(rng, 1 - r["brightness"], 1 + r["brightness"]),
            "contrast": _u(rng, 1 - r["contrast"], 1 + r["contrast"]),
            "saturation": _u(rng, 1 - r["saturation"], 1 + r["saturation"]),
            "hue": _u(rng, -r["hue"], r["hue"]),
        }))
    ops.append(("blur", {"sigma": _u(rng, r["blur_sigma"][0], r["blur_sigma"][1])}))
    if config.preset == "patch_full":
        ops.append(("noise", {
            "std": _u(rng, r["noise_std"][0], r["noise_std"][1]),
            "seed": int(torch.randint(0, 2**31 - 1, (1,), generator=rng)),
        }))
        ops.append(("rotation", {
            "degrees": _u(rng, -r["rotation_degrees"], r["rotation_degrees"]),
        }))
        ops.append(("perspective", {
            "scale": r["perspective_scale"],
            "u": [_u(rng, 0.0, 1.0) for _ in range(8)],
        }))
    else:  # region_light
        if _u(rng, 0.0, 1.0) < r["flip_prob"]:
            ops.append(("hflip", {}))
    return SampledTransform(ops)


@dataclass(frozen=True)
class SampledTransform:
    """Ordered list of concrete ops; re-application is deterministic."""

    ops: list

    def to_dict(self) -> dict:
        return {"ops": [[name, params] for name, params in self.ops]}

    @classmethod
    def from_dict(cls, d: dict) -> "SampledTransform":
        return cls([(name, dict(params)) for name, params in d["ops"]])

    def apply(self, image: torch.Tensor) -> torch.Tensor:
        """Apply all ops in order; output clamped to [0,1]. Accepts a single
        CHW image or a BCHW batch (same transform applied to every item)."""
        squeeze = image.dim() == 3
        x = image[None] if squeeze else image
        for name, params in self.ops:
            x = _OPS[name](x, params)
        x = torch.clamp(x, 0.0, 1.0)
        return x[0] if squeeze else x


# ---- op implementations (all BCHW -> BCHW, differentiable in x) ----

_RGB2YIQ = [[0.299, 0.587, 0.114],
            [0.5959, -0.2746, -0.3213],
            [0.2115, -0.5227, 0.3112]]
_YIQ2RGB = [[1.0, 0.9560, 0.6190],
            [1.0, -0.2720, -0.6470],
            [1.0, -1.1060, 1.7030]]


def _color_jitter(x: torch.Tensor, p: dict) -> torch.Tensor:
    x = x * p["brightness"]
    gray = (0.299 * x[:, 0] + 0.587 * x[:, 1] + 0.114 * x[:, 2])[:, None]
    x = (x - gray.mean(dim=(2, 3), keepdim=True)) * p["contrast"] \
        + gray.mean(dim=(2, 3), keepdim=True)
    x = gray + (x - gray) * p["saturation"]
    if p["hue"]:
        theta = p["hue"] * 2 * math.pi
        to_yiq = torch.tensor(_RGB2YIQ, dtype=x.dtype)
        to_rgb = torch.tensor(_YIQ2RGB, dtype=x.dtype)
        rot = torch.tensor([[1.0, 0.0, 0.0],
                            [0.0, math.cos(theta), -math.sin(theta)],
                            [0.0, math.sin(theta), math.cos(theta)]], dtype=x.dtype)
        m = to_rgb @ rot @ to_yiq
        x = torch.einsum("rc,bchw->brhw", m, x)
    return x


def _gauss_kernel1d(sigma: float, dtype: torch.dtype) -> torch.Tensor:
    radius = max(1, math.ceil(3 * sigma))
    ax = torch.arange(-radius, radius + 1, dtype=dtype)
    k = torch.exp(-(ax**2) / (2 * sigma**2))
    return k / k.sum()


def gaussian_blur(x: torch.Tensor, sigma: float) -> torch.Tensor:
    """Separable Gaussian blur with reflect padding, radius max(1, ceil(3s)).
    sigma 0 (or negligibly small) is the identity. BCHW in, BCHW out."""
    if sigma <= 1e-6:
        return x
    k = _gauss_kernel1d(sigma, x.dtype)
    c, r = x.shape[1], (len(k) - 1) // 2
    pad = F.pad(x, (r, r, r, r), mode="reflect")
    pad = F.conv2d(pad, k.view(1, 1, 1, -1).expand(c, 1, 1, -1), groups=c)
    return F.conv2d(pad, k.view(1, 1, -1, 1).expand(c, 1, -1, 1), groups=c)


def _blur(x: torch.Tensor, p: dict) -> torch.Tensor:
    return gaussian_blur(x, p["sigma"])


def _noise(x: torch.Tensor, p: dict) -> torch.Tensor:
    gen = torch.Generator().manual_seed(p["seed"])
    n = torch.randn(x.shape, generator=gen, dtype=x.dtype)
    return x + p["std"] * n


def _rotation(x: torch.Tensor, p: dict) -> torch.Tensor:
    theta = math.radians(p["degrees"])
    c, s = math.cos(theta), math.sin(theta)
    # inverse map for sampling: rotate output coords by -theta
    mat = torch.tensor([[c, s, 0.0], [-s, c, 0.0]], dtype=x.dtype)
    grid = F.affine_grid(mat[None].expand(x.shape[0], -1, -1), list(x.shape),
                         align_corners=False)
    return F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros",
                         align_corners=False)


def _solve_homography(src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
    """3x3 H with H @ [x_src, y_src, 1] ~ [x_dst, y_dst, 1] for 4 points."""
    a_rows, b_rows = [], []
    for (x, y), (u, v) in zip(src.tolist(), dst.tolist()):
        a_rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a_rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b_rows.extend([u, v])
    a = torch.tensor(a_rows, dtype=torch.float64)
    b = torch.tensor(b_rows, dtype=torch.float64)
    h = torch.linalg.solve(a, b)
    return torch.cat([h, torch.ones(1, dtype=torch.float64)]).view(3, 3)


def _perspective(x: torch.Tensor, p: dict) -> torch.Tensor:
    b, _, hh, ww = x.shape
    d = p["scale"]
    u = p["u"]
    half_w, half_h = d * (ww - 1) / 2, d * (hh - 1) / 2
    corners = torch.tensor([[0.0, 0.0], [ww - 1.0, 0.0],
                            [ww - 1.0, hh - 1.0], [0.0, hh - 1.0]])
    inward = torch.tensor([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    disp = torch.tensor(u).view(4, 2) * torch.tensor([half_w, half_h]) * inward
    endpoints = corners + disp
    # sampling grid: for each output pixel, where to read in the input
    hom = _solve_homography(endpoints, corners)
    ys = torch.arange(hh, dtype=torch.float64)
    xs = torch.arange(ww, dtype=torch.float64)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    ones = torch.ones_like(gx)
    pts = torch.stack([gx, gy, ones], dim=-1) @ hom.T
    sx = pts[..., 0] / pts[..., 2]
    sy = pts[..., 1] / pts[..., 2]
    gxn = (2 * sx / (ww - 1) - 1).to(x.dtype)
    gyn = (2 * sy / (hh - 1) - 1).to(x.dtype)
    grid = torch.stack([gxn, gyn], dim=-1)[None].expand(b, -1, -1, -1)
    return F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros",
                         align_corners=True)


def _hflip(x: torch.Tensor, p: dict) -> torch.Tensor:
    return torch.flip(x, dims=[3])


_OPS = {
    "color_jitter": _color_jitter,
    "blur": _blur,
    "noise": _noise,
    "rotation": _rotation,
    "perspective": _perspective,
    "hflip": _hflip,
}
