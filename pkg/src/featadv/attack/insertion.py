"""Spatial insertion primitives shared by all attack modes.

Every op here is local: pixels/activations outside the written window are
bitwise untouched, and each op is differentiable with respect to the
inserted values.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from featadv.errors import InputError
from featadv.transforms import gaussian_blur


def patch_side(image_side: int, area_fraction: float) -> int:
    """Side of the inserted square: round(image_side * sqrt(area_fraction))."""
    if not 0 < area_fraction <= 1:
        raise InputError(f"area_fraction must be in (0, 1], got {area_fraction}")
    return round(image_side * area_fraction ** 0.5)


def region_side(latent_side: int, area_fraction: float) -> int:
    """Side of the replaced latent block, same rounding rule as patches."""
    return patch_side(latent_side, area_fraction)


def insert_patch(source: torch.Tensor, patch: torch.Tensor,
                 location: tuple[int, int], area_fraction: float) -> torch.Tensor:
    """Paste `patch` (bilinearly resized to the fraction-implied side) into
    `source` at (top, left)."""
    squeeze = source.dim() == 3
    x = source[None] if squeeze else source
    if patch.dim() == 3:
        patch = patch[None]
    if patch.shape[2] != patch.shape[3]:
        raise InputError(f"patch must be square, got {tuple(patch.shape[2:])}")
    side = patch_side(x.shape[2], area_fraction)
    top, left = location
    if not (0 <= top <= x.shape[2] - side and 0 <= left <= x.shape[3] - side):
        raise InputError(
            f"location {location} puts a side-{side} patch outside a "
            f"{x.shape[2]}x{x.shape[3]} image")
    if patch.shape[2] != side:
        patch = F.interpolate(patch, size=(side, side), mode="bilinear",
                              align_corners=False)
    out = x.clone()
    out[:, :, top:top + side, left:left + side] = patch
    return out[0] if squeeze else out


def apply_region(latent: torch.Tensor, insertion: torch.Tensor,
                 offset: tuple[int, int]) -> torch.Tensor:
    """Replace the CxSxS window of `latent` at `offset` with `insertion`."""
    squeeze = latent.dim() == 3
    x = latent[None] if squeeze else latent
    if insertion.dim() != 3:
        raise InputError("region insertion must be CxSxS")
    c, sh, sw = insertion.shape
    if c != x.shape[1]:
        raise InputError(
            f"region insertion must span all {x.shape[1]} channels, got {c}")
    top, left = offset
    if not (0 <= top <= x.shape[2] - sh and 0 <= left <= x.shape[3] - sw):
        raise InputError(f"offset {offset} puts a {sh}x{sw} block outside "
                         f"the {x.shape[2]}x{x.shape[3]} latent")
    out = x.clone()
    out[:, :, top:top + sh, left:left + sw] = insertion
    return out[0] if squeeze else out


def apply_channel(latent: torch.Tensor, insertion: torch.Tensor,
                  channel_index_set: list[int]) -> torch.Tensor:
    """Replace the listed channels of `latent` (full spatial extent)."""
    squeeze = latent.dim() == 3
    x = latent[None] if squeeze else latent
    idx = list(channel_index_set)
    if any(not 0 <= i < x.shape[1] for i in idx):
        raise InputError(f"channel index out of range for C={x.shape[1]}")
    if insertion.shape != (len(idx), x.shape[2], x.shape[3]):
        raise InputError(
            f"channel insertion must be {(len(idx), x.shape[2], x.shape[3])}, "
            f"got {tuple(insertion.shape)}")
    out = x.clone()
    out[:, idx] = insertion
    return out[0] if squeeze else out


def channel_count(total_channels: int, channel_fraction: float) -> int:
    if not 0 < channel_fraction <= 1:
        raise InputError(f"channel_fraction must be in (0, 1], got {channel_fraction}")
    return round(total_channels * channel_fraction)


def extract_generalized_patch(original: torch.Tensor, adversarial: torch.Tensor,
                              smoothing_sigma: float = 1.0
                              ) -> tuple[torch.Tensor, torch.Tensor]:
    """Top-decile differential mask and the masked adversarial pixels.

    d = channel-mean |original - adversarial|, smoothed with a Gaussian;
    mask marks the round(0.10*N) largest smoothed values, ties broken by
    ascending row-major pixel index. The mask is a constant (no gradient);
    the masked patch stays differentiable w.r.t. the adversarial pixels."""
    if original.shape != adversarial.shape:
        raise InputError(
            f"shape mismatch {tuple(original.shape)} vs {tuple(adversarial.shape)}")
    if smoothing_sigma < 0:
        raise InputError("smoothing_sigma must be >= 0")
    if original.dim() != 3:
        raise InputError("expected CHW images")
    d = (original - adversarial).abs().mean(dim=0)
    g = gaussian_blur(d.detach()[None, None], smoothing_sigma)[0, 0]
    n = g.numel()
    k = round(0.10 * n)
    # stable sort on descending value keeps ascending flat index among ties
    order = torch.argsort(g.flatten(), descending=True, stable=True)
    mask = torch.zeros(n, dtype=original.dtype)
    mask[order[:k]] = 1.0
    mask = mask.view_as(g)
    return mask, adversarial * mask[None]


def overlay_generalized_patch(source: torch.Tensor, masked_patch: torch.Tensor,
                              mask: torch.Tensor,
                              location: tuple[int, int]) -> torch.Tensor:
    """Write the masked pixels onto `source`, translated by (dy, dx). The
    translated mask support must stay inside the image."""
    if mask.dim() != 2:
        raise InputError("mask must be HxW")
    if masked_patch.dim() != 3:
        raise InputError("masked_patch must be CHW")
    dy, dx = location
    rows, cols = torch.nonzero(mask > 0.5, as_tuple=True)
    out = source.clone()
    if len(rows) == 0:
        return out
    nr, nc = rows + dy, cols + dx
    if (int(nr.min()) < 0 or int(nc.min()) < 0
            or int(nr.max()) >= source.shape[1] or int(nc.max()) >= source.shape[2]):
        raise InputError(f"translated mask exceeds image bounds at offset {location}")
    out[:, nr, nc] = masked_patch[:, rows, cols]
    return out
