"""Synthetic 10-class motif dataset.

Each class is a small colored motif (disk, ring, plus, ...) scattered 3-5
times over a dark, lightly textured background. Class evidence therefore
lives in patch-sized local features rather than one large object, which is
the regime where feature-level attacks and copy/paste experiments are
meaningful at 32x32.

Rendering is fully deterministic given a seed; splits are generated on the
fly and never stored.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

RESOLUTION = 32
_SS = 2  # supersampling factor during rendering

PALETTE = {
    "red": (0.85, 0.18, 0.18),
    "green": (0.20, 0.80, 0.25),
    "blue": (0.30, 0.45, 0.95),
    "yellow": (0.90, 0.85, 0.20),
    "cyan": (0.20, 0.80, 0.80),
}

# class id -> (color name, motif kind); two classes share each color so
# color alone never identifies a class
CLASS_DEFS = [
    ("red", "disk"), ("red", "ring"),
    ("green", "plus"), ("green", "square"),
    ("blue", "triangle"), ("blue", "dots"),
    ("yellow", "diamond"), ("yellow", "bar"),
    ("cyan", "xcross"), ("cyan", "hollow"),
]

CLASS_NAMES = [f"{c}_{k}" for c, k in CLASS_DEFS]
NUM_CLASSES = len(CLASS_DEFS)


def motif_mask(kind: str, size: float, rotation: float, res: int) -> torch.Tensor:
    """Binary mask of one motif of diameter `size` px, centered on a
    res x res grid. `rotation` is in radians."""
    ax = torch.arange(res, dtype=torch.float32) - (res - 1) / 2
    yy, xx = torch.meshgrid(ax, ax, indexing="ij")
    c, s = math.cos(rotation), math.sin(rotation)
    xr = c * xx + s * yy
    yr = -s * xx + c * yy
    h = size / 2
    if kind == "disk":
        return ((xr**2 + yr**2) <= h**2).float()
    if kind == "ring":
        r2 = xr**2 + yr**2
        return ((r2 <= h**2) & (r2 >= (0.55 * h) ** 2)).float()
    if kind == "plus":
        w = 0.36 * h
        return (((xr.abs() <= w) & (yr.abs() <= h))
                | ((yr.abs() <= w) & (xr.abs() <= h))).float()
    if kind == "square":
        return ((xr.abs() <= 0.8 * h) & (yr.abs() <= 0.8 * h)).float()
    if kind == "triangle":
        return ((yr >= -0.7 * h) & (yr <= 0.9 * h)
                & (xr.abs() <= (0.9 * h - yr) * 0.6)).float()
    if kind == "dots":
        d, r = 0.55 * h, 0.42 * h
        return ((((xr - d) ** 2 + yr**2) <= r**2)
                | (((xr + d) ** 2 + yr**2) <= r**2)).float()
    if kind == "diamond":
        return ((xr.abs() + yr.abs()) <= h).float()
    if kind == "bar":
        return ((xr.abs() <= h) & (yr.abs() <= 0.32 * h)).float()
    if kind == "xcross":
        w = 0.448 * h
        return ((((xr - yr).abs() <= w) | ((xr + yr).abs() <= w))
                & (xr.abs() <= h) & (yr.abs() <= h)).float()
    if kind == "hollow":
        return (((xr.abs() <= 0.85 * h) & (yr.abs() <= 0.85 * h))
                & ~((xr.abs() <= 0.45 * h) & (yr.abs() <= 0.45 * h))).float()
    raise ValueError(f"unknown motif kind {kind!r}")


def render(class_id: int, gen: torch.Generator) -> torch.Tensor:
    """One 3x32x32 image of the given class, values in [0,1]."""
    res = RESOLUTION * _SS
    color, kind = CLASS_DEFS[class_id]

    base = float(torch.empty(1).uniform_(0.04, 0.16, generator=gen))
    img = torch.full((3, res, res), base)
    fx = float(torch.empty(1).uniform_(0.5, 2.0, generator=gen))
    fy = float(torch.empty(1).uniform_(0.5, 2.0, generator=gen))
    phase = float(torch.empty(1).uniform_(0.0, 2 * math.pi, generator=gen))
    ax = torch.linspace(0.0, 2 * math.pi, res)
    img = img + 0.03 * torch.sin(fx * ax[None, :] + fy * ax[:, None] + phase)[None]

    count = int(torch.randint(3, 6, (1,), generator=gen))
    centers: list[tuple[float, float]] = []
    tries = 0
    while len(centers) < count and tries < 60:
        tries += 1
        cy = float(torch.empty(1).uniform_(0.14 * res, 0.86 * res, generator=gen))
        cx = float(torch.empty(1).uniform_(0.14 * res, 0.86 * res, generator=gen))
        if all((cy - a) ** 2 + (cx - b) ** 2 > (0.22 * res) ** 2 for a, b in centers):
            centers.append((cy, cx))

    rgb = torch.tensor(PALETTE[color])
    for cy, cx in centers:
        size = float(torch.empty(1).uniform_(5.5, 8.5, generator=gen)) * _SS
        rot = float(torch.empty(1).uniform_(-0.5, 0.5, generator=gen))
        jitter = float(torch.empty(1).uniform_(0.85, 1.15, generator=gen))
        m = motif_mask(kind, size, rot, res)
        m = torch.roll(m, shifts=(int(cy - res // 2), int(cx - res // 2)), dims=(0, 1))
        img = img * (1 - m[None]) + (rgb * jitter).clamp(0, 1)[:, None, None] * m[None]

    img = img + 0.02 * torch.randn(img.shape, generator=gen)
    img = torch.clamp(img, 0.0, 1.0)
    return F.avg_pool2d(img[None], _SS)[0]


def make_split(n: int, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    """n images with uniform random labels. Distinct seeds give disjoint,
    independently drawn splits."""
    gen = torch.Generator().manual_seed(seed)
    images, labels = [], []
    for _ in range(n):
        c = int(torch.randint(0, NUM_CLASSES, (1,), generator=gen))
        images.append(render(c, gen))
        labels.append(c)
    return torch.stack(images), torch.tensor(labels, dtype=torch.long)


def class_pool(class_id: int, n: int, seed: int) -> torch.Tensor:
    """n images all of one class (used for natural-patch pools and the
    balanced defense datasets)."""
    gen = torch.Generator().manual_seed(seed)
    return torch.stack([render(class_id, gen) for _ in range(n)])


# canonical split seeds; anything touching persisted fixtures pins these
TRAIN_SEED = 1001
HELDOUT_SEED = 2002
EVAL_SEED = 3003
