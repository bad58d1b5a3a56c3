"""Natural-image baselines and reference protocols: patch insertion from
real class images, random center crops, ranked copy/paste evaluation, and
first-order class impressions."""

from __future__ import annotations

import torch

from featadv.attack import insertion as ins
from featadv.attack.engine import (AttackModels, LocationSampler,
                                   TransformSampler, _child_seeds,
                                   _patch_bounds)
from featadv.attack.config import LocationDistribution
from featadv.errors import InputError, OptimizationError
from featadv.evalharness.reports import CopyPasteReport
from featadv.models.handles import ClassifierHandle
from featadv.regularizers import total_variation
from featadv.transforms import TransformConfig


def _class_pool(models: AttackModels, class_id: int) -> torch.Tensor:
    if models.train_images is None or models.train_labels is None:
        raise InputError("baseline needs a training image pool")
    idx = (models.train_labels == class_id).nonzero().flatten()
    if len(idx) == 0:
        raise InputError(f"no training images of class {class_id}")
    return models.train_images[idx]


def _center_crop(image: torch.Tensor, frac: float) -> torch.Tensor:
    s = image.shape[1]
    side = max(1, round(s * frac))
    lo = (s - side) // 2
    return image[:, lo:lo + side, lo:lo + side]


def _insertion_baseline(models: AttackModels, target_class: int,
                        sources: torch.Tensor | None, n_patches: int,
                        seed: int, area_fraction: float, location_spec,
                        transform_spec, victim, crops: bool) -> float:
    if n_patches < 1:
        raise InputError("n_patches must be >= 1")
    victim = victim if victim is not None else models.victim
    loc_spec = location_spec if location_spec is not None \
        else LocationDistribution()
    tr_spec = transform_spec if transform_spec is not None \
        else TransformConfig(preset="identity")
    seeds = _child_seeds(seed, 4)
    pool = _class_pool(models, target_class)
    g = torch.Generator().manual_seed(seeds[0])
    take = min(n_patches, len(pool))
    patches = [pool[int(i)] for i in torch.randperm(len(pool),
                                                    generator=g)[:take]]
    if crops:
        fracs = torch.empty(take).uniform_(0.25, 0.75, generator=g)
        patches = [_center_crop(p, float(f)) for p, f in zip(patches, fracs)]

    if sources is None:
        from featadv.evalharness.universality import _source_images
        sources = _source_images(models, min(100, len(models.eval_images)),
                                 seeds[1])
    elif isinstance(sources, (list, tuple)):
        sources = torch.stack(list(sources))
    if sources.dim() == 3:
        sources = sources[None]

    side = sources.shape[2]
    b = _patch_bounds(side, ins.patch_side(side, area_fraction),
                      loc_spec.margin)
    tr = TransformSampler(tr_spec, seeds[2])
    loc = LocationSampler(loc_spec, seeds[3])
    comps = []
    with torch.no_grad():
        for patch in patches:
            for src in sources:
                t, l = tr.draw(), loc.draw_pair(b, b)
                comps.append(t.apply(ins.insert_patch(src, patch, l,
                                                      area_fraction)))
        probs = victim.classify(torch.stack(comps))
    return float(probs[:, target_class].mean())


def natural_patch_baseline(models: AttackModels, target_class: int,
                           sources: torch.Tensor | None = None,
                           n_patches: int = 10, seed: int = 0,
                           area_fraction: float = 1 / 16,
                           location_spec=None, transform_spec=None,
                           victim: ClassifierHandle | None = None) -> float:
    """Mean target confidence when whole natural target-class images are
    inserted as patches; the floor an optimized patch must clear."""
    return _insertion_baseline(models, target_class, sources, n_patches,
                               seed, area_fraction, location_spec,
                               transform_spec, victim, crops=False)


def random_crop_baseline(models: AttackModels, target_class: int,
                         sources: torch.Tensor | None = None,
                         n_patches: int = 10, seed: int = 0,
                         area_fraction: float = 1 / 16,
                         location_spec=None, transform_spec=None,
                         victim: ClassifierHandle | None = None) -> float:
    """Same protocol with random-size center crops of the class images."""
    return _insertion_baseline(models, target_class, sources, n_patches,
                               seed, area_fraction, location_spec,
                               transform_spec, victim, crops=True)


def copy_paste_eval(victim: ClassifierHandle, sources, patch: torch.Tensor,
                    target_class: int, location_spec=None,
                    area_fraction: float = 1 / 16, seed: int = 0,
                    top_k: int = 6) -> CopyPasteReport:
    """Paste one natural patch into every source; rank sources by the gain
    in target confidence. area_fraction 0 is the explicit no-op (all deltas
    exactly zero)."""
    if isinstance(sources, (list, tuple)):
        sources = torch.stack(list(sources))
    if sources.dim() == 3:
        sources = sources[None]
    if len(sources) < 1:
        raise InputError("need at least one source image")
    if not 0 <= target_class < victim.num_classes:
        raise InputError(f"target class {target_class} out of range")
    loc_spec = location_spec if location_spec is not None \
        else LocationDistribution()
    n = len(sources)
    locations: list = []
    with torch.no_grad():
        before = victim.classify(sources)[:, target_class]
        if area_fraction == 0:
            after = before.clone()
            locations = [None] * n
        else:
            side = sources.shape[2]
            b = _patch_bounds(side, ins.patch_side(side, area_fraction),
                              loc_spec.margin)
            loc = LocationSampler(loc_spec, seed)
            comps = []
            for src in sources:
                l = loc.draw_pair(b, b)
                comps.append(ins.insert_patch(src, patch, l, area_fraction))
                locations.append(list(l))
            after = victim.classify(torch.stack(comps))[:, target_class]

    delta = after - before
    # stable descending sort: ties keep ascending source order
    order = torch.argsort(-delta, stable=True).tolist()
    k = min(top_k, n)
    top = order[:k]
    records = [{"index": i, "before": float(before[i]),
                "after": float(after[i]), "delta": float(delta[i]),
                "location": locations[i]} for i in range(n)]
    return CopyPasteReport(
        target_class=target_class, n_sources=n,
        area_fraction=area_fraction, seed=seed, ranking=order,
        records=records, top_k=k, top_indices=top,
        top_mean_before=float(before[top].mean()),
        top_mean_after=float(after[top].mean()))


def _impress_once(victim: ClassifierHandle, class_id: int, n: int,
                  seeds: list[int], steps: int, lr: float, tv_weight: float,
                  tr_spec: TransformConfig, res: int) -> torch.Tensor | None:
    g = torch.Generator().manual_seed(seeds[0])
    w = (0.5 * torch.randn(n, 3, res, res, generator=g)).requires_grad_()
    tr = TransformSampler(tr_spec, seeds[1])
    opt = torch.optim.Adam([w], lr=lr)
    for _ in range(steps):
        x = torch.sigmoid(w)
        logits = victim.logits(tr.draw().apply(x))
        loss = -logits[:, class_id].mean() + tv_weight * total_variation(x)
        if not bool(torch.isfinite(loss.detach())):
            return None
        opt.zero_grad()
        loss.backward()
        opt.step()
    return torch.sigmoid(w).detach()


def class_impressions(victim: ClassifierHandle, class_id: int, n: int,
                      seed: int = 0, steps: int = 300,
                      step_size: float = 0.05, tv_weight: float = 1e-3,
                      transform_spec: TransformConfig | None = None,
                      resolution: int | None = None,
                      max_restarts: int = 3) -> torch.Tensor:
    """First-order maximization of one class logit from random starts, with
    TV and transform robustness but no generator and no insertion. Returns
    n images; divergence restarts the whole optimization at half the step
    size."""
    if not 0 <= class_id < victim.num_classes:
        raise InputError(f"class {class_id} out of range "
                         f"[0, {victim.num_classes})")
    if n < 0:
        raise InputError("n must be >= 0")
    res = resolution if resolution is not None else victim.input_resolution
    if n == 0:
        return torch.zeros(0, 3, res, res)
    tr_spec = transform_spec if transform_spec is not None \
        else TransformConfig()
    seeds = _child_seeds(seed, 2)
    lr = step_size
    for _ in range(max_restarts + 1):
        out = _impress_once(victim, class_id, n, seeds, steps, lr,
                            tv_weight, tr_spec, res)
        if out is not None:
            return out
        lr /= 2
    raise OptimizationError(
        f"class impressions diverged after {max_restarts} restarts")
