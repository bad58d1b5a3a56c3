"""Adversarial-training defense: fine-tune the victim as a binary
classifier for one confusable class pair on a dataset balanced over
{class a, class b} x {clean, perturbed}, so patch presence alone can never
predict the label."""

from __future__ import annotations

import copy
import dataclasses

import torch
import torch.nn.functional as F

from featadv.attack import insertion as ins
from featadv.attack.compose import decode_region_family
from featadv.attack.config import AttackConfig, SourceDistribution
from featadv.attack.engine import (AdversarialArtifact, AttackModels,
                                   LocationSampler, _child_seeds,
                                   _mask_offset_bounds, _patch_bounds,
                                   run_attack)
from featadv.errors import InputError
from featadv.evalharness.reports import DefenseReport

_PATCH_FAMILY = ("patch", "generalized_patch")


def _class_indices(models: AttackModels, class_id: int) -> torch.Tensor:
    if models.train_images is None or models.train_labels is None:
        raise InputError("defense needs a training image pool")
    return (models.train_labels == class_id).nonzero().flatten()


def _natural_images(models: AttackModels, class_id: int, k: int,
                    seed: int) -> torch.Tensor:
    idx = _class_indices(models, class_id)
    if len(idx) < k:
        raise InputError(f"class {class_id} has {len(idx)} training images; "
                         f"the defense dataset needs {k}")
    g = torch.Generator().manual_seed(int(seed))
    pick = idx[torch.randperm(len(idx), generator=g)[:k]]
    return models.train_images[pick]


def _insert_artifact(artifact: AdversarialArtifact, sources: torch.Tensor,
                     seed: int) -> torch.Tensor:
    """Plain (untransformed) insertion of a patch-family artifact into each
    source at locations drawn from the artifact's own distribution."""
    cfg = artifact.config
    side = sources.shape[2]
    loc = LocationSampler(cfg.location_spec, seed)
    out = []
    with torch.no_grad():
        if cfg.mode == "patch":
            b = _patch_bounds(side, ins.patch_side(side, cfg.area_fraction),
                              cfg.location_spec.margin)
            for src in sources:
                out.append(ins.insert_patch(src, artifact.patch_image,
                                            loc.draw_pair(b, b),
                                            cfg.area_fraction))
        else:
            ranges = _mask_offset_bounds(artifact.mask, side,
                                         cfg.location_spec.margin)
            for src in sources:
                out.append(ins.overlay_generalized_patch(
                    src, artifact.patch_image, artifact.mask,
                    loc.draw_pair(*ranges)))
    return torch.stack(out)


def _decode_pair(models: AttackModels, artifact: AdversarialArtifact,
                 class_id: int, k: int, seed: int
                 ) -> tuple[torch.Tensor, torch.Tensor]:
    """(clean, perturbed) generated images of one class for region-family
    artifacts; independent latent draws for the two halves."""
    g = models.generator
    rng = torch.Generator().manual_seed(int(seed))
    clean, pert = [], []
    with torch.no_grad():
        for _ in range(k):
            z = torch.randn(1, g.input_dim, generator=rng)
            clean.append(g.generate(z, class_id)[0])
        for _ in range(k):
            z = torch.randn(1, g.input_dim, generator=rng)
            pert.append(decode_region_family(artifact.perturbation, g, z,
                                             class_id))
    return torch.stack(clean), torch.stack(pert)


def build_defense_dataset(models: AttackModels, class_pair: tuple[int, int],
                          artifacts: tuple[AdversarialArtifact,
                                           AdversarialArtifact],
                          n: int = 1024, seed: int = 0
                          ) -> tuple[torch.Tensor, torch.Tensor, dict]:
    """n images split exactly n/4 per (class, clean/perturbed) cell, with
    binary labels (0 = first class). artifacts = (targets second class with
    first-class sources, targets first class with second-class sources)."""
    a, b = class_pair
    if n % 4 != 0:
        raise InputError("n must be divisible by 4 for exact cell balance")
    q = n // 4
    toward_b, toward_a = artifacts
    seeds = _child_seeds(seed, 4)
    mode = toward_b.config.mode

    halves = []
    for cls, artifact, s_nat, s_pert in ((a, toward_b, seeds[0], seeds[1]),
                                         (b, toward_a, seeds[2], seeds[3])):
        if mode in _PATCH_FAMILY:
            # disjoint natural sources for the clean and perturbed cells
            imgs = _natural_images(models, cls, 2 * q, s_nat)
            clean, pert = imgs[:q], _insert_artifact(artifact, imgs[q:],
                                                     s_pert)
        else:
            clean, pert = _decode_pair(models, artifact, cls, q, s_pert)
        halves.append((clean, pert))

    xs = torch.cat([halves[0][0], halves[0][1], halves[1][0], halves[1][1]])
    ys = torch.cat([torch.zeros(2 * q, dtype=torch.long),
                    torch.ones(2 * q, dtype=torch.long)])
    meta = {"cells": {"clean_a": q, "perturbed_a": q,
                      "clean_b": q, "perturbed_b": q},
            "mode": mode, "class_pair": [a, b]}
    return xs, ys, meta


def _binary_accuracy(net, images: torch.Tensor, labels: torch.Tensor,
                     pair: tuple[int, int], batch: int = 256) -> float:
    hits = 0
    with torch.no_grad():
        for i in range(0, len(images), batch):
            logits = net(images[i:i + batch])[:, list(pair)]
            hits += int((logits.argmax(dim=1) == labels[i:i + batch]).sum())
    return hits / len(images)


def _default_attack_pair(models: AttackModels, class_pair: tuple[int, int],
                         attack_mode: str, base: AttackConfig | None,
                         seeds: list[int]) -> tuple[AdversarialArtifact,
                                                    AdversarialArtifact]:
    a, b = class_pair
    if base is None:
        base = AttackConfig(mode=attack_mode, steps=400, batch_size=8,
                            init_search=16)
    src_kind = "dataset_class" if attack_mode in _PATCH_FAMILY \
        else "generated_class"
    arts = []
    for src_cls, target, seed in ((a, b, seeds[0]), (b, a, seeds[1])):
        cfg = dataclasses.replace(
            base, mode=attack_mode, target_class=target, seed=seed,
            source_spec=SourceDistribution(kind=src_kind, class_id=src_cls))
        arts.append(run_attack(cfg, models))
    return arts[0], arts[1]


def adversarial_training_defense(models: AttackModels,
                                 class_pair: tuple[int, int],
                                 attack_mode: str = "patch", n: int = 1024,
                                 seed: int = 0, epochs: int = 10,
                                 lr: float = 3e-4, batch_size: int = 64,
                                 holdout_fraction: float = 0.2,
                                 artifacts=None, attack_config=None,
                                 log=None) -> DefenseReport:
    """Measure how much adversarial fine-tuning helps the victim tell the
    pair apart under attack. Only the classifier head and the last conv
    block train; the held-out fraction is split off before any fine-tuning
    and scores both accuracies."""
    a, b = class_pair
    k = models.victim.num_classes
    if not (0 <= a < k and 0 <= b < k) or a == b:
        raise InputError(f"class pair must be two distinct classes in "
                         f"[0, {k}), got {class_pair}")
    seeds = _child_seeds(seed, 4)
    if artifacts is None:
        artifacts = _default_attack_pair(models, class_pair, attack_mode,
                                         attack_config, seeds[:2])
    xs, ys, _ = build_defense_dataset(models, class_pair, artifacts, n,
                                      seeds[2])

    g = torch.Generator().manual_seed(seeds[3])
    perm = torch.randperm(len(xs), generator=g)
    xs, ys = xs[perm], ys[perm]
    h = round(holdout_fraction * len(xs))
    if h < 1 or h >= len(xs):
        raise InputError(f"holdout fraction {holdout_fraction} leaves no "
                         f"usable split for {len(xs)} images")
    x_tr, y_tr, x_ho, y_ho = xs[:-h], ys[:-h], xs[-h:], ys[-h:]

    net = copy.deepcopy(models.victim.model)
    for p in net.parameters():
        p.requires_grad_(False)
    trainable = list(net.head.parameters()) \
        + list(net.features[8].parameters())  # final conv block
    for p in trainable:
        p.requires_grad_(True)

    pre = _binary_accuracy(net, x_ho, y_ho, class_pair)
    opt = torch.optim.Adam(trainable, lr=lr)
    net.train()
    for epoch in range(epochs):
        order = torch.randperm(len(x_tr), generator=g)
        for i in range(0, len(x_tr), batch_size):
            idx = order[i:i + batch_size]
            logits = net(x_tr[idx])[:, list(class_pair)]
            loss = F.cross_entropy(logits, y_tr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        if log:
            log(f"defense epoch {epoch + 1}/{epochs} loss {float(loss):.4f}")
    net.eval()
    post = _binary_accuracy(net, x_ho, y_ho, class_pair)

    return DefenseReport(class_pair=(a, b), attack_mode=attack_mode,
                         pre_accuracy=pre, post_accuracy=post, n=n,
                         heldout_n=h,
                         artifact_ids=[art.artifact_id for art in artifacts])
