"""Artifact-level evaluation: universality over source images, the
standalone disguise check, and the independent-classifier realism proxy.

Every function here is deterministic given (artifact, sources, seed): all
randomness flows through named child seeds, mirroring the attack engine.
"""

from __future__ import annotations

import torch

from featadv.attack import insertion as ins
from featadv.attack.compose import decode_region_family
from featadv.attack.engine import (AdversarialArtifact, AttackModels,
                                   LocationSampler, SourceSampler,
                                   TransformSampler, _child_seeds,
                                   _mask_offset_bounds, _patch_bounds,
                                   disguise_input)
from featadv.errors import ConfigurationError, InputError
from featadv.evalharness.reports import EvalReport
from featadv.models.handles import ClassifierHandle

# perturbation kinds a given config mode may carry
_MODE_KINDS = {"patch": ("patch_latent", "patch_pixel"),
               "region": ("region",),
               "channel": ("channel",),
               "generalized_patch": ("generalized_patch",)}


def _check_artifact(artifact: AdversarialArtifact) -> str:
    mode = artifact.config.mode
    kind = artifact.perturbation.kind
    if kind not in _MODE_KINDS[mode]:
        raise InputError(
            f"artifact perturbation kind {kind!r} does not match its "
            f"declared mode {mode!r}")
    if mode in ("patch", "generalized_patch") and artifact.patch_image is None:
        raise InputError("artifact has no stored feature image")
    if mode == "generalized_patch" and artifact.mask is None:
        raise InputError("generalized-patch artifact has no stored mask")
    return mode


def _source_images(models: AttackModels, n: int, seed: int) -> torch.Tensor:
    """n held-out images, drawn without replacement from the eval pool (kept
    disjoint from the attack's training sources)."""
    pool = models.eval_images
    if pool is None:
        raise ConfigurationError("universality eval needs an eval image pool")
    if n > len(pool):
        raise InputError(f"asked for {n} sources but the eval pool has "
                         f"{len(pool)}")
    g = torch.Generator().manual_seed(int(seed))
    return pool[torch.randperm(len(pool), generator=g)[:n]]


def disguise_check(artifact: AdversarialArtifact,
                   victim: ClassifierHandle) -> tuple[bool, int, float]:
    """Classify the feature image alone. Returns (flag, class, confidence)
    where flag is True when the argmax is not the target class."""
    _check_artifact(artifact)
    if artifact.patch_image is None:
        raise InputError("artifact has no stored feature image")
    with torch.no_grad():
        q = victim.classify(disguise_input(artifact.config,
                                           artifact.patch_image,
                                           artifact.mask,
                                           victim.input_resolution))
    cls = int(q.argmax())
    return cls != artifact.config.target_class, cls, float(q[cls])


def universality_eval(artifact: AdversarialArtifact, models: AttackModels,
                      sources: torch.Tensor | list | None = None,
                      n: int = 100, seed: int = 0,
                      location_spec=None, transform_spec=None,
                      victim: ClassifierHandle | None = None) -> EvalReport:
    """Insert/overlay/decode the artifact against n sources at sampled
    locations and transforms, classify, and aggregate.

    Patch-family artifacts take image sources (default: a seeded draw from
    the held-out pool). Region and channel artifacts perturb generated
    images, so sources must be None; the generated draws come from the
    artifact's own source distribution. Each record also carries the clean
    (artifact-free) confidence of the same transformed source for paired
    comparisons.
    """
    mode = _check_artifact(artifact)
    cfg = artifact.config
    victim = victim if victim is not None else models.victim
    loc_spec = location_spec if location_spec is not None else cfg.location_spec
    tr_spec = transform_spec if transform_spec is not None else cfg.transform_spec
    seeds = _child_seeds(seed, 3)

    samples = None
    if mode in ("patch", "generalized_patch"):
        if sources is None:
            sources = _source_images(models, n, seeds[0])
        elif isinstance(sources, (list, tuple)):
            sources = torch.stack(list(sources))
        if sources.dim() == 3:
            sources = sources[None]
        if sources.dim() != 4 or sources.shape[1] != 3:
            raise InputError(f"sources must be a batch of RGB images, got "
                             f"shape {tuple(sources.shape)}")
        n = len(sources)
    else:
        if sources is not None:
            raise InputError(f"{mode} artifacts perturb generated images; "
                             f"explicit image sources do not apply")
        sampler = SourceSampler(cfg, models, seeds[0])
        samples = [sampler.draw() for _ in range(n)]
    if n < 1:
        raise InputError("need at least one source")

    tr = TransformSampler(tr_spec, seeds[1])
    loc = LocationSampler(loc_spec, seeds[2])
    g = models.generator
    side = g.output_resolution

    comps, cleans, locations = [], [], []
    with torch.no_grad():
        if mode == "patch":
            b = _patch_bounds(side,
                              ins.patch_side(side, cfg.area_fraction),
                              loc_spec.margin)
            for i in range(n):
                t, l = tr.draw(), loc.draw_pair(b, b)
                comps.append(t.apply(ins.insert_patch(
                    sources[i], artifact.patch_image, l, cfg.area_fraction)))
                cleans.append(t.apply(sources[i]))
                locations.append(list(l))
        elif mode == "generalized_patch":
            ranges = _mask_offset_bounds(artifact.mask, side, loc_spec.margin)
            for i in range(n):
                t, l = tr.draw(), loc.draw_pair(*ranges)
                comps.append(t.apply(ins.overlay_generalized_patch(
                    sources[i], artifact.patch_image, artifact.mask, l)))
                cleans.append(t.apply(sources[i]))
                locations.append(list(l))
        else:
            for s in samples:
                t = tr.draw()
                comps.append(t.apply(decode_region_family(
                    artifact.perturbation, g, s.z, s.y)))
                cleans.append(t.apply(s.materialize(g)))
                locations.append(None)
        probs = victim.classify(torch.stack(comps))
        clean_probs = victim.classify(torch.stack(cleans))

    conf = probs[:, cfg.target_class]
    top1 = probs.argmax(dim=1)
    records = [{"index": i,
                "target_confidence": float(conf[i]),
                "clean_confidence": float(clean_probs[i, cfg.target_class]),
                "top1": int(top1[i]),
                "location": locations[i]} for i in range(n)]
    flag, cls, dconf = disguise_check(artifact, victim)
    return EvalReport(
        artifact_id=artifact.artifact_id, mode=mode,
        target_class=cfg.target_class, n_sources=n,
        mean_confidence=float(conf.mean()),
        std_confidence=float(conf.std(correction=0)),
        success_rate=float((top1 == cfg.target_class).float().mean()),
        disguise=flag, disguise_class=cls, disguise_confidence=dconf,
        seed=seed, victim_hash=victim.content_hash, records=records)


def realism_proxy(artifact: AdversarialArtifact,
                  proxy_classifier: ClassifierHandle) -> float:
    """Confidence an independent classifier assigns to the artifact's
    disguise class; a stand-in for human judgement of how convincing the
    disguise is."""
    metrics = artifact.metrics or {}
    if "disguise_class" not in metrics:
        raise InputError("artifact has no recorded disguise class; compute "
                         "artifact metrics first")
    if artifact.patch_image is None:
        raise InputError("artifact has no stored feature image")
    victim_hashes = (artifact.model_hashes or {}).get("victims", [])
    h = proxy_classifier.content_hash
    if h and h in victim_hashes:
        raise ConfigurationError("realism proxy must be a classifier "
                                 "independent of the attacked victim")
    with torch.no_grad():
        q = proxy_classifier.classify(disguise_input(
            artifact.config, artifact.patch_image, artifact.mask,
            proxy_classifier.input_resolution))
    return float(q[metrics["disguise_class"]])
