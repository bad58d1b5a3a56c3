"""Attack engine: seeded sampling streams, per-mode initialization, the
optimization loop, and artifact persistence.

Determinism contract: every random draw comes from a named child stream
derived from config.seed, and no stream ever reads model or perturbation
state, so identical configs produce identical artifacts and sampler state
advances the same way whether or not parameter updates happen in between.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from featadv import tensorio
from featadv.attack import insertion as ins
from featadv.attack.compose import (SourceSample, decode_region_family,
                                    extract_current_patch)
from featadv.attack.config import AttackConfig, LocationDistribution
from featadv.attack.perturbation import (ChannelPerturbation,
                                         GeneralizedPatchPerturbation,
                                         PatchPerturbation,
                                         PixelPatchPerturbation,
                                         RegionPerturbation,
                                         perturbation_from_tensors)
from featadv.errors import ConfigurationError, InputError, OptimizationError
from featadv.models.handles import (ClassifierHandle, DiscriminatorHandle,
                                    GeneratorHandle, onehot)
from featadv.regularizers import RegContext, extract_and_resize, l_reg, \
    perceptual_distance
from featadv.transforms import TransformConfig, sample_transform

_STREAMS = ("source", "transform", "location", "init", "probe", "display")
_INIT_PROBES = 16   # composites used to score initialization candidates
_PROBE_SAMPLES = 64  # composites behind artifact-level metrics
CURVE_COLUMNS = ("step", "total", "xent", "tv", "disc", "entropy", "patch_xent")
_MAX_HALVINGS = 3


@dataclass
class AttackModels:
    """Frozen model suite an attack runs against. `victims` is an ensemble;
    a single-victim attack is the one-element case of the same code path."""

    generator: GeneratorHandle
    victims: list[ClassifierHandle]
    discriminator: DiscriminatorHandle | None = None
    aux_classifier: ClassifierHandle | None = None
    train_images: torch.Tensor | None = None
    train_labels: torch.Tensor | None = None
    eval_images: torch.Tensor | None = None
    eval_labels: torch.Tensor | None = None

    @property
    def victim(self) -> ClassifierHandle:
        return self.victims[0]

    def hashes(self) -> dict:
        out = {"generator": self.generator.content_hash,
               "victims": [v.content_hash for v in self.victims]}
        if self.discriminator is not None:
            out["discriminator"] = self.discriminator.content_hash
        if self.aux_classifier is not None:
            out["aux_classifier"] = self.aux_classifier.content_hash
        return out


def _child_seeds(seed: int, n: int) -> list[int]:
    g = torch.Generator().manual_seed(int(seed))
    return torch.randint(0, 2**31 - 1, (n,), generator=g).tolist()


def derive_streams(seed: int) -> dict[str, int]:
    """Named child seeds for the job's independent sampling streams."""
    return dict(zip(_STREAMS, _child_seeds(seed, len(_STREAMS))))


class SourceSampler:
    """Draws source samples from the configured distribution. Stateful only
    through its private generator; never reads attack state."""

    def __init__(self, config: AttackConfig, models: AttackModels, seed: int):
        self._g = torch.Generator().manual_seed(int(seed))
        self._spec = config.source_spec
        self._models = models
        kind = self._spec.kind
        if kind in ("dataset_class", "dataset_all"):
            if models.train_images is None or models.train_labels is None:
                raise ConfigurationError(f"{kind} source needs a training pool")
            if kind == "dataset_class":
                idx = (models.train_labels == self._spec.class_id).nonzero().flatten()
                if len(idx) == 0:
                    raise InputError(
                        f"no training images of class {self._spec.class_id}")
            else:
                idx = torch.arange(len(models.train_images))
            self._pool = idx
        elif kind == "fixed_image":
            if models.eval_images is None:
                raise ConfigurationError("fixed_image source needs an eval pool")
            if not 0 <= self._spec.image_index < len(models.eval_images):
                raise InputError(
                    f"image_index {self._spec.image_index} outside eval pool "
                    f"of {len(models.eval_images)}")

    def draw(self) -> SourceSample:
        kind, m = self._spec.kind, self._models
        if kind in ("dataset_class", "dataset_all"):
            i = int(self._pool[int(torch.randint(len(self._pool), (1,),
                                                 generator=self._g))])
            return SourceSample(image=m.train_images[i])
        if kind == "fixed_image":
            return SourceSample(image=m.eval_images[self._spec.image_index])
        z = torch.randn(1, m.generator.input_dim, generator=self._g)
        if kind == "generated_class":
            y = self._spec.class_id
        else:
            y = int(torch.randint(m.generator.num_classes, (1,),
                                  generator=self._g))
        return SourceSample(z=z, y=y)


class TransformSampler:
    def __init__(self, config: TransformConfig, seed: int):
        self._config = config
        self._g = torch.Generator().manual_seed(int(seed))

    def draw(self):
        return sample_transform(self._config, self._g)


class LocationSampler:
    """Draws placements from inclusive valid ranges computed by the caller
    (margins and artifact extent already folded in)."""

    def __init__(self, spec: LocationDistribution, seed: int):
        self._spec = spec
        self._g = torch.Generator().manual_seed(int(seed))

    def _randint(self, lo: int, hi: int) -> int:
        if hi < lo:
            raise InputError(
                f"no valid placement: range [{lo}, {hi}] is empty")
        return int(torch.randint(lo, hi + 1, (1,), generator=self._g))

    @staticmethod
    def _check(v: int, lo: int, hi: int, what: str) -> int:
        if not lo <= v <= hi:
            raise InputError(
                f"fixed {what} {v} outside valid range [{lo}, {hi}]")
        return int(v)

    def draw_pair(self, t_range: tuple[int, int],
                  l_range: tuple[int, int]) -> tuple[int, int]:
        if self._spec.kind == "fixed":
            t, l = self._spec.location
            return (self._check(t, *t_range, "row"),
                    self._check(l, *l_range, "column"))
        return (self._randint(*t_range), self._randint(*l_range))

    def draw_scalar(self, rng: tuple[int, int]) -> int:
        if self._spec.kind == "fixed":
            return self._check(self._spec.location[0], *rng, "index")
        return self._randint(*rng)


def _patch_bounds(image_side: int, patch_side: int, margin: int) -> tuple[int, int]:
    return (margin, image_side - patch_side - margin)


def _mask_offset_bounds(mask: torch.Tensor, image_side: int, margin: int
                        ) -> tuple[tuple[int, int], tuple[int, int]]:
    """Valid (dy, dx) translation ranges keeping the mask support within
    margin of the image border."""
    on = torch.nonzero(mask > 0.5)
    if len(on) == 0:
        raise OptimizationError("extracted mask is empty")
    r0, c0 = (int(v) for v in on.min(dim=0).values)
    r1, c1 = (int(v) for v in on.max(dim=0).values)
    return ((margin - r0, image_side - 1 - margin - r1),
            (margin - c0, image_side - 1 - margin - c1))


def _validate_models(config: AttackConfig, models: AttackModels) -> None:
    if not models.victims:
        raise ConfigurationError("at least one victim classifier is required")
    if models.generator is None:
        raise ConfigurationError("a generator is required (initialization "
                                 "draws from it in every mode)")
    w, f = config.loss_weights, config.ablation_flags
    if config.mode != "patch" and not f.use_generator:
        raise ConfigurationError(
            f"{config.mode} mode requires the generator path")
    if f.use_disc_term and w.lambda_disc > 0 and models.discriminator is None:
        raise ConfigurationError("realism term needs a discriminator")
    needs_aux = ((f.use_entropy_term and w.lambda_entropy > 0)
                 or (f.use_patch_xent_term and w.lambda_patch_xent > 0)
                 or (config.mode in ("region", "channel", "generalized_patch")
                     and w.lambda_perceptual > 0))
    if needs_aux and models.aux_classifier is None:
        raise ConfigurationError("entropy/anti-target/perceptual terms need "
                                 "an auxiliary classifier")


# ---------------------------------------------------------------- init

def _score_candidates(config: AttackConfig, models: AttackModels,
                      candidates: torch.Tensor, seeds: list[int]) -> int:
    """Mean ensemble target probability of each candidate patch over a
    shared set of probe composites; returns the argmax index."""
    src = SourceSampler(config, models, seeds[0])
    tr = TransformSampler(config.transform_spec, seeds[1])
    loc = LocationSampler(config.location_spec, seeds[2])
    g = models.generator
    side = ins.patch_side(g.output_resolution, config.area_fraction)
    b = _patch_bounds(g.output_resolution, side, config.location_spec.margin)
    k = candidates.shape[0]
    score = torch.zeros(k)
    with torch.no_grad():
        for _ in range(_INIT_PROBES):
            s, t = src.draw(), tr.draw()
            l = loc.draw_pair(b, b)
            x = s.materialize(g)[None].expand(k, -1, -1, -1)
            comp = t.apply(ins.insert_patch(x, candidates, l,
                                            config.area_fraction))
            probs = torch.stack([v.classify(comp)[:, config.target_class]
                                 for v in models.victims])
            score += probs.mean(dim=0)
    return int(score.argmax())


def init_perturbation(config: AttackConfig, models: AttackModels,
                      init_seed: int, location_sampler: LocationSampler):
    """Build the mode's starting perturbation.

    Patch family searches init_search generator samples of the target class
    and keeps the one whose probe composites already score best; the
    generator-free control converts that sample to pre-sigmoid pixels.
    Region family copies the activation block of a reference draw at the
    site chosen once from the location stream."""
    g = models.generator
    draw_seed, *probe_seeds = _child_seeds(init_seed, 4)
    rng = torch.Generator().manual_seed(draw_seed)

    if config.mode == "patch":
        k = max(1, config.init_search)
        z = torch.randn(k, g.input_dim, generator=rng)
        y = onehot(torch.full((k,), config.target_class, dtype=torch.long),
                   g.num_classes)
        with torch.no_grad():
            cand = g.generate_from_vector(z, y)
        best = 0 if k == 1 else _score_candidates(config, models, cand,
                                                  probe_seeds)
        if config.ablation_flags.use_generator:
            return PatchPerturbation(z[best:best + 1], y[best:best + 1])
        p = cand[best].clamp(1e-3, 1 - 1e-3)
        return PixelPatchPerturbation(torch.log(p / (1 - p)))

    # region family: reference draw, then copy its block at the chosen site
    z_ref = torch.randn(1, g.input_dim, generator=rng)
    if config.source_spec.kind == "generated_class":
        y_ref = config.source_spec.class_id
    else:
        y_ref = int(torch.randint(g.num_classes, (1,), generator=rng))
    with torch.no_grad():
        act = g.activations_at(z_ref, y_ref, config.layer_id)[0]
    eps = config.input_latent_perturb_bound
    dz = torch.zeros(1, g.input_dim) if eps > 0 else None

    if config.mode == "channel":
        n = ins.channel_count(act.shape[0], config.area_fraction)
        start = location_sampler.draw_scalar((0, act.shape[0] - n))
        return ChannelPerturbation(act[start:start + n].clone(), start,
                                   config.layer_id, dz)

    side = ins.region_side(act.shape[1], config.area_fraction)
    m = config.location_spec.margin
    b = _patch_bounds(act.shape[1], side, m)
    off = location_sampler.draw_pair(b, b)
    block = act[:, off[0]:off[0] + side, off[1]:off[1] + side].clone()
    if config.mode == "region":
        return RegionPerturbation(block, off, config.layer_id, dz)
    return GeneralizedPatchPerturbation(block, off, config.layer_id,
                                        z_ref, y_ref, dz)


# ---------------------------------------------------------------- loss

def _decode_region_batch(perturbation, g: GeneratorHandle,
                         z: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Batched counterpart of compose.decode_region_family."""
    zs = perturbation.shifted(z)
    y_vec = onehot(y, g.num_classes).to(zs.dtype)
    act = g.activations_at(zs, y, perturbation.layer_id)
    if isinstance(perturbation, ChannelPerturbation):
        act = ins.apply_channel(act, perturbation.insertion,
                                perturbation.channels)
    else:
        act = ins.apply_region(act, perturbation.insertion,
                               perturbation.offset)
    return g.forward_from(perturbation.layer_id, act, (zs, y_vec))


def _require_finite(name: str, t: torch.Tensor) -> None:
    if not torch.isfinite(t).all():
        raise OptimizationError(f"non-finite values in {name}")


def attack_step_loss(config: AttackConfig, perturbation,
                     models: AttackModels, batch) -> tuple[torch.Tensor, dict]:
    """One optimization objective evaluation over a sampled batch.

    `batch` is a list of (SourceSample, SampledTransform, location) triples
    drawn by the job's streams. Returns the differentiable total and a
    float breakdown whose terms sum to it. Raises an optimization error on
    any non-finite intermediate so the caller can run the step-size
    fallback."""
    g = models.generator
    mode = config.mode
    w = config.loss_weights
    ctx = RegContext(weights=w, flags=config.ablation_flags,
                     discriminator=models.discriminator,
                     aux_classifier=models.aux_classifier,
                     target_class=config.target_class,
                     resolution=models.victim.input_resolution)

    if mode == "patch":
        patch = perturbation.patch_image(g)
        _require_finite("patch", patch)
        comps = torch.stack([
            t.apply(ins.insert_patch(s.materialize(g), patch, l,
                                     config.area_fraction))
            for s, t, l in batch])
        a = patch
    elif mode in ("region", "channel"):
        z = torch.cat([s.z for s, _, _ in batch])
        y = torch.tensor([s.y for s, _, _ in batch])
        decoded = _decode_region_batch(perturbation, g, z, y)
        _require_finite("decoded images", decoded)
        comps = torch.stack([t.apply(d)
                             for d, (_, t, _) in zip(decoded, batch)])
        a = decoded
        if w.lambda_perceptual > 0:
            with torch.no_grad():
                ctx.perceptual_reference = g.generate(z, y)
    elif mode == "generalized_patch":
        mask, masked, adv = extract_current_patch(perturbation, g,
                                                  config.smoothing_sigma)
        _require_finite("masked patch", masked)
        comps = torch.stack([
            t.apply(ins.overlay_generalized_patch(s.materialize(g), masked,
                                                  mask, l))
            for s, t, l in batch])
        a = masked
        ctx.mask = mask
        if w.lambda_perceptual > 0:
            with torch.no_grad():
                clean = g.generate(perturbation.base_z, perturbation.base_y)[0]
            ctx.extra_terms["perceptual"] = (
                w.lambda_perceptual
                * perceptual_distance(models.aux_classifier, adv, clean))
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")

    _require_finite("composites", comps)
    target = torch.full((comps.shape[0],), config.target_class,
                        dtype=torch.long)
    xent = torch.stack([F.cross_entropy(v.logits(comps), target)
                        for v in models.victims]).mean()
    reg_total, bd = l_reg(a, ctx)
    loss = xent + reg_total
    _require_finite("loss", loss)

    breakdown = {"total": float(loss.detach()), "xent": float(xent.detach())}
    for k, v in bd.items():
        breakdown[k] = float(v.detach()) if torch.is_tensor(v) else float(v)
    return loss, breakdown


# ---------------------------------------------------------------- loop

def _draw_batch(config: AttackConfig, perturbation, models: AttackModels,
                src: SourceSampler, tr: TransformSampler,
                loc: LocationSampler) -> list:
    g = models.generator
    m = config.location_spec.margin
    if config.mode == "patch":
        side = ins.patch_side(g.output_resolution, config.area_fraction)
        b = _patch_bounds(g.output_resolution, side, m)
        ranges = (b, b)
    elif config.mode == "generalized_patch":
        with torch.no_grad():
            mask, _, _ = extract_current_patch(perturbation, g,
                                               config.smoothing_sigma)
        ranges = _mask_offset_bounds(mask, g.output_resolution, m)
    else:
        ranges = None  # site fixed at init; no per-sample placement
    if ranges is None:
        site = (getattr(perturbation, "offset", None)
                or (perturbation.channel_start, 0))
    batch = []
    for _ in range(config.batch_size):
        s, t = src.draw(), tr.draw()
        l = site if ranges is None else loc.draw_pair(*ranges)
        batch.append((s, t, l))
    return batch


def _describe_batch(batch) -> list[dict]:
    out = []
    for s, t, l in batch:
        if s.image is not None:
            source = ["image", round(float(s.image.sum()), 5)]
        else:
            source = ["generated", round(float(s.z.sum()), 5), s.y]
        out.append({"source": source, "transform": t.to_dict(),
                    "location": list(l)})
    return out


def _restore(params: list[torch.Tensor], saved: list[torch.Tensor]) -> None:
    with torch.no_grad():
        for p, s in zip(params, saved):
            p.copy_(s)


@dataclass
class AdversarialArtifact:
    """A finished attack: the trained perturbation, its displayable feature
    image, metrics, and the loss trajectory."""

    config: AttackConfig
    perturbation: object
    patch_image: torch.Tensor | None
    mask: torch.Tensor | None
    metrics: dict
    loss_curve: list[dict]
    model_hashes: dict = field(default_factory=dict)
    artifact_id: str = ""

    def __post_init__(self):
        if not self.artifact_id:
            self.artifact_id = _artifact_id(self.config,
                                            self.perturbation.to_tensors())


def _artifact_id(config: AttackConfig, tensors: dict) -> str:
    digests = {k: hashlib.sha256(
        v.detach().contiguous().numpy().tobytes()).hexdigest()
        for k, v in sorted(tensors.items())}
    return tensorio.content_id({"config": config.to_dict(),
                                "tensors": digests})


def disguise_input(config: AttackConfig, artifact_image: torch.Tensor,
                   mask: torch.Tensor | None, resolution: int) -> torch.Tensor:
    """P(a): what the victim sees when judging the artifact alone."""
    if config.mode == "generalized_patch":
        return extract_and_resize(artifact_image, resolution, mask=mask)
    return extract_and_resize(artifact_image, resolution)


def materialize_artifact(config: AttackConfig, perturbation,
                         models: AttackModels, display_seed: int
                         ) -> tuple[torch.Tensor, torch.Tensor | None]:
    """(feature image, mask) for storage and the disguise check. Region and
    channel artifacts are shown through a reference decode drawn from the
    display stream."""
    g = models.generator
    if config.mode == "patch":
        with torch.no_grad():
            return perturbation.patch_image(g).detach(), None
    if config.mode == "generalized_patch":
        with torch.no_grad():
            mask, masked, _ = extract_current_patch(perturbation, g,
                                                    config.smoothing_sigma)
        return masked.detach(), mask
    rng = torch.Generator().manual_seed(int(display_seed))
    z = torch.randn(1, g.input_dim, generator=rng)
    if config.source_spec.kind == "generated_class":
        y = config.source_spec.class_id
    else:
        y = int(torch.randint(g.num_classes, (1,), generator=rng))
    with torch.no_grad():
        return decode_region_family(perturbation, g, z, y).detach(), None


def probe_metrics(config: AttackConfig, perturbation, models: AttackModels,
                  probe_seed: int, n: int = _PROBE_SAMPLES) -> dict:
    """Training-distribution estimate of attack strength: mean victim target
    confidence and top-1 rate over fresh probe composites."""
    seeds = _child_seeds(probe_seed, 3)
    src = SourceSampler(config, models, seeds[0])
    tr = TransformSampler(config.transform_spec, seeds[1])
    loc = LocationSampler(config.location_spec, seeds[2])
    g = models.generator
    comps = []
    with torch.no_grad():
        if config.mode == "patch":
            patch = perturbation.patch_image(g)
            side = ins.patch_side(g.output_resolution, config.area_fraction)
            b = _patch_bounds(g.output_resolution, side,
                              config.location_spec.margin)
            for _ in range(n):
                s, t = src.draw(), tr.draw()
                l = loc.draw_pair(b, b)
                comps.append(t.apply(ins.insert_patch(
                    s.materialize(g), patch, l, config.area_fraction)))
        elif config.mode == "generalized_patch":
            mask, masked, _ = extract_current_patch(perturbation, g,
                                                    config.smoothing_sigma)
            ranges = _mask_offset_bounds(mask, g.output_resolution,
                                         config.location_spec.margin)
            for _ in range(n):
                s, t = src.draw(), tr.draw()
                l = loc.draw_pair(*ranges)
                comps.append(t.apply(ins.overlay_generalized_patch(
                    s.materialize(g), masked, mask, l)))
        else:
            for _ in range(n):
                s, t = src.draw(), tr.draw()
                comps.append(t.apply(decode_region_family(
                    perturbation, g, s.z, s.y)))
        comps = torch.stack(comps)
        probs = models.victim.classify(comps)
    conf = probs[:, config.target_class]
    return {"mean_target_confidence": float(conf.mean()),
            "top1_success_rate": float((probs.argmax(dim=1)
                                        == config.target_class).float().mean()),
            "probe_samples": n}


def artifact_metrics(config: AttackConfig, perturbation,
                     models: AttackModels) -> tuple[dict, torch.Tensor,
                                                    torch.Tensor | None]:
    """Recomputable metrics block plus the artifact's feature image and
    mask. Depends only on (config, perturbation, models), which is what
    makes stored metrics replayable."""
    seeds = derive_streams(config.seed)
    image, mask = materialize_artifact(config, perturbation, models,
                                       seeds["display"])
    metrics = probe_metrics(config, perturbation, models, seeds["probe"])
    victim = models.victim
    with torch.no_grad():
        q = victim.classify(disguise_input(config, image, mask,
                                           victim.input_resolution))
    cls = int(q.argmax())
    metrics.update({"disguise": cls != config.target_class,
                    "disguise_class": cls,
                    "disguise_confidence": float(q[cls])})
    return metrics, image, mask


def run_attack(config: AttackConfig, models: AttackModels,
               out_dir: str | Path | None = None,
               trace: list | None = None) -> AdversarialArtifact:
    """Optimize one attack to completion and return (optionally persist)
    its artifact.

    Non-finite losses trigger the fallback: restore the last finite-loss
    parameters, halve the step size, and retry, at most three times before
    the job aborts. steps=0 skips optimization and emits the initialization
    itself (useful for baselines and init inspection)."""
    _validate_models(config, models)
    seeds = derive_streams(config.seed)
    loc = LocationSampler(config.location_spec, seeds["location"])
    pert = init_perturbation(config, models, seeds["init"], loc)
    src = SourceSampler(config, models, seeds["source"])
    tr = TransformSampler(config.transform_spec, seeds["transform"])

    params = pert.parameters()
    lr = config.step_size
    opt = torch.optim.Adam(params, lr=lr)
    last_good = [p.detach().clone() for p in params]
    curve: list[dict] = []
    halvings = 0
    step = 0
    while step < config.steps:
        batch = _draw_batch(config, pert, models, src, tr, loc)
        if trace is not None:
            trace.append(_describe_batch(batch))
        try:
            loss, breakdown = attack_step_loss(config, pert, models, batch)
        except OptimizationError as err:
            if halvings >= _MAX_HALVINGS:
                raise OptimizationError(
                    f"diverged at step {step} after {halvings} step-size "
                    f"halvings (lr={lr:g}): {err}") from err
            halvings += 1
            lr = lr / 2
            _restore(params, last_good)
            opt = torch.optim.Adam(params, lr=lr)
            continue
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        pert.project_(config.input_latent_perturb_bound)
        last_good = [p.detach().clone() for p in params]
        last_breakdown = breakdown
        curve.append({"step": step,
                      **{c: breakdown[c] for c in CURVE_COLUMNS[1:]}})
        step += 1

    metrics, image, mask = artifact_metrics(config, pert, models)
    metrics["final_loss"] = curve[-1]["total"] if curve else None
    metrics["final_breakdown"] = ({k: v for k, v in last_breakdown.items()
                                   if k != "total"}
                                  if curve else None)
    metrics["step_size_halvings"] = halvings
    artifact = AdversarialArtifact(config=config, perturbation=pert,
                                   patch_image=image, mask=mask,
                                   metrics=metrics, loss_curve=curve,
                                   model_hashes=models.hashes())
    if out_dir is not None:
        save_artifact(artifact, out_dir)
    return artifact


# ---------------------------------------------------------------- storage

def save_artifact(artifact: AdversarialArtifact, dirpath: str | Path) -> Path:
    """Write artifact.json, loss_curve.csv, the tensor store, and preview
    PNGs under `dirpath`."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    state = dict(artifact.perturbation.to_tensors())
    if artifact.patch_image is not None:
        state["artifact.patch_image"] = artifact.patch_image
    if artifact.mask is not None:
        state["artifact.mask"] = artifact.mask
    tensorio.save_state_dict(
        d / "tensors", state,
        architecture=f"perturbation:{artifact.perturbation.kind}")

    meta = {"schema_version": 1,
            "artifact_id": artifact.artifact_id,
            "mode": artifact.config.mode,
            "target_class": artifact.config.target_class,
            "perturbation_kind": artifact.perturbation.kind,
            "layer_id": artifact.config.layer_id,
            "config": artifact.config.to_dict(),
            "config_hash": artifact.config.config_hash(),
            "metrics": artifact.metrics,
            "model_hashes": artifact.model_hashes}
    (d / "artifact.json").write_text(json.dumps(meta, indent=2,
                                                sort_keys=True))

    with open(d / "loss_curve.csv", "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(CURVE_COLUMNS)
        for row in artifact.loss_curve:
            out.writerow([repr(row[c]) if isinstance(row[c], float)
                          else row[c] for c in CURVE_COLUMNS])

    if artifact.patch_image is not None:
        write_png(artifact.patch_image, d / "patch.png")
    if artifact.mask is not None:
        write_png(artifact.mask[None].expand(3, -1, -1), d / "mask.png")
    return d


def write_png(image: torch.Tensor, path: str | Path) -> None:
    from PIL import Image
    arr = (image.detach().clamp(0, 1) * 255).round().to(torch.uint8)
    Image.fromarray(arr.permute(1, 2, 0).numpy()).save(path)


def load_artifact(dirpath: str | Path) -> AdversarialArtifact:
    d = Path(dirpath)
    try:
        meta = json.loads((d / "artifact.json").read_text())
    except FileNotFoundError:
        raise InputError(f"no artifact at {d}") from None
    config = AttackConfig.from_dict(meta["config"])
    state = tensorio.load_state_dict(d / "tensors")
    image = state.pop("artifact.patch_image", None)
    mask = state.pop("artifact.mask", None)
    pert = perturbation_from_tensors(meta["perturbation_kind"], state,
                                     meta["layer_id"])
    curve = []
    curve_path = d / "loss_curve.csv"
    if curve_path.exists():
        with open(curve_path, newline="") as f:
            for row in csv.DictReader(f):
                curve.append({"step": int(row["step"]),
                              **{c: float(row[c]) for c in CURVE_COLUMNS[1:]}})
    return AdversarialArtifact(config=config, perturbation=pert,
                               patch_image=image, mask=mask,
                               metrics=meta["metrics"], loss_curve=curve,
                               model_hashes=meta.get("model_hashes", {}),
                               artifact_id=meta["artifact_id"])
