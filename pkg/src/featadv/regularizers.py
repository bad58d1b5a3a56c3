"""Disguise regularization terms and their weighted composition.

The disguise loss drives an attack artifact to (1) look real to a
discriminator, (2) look like a confident, definite class to an auxiliary
classifier, and (3) not look like the attack's own target class, plus a
total-variation smoothness term and, for region-family attacks, a
perceptual anchor to the unperturbed decode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from featadv.errors import InputError
from featadv.models.handles import ClassifierHandle, DiscriminatorHandle

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerWeights:
    """Non-negative term weights. lambda_p applies only to region-family
    attacks (it anchors the decode to its unperturbed counterpart)."""

    lambda_tv: float = 1e-4
    lambda_disc: float = 1.0
    lambda_entropy: float = 1.0
    lambda_patch_xent: float = 1.0
    lambda_perceptual: float = 1.0

    def __post_init__(self):
        for name in ("lambda_tv", "lambda_disc", "lambda_entropy",
                     "lambda_patch_xent", "lambda_perceptual"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {"lambda_tv": self.lambda_tv, "lambda_disc": self.lambda_disc,
                "lambda_entropy": self.lambda_entropy,
                "lambda_patch_xent": self.lambda_patch_xent,
                "lambda_perceptual": self.lambda_perceptual}

    @classmethod
    def from_dict(cls, d: dict) -> "RegularizerWeights":
        return cls(**d)


@dataclass(frozen=True)
class AblationFlags:
    """Switches for the ablation grid. A flag that is off removes its term
    (and the term's gradient) entirely; TV stays on in every condition."""

    use_generator: bool = True
    use_disc_term: bool = True
    use_entropy_term: bool = True
    use_patch_xent_term: bool = True

    def to_dict(self) -> dict:
        return {"use_generator": self.use_generator,
                "use_disc_term": self.use_disc_term,
                "use_entropy_term": self.use_entropy_term,
                "use_patch_xent_term": self.use_patch_xent_term}

    @classmethod
    def from_dict(cls, d: dict) -> "AblationFlags":
        return cls(**d)


def total_variation(a: torch.Tensor) -> torch.Tensor:
    """Anisotropic TV normalized by pixel count (summed over channels,
    averaged over any batch dim)."""
    if a.dim() == 3:
        a = a[None]
    n = a.shape[2] * a.shape[3]
    dh = (a[:, :, :, 1:] - a[:, :, :, :-1]).abs().sum(dim=(1, 2, 3))
    dv = (a[:, :, 1:, :] - a[:, :, :-1, :]).abs().sum(dim=(1, 2, 3))
    return ((dh + dv) / n).mean()


def extract_and_resize(a: torch.Tensor, resolution: int,
                       mask: torch.Tensor | None = None) -> torch.Tensor:
    """P(a): the disguise-term input.

    Without a mask, `a` is the artifact itself (a patch or a full decoded
    image) and is bilinearly resized to `resolution`. With a mask (the
    generalized-patch case), the mask's bounding box is cropped out of `a`,
    pixels outside the mask are zero-filled, and the crop is resized."""
    squeeze = a.dim() == 3
    x = a[None] if squeeze else a
    if mask is not None:
        if mask.dim() != 2:
            raise InputError("mask must be HxW")
        on = torch.nonzero(mask > 0.5)
        if len(on) == 0:
            raise InputError("empty mask")
        r0, c0 = (int(v) for v in on.min(dim=0).values)
        r1, c1 = (int(v) for v in on.max(dim=0).values)
        x = (x * mask.to(x.dtype))[:, :, r0:r1 + 1, c0:c1 + 1]
    if x.shape[2] != resolution or x.shape[3] != resolution:
        x = F.interpolate(x, size=(resolution, resolution), mode="bilinear",
                          align_corners=False)
    return x[0] if squeeze else x


def realism_loss(disc: DiscriminatorHandle, p: torch.Tensor) -> torch.Tensor:
    """softplus(-realness logit); small when the discriminator reads `p`
    as real."""
    logit = disc.discriminate(p)
    return F.softplus(-logit).mean()


def output_entropy(clf: ClassifierHandle, p: torch.Tensor) -> torch.Tensor:
    """Natural-log entropy of the auxiliary classifier's confidence vector."""
    q = clf.classify(p)
    h = -torch.special.xlogy(q, q).sum(dim=-1)
    return h.mean()


def anti_target_xent(clf: ClassifierHandle, p: torch.Tensor,
                     target_class: int) -> torch.Tensor:
    """-ln q_target; enters the total with a negative weight so the artifact
    is pushed away from resembling the target class."""
    q = clf.classify(p)
    if q.dim() == 1:
        q = q[None]
    return -torch.log(q[:, target_class].clamp_min(_PROB_FLOOR)).mean()


def _normalized_features(clf: ClassifierHandle, x: torch.Tensor) -> list[torch.Tensor]:
    if x.dim() == 3:
        x = x[None]
    feats = []
    h = x
    for i, layer in enumerate(clf.model.features):
        h = layer(h)
        # post-activation taps: first ReLU and each pooled scale
        if i in (1, 4, 7, 10):
            norm = h / (h.pow(2).sum(dim=1, keepdim=True) + 1e-10).sqrt()
            feats.append(norm)
    return feats


def perceptual_distance(clf: ClassifierHandle, a: torch.Tensor,
                        b: torch.Tensor) -> torch.Tensor:
    """Sum over feature scales of the mean squared difference between
    channel-unit-normalized activations of a fixed extractor."""
    if a.shape != b.shape:
        raise InputError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    fa = _normalized_features(clf, a)
    fb = _normalized_features(clf, b)
    total = a.new_zeros(())
    for xa, xb in zip(fa, fb):
        total = total + (xa - xb).pow(2).mean()
    return total


@dataclass
class RegContext:
    """Everything l_reg needs besides the artifact itself."""

    weights: RegularizerWeights
    flags: AblationFlags
    discriminator: DiscriminatorHandle | None
    aux_classifier: ClassifierHandle | None
    target_class: int
    resolution: int = 32
    mask: torch.Tensor | None = None          # generalized-patch extraction
    perceptual_reference: torch.Tensor | None = None  # region family anchor
    extra_terms: dict = field(default_factory=dict)


def l_reg(a: torch.Tensor, ctx: RegContext) -> tuple[torch.Tensor, dict]:
    """Weighted disguise loss and its per-term breakdown.

    Breakdown values are the weighted, signed contributions; they sum to the
    returned total. Gated-off or zero-weight terms contribute exact zeros
    and no gradient."""
    zero = a.new_zeros(())
    breakdown = {"tv": zero, "disc": zero, "entropy": zero,
                 "patch_xent": zero, "perceptual": zero}
    w, f = ctx.weights, ctx.flags

    if w.lambda_tv > 0:
        breakdown["tv"] = w.lambda_tv * total_variation(a)

    needs_p = ((f.use_disc_term and w.lambda_disc > 0)
               or (f.use_entropy_term and w.lambda_entropy > 0)
               or (f.use_patch_xent_term and w.lambda_patch_xent > 0))
    if needs_p:
        p = extract_and_resize(a, ctx.resolution, mask=ctx.mask)
        if f.use_disc_term and w.lambda_disc > 0:
            breakdown["disc"] = w.lambda_disc * realism_loss(ctx.discriminator, p)
        if f.use_entropy_term and w.lambda_entropy > 0:
            breakdown["entropy"] = w.lambda_entropy * output_entropy(
                ctx.aux_classifier, p)
        if f.use_patch_xent_term and w.lambda_patch_xent > 0:
            breakdown["patch_xent"] = -w.lambda_patch_xent * anti_target_xent(
                ctx.aux_classifier, p, ctx.target_class)

    if ctx.perceptual_reference is not None and w.lambda_perceptual > 0:
        breakdown["perceptual"] = w.lambda_perceptual * perceptual_distance(
            ctx.aux_classifier, a, ctx.perceptual_reference)

    # precomputed, already-weighted terms whose operands are not `a` itself
    # (e.g. a perceptual anchor between full decodes while `a` is the
    # extracted patch)
    for name, term in ctx.extra_terms.items():
        breakdown[name] = breakdown.get(name, zero) + term

    total = zero
    for v in breakdown.values():
        total = total + v
    return total, breakdown
