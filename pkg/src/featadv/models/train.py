"""Training for the default model suite.

Seven models share one training session: the conditional generator and its
projection discriminator (adversarial + auxiliary-class losses), the victim
classifier, the auxiliary disguise classifier, a realism-proxy classifier,
and two extra victims for black-box transfer experiments. All CPU-trainable
at desk scale in tens of minutes.

Run directly:  python3 -m featadv.models.train [out_dir]
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import torch
import torch.nn.functional as F

from featadv import data, tensorio
from featadv.errors import ConfigurationError, StoreError
from featadv.models.architectures import (ConvClassifier,
                                          ProjectionDiscriminator,
                                          SkipZGenerator, architecture_id)
from featadv.models.handles import (load_classifier, load_discriminator,
                                    load_generator, onehot)

TRAIN_N = 6000
HELDOUT_N = 1000
EVAL_N = 1000

# name -> (pooling, width) for every classifier in the suite
CLASSIFIER_SPEC = {
    "victim": ("lse", 24),
    "aux": ("avg", 32),
    "realism_proxy": ("avgmax", 20),
    "ensemble_a": ("lse", 16),
    "ensemble_b": ("avg", 28),
}


def tiny_aug(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Small brightness + noise jitter; keeps the victim from keying on
    exact pixel values without hiding the motif evidence."""
    b = float(torch.empty(1).uniform_(-0.1, 0.1, generator=gen))
    x = torch.clamp(x * (1 + b), 0, 1)
    ns = float(torch.empty(1).uniform_(0.0, 0.02, generator=gen))
    return torch.clamp(x + ns * torch.randn(x.shape, generator=gen), 0, 1)


def train_classifier(images: torch.Tensor, labels: torch.Tensor,
                     pooling: str, width: int, epochs: int = 4,
                     seed: int = 11, batch_size: int = 64,
                     label_smoothing: float = 0.1) -> ConvClassifier:
    clf = ConvClassifier(width=width, pooling=pooling)
    opt = torch.optim.Adam(clf.parameters(), lr=1e-3)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.randperm(len(images), generator=gen)
        for i in range(0, len(images), batch_size):
            idx = perm[i:i + batch_size]
            xb = torch.stack([tiny_aug(images[k], gen) for k in idx])
            loss = F.cross_entropy(clf(xb), labels[idx],
                                   label_smoothing=label_smoothing)
            opt.zero_grad()
            loss.backward()
            opt.step()
    return clf.eval()


def train_gan(images: torch.Tensor, labels: torch.Tensor, epochs: int = 24,
              seed: int = 7, batch_size: int = 64,
              z_dim: int = 64, width: int = 32
              ) -> tuple[SkipZGenerator, ProjectionDiscriminator]:
    """Conditional GAN: softplus adversarial losses with a projection
    discriminator, plus an auxiliary class head trained on real images and
    asked of fakes on the generator side."""
    g = SkipZGenerator(z_dim=z_dim, width=width)
    d = ProjectionDiscriminator(width=width)
    optg = torch.optim.Adam(g.parameters(), lr=2e-4, betas=(0.5, 0.999))
    optd = torch.optim.Adam(d.parameters(), lr=2e-4, betas=(0.5, 0.999))
    gen = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.randperm(len(images), generator=gen)
        for i in range(0, len(images), batch_size):
            idx = perm[i:i + batch_size]
            xb, yb = images[idx], labels[idx]
            yv = onehot(yb, d.num_classes)
            z = torch.randn(len(idx), z_dim, generator=gen)
            with torch.no_grad():
                fake = g(z, yv)
            dloss = (F.softplus(-d(xb, yv)).mean()
                     + F.softplus(d(fake, yv)).mean()
                     + F.cross_entropy(d.aux(d.features(xb)), yb))
            optd.zero_grad()
            dloss.backward()
            optd.step()

            z = torch.randn(len(idx), z_dim, generator=gen)
            fake = g(z, yv)
            gloss = (F.softplus(-d(fake, yv)).mean()
                     + F.cross_entropy(d.aux(d.features(fake)), yb))
            optg.zero_grad()
            gloss.backward()
            optg.step()
    return g.eval(), d.eval()


def accuracy(clf: ConvClassifier, images: torch.Tensor,
             labels: torch.Tensor, batch_size: int = 256) -> float:
    hits = 0
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            pred = clf(images[i:i + batch_size]).argmax(dim=1)
            hits += int((pred == labels[i:i + batch_size]).sum())
    return hits / len(images)


def class_fidelity(g: SkipZGenerator, clf: ConvClassifier, seed: int = 5,
                   per_class: int = 32) -> float:
    """Fraction of conditional samples the reference classifier assigns to
    their conditioning class; a cheap generator quality check."""
    gen = torch.Generator().manual_seed(seed)
    y = torch.arange(g.num_classes).repeat_interleave(per_class)
    with torch.no_grad():
        fake = g(torch.randn(len(y), g.z_dim, generator=gen),
                 onehot(y, g.num_classes))
        return float((clf(fake).argmax(dim=1) == y).float().mean())


def _save(model: torch.nn.Module, dirpath: Path) -> str:
    return tensorio.save_state_dict(dirpath, model.state_dict(),
                                    architecture=architecture_id(model))


def canonical_pools() -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
    """The pinned train/heldout/eval splits every suite is built on."""
    return {"train": data.make_split(TRAIN_N, data.TRAIN_SEED),
            "heldout": data.make_split(HELDOUT_N, data.HELDOUT_SEED),
            "eval": data.make_split(EVAL_N, data.EVAL_SEED)}


def train_suite(out_dir: str | Path, train_n: int = TRAIN_N,
                heldout_n: int = HELDOUT_N, gan_epochs: int = 24,
                clf_epochs: int = 4, min_victim_accuracy: float = 0.8,
                log=print) -> dict:
    """Train and persist the full suite; returns the written report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    xtr, ytr = data.make_split(train_n, data.TRAIN_SEED)
    xhe, yhe = data.make_split(heldout_n, data.HELDOUT_SEED)

    report: dict = {"train_n": train_n, "heldout_n": heldout_n,
                    "gan_epochs": gan_epochs, "clf_epochs": clf_epochs,
                    "seeds": {"train": data.TRAIN_SEED,
                              "heldout": data.HELDOUT_SEED},
                    "models": {}}

    classifiers: dict[str, ConvClassifier] = {}
    for i, (name, (pooling, width)) in enumerate(CLASSIFIER_SPEC.items()):
        t0 = time.time()
        clf = train_classifier(xtr, ytr, pooling, width, epochs=clf_epochs,
                               seed=11 + i)
        acc = accuracy(clf, xhe, yhe)
        h = _save(clf, out / name)
        classifiers[name] = clf
        report["models"][name] = {"architecture": architecture_id(clf),
                                  "heldout_accuracy": acc,
                                  "content_hash": h,
                                  "train_seconds": round(time.time() - t0, 1)}
        log(f"{name}: acc {acc:.3f} ({report['models'][name]['train_seconds']}s)")

    if report["models"]["victim"]["heldout_accuracy"] < min_victim_accuracy:
        raise ConfigurationError(
            f"victim held-out accuracy "
            f"{report['models']['victim']['heldout_accuracy']:.3f} below "
            f"the {min_victim_accuracy} floor; the suite is not usable")

    t0 = time.time()
    g, d = train_gan(xtr, ytr, epochs=gan_epochs)
    fid = class_fidelity(g, classifiers["victim"])
    for name, model in (("generator", g), ("discriminator", d)):
        h = _save(model, out / name)
        report["models"][name] = {"architecture": architecture_id(model),
                                  "content_hash": h,
                                  "train_seconds": round(time.time() - t0, 1)}
    report["models"]["generator"]["class_fidelity"] = fid
    log(f"generator: class fidelity {fid:.3f} "
        f"({report['models']['generator']['train_seconds']}s)")

    (out / "report.json").write_text(json.dumps(report, indent=2,
                                                sort_keys=True))
    return report


def load_suite(dirpath: str | Path) -> dict:
    """Load every stored model as a frozen handle, plus the canonical data
    pools and the training report."""
    d = Path(dirpath)
    if not (d / "report.json").exists():
        raise StoreError(f"no trained suite at {d} (missing report.json); "
                         f"run python3 -m featadv.models.train first")
    handles: dict = {"generator": load_generator(d / "generator"),
                     "discriminator": load_discriminator(d / "discriminator")}
    for name in CLASSIFIER_SPEC:
        handles[name] = load_classifier(d / name)
    handles["report"] = json.loads((d / "report.json").read_text())
    pools = canonical_pools()
    handles["train_images"], handles["train_labels"] = pools["train"]
    handles["heldout_images"], handles["heldout_labels"] = pools["heldout"]
    handles["eval_images"], handles["eval_labels"] = pools["eval"]
    return handles


def attack_models_from_suite(suite: dict, victims: list[str] | None = None):
    """Assemble the engine's model bundle from a loaded suite. `victims`
    names suite classifiers (default: the main victim)."""
    from featadv.attack.engine import AttackModels

    names = victims or ["victim"]
    return AttackModels(generator=suite["generator"],
                        victims=[suite[n] for n in names],
                        discriminator=suite["discriminator"],
                        aux_classifier=suite["aux"],
                        train_images=suite["train_images"],
                        train_labels=suite["train_labels"],
                        eval_images=suite["eval_images"],
                        eval_labels=suite["eval_labels"])


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "weights"
    train_suite(target)
