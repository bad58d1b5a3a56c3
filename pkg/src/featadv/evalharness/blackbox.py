"""Black-box attacks by ensemble transfer: optimize against several victims
at once, then measure on a model that was never in the loop."""

from __future__ import annotations

import dataclasses

import torch

from featadv.attack.config import AttackConfig
from featadv.attack.engine import AdversarialArtifact, AttackModels, run_attack
from featadv.errors import ConfigurationError
from featadv.evalharness.reports import EvalReport
from featadv.evalharness.universality import universality_eval
from featadv.models.handles import ClassifierHandle


def ensemble_attack(config: AttackConfig, models: AttackModels,
                    ensemble: list[ClassifierHandle] | None = None,
                    out_dir=None) -> AdversarialArtifact:
    """run_attack with the crossentropy term averaged over an ensemble of
    victims. The one-member ensemble is bitwise identical to a plain
    single-victim attack. `ensemble` overrides models.victims."""
    if ensemble is not None:
        if len(ensemble) == 0:
            raise ConfigurationError("ensemble must have at least one model")
        models = dataclasses.replace(models, victims=list(ensemble))
    return run_attack(config, models, out_dir=out_dir)


def transfer_eval(artifact: AdversarialArtifact, held_out: ClassifierHandle,
                  models: AttackModels, sources=None, n: int = 100,
                  seed: int = 0, location_spec=None,
                  transform_spec=None) -> EvalReport:
    """Universality eval against a model outside the training ensemble."""
    trained_on = (artifact.model_hashes or {}).get("victims", [])
    h = held_out.content_hash
    if h and h in trained_on:
        raise ConfigurationError(
            "held-out model was part of the attack's training ensemble; "
            "transfer needs a model the attack never saw")
    return universality_eval(artifact, models, sources=sources, n=n,
                             seed=seed, location_spec=location_spec,
                             transform_spec=transform_spec, victim=held_out)
