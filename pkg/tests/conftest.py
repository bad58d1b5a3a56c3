import pytest
import torch

from featadv import data
from featadv.attack.engine import AttackModels
from featadv.models.architectures import (ConvClassifier,
                                          ProjectionDiscriminator,
                                          SkipZGenerator)
from featadv.models.handles import (ClassifierHandle, DiscriminatorHandle,
                                    GeneratorHandle)


def build_tiny_models(seed: int = 7) -> AttackModels:
    """Small untrained suite; mechanics-only tests never need trained
    weights, just deterministic differentiable networks."""
    torch.manual_seed(seed)
    g = GeneratorHandle(SkipZGenerator(z_dim=8, num_classes=10, width=8),
                        content_hash="tiny-gen")
    victim = ClassifierHandle(ConvClassifier(width=8, pooling="lse"),
                              content_hash="tiny-victim")
    disc = DiscriminatorHandle(ProjectionDiscriminator(num_classes=10, width=8),
                               content_hash="tiny-disc")
    aux = ClassifierHandle(ConvClassifier(width=8, pooling="avg"),
                           content_hash="tiny-aux")
    train_images, train_labels = data.make_split(40, seed=123)
    eval_images, eval_labels = data.make_split(12, seed=456)
    return AttackModels(generator=g, victims=[victim], discriminator=disc,
                        aux_classifier=aux,
                        train_images=train_images, train_labels=train_labels,
                        eval_images=eval_images, eval_labels=eval_labels)


@pytest.fixture(scope="session")
def tiny_models() -> AttackModels:
    return build_tiny_models()
