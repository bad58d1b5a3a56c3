from featadv.models.architectures import (
    ConvClassifier,
    FilmLayer,
    ProjectionDiscriminator,
    SkipZGenerator,
    build_model,
)
from featadv.models.handles import (
    ClassifierHandle,
    DiscriminatorHandle,
    GeneratorHandle,
    load_classifier,
    load_discriminator,
    load_generator,
)

__all__ = [
    "ConvClassifier", "FilmLayer", "ProjectionDiscriminator", "SkipZGenerator",
    "build_model", "ClassifierHandle", "DiscriminatorHandle", "GeneratorHandle",
    "load_classifier", "load_discriminator", "load_generator",
]
