"""Feature-level adversarial attack toolkit: latent-space patch, region,
generalized-patch and channel attacks against small image classifiers, with
disguise regularization, evaluation protocols and a workbench service."""

__version__ = "0.1.0"
