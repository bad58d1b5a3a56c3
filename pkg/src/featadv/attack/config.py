"""Attack job configuration: validation, serialization, content hashing.

The same configuration object backs the Python API, the CLI, and the HTTP
service. HTTP payloads are validated against the bundled JSON schema first
(producing field-path errors); the dataclass re-checks the semantic rules.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from typing import Any

from featadv import tensorio
from featadv.errors import ConfigurationError, InputError
from featadv.regularizers import AblationFlags, RegularizerWeights
from featadv.transforms import TransformConfig

MODES = ("patch", "region", "generalized_patch", "channel")
SOURCE_KINDS = ("dataset_class", "dataset_all", "generated_class",
                "generated_all", "fixed_image")
LOCATION_KINDS = ("uniform_valid", "fixed")

# per-mode area_fraction defaults: patch 1/16 of image area, region family
# 1/8 of latent spatial area, channel 1/4 of the channels
DEFAULT_FRACTIONS = {"patch": 1 / 16, "region": 1 / 8,
                     "generalized_patch": 1 / 8, "channel": 1 / 4}


@dataclass(frozen=True)
class SourceDistribution:
    kind: str = "dataset_all"
    class_id: int | None = None
    image_index: int | None = None  # fixed_image: index into the eval split

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigurationError(f"unknown source kind {self.kind!r}")
        if self.kind.endswith("_class") and self.class_id is None:
            raise ConfigurationError(f"source kind {self.kind} needs class_id")
        if self.kind == "fixed_image" and self.image_index is None:
            raise ConfigurationError("fixed_image source needs image_index")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.class_id is not None:
            d["class_id"] = self.class_id
        if self.image_index is not None:
            d["image_index"] = self.image_index
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SourceDistribution":
        return cls(kind=d.get("kind", "dataset_all"),
                   class_id=d.get("class_id"),
                   image_index=d.get("image_index"))


@dataclass(frozen=True)
class LocationDistribution:
    kind: str = "uniform_valid"
    location: tuple[int, int] | None = None  # fixed kind
    margin: int = 0

    def __post_init__(self):
        if self.kind not in LOCATION_KINDS:
            raise ConfigurationError(f"unknown location kind {self.kind!r}")
        if self.kind == "fixed" and self.location is None:
            raise ConfigurationError("fixed location kind needs location")
        if self.margin < 0:
            raise ConfigurationError("margin must be >= 0")
        if self.location is not None:
            object.__setattr__(self, "location", tuple(self.location))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "margin": self.margin}
        if self.location is not None:
            d["location"] = list(self.location)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LocationDistribution":
        return cls(kind=d.get("kind", "uniform_valid"),
                   location=tuple(d["location"]) if d.get("location") else None,
                   margin=d.get("margin", 0))


@dataclass(frozen=True)
class AttackConfig:
    mode: str = "patch"
    target_class: int = 0
    source_spec: SourceDistribution = field(default_factory=SourceDistribution)
    transform_spec: TransformConfig = field(default_factory=TransformConfig)
    location_spec: LocationDistribution = field(default_factory=LocationDistribution)
    layer_id: str | None = None  # region-family / channel site
    area_fraction: float | None = None  # None -> per-mode default
    loss_weights: RegularizerWeights = field(default_factory=RegularizerWeights)
    ablation_flags: AblationFlags = field(default_factory=AblationFlags)
    steps: int = 1000
    batch_size: int = 16
    step_size: float = 0.01
    seed: int = 0
    input_latent_perturb_bound: float = 0.5
    init_search: int = 32  # best-of-K generator-sample initialization
    smoothing_sigma: float = 1.0  # generalized-patch mask extraction
    model_suite: str = "default"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if not 0 <= self.target_class < 10:
            raise ConfigurationError("target_class must be in [0, 10)")
        if self.area_fraction is None:
            object.__setattr__(self, "area_fraction", DEFAULT_FRACTIONS[self.mode])
        if not 0 < self.area_fraction <= 1:
            raise ConfigurationError("area_fraction must be in (0, 1]")
        if self.steps < 0:
            raise ConfigurationError("steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.step_size <= 0:
            raise ConfigurationError("step_size must be > 0")
        if self.input_latent_perturb_bound < 0:
            raise ConfigurationError("input_latent_perturb_bound must be >= 0")
        if self.init_search < 0:
            raise ConfigurationError("init_search must be >= 0")
        if self.smoothing_sigma < 0:
            raise ConfigurationError("smoothing_sigma must be >= 0")
        if self.mode in ("region", "generalized_patch", "channel"):
            if self.layer_id is None:
                object.__setattr__(self, "layer_id", "block1")
        if self.mode in ("region", "channel"):
            if self.source_spec.kind not in ("generated_class", "generated_all"):
                raise ConfigurationError(
                    f"{self.mode} mode perturbs generated images; source kind "
                    f"must be generated_class or generated_all")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "target_class": self.target_class,
            "source_spec": self.source_spec.to_dict(),
            "transform_spec": self.transform_spec.to_dict(),
            "location_spec": self.location_spec.to_dict(),
            "layer_id": self.layer_id,
            "area_fraction": self.area_fraction,
            "loss_weights": self.loss_weights.to_dict(),
            "ablation_flags": self.ablation_flags.to_dict(),
            "steps": self.steps,
            "batch_size": self.batch_size,
            "step_size": self.step_size,
            "seed": self.seed,
            "input_latent_perturb_bound": self.input_latent_perturb_bound,
            "init_search": self.init_search,
            "smoothing_sigma": self.smoothing_sigma,
            "model_suite": self.model_suite,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        known = {
            "mode", "target_class", "source_spec", "transform_spec",
            "location_spec", "layer_id", "area_fraction", "loss_weights",
            "ablation_flags", "steps", "batch_size", "step_size", "seed",
            "input_latent_perturb_bound", "init_search", "smoothing_sigma",
            "model_suite",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        kw: dict[str, Any] = {k: v for k, v in d.items()
                              if k in known and not isinstance(v, dict)}
        if "source_spec" in d:
            kw["source_spec"] = SourceDistribution.from_dict(d["source_spec"])
        if "transform_spec" in d:
            kw["transform_spec"] = TransformConfig.from_dict(d["transform_spec"])
        if "location_spec" in d:
            kw["location_spec"] = LocationDistribution.from_dict(d["location_spec"])
        if "loss_weights" in d:
            kw["loss_weights"] = RegularizerWeights.from_dict(d["loss_weights"])
        if "ablation_flags" in d:
            kw["ablation_flags"] = AblationFlags.from_dict(d["ablation_flags"])
        return cls(**kw)

    def config_hash(self) -> str:
        """Content id of the canonical config; keys experiment storage."""
        return tensorio.content_id(self.to_dict())


def load_schema() -> dict:
    text = (importlib.resources.files("featadv") / "schemas"
            / "attack_config.schema.json").read_text()
    return json.loads(text)


def validate_config_dict(d: dict) -> None:
    """Schema-validate an untrusted config payload. Raises InputError whose
    message starts with the JSON path of the offending field."""
    import jsonschema

    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/" + "/".join(str(p) for p in e.absolute_path)
        raise InputError(f"{path or '/'}: {e.message}")
