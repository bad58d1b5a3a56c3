"""Report types shared by the evaluation protocols, plus atomic writers.

Reports are plain data: everything is JSON-serializable and recomputable
from (artifact, sources, seed), so a stored report can be audited by
rerunning the protocol.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class EvalReport:
    """Aggregate attack strength of one artifact over a set of sources."""

    artifact_id: str
    mode: str
    target_class: int
    n_sources: int
    mean_confidence: float
    std_confidence: float
    success_rate: float
    disguise: bool
    disguise_class: int
    disguise_confidence: float
    seed: int
    victim_hash: str = ""
    realism_proxy_confidence: float | None = None
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"artifact_id": self.artifact_id, "mode": self.mode,
                "target_class": self.target_class,
                "n_sources": self.n_sources,
                "mean_confidence": self.mean_confidence,
                "std_confidence": self.std_confidence,
                "success_rate": self.success_rate,
                "disguise": self.disguise,
                "disguise_class": self.disguise_class,
                "disguise_confidence": self.disguise_confidence,
                "seed": self.seed, "victim_hash": self.victim_hash,
                "realism_proxy_confidence": self.realism_proxy_confidence,
                "records": self.records}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


@dataclass
class CopyPasteReport:
    """Ranking of source images by target-confidence gain after pasting one
    natural patch."""

    target_class: int
    n_sources: int
    area_fraction: float
    seed: int
    ranking: list          # source indices, largest confidence gain first
    records: list          # per source: index, before, after, delta, location
    top_k: int
    top_indices: list
    top_mean_before: float
    top_mean_after: float

    def to_dict(self) -> dict:
        return {"target_class": self.target_class,
                "n_sources": self.n_sources,
                "area_fraction": self.area_fraction, "seed": self.seed,
                "ranking": self.ranking, "records": self.records,
                "top_k": self.top_k, "top_indices": self.top_indices,
                "top_mean_before": self.top_mean_before,
                "top_mean_after": self.top_mean_after}

    @classmethod
    def from_dict(cls, d: dict) -> "CopyPasteReport":
        return cls(**d)


@dataclass
class DefenseReport:
    """Binary-accuracy change from adversarial fine-tuning on one class
    pair."""

    class_pair: tuple[int, int]
    attack_mode: str
    pre_accuracy: float
    post_accuracy: float
    n: int
    heldout_n: int
    artifact_ids: list = field(default_factory=list)
    improvement: float = 0.0

    def __post_init__(self):
        self.class_pair = tuple(self.class_pair)
        self.improvement = self.post_accuracy - self.pre_accuracy

    def to_dict(self) -> dict:
        return {"class_pair": list(self.class_pair),
                "attack_mode": self.attack_mode,
                "pre_accuracy": self.pre_accuracy,
                "post_accuracy": self.post_accuracy,
                "improvement": self.improvement, "n": self.n,
                "heldout_n": self.heldout_n,
                "artifact_ids": self.artifact_ids}

    @classmethod
    def from_dict(cls, d: dict) -> "DefenseReport":
        d = dict(d)
        d.pop("improvement", None)  # recomputed
        return cls(**d)


@dataclass
class GridReport:
    """Outcome of the ablation grid: per-condition summaries plus flat rows
    mirroring grid.csv."""

    quota: int
    attempt_cap: int
    seed: int
    conditions: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    partial: bool = False

    def to_dict(self) -> dict:
        return {"quota": self.quota, "attempt_cap": self.attempt_cap,
                "seed": self.seed, "conditions": self.conditions,
                "rows": self.rows, "partial": self.partial}

    @classmethod
    def from_dict(cls, d: dict) -> "GridReport":
        return cls(**d)


def write_json(obj: dict, path: str | Path) -> Path:
    """Atomic JSON write (temp file + rename in the same directory)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
    os.replace(tmp, path)
    return path


def write_csv(rows: list[dict], columns: tuple, path: str | Path) -> Path:
    """Atomic CSV write with a pinned column order."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    os.replace(tmp, path)
    return path
