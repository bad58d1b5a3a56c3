"""Content-addressed experiment store.

Layout under one root directory:

    experiments/<id>/config.json     attack configuration (canonical JSON)
    experiments/<id>/record.json     status, timestamps, artifact refs
    experiments/<id>/artifact/       saved artifact (tensors, curve, PNGs)
    experiments/<id>/reports/        evaluation reports
    images/<id>.png                  uploaded and composited images
    sessions/<id>.jsonl              header line + one composition event/line

The experiment id is the hash of the canonicalized config, so resubmitting
an identical config resolves to the same record and never runs twice. All
JSON writes go through temp-file-plus-rename; an experiment that reached a
terminal status is immutable.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import torch
from PIL import Image

from featadv.attack.config import AttackConfig
from featadv.attack.engine import AdversarialArtifact, load_artifact, save_artifact
from featadv.errors import InputError, NotFoundError, StoreError

STATUSES = ("queued", "running", "done", "failed")
_TERMINAL = ("done", "failed")


@dataclass
class ExperimentRecord:
    id: str
    config: dict
    status: str
    created_at: float
    updated_at: float
    error: str | None = None
    artifact_id: str | None = None
    patch_image_id: str | None = None
    mask_image_id: str | None = None
    metrics: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.id, "config": self.config, "status": self.status,
                "created_at": self.created_at, "updated_at": self.updated_at,
                "error": self.error, "artifact_id": self.artifact_id,
                "patch_image_id": self.patch_image_id,
                "mask_image_id": self.mask_image_id, "metrics": self.metrics,
                "reports": self.reports}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(**d)


def png_bytes(image: torch.Tensor) -> bytes:
    """Encode a CHW float image in [0,1] as PNG bytes."""
    if image.dim() != 3:
        raise InputError(f"expected CHW image, got shape {tuple(image.shape)}")
    arr = (image.detach().clamp(0, 1) * 255).round().to(torch.uint8)
    pil = Image.fromarray(arr.permute(1, 2, 0).numpy(), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def image_from_png(data: bytes) -> torch.Tensor:
    try:
        pil = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as e:
        raise InputError(f"not a decodable image: {e}") from None
    arr = torch.from_numpy(__import__("numpy").asarray(pil).copy())
    return arr.permute(2, 0, 1).float() / 255.0


class Store:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("experiments", "images", "sessions"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # ---- low-level helpers ----

    def _write_json(self, path: Path, obj: dict) -> None:
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
        os.replace(tmp, path)

    def _exp_dir(self, exp_id: str) -> Path:
        return self.root / "experiments" / exp_id

    # ---- experiments ----

    def create_experiment(self, config: AttackConfig) -> ExperimentRecord:
        """Create (or return) the record for this config. Identical configs
        map to the same id and are never duplicated."""
        exp_id = config.config_hash()
        d = self._exp_dir(exp_id)
        if (d / "record.json").exists():
            return self.get_experiment(exp_id)
        d.mkdir(parents=True, exist_ok=True)
        now = time.time()
        rec = ExperimentRecord(id=exp_id, config=config.to_dict(),
                               status="queued", created_at=now,
                               updated_at=now)
        self._write_json(d / "config.json", rec.config)
        self._write_json(d / "record.json", rec.to_dict())
        return rec

    def get_experiment(self, exp_id: str) -> ExperimentRecord:
        path = self._exp_dir(exp_id) / "record.json"
        if not path.exists():
            raise NotFoundError(f"no experiment {exp_id!r}")
        return ExperimentRecord.from_dict(json.loads(path.read_text()))

    def update_experiment(self, exp_id: str, **changes) -> ExperimentRecord:
        """Apply field changes. Experiments in a terminal status are
        immutable except for appending report paths."""
        rec = self.get_experiment(exp_id)
        mutating = set(changes) - {"reports"}
        if rec.status in _TERMINAL and mutating:
            raise StoreError(f"experiment {exp_id} is {rec.status} and "
                             f"immutable")
        if "status" in changes and changes["status"] not in STATUSES:
            raise InputError(f"unknown status {changes['status']!r}")
        for k, v in changes.items():
            if not hasattr(rec, k):
                raise InputError(f"unknown record field {k!r}")
            setattr(rec, k, v)
        rec.updated_at = time.time()
        self._write_json(self._exp_dir(exp_id) / "record.json", rec.to_dict())
        return rec

    def list_experiments(self, mode: str | None = None,
                         target: int | None = None,
                         status: str | None = None, offset: int = 0,
                         limit: int = 50) -> tuple[list[ExperimentRecord], int]:
        """Filtered page ordered by creation time (stable tiebreak on id);
        returns (page, total matching)."""
        if offset < 0 or limit < 1:
            raise InputError("offset must be >= 0 and limit >= 1")
        recs = []
        for d in (self.root / "experiments").iterdir():
            path = d / "record.json"
            if not path.exists():
                continue
            rec = ExperimentRecord.from_dict(json.loads(path.read_text()))
            if mode is not None and rec.config.get("mode") != mode:
                continue
            if target is not None and rec.config.get("target_class") != target:
                continue
            if status is not None and rec.status != status:
                continue
            recs.append(rec)
        recs.sort(key=lambda r: (r.created_at, r.id))
        return recs[offset:offset + limit], len(recs)

    def artifact_dir(self, exp_id: str) -> Path:
        return self._exp_dir(exp_id) / "artifact"

    def save_experiment_artifact(self, exp_id: str,
                                 artifact: AdversarialArtifact) -> Path:
        return save_artifact(artifact, self.artifact_dir(exp_id))

    def load_experiment_artifact(self, exp_id: str) -> AdversarialArtifact:
        d = self.artifact_dir(exp_id)
        if not (d / "artifact.json").exists():
            raise NotFoundError(f"experiment {exp_id!r} has no artifact")
        return load_artifact(d)

    def reports_dir(self, exp_id: str) -> Path:
        d = self._exp_dir(exp_id) / "reports"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def add_report(self, exp_id: str, name: str, report: dict) -> Path:
        path = self.reports_dir(exp_id) / f"{name}.json"
        self._write_json(path, report)
        rec = self.get_experiment(exp_id)
        rel = str(path.relative_to(self.root))
        if rel not in rec.reports:
            self.update_experiment(exp_id, reports=rec.reports + [rel])
        return path

    # ---- images ----

    def put_image(self, image: torch.Tensor | bytes) -> str:
        """Store an image (tensor or PNG bytes); id is content-derived so
        identical inputs dedupe to one file."""
        data = image if isinstance(image, bytes) else png_bytes(image)
        image_from_png(data)  # reject non-decodable uploads early
        image_id = hashlib.sha256(data).hexdigest()[:16]
        path = self.root / "images" / f"{image_id}.png"
        if not path.exists():
            tmp = path.with_name(path.name + f".tmp{os.getpid()}")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return image_id

    def image_path(self, image_id: str) -> Path:
        path = self.root / "images" / f"{image_id}.png"
        if not path.exists():
            raise NotFoundError(f"no image {image_id!r}")
        return path

    def image_bytes(self, image_id: str) -> bytes:
        return self.image_path(image_id).read_bytes()

    def load_image(self, image_id: str) -> torch.Tensor:
        return image_from_png(self.image_bytes(image_id))

    # ---- sessions ----

    def _session_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.jsonl"

    def create_session(self, hypothesis: str) -> dict:
        session_id = uuid.uuid4().hex[:16]
        header = {"id": session_id, "hypothesis": hypothesis,
                  "created_at": time.time()}
        path = self._session_path(session_id)
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps(header) + "\n")
        os.replace(tmp, path)
        return {**header, "events": []}

    def get_session(self, session_id: str) -> dict:
        path = self._session_path(session_id)
        if not path.exists():
            raise NotFoundError(f"no session {session_id!r}")
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        return {**header, "events": [json.loads(x) for x in lines[1:]]}

    def append_event(self, session_id: str, event: dict) -> dict:
        """Append one composition event (the log is append-only; order is
        the order of calls)."""
        path = self._session_path(session_id)
        if not path.exists():
            raise NotFoundError(f"no session {session_id!r}")
        with open(path, "a") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")
        return self.get_session(session_id)
