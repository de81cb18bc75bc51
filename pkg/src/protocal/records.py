"""JSONL prediction dumps and declarative config files.

A dump holds one record per line::

    {"id": "ex-17", "logits": [-0.41, -1.09], "label": 2}

``label`` is optional and 1-based in files; readers return 0-based labels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidConfig, InvalidInput, InvalidShape, MissingLabels


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    logits: tuple[float, ...]
    label: int | None = None  # 0-based


@dataclass
class Dump:
    records: list[PredictionRecord]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_classes(self) -> int:
        return len(self.records[0].logits)

    def logits(self) -> np.ndarray:
        return np.array([r.logits for r in self.records], dtype=np.float64)

    def has_labels(self) -> bool:
        return bool(self.records) and all(r.label is not None for r in self.records)

    def gold(self) -> np.ndarray:
        if not self.has_labels():
            missing = sum(r.label is None for r in self.records)
            raise MissingLabels(f"{missing} of {len(self.records)} records carry no label")
        return np.array([r.label for r in self.records], dtype=np.int64)

    def subset(self, indices) -> "Dump":
        return Dump([self.records[i] for i in indices])


def _parse_record(obj, where: str, n_classes: int | None) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise InvalidInput(f"{where}: expected a JSON object")
    if "logits" not in obj:
        raise InvalidInput(f"{where}: missing 'logits'")
    logits = obj["logits"]
    if not isinstance(logits, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in logits
    ):
        raise InvalidInput(f"{where}: 'logits' must be a list of numbers")
    if len(logits) < 2:
        raise InvalidShape(f"{where}: need at least 2 logits, got {len(logits)}")
    if n_classes is not None and len(logits) != n_classes:
        raise InvalidShape(f"{where}: expected {n_classes} logits, got {len(logits)}")
    if not all(math.isfinite(v) for v in logits):
        raise InvalidInput(f"{where}: logits must be finite")
    label = obj.get("label")
    if label is not None:
        if isinstance(label, bool) or not isinstance(label, int) or not 1 <= label <= len(logits):
            raise InvalidInput(f"{where}: label must be an integer in 1..{len(logits)}, got {label!r}")
        label -= 1
    rid = obj.get("id", "")
    return PredictionRecord(str(rid), tuple(float(v) for v in logits), label)


def read_dump(path) -> Dump:
    path = Path(path)
    records: list[PredictionRecord] = []
    n_classes = None
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{where}: invalid JSON: {exc.msg}") from None
            rec = _parse_record(obj, where, n_classes)
            n_classes = len(rec.logits)
            records.append(rec)
    if not records:
        raise InvalidInput(f"{path}: no records")
    return Dump(records)


def record_line(rid: str, logits, label: int | None = None) -> str:
    obj = {"id": rid, "logits": [float(v) for v in logits]}
    if label is not None:
        obj["label"] = int(label) + 1
    return json.dumps(obj)


def write_dump(path, logits, labels=None, prefix: str = "ex") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for i, row in enumerate(np.asarray(logits)):
            label = None if labels is None else labels[i]
            fh.write(record_line(f"{prefix}-{i}", row, label) + "\n")


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_config(path) -> dict:
    """Read a YAML or JSON mapping (JSON is a subset of YAML)."""
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise InvalidConfig(f"config {path} must contain a mapping")
    return doc
