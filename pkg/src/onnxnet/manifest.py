"""JSONL manifest tooling: records, splits and batch encoding.

One JSON object per line. Core fields are ``id``, ``path`` or ``text``,
``accuracy``, ``space`` and ``split``; anything else is preserved verbatim
through a read/write round trip.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

from .encoding import EncodingConfig, encode_file
from .exceptions import (
    DuplicateId,
    EmptyValidationSplit,
    MalformedRecord,
    OnnxNetError,
)


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    UNASSIGNED = "unassigned"


_CORE_FIELDS = ("id", "path", "text", "accuracy", "space", "split")


@dataclass
class ArchRecord:
    id: str
    accuracy: float
    space: str = ""
    split: Split = Split.UNASSIGNED
    path: str | None = None
    text: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.path is None) == (self.text is None):
            raise ValueError("exactly one of path/text must be present")
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 100]")

    def to_json(self) -> dict:
        obj = dict(self.extras)
        obj["id"] = self.id
        obj["accuracy"] = self.accuracy
        if self.space:
            obj["space"] = self.space
        if self.split is not Split.UNASSIGNED:
            obj["split"] = self.split.value
        if self.path is not None:
            obj["path"] = self.path
        else:
            obj["text"] = self.text
        return obj


def _record_from_json(obj: dict, line_no: int, rescale: bool) -> ArchRecord:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "not a JSON object")
    if "id" not in obj:
        raise MalformedRecord(line_no, "missing 'id'")
    if "accuracy" not in obj:
        raise MalformedRecord(line_no, "missing 'accuracy'")
    accuracy = obj["accuracy"]
    if not isinstance(accuracy, (int, float)) or isinstance(accuracy, bool):
        raise MalformedRecord(line_no, f"accuracy {accuracy!r} is not a number")
    if rescale:
        accuracy = float(accuracy) * 100.0
    split_raw = obj.get("split")
    if split_raw is None:
        split = Split.UNASSIGNED
    else:
        try:
            split = Split(split_raw)
        except ValueError:
            raise MalformedRecord(line_no, f"unknown split {split_raw!r}") from None
    extras = {k: v for k, v in obj.items() if k not in _CORE_FIELDS}
    try:
        return ArchRecord(
            id=str(obj["id"]),
            accuracy=float(accuracy),
            space=str(obj.get("space", "")),
            split=split,
            path=obj.get("path"),
            text=obj.get("text"),
            extras=extras,
        )
    except ValueError as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def read_manifest(path, *, rescale_unit_accuracy: bool = False) -> list[ArchRecord]:
    """Read records, enforcing the schema and id uniqueness.

    ``rescale_unit_accuracy`` accepts accuracies stored in [0, 1] and
    rescales them to percent.
    """
    records: list[ArchRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            record = _record_from_json(obj, line_no, rescale_unit_accuracy)
            if record.id in seen:
                raise DuplicateId(f"line {line_no}: duplicate id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    return records


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# split assignment


@dataclass(frozen=True)
class RandomFraction:
    """Hold out a seeded random fraction as validation."""

    fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ByKey:
    """Hold out records whose field value falls in a key set."""

    field: str
    held_out: frozenset


SplitSpec = RandomFraction | ByKey


def _field_value(record: ArchRecord, name: str):
    if name in ("id", "accuracy", "space", "path", "text"):
        return getattr(record, name)
    return record.extras.get(name)


def assign_splits(records: list[ArchRecord], spec: SplitSpec) -> list[ArchRecord]:
    """Assign every record to Train or Val; pure, deterministic.

    RandomFraction sorts by id before the seeded shuffle so the assignment
    is stable across differently ordered manifests.
    """
    if not records:
        raise EmptyValidationSplit("no records to split")
    if isinstance(spec, RandomFraction):
        ids = sorted(r.id for r in records)
        rng = random.Random(spec.seed)
        rng.shuffle(ids)
        k = round(spec.fraction * len(ids))
        if k == 0:
            raise EmptyValidationSplit(
                f"fraction {spec.fraction} of {len(ids)} records rounds to zero"
            )
        val_ids = set(ids[:k])
        return [
            replace(r, split=Split.VAL if r.id in val_ids else Split.TRAIN)
            for r in records
        ]
    assigned = [
        replace(
            r,
            split=Split.VAL if _field_value(r, spec.field) in spec.held_out else Split.TRAIN,
        )
        for r in records
    ]
    if not any(r.split is Split.VAL for r in assigned):
        raise EmptyValidationSplit(f"no record matched held-out keys on {spec.field!r}")
    return assigned


# ---------------------------------------------------------------------------
# batch encoding


def _encode_one(record: ArchRecord, cfg: EncodingConfig) -> ArchRecord:
    if record.text is not None:
        return record
    arch = encode_file(record.path, cfg)
    return replace(record, path=None, text=arch.text)


def batch_encode(
    records: list[ArchRecord],
    cfg: EncodingConfig = EncodingConfig(),
    workers: int = 1,
) -> tuple[list[ArchRecord], list[dict]]:
    """Encode every path-bearing record; failures land in the sidecar.

    Output order equals input order regardless of worker count.
    """
    errors: list[dict] = []
    encoded: list[ArchRecord] = []
    if workers <= 1:
        results = []
        for record in records:
            try:
                results.append(_encode_one(record, cfg))
            except (OnnxNetError, OSError) as exc:
                results.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_encode_one, r, cfg) for r in records]
            results = []
            for future in futures:
                try:
                    results.append(future.result())
                except (OnnxNetError, OSError) as exc:
                    results.append(exc)
    for record, result in zip(records, results):
        if isinstance(result, Exception):
            errors.append({"id": record.id, "error": f"{type(result).__name__}: {result}"})
        else:
            encoded.append(result)
    return encoded, errors


# ---------------------------------------------------------------------------
# prediction files


def write_predictions(entries, path) -> None:
    """entries: iterable of (id, score) pairs -> JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for id_, score in entries:
            fh.write(json.dumps({"id": str(id_), "score": float(score)}, sort_keys=True))
            fh.write("\n")


def read_predictions(path) -> list[tuple[str, float]]:
    out: list[tuple[str, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "score" not in obj:
                raise MalformedRecord(line_no, "prediction needs 'id' and 'score'")
            out.append((str(obj["id"]), float(obj["score"])))
    return out
