"""Instance data model and streaming JSON Lines corpus IO.

One instance per line, schema ``{"id": ..., "parts": [{"kind": "text"|"image",
"value": ...}], "answer": ...}``. Image parts hold either a path relative to
the corpus file's directory or an inline ``data:image/png;base64,...`` payload.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

TEXT = "text"
IMAGE = "image"
_PART_KINDS = (TEXT, IMAGE)

DATA_URI_PREFIX = "data:image/png;base64,"


class CorpusError(Exception):
    """Base class for corpus ingestion/emission failures."""


class CorpusParseError(CorpusError):
    """A line failed to parse or validate.

    Carries the 1-based line number and the byte offset of the line start.
    """

    def __init__(self, message: str, line_number: int, byte_offset: int):
        super().__init__(f"line {line_number} (byte {byte_offset}): {message}")
        self.line_number = line_number
        self.byte_offset = byte_offset


class DuplicateIdError(CorpusParseError):
    pass


@dataclass(frozen=True)
class ContentPart:
    kind: str
    value: str

    def __post_init__(self):
        if self.kind not in _PART_KINDS:
            raise ValueError(f"unknown part kind {self.kind!r}")
        if self.kind == TEXT and not self.value:
            raise ValueError("text parts must be non-empty")
        if self.kind == IMAGE and not self.value:
            raise ValueError("image parts must reference a path or inline payload")

    @property
    def is_inline_image(self) -> bool:
        return self.kind == IMAGE and self.value.startswith(DATA_URI_PREFIX)


@dataclass(frozen=True)
class Instance:
    """One supervision pair: an ordered mixed-content question and its answer."""

    id: str
    parts: tuple[ContentPart, ...]
    answer: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("instance id must be non-empty")
        if not self.parts:
            raise ValueError("instance must have at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def is_text_only(self) -> bool:
        return all(p.kind == TEXT for p in self.parts)

    @property
    def text(self) -> str:
        """Concatenation of the text parts (the question x for text-only instances)."""
        return "".join(p.value for p in self.parts if p.kind == TEXT)

    def image_paths(self) -> list[str]:
        return [p.value for p in self.parts if p.kind == IMAGE and not p.is_inline_image]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "parts": [{"kind": p.kind, "value": p.value} for p in self.parts],
            "answer": self.answer,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Instance":
        if not isinstance(record, dict):
            raise ValueError("record must be a JSON object")
        try:
            parts = tuple(ContentPart(p["kind"], p["value"]) for p in record["parts"])
            return cls(id=record["id"], parts=parts, answer=record["answer"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"bad instance record: {exc}") from exc


def coerce_instance(obj) -> Instance:
    """Accept an Instance or a plain record dict; return an Instance."""
    if isinstance(obj, Instance):
        return obj
    if isinstance(obj, dict):
        return Instance.from_record(obj)
    raise TypeError(f"expected Instance or dict, got {type(obj).__name__}")


def load_instances(
    path: str | os.PathLike,
    *,
    strict: bool = True,
    on_error: Optional[Callable[[CorpusParseError], None]] = None,
) -> Iterator[Instance]:
    """Stream instances from a JSON Lines corpus.

    Strict mode raises on the first malformed line or duplicate id. Lenient
    mode reports the failure (via ``on_error``, defaulting to a log warning)
    and keeps going, so dirty corpora never lose their good lines silently.
    Memory stays bounded: one line in flight plus a set of seen ids.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus not found: {path}")
    seen: set[str] = set()
    report = on_error if on_error is not None else (lambda e: logger.warning("%s: %s", path, e))
    offset = 0
    with open(path, "rb") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line_offset = offset
            offset += len(raw)
            text = raw.strip()
            if not text:
                continue
            try:
                record = json.loads(text.decode("utf-8"))
                instance = Instance.from_record(record)
            except (ValueError, UnicodeDecodeError) as exc:
                err = CorpusParseError(str(exc), line_number, line_offset)
                if strict:
                    raise err from exc
                report(err)
                continue
            if instance.id in seen:
                err = DuplicateIdError(f"duplicate id {instance.id!r}", line_number, line_offset)
                if strict:
                    raise err
                report(err)
                continue
            seen.add(instance.id)
            yield instance


class JsonlWriter:
    """Append-only serialized sink for instance records.

    Safe to share across worker threads; the pipeline's process workers send
    records back to the parent, which owns the single writer.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._lock = threading.Lock()
        self.count = 0

    def write(self, instance: Instance) -> None:
        line = json.dumps(instance.to_record(), ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self.count += 1

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_interleaved(
    instance: Instance,
    *,
    root: str | os.PathLike,
    writer: JsonlWriter,
    action: str = "passthrough",
) -> dict:
    """Write one instance to the sink and return its manifest record.

    Image paths are rewritten relative to ``root`` (the output corpus
    directory) so the corpus stays relocatable; inline payloads pass through.
    """
    root = Path(root)
    parts = []
    image_paths = []
    for part in instance.parts:
        if part.kind == IMAGE and not part.is_inline_image:
            p = Path(part.value)
            rel = os.path.relpath(p, root) if p.is_absolute() else str(p)
            rel = rel.replace(os.sep, "/")
            parts.append(ContentPart(IMAGE, rel))
            image_paths.append(rel)
        else:
            parts.append(part)
    out = Instance(id=instance.id, parts=tuple(parts), answer=instance.answer)
    writer.write(out)
    return {"id": instance.id, "action": action, "image_paths": image_paths}


def write_instances(path: str | os.PathLike, instances: Iterable[Instance]) -> int:
    with JsonlWriter(path) as writer:
        for instance in instances:
            writer.write(instance)
        return writer.count


ACTION_REWRITTEN = "rewritten"
ACTION_PASSTHROUGH = "passthrough"


@dataclass
class CurationManifest:
    """Audit record for one curation run, written alongside the output corpus.

    Contains only deterministic fields so reruns with identical inputs and
    configuration produce byte-identical manifests; wall-clock throughput
    lives in the separate run-stats summary.
    """

    source_path: str
    seed: int
    rewrite_ratio: float
    position_mode: str
    counts: dict = field(default_factory=dict)
    per_instance_records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def check_count_identity(self) -> bool:
        c = self.counts
        return (
            c.get("rewritten", 0) + c.get("text_only_kept", 0) + c.get("image_bearing_original", 0)
            == c.get("total", -1)
        )

    def to_json(self) -> dict:
        doc = {
            "source_path": self.source_path,
            "seed": self.seed,
            "rewrite_ratio": self.rewrite_ratio,
            "position_mode": self.position_mode,
            "counts": self.counts,
            "per_instance_records": self.per_instance_records,
        }
        doc.update(self.extra)
        return doc

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CurationManifest":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {"source_path", "seed", "rewrite_ratio", "position_mode", "counts", "per_instance_records"}
        return cls(
            source_path=doc.get("source_path", ""),
            seed=doc.get("seed", 0),
            rewrite_ratio=doc.get("rewrite_ratio", 0.0),
            position_mode=doc.get("position_mode", ""),
            counts=doc.get("counts", {}),
            per_instance_records=doc.get("per_instance_records", []),
            extra={k: v for k, v in doc.items() if k not in known},
        )
