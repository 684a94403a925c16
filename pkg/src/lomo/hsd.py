"""Reader/writer for the HSD1 binary hidden-state dump format.

Layout (all integers little-endian):

    magic   8 bytes  b"LOMOHSD1"
    header  u32 n_layers, u32 hidden_dim, u32 n_samples
    sample  u32 id_len, id (UTF-8), u32 n_tokens,
            role_mask n_tokens bytes (0=textual, 1=visual),
            n_layers contiguous blocks of n_tokens * hidden_dim float32

A sidecar JSON index (same path + ``.index.json``) is optional and never
required for reading; the reader validates by magic and length arithmetic.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"LOMOHSD1"
ROLE_TEXTUAL = 0
ROLE_VISUAL = 1

_HEADER = struct.Struct("<III")
_U32 = struct.Struct("<I")


class HsdFormatError(Exception):
    pass


@dataclass
class DumpSample:
    sample_id: str
    role_mask: np.ndarray  # (n_tokens,) uint8
    layers: np.ndarray  # (n_layers, n_tokens, hidden_dim) float32

    @property
    def n_tokens(self) -> int:
        return int(self.role_mask.shape[0])

    def tokens(self, layer: int, role: int) -> np.ndarray:
        return self.layers[layer][self.role_mask == role]


@dataclass
class HiddenStateDump:
    n_layers: int
    hidden_dim: int
    samples: list[DumpSample]

    def validate(self) -> None:
        for s in self.samples:
            if s.layers.shape != (self.n_layers, s.n_tokens, self.hidden_dim):
                raise HsdFormatError(
                    f"sample {s.sample_id!r}: layer tensor shape {s.layers.shape} "
                    f"inconsistent with header ({self.n_layers}, {s.n_tokens}, {self.hidden_dim})"
                )
            if not np.isin(s.role_mask, (ROLE_TEXTUAL, ROLE_VISUAL)).all():
                raise HsdFormatError(f"sample {s.sample_id!r}: role mask has values outside {{0, 1}}")


def write_hsd(path: str | os.PathLike, dump: HiddenStateDump, *, write_index: bool = False) -> None:
    dump.validate()
    path = Path(path)
    index = []
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(dump.n_layers, dump.hidden_dim, len(dump.samples)))
        for s in dump.samples:
            index.append({"id": s.sample_id, "n_tokens": s.n_tokens, "offset": fh.tell()})
            ident = s.sample_id.encode("utf-8")
            fh.write(_U32.pack(len(ident)))
            fh.write(ident)
            fh.write(_U32.pack(s.n_tokens))
            fh.write(np.ascontiguousarray(s.role_mask, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(s.layers, dtype="<f4").tobytes())
    if write_index:
        doc = {
            "n_layers": dump.n_layers,
            "hidden_dim": dump.hidden_dim,
            "n_samples": len(dump.samples),
            "samples": index,
        }
        with open(str(path) + ".index.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise HsdFormatError(f"truncated file while reading {what} (wanted {n} bytes, got {len(data)})")
    return data


def read_header(fh) -> tuple[int, int, int]:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise HsdFormatError(f"not an HSD1 file (bad magic {magic!r})")
    n_layers, hidden_dim, n_samples = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    if n_layers < 1 or hidden_dim < 1:
        raise HsdFormatError(f"degenerate header: n_layers={n_layers} hidden_dim={hidden_dim}")
    return n_layers, hidden_dim, n_samples


def iter_hsd_samples(path: str | os.PathLike) -> Iterator[tuple[int, int, DumpSample]]:
    """Stream (n_layers, hidden_dim, sample) triples without loading the whole file."""
    with open(path, "rb") as fh:
        n_layers, hidden_dim, n_samples = read_header(fh)
        for i in range(n_samples):
            (id_len,) = _U32.unpack(_read_exact(fh, 4, f"sample {i} id length"))
            sample_id = _read_exact(fh, id_len, f"sample {i} id").decode("utf-8")
            (n_tokens,) = _U32.unpack(_read_exact(fh, 4, f"sample {sample_id!r} token count"))
            if n_tokens < 1:
                raise HsdFormatError(f"sample {sample_id!r}: zero tokens")
            mask = np.frombuffer(
                _read_exact(fh, n_tokens, f"sample {sample_id!r} role mask"), dtype=np.uint8
            )
            if not np.isin(mask, (ROLE_TEXTUAL, ROLE_VISUAL)).all():
                raise HsdFormatError(f"sample {sample_id!r}: role mask has values outside {{0, 1}}")
            nbytes = 4 * n_layers * n_tokens * hidden_dim
            raw = _read_exact(fh, nbytes, f"sample {sample_id!r} hidden states")
            layers = np.frombuffer(raw, dtype="<f4").reshape(n_layers, n_tokens, hidden_dim)
            yield n_layers, hidden_dim, DumpSample(sample_id, mask.copy(), layers.copy())
        if fh.read(1):
            raise HsdFormatError("trailing bytes after final sample")


def read_hsd(path: str | os.PathLike) -> HiddenStateDump:
    samples = []
    n_layers = hidden_dim = 0
    for n_layers, hidden_dim, sample in iter_hsd_samples(path):
        samples.append(sample)
    if not samples:
        with open(path, "rb") as fh:
            n_layers, hidden_dim, _ = read_header(fh)
    return HiddenStateDump(n_layers=n_layers, hidden_dim=hidden_dim, samples=samples)


def build_dump(
    n_layers: int,
    hidden_dim: int,
    entries: Sequence[tuple[str, np.ndarray, np.ndarray]],
) -> HiddenStateDump:
    """Assemble a dump from (id, role_mask, layers) triples and validate it."""
    samples = [
        DumpSample(sample_id, np.asarray(mask, dtype=np.uint8), np.asarray(layers, dtype=np.float32))
        for sample_id, mask, layers in entries
    ]
    dump = HiddenStateDump(n_layers=n_layers, hidden_dim=hidden_dim, samples=samples)
    dump.validate()
    return dump
