"""End-to-end corpus curation: selection, transformation, parallel execution.

Every per-instance decision is a pure function of (global seed, instance id),
so output corpora, images, and manifests are byte-identical across runs and
worker counts. Wall-clock throughput is reported separately from the
manifest for the same reason.
"""

from __future__ import annotations

import logging
import os
import time
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from math import gcd
from pathlib import Path
from typing import Iterable, Iterator, Optional

from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import (
    ACTION_PASSTHROUGH,
    ACTION_REWRITTEN,
    IMAGE,
    TEXT,
    ContentPart,
    CurationManifest,
    Instance,
    JsonlWriter,
    coerce_instance,
    emit_interleaved,
    load_instances,
)
from .distort import apply_distortion
from .render import RenderConfig, render_routed, trim_margins
from .rng import mix_seed, splitmix64
from .segmentation import PositionMode, localize
from .validation import check_fraction, check_positive_int, check_ratio_pair, check_seed

logger = logging.getLogger(__name__)

# Salt separating the rewrite-selection hash stream from the distortion stream.
_REWRITE_SALT = 0x5E1EC7_10CA1
_FILENAME_SALT = 0xF11E_AB1E

_U64 = 1 << 64


def _env_workers() -> int:
    return int(os.environ.get("LOMO_WORKERS", "1"))


@dataclass
class PipelineConfig:
    seed: int = 0
    rewrite_ratio: float = 0.5
    position_mode: PositionMode = PositionMode.MIDDLE
    distortion_enabled: bool = True
    workers: int = field(default_factory=_env_workers)
    lenient: bool = False
    target_image_text_ratio: Optional[tuple[int, int]] = None
    render: RenderConfig = field(default_factory=RenderConfig)

    def validate(self) -> "PipelineConfig":
        check_seed(self.seed)
        check_fraction(self.rewrite_ratio, "rewrite_ratio")
        check_positive_int(self.workers, "workers")
        self.position_mode = PositionMode.coerce(self.position_mode)
        if self.target_image_text_ratio is not None:
            self.target_image_text_ratio = check_ratio_pair(self.target_image_text_ratio)
        return self

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rewrite_ratio": self.rewrite_ratio,
            "position_mode": PositionMode.coerce(self.position_mode).value,
            "distortion_enabled": self.distortion_enabled,
            "workers": self.workers,
            "lenient": self.lenient,
            "target_image_text_ratio": list(self.target_image_text_ratio)
            if self.target_image_text_ratio
            else None,
            "render": self.render.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        allowed = {
            "seed", "rewrite_ratio", "position_mode", "distortion_enabled",
            "workers", "lenient", "target_image_text_ratio", "render",
        }
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        render = doc.pop("render", None)
        target = doc.pop("target_image_text_ratio", None)
        cfg = cls(**doc)
        if render is not None:
            cfg.render = RenderConfig.from_dict(render) if isinstance(render, dict) else render
        if target is not None:
            cfg.target_image_text_ratio = parse_ratio(target) if isinstance(target, str) else check_ratio_pair(target)
        return cfg.validate()


def parse_ratio(text: str) -> tuple[int, int]:
    """Parse an ``A:B`` ratio string into a pair of positive integers."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"ratio must look like 'A:B', got {text!r}")
    return check_ratio_pair((parts[0], parts[1]))


def derive_instance_seed(global_seed: int, instance_id: str) -> int:
    """Stable per-instance seed, independent of order and worker count."""
    return mix_seed(global_seed, instance_id)


def selected_for_rewrite(global_seed: int, instance_id: str, rewrite_ratio: float) -> bool:
    """Hash-threshold selection: rewrite when hash/2^64 < ratio.

    Order- and parallelism-independent; the realized fraction over N
    instances concentrates around the ratio at the usual 1/sqrt(N) rate.
    """
    threshold = int(rewrite_ratio * _U64)
    return mix_seed(global_seed ^ _REWRITE_SALT, instance_id) < threshold


def safe_stem(instance_id: str) -> str:
    """Filesystem-safe, collision-resistant file stem derived from an id."""
    cleaned = "".join(c if c.isalnum() or c in "._-" else "-" for c in instance_id)
    cleaned = cleaned[:80]
    if cleaned == instance_id and cleaned:
        return cleaned
    return f"{cleaned or 'instance'}-{mix_seed(_FILENAME_SALT, instance_id):016x}"


def transform_instance(
    instance: Instance,
    cfg: PipelineConfig,
    *,
    image_dir: Optional[str | os.PathLike] = None,
    corpus_root: Optional[str | os.PathLike] = None,
) -> tuple[Instance, dict]:
    """Apply the full substitution to one text-only instance.

    Localize, render (with LaTeX fallback), trim, then distort each rendered
    span (unless distortion is disabled). Rendered images go to ``image_dir``
    as PNG files referenced relative to ``corpus_root``, or inline as data
    URIs when no directory is given. The answer is never touched, and the
    text parts plus the stored source spans reconstruct the original text
    for single-span modes.
    """
    if not instance.is_text_only:
        raise ValueError(f"instance {instance.id!r} already has image parts")
    split = localize(instance.text, cfg.position_mode)
    instance_seed = derive_instance_seed(cfg.seed, instance.id)
    parts: list[ContentPart] = []
    info = {"image_paths": [], "routes": [], "distortions": []}
    span_index = 0
    for seg in split.segments:
        if not seg.content:
            continue
        if not seg.render:
            parts.append(ContentPart(TEXT, seg.content))
            continue
        carrier = render_routed(seg.content, cfg.render)
        carrier = trim_margins(carrier, cfg.render)
        if cfg.distortion_enabled:
            carrier = apply_distortion(carrier, splitmix64(instance_seed ^ span_index))
        info["routes"].append(carrier.route.value)
        info["distortions"].append(carrier.distortion["family"] if carrier.distortion else "none")
        if image_dir is not None:
            name = f"{safe_stem(instance.id)}_{span_index}.png"
            full = Path(image_dir) / name
            carrier.save_png(full)
            ref = os.path.relpath(full, corpus_root) if corpus_root else str(full)
            ref = ref.replace(os.sep, "/")
        else:
            ref = carrier.to_data_uri()
        parts.append(ContentPart(IMAGE, ref))
        if image_dir is not None:
            info["image_paths"].append(ref)
        span_index += 1
    return Instance(id=instance.id, parts=tuple(parts), answer=instance.answer), info


def _curate_one(instance: Instance, cfg: PipelineConfig, image_dir: str, corpus_root: str):
    if not instance.is_text_only:
        return instance, ACTION_PASSTHROUGH, "image_bearing_original", {}
    if not selected_for_rewrite(cfg.seed, instance.id, cfg.rewrite_ratio):
        return instance, ACTION_PASSTHROUGH, "text_only_kept", {}
    out, info = transform_instance(instance, cfg, image_dir=image_dir, corpus_root=corpus_root)
    return out, ACTION_REWRITTEN, "rewritten", info


def _ordered_parallel(fn, items: Iterable, workers: int) -> Iterator:
    """Run ``fn`` over ``items`` preserving order with bounded in-flight work."""
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    window = workers * 4
    with ProcessPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


@dataclass
class RunStats:
    total: int
    elapsed_seconds: float
    instances_per_sec: float
    route_histogram: dict
    distortion_histogram: dict
    workers: int

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "elapsed_seconds": round(self.elapsed_seconds, 6),
            "instances_per_sec": round(self.instances_per_sec, 3),
            "route_histogram": dict(sorted(self.route_histogram.items())),
            "distortion_histogram": dict(sorted(self.distortion_histogram.items())),
            "workers": self.workers,
        }


def curate(
    input_path: str | os.PathLike,
    output_path: str | os.PathLike,
    cfg: PipelineConfig,
) -> tuple[CurationManifest, RunStats]:
    """Curate a corpus: rewrite a seed-selected fraction of text-only instances.

    Writes the output corpus, its image directory, and a deterministic
    manifest (``<output>.manifest.json``). Returns the manifest plus run
    stats (throughput, route and distortion histograms); stats are not part
    of the manifest so identical runs stay byte-identical.
    """
    cfg = replace(cfg).validate()
    input_path = Path(input_path)
    output_path = Path(output_path)
    corpus_root = output_path.parent.resolve()
    image_dir = corpus_root / f"{output_path.stem}_images"
    output_path.parent.mkdir(parents=True, exist_ok=True)
    image_dir.mkdir(parents=True, exist_ok=True)
    partial_marker = Path(str(output_path) + ".partial")

    worker = partial(_curate_one, cfg=cfg, image_dir=str(image_dir), corpus_root=str(corpus_root))
    counts = Counter()
    route_hist = Counter()
    family_hist = Counter()
    records = []
    started = time.perf_counter()
    try:
        with JsonlWriter(output_path) as writer:
            stream = load_instances(input_path, strict=not cfg.lenient)
            for out_instance, action, bucket, info in _ordered_parallel(worker, stream, cfg.workers):
                record = emit_interleaved(out_instance, root=corpus_root, writer=writer, action=action)
                if info:
                    record["routes"] = info["routes"]
                    record["distortions"] = info["distortions"]
                    route_hist.update(info["routes"])
                    family_hist.update(info["distortions"])
                records.append(record)
                counts[bucket] += 1
                counts["total"] += 1
    except Exception as exc:
        partial_marker.write_text(f"curate aborted: {exc}\n", encoding="utf-8")
        raise
    else:
        if partial_marker.exists():
            partial_marker.unlink()
    elapsed = time.perf_counter() - started

    manifest = CurationManifest(
        source_path=str(input_path),
        seed=cfg.seed,
        rewrite_ratio=cfg.rewrite_ratio,
        position_mode=cfg.position_mode.value,
        counts={
            "total": counts["total"],
            "rewritten": counts["rewritten"],
            "text_only_kept": counts["text_only_kept"],
            "image_bearing_original": counts["image_bearing_original"],
        },
        per_instance_records=records,
        extra={"distortion_enabled": cfg.distortion_enabled},
    )
    manifest.save(Path(str(output_path) + ".manifest.json"))
    stats = RunStats(
        total=counts["total"],
        elapsed_seconds=elapsed,
        instances_per_sec=counts["total"] / elapsed if elapsed > 0 else 0.0,
        route_histogram=dict(route_hist),
        distortion_histogram=dict(family_hist),
        workers=cfg.workers,
    )
    return manifest, stats


def match_modality_ratio(
    input_path: str | os.PathLike,
    output_path: str | os.PathLike,
    target: tuple[int, int],
    seed: int,
) -> CurationManifest:
    """Downsample one class so image-bearing:text-only hits the target ratio.

    When image-bearing instances exceed the target share they are trimmed to
    floor(text * a / b). When they fall short, the only remaining move is to
    trim text-only instances, which is done only if the target is exactly
    reachable; otherwise the ratio would need image upsampling, and no
    duplication is ever performed. Selection keeps the instances with the
    smallest per-id seeded hashes, so it is order- and seed-stable, and kept
    instances preserve input order.
    """
    a, b = check_ratio_pair(target)
    g = gcd(a, b)
    a, b = a // g, b // g
    seed = check_seed(seed)
    input_path = Path(input_path)
    output_path = Path(output_path)

    image_ids: list[str] = []
    text_ids: list[str] = []
    for instance in load_instances(input_path):
        (text_ids if instance.is_text_only else image_ids).append(instance.id)
    n_img, n_text = len(image_ids), len(text_ids)
    if n_img == 0 or n_text == 0:
        raise ValueError("ratio matching needs both image-bearing and text-only instances")

    if n_img * b >= n_text * a:
        keep_img = (n_text * a) // b
        keep_text = n_text
        drop_ids = image_ids
        keep_in_drop = keep_img
    else:
        keep_img = n_img
        keep_text = (n_img * b) // a
        if keep_text < 1 or keep_text * a != n_img * b:
            raise ValueError(
                f"target {a}:{b} unreachable without upsampling image-bearing instances "
                f"({n_img} image-bearing vs {n_text} text-only)"
            )
        drop_ids = text_ids
        keep_in_drop = keep_text

    ranked = sorted(drop_ids, key=lambda i: (mix_seed(seed, i), i))
    kept_subset = set(ranked[:keep_in_drop])
    dropped_class_ids = set(drop_ids)

    records = []
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with JsonlWriter(output_path) as writer:
        for instance in load_instances(input_path):
            if instance.id in dropped_class_ids and instance.id not in kept_subset:
                continue
            records.append(
                emit_interleaved(
                    instance, root=output_path.parent.resolve(), writer=writer, action=ACTION_PASSTHROUGH
                )
            )
    manifest = CurationManifest(
        source_path=str(input_path),
        seed=seed,
        rewrite_ratio=0.0,
        position_mode="ratio_match",
        counts={
            "total": keep_img + keep_text,
            "rewritten": 0,
            "text_only_kept": keep_text,
            "image_bearing_original": keep_img,
        },
        per_instance_records=records,
        extra={
            "target_image_text_ratio": f"{a}:{b}",
            "dropped": {"image_bearing": n_img - keep_img, "text_only": n_text - keep_text},
        },
    )
    manifest.save(Path(str(output_path) + ".manifest.json"))
    return manifest


class LomoRewriter(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer applying the substitution to instances.

    ``transform`` accepts Instance objects or plain record dicts and returns
    transformed Instances. With no ``image_dir`` the rendered spans are
    embedded as inline PNG data URIs, so the transformer is usable inside
    in-memory pipelines; with an ``image_dir`` it writes PNG files like the
    file-level ``curate``.
    """

    def __init__(
        self,
        seed: int = 0,
        rewrite_ratio: float = 1.0,
        position_mode: str = "middle",
        distortion_enabled: bool = True,
        render: Optional[RenderConfig] = None,
        image_dir: Optional[str] = None,
    ):
        self.seed = seed
        self.rewrite_ratio = rewrite_ratio
        self.position_mode = position_mode
        self.distortion_enabled = distortion_enabled
        self.render = render
        self.image_dir = image_dir

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            seed=self.seed,
            rewrite_ratio=self.rewrite_ratio,
            position_mode=self.position_mode,
            distortion_enabled=self.distortion_enabled,
            workers=1,
            render=self.render if self.render is not None else RenderConfig(),
        ).validate()

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X) -> list[Instance]:
        cfg = self._config()
        image_dir = self.image_dir
        if image_dir is not None:
            Path(image_dir).mkdir(parents=True, exist_ok=True)
        out = []
        for obj in X:
            instance = coerce_instance(obj)
            if instance.is_text_only and selected_for_rewrite(cfg.seed, instance.id, cfg.rewrite_ratio):
                transformed, _ = transform_instance(
                    instance, cfg, image_dir=image_dir, corpus_root=image_dir
                )
                out.append(transformed)
            else:
                out.append(instance)
        return out
