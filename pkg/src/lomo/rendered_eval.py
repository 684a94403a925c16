"""Rendered-evaluation transform: replace a benchmark question with its image.

Each instance's text parts are concatenated, rasterized once (no math
routing, no distortion), and the resulting image replaces the text, placed
before any original benchmark images. The rendered text is stored verbatim
in the image metadata so content identity between the two protocols is
checkable, and a second pass over already-transformed data is a no-op
because no text parts remain.
"""

from __future__ import annotations

import os
from dataclasses import replace
from pathlib import Path
from typing import Optional

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
from .pipeline import safe_stem
from .render import RenderConfig, RenderedCarrier, render_text, trim_margins

PROTOCOL_MARKER = "rendered-eval"

QUESTION_PART_JOINER = "\n"


def render_question(question: str, config: RenderConfig) -> RenderedCarrier:
    """Render an entire question as one image: plain text route, trimmed,
    capped, never distorted."""
    carrier = render_text(question, config)
    carrier = trim_margins(carrier, config)
    return replace(carrier, protocol=PROTOCOL_MARKER)


def transform_eval_instance(
    instance: Instance,
    config: RenderConfig,
    *,
    image_dir: Optional[str | os.PathLike] = None,
    corpus_root: Optional[str | os.PathLike] = None,
) -> tuple[Instance, str, list[str]]:
    """Replace an instance's text parts with one rendered-question image.

    Returns (instance, action, new image paths). Instances with no text
    parts pass through unchanged, which also makes the transform idempotent.
    """
    text_values = [p.value for p in instance.parts if p.kind == TEXT]
    if not text_values:
        return instance, ACTION_PASSTHROUGH, []
    question = QUESTION_PART_JOINER.join(text_values)
    carrier = render_question(question, config)
    if image_dir is not None:
        name = f"{safe_stem(instance.id)}_q.png"
        full = Path(image_dir) / name
        carrier.save_png(full)
        ref = os.path.relpath(full, corpus_root) if corpus_root else str(full)
        ref = ref.replace(os.sep, "/")
    else:
        ref = carrier.to_data_uri()
    original_images = [p for p in instance.parts if p.kind == IMAGE]
    parts = (ContentPart(IMAGE, ref), *original_images)
    out = Instance(id=instance.id, parts=parts, answer=instance.answer)
    return out, ACTION_REWRITTEN, [ref] if image_dir is not None else []


def transform_benchmark(
    input_path: str | os.PathLike,
    output_path: str | os.PathLike,
    config: Optional[RenderConfig] = None,
) -> CurationManifest:
    """Apply the rendered-evaluation protocol to a whole benchmark corpus.

    Answers and original image payloads are untouched; every output record
    keeps its input counterpart's id. The manifest's position mode records
    the protocol marker.
    """
    config = config if config is not None else RenderConfig()
    input_path = Path(input_path)
    output_path = Path(output_path)
    corpus_root = output_path.parent.resolve()
    image_dir = corpus_root / f"{output_path.stem}_images"
    output_path.parent.mkdir(parents=True, exist_ok=True)
    image_dir.mkdir(parents=True, exist_ok=True)

    counts = {"total": 0, "rewritten": 0, "text_only_kept": 0, "image_bearing_original": 0}
    records = []
    with JsonlWriter(output_path) as writer:
        for instance in load_instances(input_path):
            out, action, _ = transform_eval_instance(
                instance, config, image_dir=image_dir, corpus_root=corpus_root
            )
            record = emit_interleaved(out, root=corpus_root, writer=writer, action=action)
            records.append(record)
            counts["total"] += 1
            if action == ACTION_REWRITTEN:
                counts["rewritten"] += 1
            else:
                counts["image_bearing_original"] += 1
    manifest = CurationManifest(
        source_path=str(input_path),
        seed=0,
        rewrite_ratio=1.0,
        position_mode=PROTOCOL_MARKER,
        counts=counts,
        per_instance_records=records,
    )
    manifest.save(Path(str(output_path) + ".manifest.json"))
    return manifest


class QuestionRasterizer(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer applying the rendered-eval protocol in memory.

    Without ``image_dir`` the rendered question is embedded as an inline PNG
    data URI; with it, PNG files are written and referenced by name.
    """

    def __init__(self, render: Optional[RenderConfig] = None, image_dir: Optional[str] = None):
        self.render = render
        self.image_dir = image_dir

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list[Instance]:
        config = self.render if self.render is not None else RenderConfig()
        if self.image_dir is not None:
            Path(self.image_dir).mkdir(parents=True, exist_ok=True)
        out = []
        for obj in X:
            instance = coerce_instance(obj)
            transformed, _, _ = transform_eval_instance(
                instance, config, image_dir=self.image_dir, corpus_root=self.image_dir
            )
            out.append(transformed)
        return out
