"""Visual rendering: text rasterization, external LaTeX rendering, routing.

Spans with math go to a pluggable external LaTeX command; any failure there
falls back to the native text rasterizer so no instance is ever dropped.
Rendering is deterministic for a fixed (span, config, font file).
"""

from __future__ import annotations

import base64
import importlib.util
import io
import json
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from PIL.PngImagePlugin import PngInfo

from .corpus import DATA_URI_PREFIX
from .segmentation import contains_math

LATEX_CMD_ENV = "LOMO_LATEX_CMD"

# PNG text-chunk keys for provenance metadata.
META_SOURCE_SPAN = "lomo:source_span"
META_ROUTE = "lomo:route"
META_DISTORTION = "lomo:distortion"
META_PROTOCOL = "lomo:protocol"


class Route(str, Enum):
    TEXT = "text"
    LATEX = "latex"
    LATEX_FALLBACK_TEXT = "latex_fallback_text"


class LatexRenderError(Exception):
    """External LaTeX rendering failed; reason names the failure class."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"latex renderer {reason}" + (f": {detail}" if detail else ""))
        self.reason = reason
        self.detail = detail


def _env_latex_cmd() -> Optional[str]:
    return os.environ.get(LATEX_CMD_ENV) or None


@dataclass
class RenderConfig:
    """Rendering knobs; defaults follow the production configuration
    (20 pt text on a 22 pt line, math at 26 pt, 2,560,000-pixel cap)."""

    font_size: int = 20
    line_height: int = 22
    math_font_size: int = 26
    max_line_width: int = 800
    background: tuple[int, int, int] = (255, 255, 255)
    foreground: tuple[int, int, int] = (0, 0, 0)
    pixel_cap: int = 2_560_000
    trim_padding: int = 10
    latex_command_template: Optional[str] = field(default_factory=_env_latex_cmd)
    latex_timeout: float = 10.0
    font_path: Optional[str] = None

    def __post_init__(self):
        if self.font_size <= 0:
            raise ValueError("font_size must be positive")
        if self.line_height < self.font_size:
            raise ValueError("line_height must be at least font_size")
        if self.pixel_cap <= 0:
            raise ValueError("pixel_cap must be positive")
        if self.trim_padding < 0:
            raise ValueError("trim_padding must be non-negative")

    def to_dict(self) -> dict:
        return {
            "font_size": self.font_size,
            "line_height": self.line_height,
            "math_font_size": self.math_font_size,
            "max_line_width": self.max_line_width,
            "pixel_cap": self.pixel_cap,
            "trim_padding": self.trim_padding,
            "latex_command_template": self.latex_command_template,
            "latex_timeout": self.latex_timeout,
            "font_path": self.font_path,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RenderConfig":
        allowed = {
            "font_size", "line_height", "math_font_size", "max_line_width",
            "pixel_cap", "trim_padding", "latex_command_template",
            "latex_timeout", "font_path",
        }
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown render config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class RenderedCarrier:
    """A rendered (and possibly distorted) span image with provenance."""

    image: np.ndarray  # (H, W, 3) uint8
    route: Route
    source_span: str
    distortion: Optional[dict] = None
    trimmed: bool = False
    all_background: bool = False
    protocol: Optional[str] = None

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    def _png_info(self) -> PngInfo:
        info = PngInfo()
        info.add_text(META_SOURCE_SPAN, self.source_span)
        info.add_text(META_ROUTE, self.route.value)
        if self.distortion is not None:
            info.add_text(META_DISTORTION, json.dumps(self.distortion, sort_keys=True))
        if self.protocol:
            info.add_text(META_PROTOCOL, self.protocol)
        return info

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.image).save(buf, "PNG", pnginfo=self._png_info())
        return buf.getvalue()

    def save_png(self, path: str | os.PathLike) -> None:
        Path(path).write_bytes(self.png_bytes())

    def to_data_uri(self) -> str:
        return DATA_URI_PREFIX + base64.b64encode(self.png_bytes()).decode("ascii")

    @classmethod
    def _from_image(cls, img: Image.Image) -> "RenderedCarrier":
        meta = dict(getattr(img, "text", {}) or {})
        arr = np.asarray(img.convert("RGB"))
        distortion = json.loads(meta[META_DISTORTION]) if META_DISTORTION in meta else None
        return cls(
            image=arr,
            route=Route(meta.get(META_ROUTE, Route.TEXT.value)),
            source_span=meta.get(META_SOURCE_SPAN, ""),
            distortion=distortion,
            protocol=meta.get(META_PROTOCOL) or None,
        )

    @classmethod
    def load_png(cls, path: str | os.PathLike) -> "RenderedCarrier":
        with Image.open(path) as img:
            return cls._from_image(img)

    @classmethod
    def load_data_uri(cls, uri: str) -> "RenderedCarrier":
        if not uri.startswith(DATA_URI_PREFIX):
            raise ValueError("not an inline PNG data URI")
        raw = base64.b64decode(uri[len(DATA_URI_PREFIX):])
        with Image.open(io.BytesIO(raw)) as img:
            return cls._from_image(img)


def _matplotlib_dejavu() -> Optional[str]:
    # matplotlib bundles DejaVuSans.ttf in its data dir; find it without
    # importing the (heavy) package itself
    spec = importlib.util.find_spec("matplotlib")
    if spec is None or not spec.submodule_search_locations:
        return None
    for root in spec.submodule_search_locations:
        candidate = Path(root) / "mpl-data" / "fonts" / "ttf" / "DejaVuSans.ttf"
        if candidate.is_file():
            return str(candidate)
    return None


@lru_cache(maxsize=16)
def _resolve_font(font_path: Optional[str], size: int) -> ImageFont.FreeTypeFont:
    if font_path:
        return ImageFont.truetype(font_path, size)
    dejavu = _matplotlib_dejavu()
    if dejavu:
        return ImageFont.truetype(dejavu, size)
    return ImageFont.load_default(size=size)


def _wrap_lines(text: str, font: ImageFont.FreeTypeFont, limit: float) -> list[str]:
    """Greedy word wrap; words wider than the limit are hard-broken."""

    def hard_break(word: str) -> list[str]:
        pieces = []
        current = ""
        for ch in word:
            if current and font.getlength(current + ch) > limit:
                pieces.append(current)
                current = ch
            else:
                current += ch
        if current:
            pieces.append(current)
        return pieces or [word]

    lines: list[str] = []
    for para in text.split("\n"):
        words = para.split()
        if not words:
            lines.append("")
            continue
        current = ""
        for word in words:
            candidate = f"{current} {word}" if current else word
            if font.getlength(candidate) <= limit:
                current = candidate
                continue
            if current:
                lines.append(current)
            if font.getlength(word) <= limit:
                current = word
            else:
                pieces = hard_break(word)
                lines.extend(pieces[:-1])
                current = pieces[-1]
        lines.append(current)
    return lines


def render_text(span: str, config: RenderConfig) -> RenderedCarrier:
    """Rasterize a span black-on-white with greedy word wrap.

    Lines are spaced ``line_height`` apart and the canvas carries a
    ``trim_padding`` margin on every side. Code points without glyph
    coverage draw the font's replacement glyph rather than failing.
    """
    if not span:
        raise ValueError("cannot render an empty span")
    font = _resolve_font(config.font_path, config.font_size)
    margin = config.trim_padding
    lines = _wrap_lines(span, font, float(config.max_line_width))
    content_width = max((font.getlength(line) for line in lines), default=1.0)
    width = max(1, math.ceil(content_width)) + 2 * margin
    height = max(1, len(lines)) * config.line_height + 2 * margin
    img = Image.new("RGB", (width, height), config.background)
    draw = ImageDraw.Draw(img)
    for i, line in enumerate(lines):
        if line:
            draw.text((margin, margin + i * config.line_height), line, font=font, fill=config.foreground)
    return RenderedCarrier(image=np.asarray(img), route=Route.TEXT, source_span=span)


_LATEX_WRAPPER = r"""\documentclass[preview,border=4pt]{standalone}
\usepackage{amsmath}
\usepackage{amssymb}
\begin{document}
\fontsize{%d}{%d}\selectfont
%s
\end{document}
"""


def render_latex(span: str, config: RenderConfig) -> RenderedCarrier:
    """Render a span through the configured external LaTeX command.

    The command template receives ``{input_tex}`` and ``{output_png}``
    placeholders. Every failure mode (no template, nonzero exit, timeout,
    missing or undecodable output) raises :class:`LatexRenderError`.
    """
    template = config.latex_command_template
    if not template:
        raise LatexRenderError("unavailable", "no latex_command_template configured")
    with tempfile.TemporaryDirectory(prefix="lomo-latex-") as workdir:
        input_tex = os.path.join(workdir, "span.tex")
        output_png = os.path.join(workdir, "span.png")
        body = _LATEX_WRAPPER % (config.math_font_size, config.math_font_size + 2, span)
        with open(input_tex, "w", encoding="utf-8") as fh:
            fh.write(body)
        command = template.format(input_tex=input_tex, output_png=output_png)
        try:
            proc = subprocess.run(
                command,
                shell=True,
                cwd=workdir,
                timeout=config.latex_timeout,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
            )
        except subprocess.TimeoutExpired:
            raise LatexRenderError("timeout", f"after {config.latex_timeout}s")
        if proc.returncode != 0:
            tail = proc.stdout.decode("utf-8", "replace")[-500:] if proc.stdout else ""
            raise LatexRenderError("nonzero_exit", f"code {proc.returncode} {tail}".strip())
        if not os.path.isfile(output_png):
            raise LatexRenderError("missing_output", output_png)
        try:
            with Image.open(output_png) as img:
                rgb = img.convert("RGB")
                arr = np.asarray(rgb)
        except Exception as exc:
            raise LatexRenderError("undecodable", str(exc))
    return RenderedCarrier(image=arr, route=Route.LATEX, source_span=span)


def render_routed(span: str, config: RenderConfig) -> RenderedCarrier:
    """Content-aware routing with automatic fallback; total on non-empty spans."""
    if not span:
        raise ValueError("cannot render an empty span")
    if contains_math(span):
        try:
            return render_latex(span, config)
        except LatexRenderError:
            carrier = render_text(span, config)
            return replace(carrier, route=Route.LATEX_FALLBACK_TEXT)
    return render_text(span, config)


# Pixels at or above this luminance count as background when trimming.
TRIM_LUMINANCE_THRESHOLD = 250.0


def _luminance(arr: np.ndarray) -> np.ndarray:
    rgb = arr.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _cap_area(arr: np.ndarray, pixel_cap: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if h * w <= pixel_cap:
        return arr
    scale = math.sqrt(pixel_cap / (h * w))
    nw = max(1, math.floor(w * scale))
    nh = max(1, math.floor(h * scale))
    img = Image.fromarray(arr).resize((nw, nh), Image.LANCZOS)
    return np.asarray(img)


def trim_margins(carrier: RenderedCarrier, config: RenderConfig) -> RenderedCarrier:
    """Crop to the content bounding box plus padding, then enforce the pixel cap.

    Content means pixels darker than the near-white threshold, so the crop
    never removes a rendered glyph. All-background images are flagged and
    left uncropped. Output area never exceeds ``pixel_cap``.
    """
    arr = carrier.image
    mask = _luminance(arr) < TRIM_LUMINANCE_THRESHOLD
    if not mask.any():
        return replace(carrier, image=_cap_area(arr, config.pixel_cap), trimmed=True, all_background=True)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    pad = config.trim_padding
    top = max(0, int(rows[0]) - pad)
    bottom = min(arr.shape[0], int(rows[-1]) + 1 + pad)
    left = max(0, int(cols[0]) - pad)
    right = min(arr.shape[1], int(cols[-1]) + 1 + pad)
    cropped = arr[top:bottom, left:right]
    return replace(carrier, image=_cap_area(cropped, config.pixel_cap), trimmed=True)
