"""Span localization: sentence counting, formula-aware chunking, span extraction.

Text is segmented into alternating text/formula blocks where formulas are
atomic: ``$...$``, ``$$...$$``, ``\\(...\\)``, ``\\[...\\]`` regions, and bare
backslash commands with their braced arguments. Span boundaries only ever
fall on block boundaries, so a formula is never cut in half.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from sklearn.base import BaseEstimator, TransformerMixin

TEXT_BLOCK = "text"
FORMULA_BLOCK = "formula"

# Sentence-length threshold below which the whole input becomes the span.
SHORT_INPUT_SENTENCES = 3

_MAX_BRACE_DEPTH = 8
_TERMINATOR_RUN = re.compile(r"[.?!]+")
# Content that looks like money rather than math: digits plus currency
# punctuation only.
_CURRENCY_CONTENT = re.compile(r"^[\d\s.,;:%+\-]*$")


class PositionMode(str, Enum):
    PREFIX = "prefix"
    MIDDLE = "middle"
    SUFFIX = "suffix"
    MULTI_SPAN = "multi_span"

    @classmethod
    def coerce(cls, value) -> "PositionMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown position mode {value!r} (expected one of: {options})")


@dataclass(frozen=True)
class Block:
    kind: str
    content: str

    def __post_init__(self):
        if not self.content:
            raise ValueError("blocks must be non-empty")
        if self.kind not in (TEXT_BLOCK, FORMULA_BLOCK):
            raise ValueError(f"unknown block kind {self.kind!r}")

    @property
    def length(self) -> int:
        return len(self.content)


@dataclass(frozen=True)
class ChunkSequence:
    """An ordered block sequence. ``chunk_formula_aware`` always produces
    maximal text runs (no two adjacent text blocks), but the type accepts
    any layout so spans can be extracted from externally built sequences."""

    blocks: tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def total_length(self) -> int:
        return sum(b.length for b in self.blocks)

    def reconstruct(self) -> str:
        return "".join(b.content for b in self.blocks)

    def boundaries(self) -> list[int]:
        """Cumulative character offsets of block boundaries, including 0 and L."""
        out = [0]
        for b in self.blocks:
            out.append(out[-1] + b.length)
        return out


@dataclass(frozen=True)
class SpanSegment:
    content: str
    render: bool
    blocks: tuple[Block, ...] = ()


@dataclass(frozen=True)
class SpanSplit:
    """Result of span extraction.

    Single-span modes always have three segments (pre, mid, suf) with the
    middle one marked for rendering; multi-span has five, with segments 2
    and 4 marked. Empty segments are kept so positions stay fixed.
    """

    segments: tuple[SpanSegment, ...]
    mode: PositionMode

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def is_single_span(self) -> bool:
        return len(self.segments) == 3

    @property
    def pre(self) -> str:
        if not self.is_single_span:
            raise ValueError("pre/mid/suf only apply to single-span splits")
        return self.segments[0].content

    @property
    def mid(self) -> str:
        if not self.is_single_span:
            raise ValueError("pre/mid/suf only apply to single-span splits")
        return self.segments[1].content

    @property
    def suf(self) -> str:
        if not self.is_single_span:
            raise ValueError("pre/mid/suf only apply to single-span splits")
        return self.segments[2].content

    @property
    def mid_blocks(self) -> tuple[Block, ...]:
        for seg in self.segments:
            if seg.render:
                return seg.blocks
        return ()

    def rendered_spans(self) -> list[str]:
        return [seg.content for seg in self.segments if seg.render and seg.content]

    def reconstruct(self) -> str:
        return "".join(seg.content for seg in self.segments)


def _scan_braced_groups(text: str, pos: int) -> int:
    """Consume balanced ``{...}`` groups starting at ``pos``; return the end.

    Stops before any group whose braces do not balance (or that nests deeper
    than the cap), leaving that region to be treated as plain text.
    """
    while pos < len(text) and text[pos] == "{":
        depth = 0
        j = pos
        end = -1
        while j < len(text):
            c = text[j]
            if c == "{":
                depth += 1
                if depth > _MAX_BRACE_DEPTH:
                    break
            elif c == "}":
                depth -= 1
                if depth == 0:
                    end = j
                    break
            j += 1
        if end < 0:
            break
        pos = end + 1
    return pos


def find_formula_spans(text: str) -> list[tuple[int, int]]:
    """Locate maximal formula regions as (start, end) character offsets.

    Unbalanced delimiters never raise; the offending region simply stays
    plain text. An opening ``$`` immediately followed by a digit, or a
    ``$...$`` pair whose content is only digits and currency punctuation,
    is treated as money rather than math.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    pos = 0
    while pos < n:
        c = text[pos]
        if c == "$":
            if text.startswith("$$", pos):
                close = text.find("$$", pos + 2)
                if close != -1 and text[pos + 2 : close].strip():
                    spans.append((pos, close + 2))
                    pos = close + 2
                else:
                    pos += 2
                continue
            if pos + 1 < n and text[pos + 1].isdigit():
                pos += 1
                continue
            close = text.find("$", pos + 1)
            if close == -1:
                pos += 1
                continue
            content = text[pos + 1 : close]
            if not content.strip() or _CURRENCY_CONTENT.match(content):
                pos += 1
                continue
            spans.append((pos, close + 1))
            pos = close + 1
        elif c == "\\":
            nxt = text[pos + 1] if pos + 1 < n else ""
            if nxt in "([":
                closer = "\\)" if nxt == "(" else "\\]"
                close = text.find(closer, pos + 2)
                if close == -1:
                    pos += 2
                    continue
                spans.append((pos, close + 2))
                pos = close + 2
            elif nxt.isalpha():
                j = pos + 1
                while j < n and text[j].isalpha():
                    j += 1
                j = _scan_braced_groups(text, j)
                spans.append((pos, j))
                pos = j
            else:
                # escaped character such as \$ or \%: skip both so the next
                # char cannot open a math region
                pos += 2
        else:
            pos += 1
    return spans


def contains_math(span: str) -> bool:
    """True when the span holds a recognizable math region or LaTeX command."""
    return bool(find_formula_spans(span))


def chunk_formula_aware(text: str) -> ChunkSequence:
    """Split text into alternating text/formula blocks (formulas atomic).

    Concatenating the blocks always reproduces the input exactly.
    """
    blocks: list[Block] = []
    pos = 0
    for start, end in find_formula_spans(text):
        if start > pos:
            blocks.append(Block(TEXT_BLOCK, text[pos:start]))
        blocks.append(Block(FORMULA_BLOCK, text[start:end]))
        pos = end
    if pos < len(text):
        blocks.append(Block(TEXT_BLOCK, text[pos:]))
    return ChunkSequence(tuple(blocks))


def count_sentences(text: str) -> int:
    """Count sentence-terminator runs outside formula regions.

    A run of ``. ? !`` counts when followed by whitespace or end of input.
    Non-empty text without any terminator counts as one sentence.
    """
    if not text:
        return 0
    masked = list(text)
    for start, end in find_formula_spans(text):
        for i in range(start, end):
            masked[i] = "\x00"
    masked_text = "".join(masked)
    count = 0
    for match in _TERMINATOR_RUN.finditer(masked_text):
        end = match.end()
        if end == len(masked_text) or masked_text[end].isspace():
            count += 1
    return max(count, 1)


def _earliest_boundary(bounds: list[int], target: float, *, after: int = -1) -> Optional[int]:
    for b in bounds:
        if b >= target and b > after:
            return b
    return None


def _slice_blocks(chunks: ChunkSequence, bounds: list[int], lo: int, hi: int) -> tuple[Block, ...]:
    i = bounds.index(lo)
    j = bounds.index(hi)
    return chunks.blocks[i:j]


def extract_span(chunks: ChunkSequence, mode: PositionMode) -> SpanSplit:
    """Cut the chunk sequence into spans at block granularity.

    Single-span modes place the cut(s) at the earliest block boundary at or
    after the one-third / two-thirds character marks (forward snapping), so
    each boundary lands within one block length of its target. Degenerate
    layouts (for example a single block) collapse to rendering the whole
    input. Multi-span partitions the blocks into five character-balanced
    groups and marks groups 2 and 4 for rendering.
    """
    mode = PositionMode.coerce(mode)
    if not chunks.blocks:
        raise ValueError("cannot extract a span from an empty chunk sequence")
    text = chunks.reconstruct()
    bounds = chunks.boundaries()
    total = chunks.total_length

    def segment(lo: int, hi: int, render: bool) -> SpanSegment:
        return SpanSegment(text[lo:hi], render, _slice_blocks(chunks, bounds, lo, hi))

    if mode == PositionMode.MULTI_SPAN:
        cuts = [0]
        for k in range(1, 5):
            b = _earliest_boundary(bounds, k * total / 5.0, after=cuts[-1])
            cuts.append(b if b is not None else total)
        cuts.append(total)
        rendered = {1, 3}
        segments = tuple(
            segment(cuts[i], cuts[i + 1], i in rendered) for i in range(5)
        )
        if not any(seg.content for seg in segments if seg.render):
            return extract_span(chunks, PositionMode.MIDDLE)
        return SpanSplit(segments, mode)

    inner = bounds[:-1]  # boundaries that leave a non-empty tail
    if mode == PositionMode.MIDDLE:
        b1 = _earliest_boundary(inner, total / 3.0)
        if b1 is None:
            b1 = max(inner)
        b2 = _earliest_boundary(bounds, 2.0 * total / 3.0, after=b1)
        return SpanSplit(
            (segment(0, b1, False), segment(b1, b2, True), segment(b2, total, False)),
            mode,
        )
    if mode == PositionMode.PREFIX:
        b = _earliest_boundary(bounds[1:], total / 3.0)
        return SpanSplit(
            (SpanSegment("", False), segment(0, b, True), segment(b, total, False)),
            mode,
        )
    # suffix: render from the earliest boundary at/after 2L/3 that leaves content
    b = _earliest_boundary(inner, 2.0 * total / 3.0)
    if b is None:
        b = max(inner)
    return SpanSplit(
        (segment(0, b, False), segment(b, total, True), SpanSegment("", False)),
        mode,
    )


def localize(text: str, mode: PositionMode | str = PositionMode.MIDDLE) -> SpanSplit:
    """Operator S: pick the span(s) of ``text`` to recast as an image.

    Inputs of at most three sentences are taken whole (the entire text is
    the rendered span); longer inputs are chunked formula-aware and cut
    according to ``mode``.
    """
    mode = PositionMode.coerce(mode)
    if not text:
        raise ValueError("cannot localize an empty string")
    if count_sentences(text) <= SHORT_INPUT_SENTENCES:
        whole = SpanSegment(text, True, tuple(chunk_formula_aware(text).blocks))
        return SpanSplit((SpanSegment("", False), whole, SpanSegment("", False)), mode)
    return extract_span(chunk_formula_aware(text), mode)


class SpanLocalizer(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping strings to :class:`SpanSplit` values.

    Composes with sklearn pipelines; ``fit`` only validates parameters.
    """

    def __init__(self, position_mode: str = "middle", short_input_sentences: int = SHORT_INPUT_SENTENCES):
        self.position_mode = position_mode
        self.short_input_sentences = short_input_sentences

    def fit(self, X=None, y=None):
        PositionMode.coerce(self.position_mode)
        if int(self.short_input_sentences) < 0:
            raise ValueError("short_input_sentences must be >= 0")
        return self

    def transform(self, X) -> list[SpanSplit]:
        mode = PositionMode.coerce(self.position_mode)
        limit = int(self.short_input_sentences)
        out = []
        for text in X:
            if not isinstance(text, str) or not text:
                raise ValueError("inputs must be non-empty strings")
            if count_sentences(text) <= limit:
                whole = SpanSegment(text, True, tuple(chunk_formula_aware(text).blocks))
                out.append(SpanSplit((SpanSegment("", False), whole, SpanSegment("", False)), mode))
            else:
                out.append(extract_span(chunk_formula_aware(text), mode))
        return out
