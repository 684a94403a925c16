"""Shared fixture builders: text generators, corpora, synthetic dumps."""

from __future__ import annotations

import random

import numpy as np

from lomo.corpus import ContentPart, Instance
from lomo.hsd import HiddenStateDump, build_dump

WORDS = (
    "the quick brown fox jumps over a lazy dog while computing integrals and "
    "derivatives of polynomial functions under mild regularity assumptions "
    "consider now an arbitrary triangle whose vertices lie on the unit circle "
    "prove that every bounded sequence admits a convergent subsequence"
).split()

MATH_SNIPPETS = (
    "$x^2+1=0$",
    "$\\frac{a}{b}$",
    "$$\\int_0^1 f(t)\\,dt$$",
    "\\(e^{i\\pi}+1=0\\)",
    "\\[\\sum_{k=1}^n k = \\tfrac{n(n+1)}{2}\\]",
    "\\alpha",
    "\\sqrt{2}",
    "$a_n \\to L$",
    "\\frac{dy}{dx}",
    "$\\pi r^2$",
)

DIRTY_SNIPPETS = (
    "$unclosed math",
    "costs $5 and $6 total",
    "a \\$ sign",
    "weird $$ alone",
    "\\{escaped brace",
)


def random_sentence(rng: random.Random, *, with_math: float = 0.3, dirty: float = 0.05) -> str:
    n_words = rng.randint(3, 12)
    tokens = [rng.choice(WORDS) for _ in range(n_words)]
    if rng.random() < with_math:
        tokens.insert(rng.randrange(len(tokens) + 1), rng.choice(MATH_SNIPPETS))
    if rng.random() < dirty:
        tokens.insert(rng.randrange(len(tokens) + 1), rng.choice(DIRTY_SNIPPETS))
    return " ".join(tokens) + rng.choice((".", "?", "!"))


def random_text(rng: random.Random, *, sentences: tuple[int, int] = (1, 9), **kw) -> str:
    n = rng.randint(*sentences)
    return " ".join(random_sentence(rng, **kw) for _ in range(n))


def text_instance(i: int, text: str) -> Instance:
    return Instance(id=f"txt-{i:05d}", parts=(ContentPart("text", text),), answer=f"answer-{i}")


def image_instance(i: int, text: str = "Describe the picture.") -> Instance:
    return Instance(
        id=f"img-{i:05d}",
        parts=(ContentPart("image", f"originals/{i:05d}.png"), ContentPart("text", text)),
        answer=f"answer-{i}",
    )


def mixed_corpus(n_text: int, n_image: int, seed: int = 7, **text_kw) -> list[Instance]:
    rng = random.Random(seed)
    out = [text_instance(i, random_text(rng, **text_kw)) for i in range(n_text)]
    out += [image_instance(i) for i in range(n_image)]
    rng.shuffle(out)
    return out


def exact_moment_sample(rng: np.random.Generator, n: int, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Draw n vectors whose *empirical* mean/covariance (1/(n-1)) equal the
    targets to float precision: whiten the draws empirically, then color."""
    dim = mean.shape[0]
    z = rng.standard_normal((n, dim))
    z -= z.mean(axis=0)
    c = z.T @ z / (n - 1)
    vals, vecs = np.linalg.eigh(c)
    white = z @ (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
    l = np.linalg.cholesky(cov)
    return mean + white @ l.T


def two_population_dump(
    layer_params: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]],
    n_per_role: int,
    seed: int = 0,
    n_samples: int = 4,
) -> HiddenStateDump:
    """Dump whose pooled per-layer text/visual populations have exactly the
    given (text_mean, text_cov, vis_mean, vis_cov) moments."""
    rng = np.random.default_rng(seed)
    n_layers = len(layer_params)
    dim = layer_params[0][0].shape[0]
    text_layers = [exact_moment_sample(rng, n_per_role, m, c) for m, c, _, _ in layer_params]
    vis_layers = [exact_moment_sample(rng, n_per_role, m, c) for _, _, m, c in layer_params]
    per = n_per_role // n_samples
    entries = []
    for s in range(n_samples):
        lo = s * per
        hi = (s + 1) * per if s < n_samples - 1 else n_per_role
        mask = np.concatenate([np.zeros(hi - lo, np.uint8), np.ones(hi - lo, np.uint8)])
        layers = np.stack(
            [
                np.concatenate([text_layers[l][lo:hi], vis_layers[l][lo:hi]]).astype(np.float32)
                for l in range(n_layers)
            ]
        )
        entries.append((f"s{s}", mask, layers))
    return build_dump(n_layers, dim, entries)


def paired_means_dump(pairs: list[tuple[np.ndarray, np.ndarray]], n_layers: int = 2) -> HiddenStateDump:
    """Dump with one text token and one visual token per sample, set to the
    given vectors at every layer (for pairwise-distance cases)."""
    dim = pairs[0][0].shape[0]
    entries = []
    for i, (t, v) in enumerate(pairs):
        tokens = np.stack([t, v]).astype(np.float32)
        layers = np.stack([tokens] * n_layers)
        entries.append((f"p{i}", np.array([0, 1], np.uint8), layers))
    return build_dump(n_layers, dim, entries)
