"""Cross-modal alignment diagnostics computed from hidden-state dumps.

Three instruments:

* layer-wise Frechet distance between the pooled visual-token and
  textual-token populations, averaged over layers (the integration rate);
* per-sample cosine distance between mean text and mean image hidden
  states at a chosen layer (pairwise cross-modal distance);
* a numeric checker for the loss decomposition identity
  -log q(a) = -log p(a) + log(p(a)/q(a)) and its expectation form
  cross-entropy = entropy + KL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .hsd import ROLE_TEXTUAL, ROLE_VISUAL, HiddenStateDump
from .validation import as_distribution

DEFAULT_SHRINKAGE = 1e-6


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class GaussianMoments:
    """Sample mean and covariance (1/(n-1) normalization, symmetrized)."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


class RunningMoments:
    """Single-pass mean/covariance accumulator with mergeable partials.

    Uses the pairwise update of Chan, Golub and LeVeque, so partial
    accumulators from concurrent workers can be merged in any order and
    agree with a single-pass fit to numerical precision.
    """

    def __init__(self, dim: Optional[int] = None):
        self.count = 0
        self._mean = np.zeros(dim, dtype=np.float64) if dim else None
        self._m2 = np.zeros((dim, dim), dtype=np.float64) if dim else None

    def _ensure(self, dim: int) -> None:
        if self._mean is None:
            self._mean = np.zeros(dim, dtype=np.float64)
            self._m2 = np.zeros((dim, dim), dtype=np.float64)
        elif self._mean.shape[0] != dim:
            raise MetricError(f"dimension mismatch: accumulator {self._mean.shape[0]}, vector {dim}")

    def update(self, vector: np.ndarray) -> "RunningMoments":
        v = np.asarray(vector, dtype=np.float64).reshape(-1)
        self._ensure(v.shape[0])
        self.count += 1
        delta = v - self._mean
        self._mean += delta / self.count
        self._m2 += np.outer(delta, v - self._mean)
        return self

    def update_batch(self, matrix: np.ndarray) -> "RunningMoments":
        x = np.asarray(matrix, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            if x.ndim == 2:
                return self
            raise MetricError("batch must be a 2-D (n, dim) array")
        self._ensure(x.shape[1])
        n_b = x.shape[0]
        mean_b = x.mean(axis=0)
        centered = x - mean_b
        m2_b = centered.T @ centered
        self._merge_parts(n_b, mean_b, m2_b)
        return self

    def _merge_parts(self, n_b: int, mean_b: np.ndarray, m2_b: np.ndarray) -> None:
        if n_b == 0:
            return
        if self.count == 0:
            self.count = n_b
            self._mean = mean_b.copy()
            self._m2 = m2_b.copy()
            return
        n_a = self.count
        delta = mean_b - self._mean
        total = n_a + n_b
        self._mean = self._mean + delta * (n_b / total)
        self._m2 = self._m2 + m2_b + np.outer(delta, delta) * (n_a * n_b / total)
        self.count = total

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return self
        if self._mean is not None and other._mean is not None and self._mean.shape != other._mean.shape:
            raise MetricError("cannot merge accumulators of different dimension")
        self._ensure(other._mean.shape[0])
        self._merge_parts(other.count, other._mean, other._m2)
        return self

    def moments(self) -> GaussianMoments:
        if self.count < 2:
            raise MetricError(f"need at least 2 vectors to estimate a covariance, got {self.count}")
        cov = self._m2 / (self.count - 1)
        cov = (cov + cov.T) / 2.0
        return GaussianMoments(mean=self._mean.copy(), covariance=cov, count=self.count)


def fit_gaussian(vectors: Iterable[np.ndarray]) -> GaussianMoments:
    """Fit mean and covariance to a stream of vectors (at least two)."""
    acc = RunningMoments()
    arr = np.asarray(vectors, dtype=np.float64) if isinstance(vectors, np.ndarray) else None
    if arr is not None and arr.ndim == 2:
        acc.update_batch(arr)
    else:
        for v in vectors:
            acc.update(v)
    return acc.moments()


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, clamping negatives."""
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(
    a: GaussianMoments, b: GaussianMoments, *, shrinkage: float = DEFAULT_SHRINKAGE
) -> float:
    """Frechet distance between two Gaussians.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), where a
    small ridge ``shrinkage * I`` is added to both covariances first; token
    populations are frequently rank-deficient at small sample counts. The
    symmetrized product form keeps every eigendecomposition real-symmetric.
    """
    if a.dim != b.dim:
        raise MetricError(f"dimension mismatch: {a.dim} vs {b.dim}")
    eye = np.eye(a.dim)
    sa = a.covariance + shrinkage * eye
    sb = b.covariance + shrinkage * eye
    sa_sqrt = _psd_sqrt(sa)
    inner = sa_sqrt @ sb @ sa_sqrt
    inner = (inner + inner.T) / 2.0
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    trace_sqrt = float(np.sqrt(vals).sum())
    diff = a.mean - b.mean
    fid = float(diff @ diff) + float(np.trace(sa) + np.trace(sb)) - 2.0 * trace_sqrt
    return max(fid, 0.0)


@dataclass(frozen=True)
class MirReport:
    per_layer_fid: list[float]
    mir: float


def mir(dump: HiddenStateDump, *, shrinkage: float = DEFAULT_SHRINKAGE) -> MirReport:
    """Layer-wise Frechet distance between visual and textual token pools.

    For every layer, all textual tokens across samples form one population
    and all visual tokens the other; the report carries each layer's
    distance and their arithmetic mean (lower = tighter integration).
    """
    dump.validate()
    if not dump.samples:
        raise MetricError("dump has no samples")
    per_layer = []
    for layer in range(dump.n_layers):
        text_acc = RunningMoments(dump.hidden_dim)
        vis_acc = RunningMoments(dump.hidden_dim)
        for sample in dump.samples:
            text_acc.update_batch(sample.tokens(layer, ROLE_TEXTUAL).astype(np.float64))
            vis_acc.update_batch(sample.tokens(layer, ROLE_VISUAL).astype(np.float64))
        if text_acc.count < 2 or vis_acc.count < 2:
            raise MetricError(
                f"layer {layer}: need at least 2 tokens per role "
                f"(textual={text_acc.count}, visual={vis_acc.count})"
            )
        per_layer.append(frechet_distance(text_acc.moments(), vis_acc.moments(), shrinkage=shrinkage))
    return MirReport(per_layer_fid=per_layer, mir=float(np.mean(per_layer)))


@dataclass(frozen=True)
class PcdReport:
    layer: int
    per_sample: list[float]
    sample_ids: list[str]
    mean: float


def pairwise_cross_modal_distance(dump: HiddenStateDump, layer: int = 1) -> PcdReport:
    """Per-sample cosine distance between mean textual and visual states.

    d = 1 - cos(mean text hidden state, mean visual hidden state) at the
    given layer index (default 1, the first attention layer in dumps that
    store the embedding layer at index 0). d lies in [0, 2].
    """
    dump.validate()
    if not dump.samples:
        raise MetricError("dump has no samples")
    if not 0 <= layer < dump.n_layers:
        raise MetricError(f"layer {layer} out of range (dump has {dump.n_layers} layers)")
    distances = []
    ids = []
    for sample in dump.samples:
        text = sample.tokens(layer, ROLE_TEXTUAL)
        vis = sample.tokens(layer, ROLE_VISUAL)
        if text.shape[0] == 0 or vis.shape[0] == 0:
            raise MetricError(f"sample {sample.sample_id!r} lacks tokens of one role")
        h_text = text.astype(np.float64).mean(axis=0)
        h_img = vis.astype(np.float64).mean(axis=0)
        norm = float(np.linalg.norm(h_text) * np.linalg.norm(h_img))
        if norm == 0.0:
            raise MetricError(f"sample {sample.sample_id!r}: zero-norm mean hidden state")
        cos = float(h_text @ h_img) / norm
        cos = min(1.0, max(-1.0, cos))
        distances.append(1.0 - cos)
        ids.append(sample.sample_id)
    return PcdReport(layer=layer, per_sample=distances, sample_ids=ids, mean=float(np.mean(distances)))


def quantile_histogram(values: Sequence[float], bins: int = 4) -> dict:
    """Equal-count histogram: edges at the value quantiles, one bin per quartile."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise MetricError("no values to bin")
    edges = np.quantile(v, np.linspace(0.0, 1.0, bins + 1))
    counts = []
    for i in range(bins):
        if i < bins - 1:
            counts.append(int(((v >= edges[i]) & (v < edges[i + 1])).sum()))
        else:
            counts.append(int(((v >= edges[i]) & (v <= edges[i + 1])).sum()))
    return {"edges": [float(e) for e in edges], "counts": counts}


@dataclass(frozen=True)
class DecompositionResult:
    loss_lomo: float
    sft_term: float
    align_term: float
    expected_cross_entropy: float
    entropy_term: float
    kl: float


def decomposition_check(p_x, p_tx, answer_index: int) -> DecompositionResult:
    """Verify the loss decomposition on a pair of answer distributions.

    With p = p(.|x) and q = p(.|T(x)) over a shared finite answer set:
    the substituted loss -log q(a) splits exactly into standard supervision
    -log p(a) plus the alignment term log(p(a)/q(a)); in expectation over
    a ~ p the same split becomes cross-entropy = entropy + KL(p||q).
    The point identity must hold with zero floating-point residual (all
    three terms reuse the same two log evaluations); the expectation
    identity is checked to 1e-12.
    """
    p = as_distribution(p_x, "p_x")
    q = as_distribution(p_tx, "p_tx")
    if p.shape != q.shape:
        raise MetricError(f"support mismatch: {p.shape[0]} vs {q.shape[0]} outcomes")
    if not 0 <= answer_index < p.shape[0]:
        raise MetricError(f"answer index {answer_index} out of range")
    if p[answer_index] <= 0.0 or q[answer_index] <= 0.0:
        raise MetricError("both distributions must give the answer positive probability")

    log_p_a = math.log(p[answer_index])
    log_q_a = math.log(q[answer_index])
    loss_lomo = -log_q_a
    sft_term = -log_p_a
    align_term = log_p_a - log_q_a
    if loss_lomo - sft_term - align_term != 0.0:
        raise MetricError("point decomposition identity violated")

    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise MetricError("p_tx must be positive wherever p_x is (finite KL)")
    log_p = np.log(p[support])
    log_q = np.log(q[support])
    w = p[support]
    expected_cross_entropy = float(np.sum(w * -log_q))
    entropy_term = float(np.sum(w * -log_p))
    kl = float(np.sum(w * (log_p - log_q)))
    if abs(expected_cross_entropy - (entropy_term + kl)) > 1e-12:
        raise MetricError("expectation identity violated beyond 1e-12")
    # Gibbs guarantees kl >= 0; tiny negative values are float dust
    if kl < 0.0:
        if kl < -1e-12:
            raise MetricError(f"KL came out negative ({kl}), inputs are not valid distributions")
        kl = 0.0
    return DecompositionResult(
        loss_lomo=loss_lomo,
        sft_term=sft_term,
        align_term=align_term,
        expected_cross_entropy=expected_cross_entropy,
        entropy_term=entropy_term,
        kl=kl,
    )
