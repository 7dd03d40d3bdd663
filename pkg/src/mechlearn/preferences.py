"""Preference scoring, exemplar labeling, the PCA metric, and label noise.

Score conventions (higher is better in every case):

  * column-evenness ("tvf"): negated total violation, over item pairs
    (j < j'), of max(0, sum_i |z_ij - z_ij'| - d). Always <= 0; equals 0
    iff every agent's row is constant across items (d = 0).
  * entropy: sum over agents of the Shannon entropy of the row normalized
    by its sum; rows summing to 0 contribute 0. Range [0, n ln m].
  * quota: min over items of the smallest per-item normalized agent share,
    minus the threshold t. Positive means every share clears the quota.
    Fully unallocated items count as equal shares 1/n so they cannot
    dominate the min artificially.

Mixtures carry sub-functions with pool fractions; they label partitions
but have no scalar score of their own.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import autodiff as ad
from .auctions import AuctionSpec
from .autodiff import ShapeError, Tensor

__all__ = [
    "PreferenceFunction",
    "LabeledAllocationSet",
    "ProbitNoiseModel",
    "preference_score",
    "preference_scores",
    "preference_score_tensor",
    "pairwise_label",
    "build_labels",
    "uniform_allocations",
    "reference_threshold",
    "pca",
    "flip_probabilities",
    "probit_flip",
    "allocation_similarity",
    "class_balance",
    "labeled_to_csv",
    "labeled_from_csv",
    "allocations_from_csv",
    "POOL_SEED",
]

KINDS = ("tvf", "entropy", "quota", "mixture")

# seed of the fixed uniform-allocation pool behind threshold policies
POOL_SEED = 714025


@dataclass(frozen=True)
class PreferenceFunction:
    """One scoring rule, or a mixture of rules over pool partitions."""

    kind: str
    d: float = 0.0
    t: float | None = None
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"PreferenceFunction: unknown kind {self.kind!r}")
        if self.d < 0:
            raise ValueError(f"PreferenceFunction: d must be >= 0, got {self.d}")
        if self.t is not None and not 0 < self.t < 1:
            raise ValueError(f"PreferenceFunction: t must lie in (0, 1), got {self.t}")
        if self.kind == "mixture":
            comps = tuple((float(f), fn) for f, fn in self.components)
            object.__setattr__(self, "components", comps)
            if not comps:
                raise ValueError("PreferenceFunction: mixture needs components")
            if any(f <= 0 for f, _ in comps):
                raise ValueError("PreferenceFunction: mixture fractions must be positive")
            if abs(sum(f for f, _ in comps) - 1.0) > 1e-9:
                raise ValueError("PreferenceFunction: mixture fractions must sum to 1")
            if any(fn.kind == "mixture" for _, fn in comps):
                raise ValueError("PreferenceFunction: mixtures do not nest")
        elif self.components:
            raise ValueError("PreferenceFunction: components only valid for mixtures")

    def quota_threshold(self, n_agents: int) -> float:
        return self.t if self.t is not None else 0.8 / n_agents

    def label(self) -> str:
        if self.kind == "mixture":
            inner = "+".join(f"{f:g}*{fn.label()}" for f, fn in self.components)
            return f"mixture({inner})"
        if self.kind == "tvf":
            return f"tvf(d={self.d:g})"
        if self.kind == "quota":
            return "quota" if self.t is None else f"quota(t={self.t:g})"
        return self.kind


def preference_scores(fn: PreferenceFunction, allocations: np.ndarray) -> np.ndarray:
    """Scores of an (L, n, m) allocation batch, shape (L,)."""
    z = np.asarray(allocations, dtype=np.float64)
    if z.ndim != 3:
        raise ShapeError(f"preference_scores: allocations must be 3-d, got {z.shape}")
    L, n, m = z.shape
    if fn.kind == "tvf":
        violation = np.zeros(L)
        for j in range(m):
            for jp in range(j + 1, m):
                gap = np.abs(z[:, :, j] - z[:, :, jp]).sum(axis=1) - fn.d
                violation += np.maximum(gap, 0.0)
        return -violation
    if fn.kind == "entropy":
        row_sum = z.sum(axis=2, keepdims=True)
        safe = np.where(row_sum > 0.0, row_sum, 1.0)
        p = z / safe
        plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
        return -plogp.sum(axis=(1, 2))
    if fn.kind == "quota":
        col_sum = z.sum(axis=1, keepdims=True)
        share = np.where(col_sum > 0.0, z / np.where(col_sum > 0.0, col_sum, 1.0), 1.0 / n)
        return share.min(axis=(1, 2)) - fn.quota_threshold(n)
    raise ValueError("preference_scores: mixtures have no scalar score; use build_labels")


def preference_score(fn: PreferenceFunction, allocation: np.ndarray) -> float:
    """Score of a single (n, m) allocation."""
    z = np.asarray(allocation, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"preference_score: allocation must be 2-d, got {z.shape}")
    return float(preference_scores(fn, z[None])[0])


def preference_score_tensor(fn: PreferenceFunction, z: Tensor) -> Tensor:
    """Differentiable batch scores for use inside training losses."""
    if z.ndim != 3:
        raise ShapeError(f"preference_score_tensor: allocations must be 3-d, got {z.shape}")
    L, n, m = z.shape
    if fn.kind == "tvf":
        total = ad.as_tensor(np.zeros(L))
        for j in range(m):
            col_j = ad.reshape(ad.slice_axis(z, 2, j, j + 1), (L, n))
            for jp in range(j + 1, m):
                col_jp = ad.reshape(ad.slice_axis(z, 2, jp, jp + 1), (L, n))
                gap = ad.tsum(ad.absval(ad.subtract(col_j, col_jp)), axis=1) - fn.d
                total = ad.add(total, ad.relu(gap))
        return ad.negative(total)
    if fn.kind == "entropy":
        row_sum = ad.tsum(z, axis=2, keepdims=True)
        p = ad.divide(z, ad.add(row_sum, ad.as_tensor(1e-12)))
        plogp = ad.multiply(p, ad.log(p))
        return ad.negative(ad.tsum(ad.reshape(plogp, (L, n * m)), axis=1))
    if fn.kind == "quota":
        col_sum = ad.tsum(z, axis=1, keepdims=True)
        share = ad.divide(z, ad.add(col_sum, ad.as_tensor(1e-12)))
        flat = ad.reshape(share, (L, n * m))
        smallest = ad.negative(ad.tmax(ad.negative(flat), axis=1))
        return ad.subtract(smallest, ad.as_tensor(fn.quota_threshold(n)))
    raise ValueError("preference_score_tensor: mixtures have no scalar score")


@dataclass(frozen=True)
class LabeledAllocationSet:
    """Allocations with the scores and binary labels that judged them."""

    allocations: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    provenance: str = "external"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "allocations", np.asarray(self.allocations, dtype=np.float64))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.allocations.ndim != 3:
            raise ShapeError(f"LabeledAllocationSet: allocations must be 3-d, got {self.allocations.shape}")
        L = self.allocations.shape[0]
        if self.scores.shape != (L,) or self.labels.shape != (L,):
            raise ShapeError("LabeledAllocationSet: scores/labels must parallel allocations")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("LabeledAllocationSet: labels must be binary")

    def __len__(self) -> int:
        return self.allocations.shape[0]

    def positive_fraction(self) -> float:
        return float(self.labels.mean())


def pairwise_label(score: float, comparison_scores) -> int:
    """1 iff score strictly beats more than half the comparisons; ties lose."""
    comps = np.asarray(comparison_scores, dtype=np.float64)
    if comps.size < 1:
        raise ValueError("pairwise_label: need at least one comparison")
    wins = int((score > comps).sum())
    return 1 if 2 * wins > comps.size else 0


def _draw_others(rng: np.random.Generator, i: int, pool_size: int, k: int) -> np.ndarray:
    """k distinct indices from {0..pool_size-1} excluding i, uniform."""
    idx = rng.choice(pool_size - 1, size=k, replace=False)
    idx[idx >= i] += 1
    return idx


def build_labels(
    allocations: np.ndarray,
    fn: PreferenceFunction,
    n_comparisons: int,
    rng: np.random.Generator,
    seed: int = 0,
) -> LabeledAllocationSet:
    """Label each allocation by plurality against sampled peers.

    Each allocation is compared against ``n_comparisons`` distinct others
    drawn from its own pool. Mixtures split the pool into contiguous
    partitions by fraction; each partition scores, draws, and labels
    entirely within itself.
    """
    z = np.asarray(allocations, dtype=np.float64)
    if z.ndim != 3:
        raise ShapeError(f"build_labels: allocations must be 3-d, got {z.shape}")
    L = z.shape[0]
    if fn.kind == "mixture":
        bounds = np.round(np.cumsum([0.0] + [f for f, _ in fn.components]) * L).astype(int)
        bounds[-1] = L
        scores = np.zeros(L)
        labels = np.zeros(L, dtype=np.int64)
        for (lo, hi), (_, sub) in zip(zip(bounds[:-1], bounds[1:]), fn.components):
            part = build_labels(z[lo:hi], sub, n_comparisons, rng, seed)
            scores[lo:hi] = part.scores
            labels[lo:hi] = part.labels
        return LabeledAllocationSet(z, scores, labels, provenance=fn.label(), seed=seed)
    if L <= n_comparisons:
        raise ValueError(f"build_labels: pool of {L} cannot support {n_comparisons} comparisons")
    scores = preference_scores(fn, z)
    labels = np.zeros(L, dtype=np.int64)
    for i in range(L):
        others = _draw_others(rng, i, L, n_comparisons)
        labels[i] = pairwise_label(scores[i], scores[others])
    return LabeledAllocationSet(z, scores, labels, provenance=fn.label(), seed=seed)


def uniform_allocations(spec: AuctionSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Allocation-shaped draws uniform on [0,1]^(n x m)."""
    return rng.uniform(0.0, 1.0, size=(count, spec.n_agents, spec.m_items))


_THRESHOLD_CACHE: dict = {}


def reference_threshold(
    fn: PreferenceFunction, spec: AuctionSpec, pool_size: int = 10_000
) -> float:
    """Median score of a fixed uniform-allocation pool (cached).

    An allocation counts as satisfying iff its score reaches this median,
    which mirrors plurality labeling in expectation without per-function
    constants.
    """
    key = (fn, spec.n_agents, spec.m_items, pool_size)
    if key not in _THRESHOLD_CACHE:
        pool = uniform_allocations(spec, pool_size, np.random.default_rng(POOL_SEED))
        _THRESHOLD_CACHE[key] = float(np.median(preference_scores(fn, pool)))
    return _THRESHOLD_CACHE[key]


def pca(allocations: np.ndarray, ground_truth, spec: AuctionSpec = None, threshold: float = None) -> float:
    """Fraction of allocations judged satisfying, in [0, 1].

    ``ground_truth`` is either a PreferenceFunction (known-function mode:
    satisfying iff score >= threshold, defaulting to the fixed-pool
    median) or a LabeledAllocationSet (label of the Euclidean nearest
    neighbor, first index on ties).
    """
    z = np.asarray(allocations, dtype=np.float64)
    if z.ndim != 3 or z.shape[0] == 0:
        raise ShapeError(f"pca: allocations must be non-empty 3-d, got {z.shape}")
    if isinstance(ground_truth, PreferenceFunction):
        if threshold is None:
            if spec is None:
                spec = AuctionSpec(z.shape[1], z.shape[2])
            threshold = reference_threshold(ground_truth, spec)
        return float((preference_scores(ground_truth, z) >= threshold).mean())
    if isinstance(ground_truth, LabeledAllocationSet):
        if len(ground_truth) == 0:
            raise ValueError("pca: empty ground truth set")
        flat = z.reshape(z.shape[0], -1)
        ref = ground_truth.allocations.reshape(len(ground_truth), -1)
        hits = np.empty(z.shape[0], dtype=np.int64)
        for i in range(z.shape[0]):
            d2 = ((ref - flat[i]) ** 2).sum(axis=1)
            hits[i] = ground_truth.labels[int(np.argmin(d2))]
        return float(hits.mean())
    raise TypeError(f"pca: unsupported ground truth {type(ground_truth).__name__}")


@dataclass(frozen=True)
class ProbitNoiseModel:
    """Label-flip noise concentrated near a score decision boundary.

    Flip probability is clamp(k * (1 - Phi(|x - mu|/sigma)), f, 1): largest
    (k/2 at minimum) right at the boundary, decaying toward the floor f
    far from it. Scores are min-max normalized to [0, 1] first when
    ``normalize`` is set, putting mu on the presentation scale; sigma
    defaults to the sample standard deviation of the (normalized) scores.
    """

    mu: float = 0.7
    sigma: float | None = None
    k: float = 1.05
    f: float = 0.15
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"ProbitNoiseModel: floor must be in [0, 1], got {self.f}")
        if self.k < 0.0:
            raise ValueError(f"ProbitNoiseModel: k must be >= 0, got {self.k}")
        if self.sigma is not None and self.sigma <= 0.0:
            raise ValueError(f"ProbitNoiseModel: sigma must be positive, got {self.sigma}")


def flip_probabilities(scores: np.ndarray, model: ProbitNoiseModel) -> np.ndarray:
    x = np.asarray(scores, dtype=np.float64)
    if model.normalize:
        lo, hi = x.min(), x.max()
        x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    sigma = model.sigma if model.sigma is not None else float(x.std())
    if sigma <= 0.0:
        sigma = 1.0
    q = model.k * (1.0 - norm.cdf(np.abs(x - model.mu) / sigma))
    return np.clip(q, model.f, 1.0)


def probit_flip(
    labels: np.ndarray, scores: np.ndarray, model: ProbitNoiseModel, rng: np.random.Generator
) -> np.ndarray:
    """Independently flip each label with its probit probability."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ShapeError(f"probit_flip: labels {labels.shape} vs scores {scores.shape}")
    q = flip_probabilities(scores, model)
    flips = rng.uniform(size=labels.shape) < q
    return np.where(flips, 1 - labels, labels)


def allocation_similarity(z_a: np.ndarray, z_b: np.ndarray) -> float:
    """Mean Euclidean distance between paired flattened allocations."""
    a = np.asarray(z_a, dtype=np.float64)
    b = np.asarray(z_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"allocation_similarity: {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise ShapeError(f"allocation_similarity: batches must be 3-d, got {a.shape}")
    diff = (a - b).reshape(a.shape[0], -1)
    return float(np.sqrt((diff**2).sum(axis=1)).mean())


def class_balance(labeled: LabeledAllocationSet, rng: np.random.Generator) -> LabeledAllocationSet:
    """Resample the minority class with replacement until counts match.

    All originals are retained in order; duplicates are appended. A
    single-class set is rejected since it cannot train a classifier.
    """
    labels = labeled.labels
    n_pos = int(labels.sum())
    n_neg = len(labeled) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"class_balance: need both classes, got {n_pos} positive / {n_neg} negative"
        )
    if n_pos == n_neg:
        return labeled
    minority = 1 if n_pos < n_neg else 0
    pool = np.flatnonzero(labels == minority)
    extra = pool[rng.integers(0, pool.size, size=abs(n_pos - n_neg))]
    keep = np.concatenate([np.arange(len(labeled)), extra])
    return LabeledAllocationSet(
        labeled.allocations[keep],
        labeled.scores[keep],
        labeled.labels[keep],
        provenance=labeled.provenance,
        seed=labeled.seed,
    )


# ---------------------------------------------------------------------------
# CSV interchange

ALLOC_CSV_HEADER = ["sample", "agent", "item", "z"]
LABEL_CSV_HEADER = ["sample", "score", "label"]


def labeled_to_csv(labeled: LabeledAllocationSet, alloc_path: str, label_path: str) -> None:
    """Write allocations and a `sample,score,label` sidecar."""
    L, n, m = labeled.allocations.shape
    with open(alloc_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ALLOC_CSV_HEADER)
        for s in range(L):
            for i in range(n):
                for j in range(m):
                    writer.writerow([s, i, j, repr(float(labeled.allocations[s, i, j]))])
    with open(label_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_CSV_HEADER)
        for s in range(L):
            writer.writerow([s, repr(float(labeled.scores[s])), int(labeled.labels[s])])


def allocations_from_csv(path: str) -> np.ndarray:
    """Read a full `sample,agent,item,z` grid as an (L, n, m) array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ALLOC_CSV_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(ALLOC_CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    L = max(r[0] for r in rows) + 1
    n = max(r[1] for r in rows) + 1
    m = max(r[2] for r in rows) + 1
    if len(rows) != L * n * m:
        raise ValueError(f"{path}: expected {L * n * m} rows for a full grid")
    allocations = np.zeros((L, n, m))
    for s, i, j, v in rows:
        allocations[s, i, j] = v
    return allocations


def labeled_from_csv(alloc_path: str, label_path: str, provenance: str = "external") -> LabeledAllocationSet:
    allocations = allocations_from_csv(alloc_path)
    L = allocations.shape[0]
    scores = np.zeros(L)
    labels = np.zeros(L, dtype=np.int64)
    seen = np.zeros(L, dtype=bool)
    with open(label_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABEL_CSV_HEADER:
            raise ValueError(f"{label_path}:1: expected header {','.join(LABEL_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, score, label = int(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise ValueError(f"{label_path}:{lineno}: malformed row {row!r}")
            if not 0 <= s < L:
                raise ValueError(f"{label_path}:{lineno}: sample {s} out of range")
            scores[s], labels[s], seen[s] = score, label, True
    if not seen.all():
        raise ValueError(f"{label_path}: missing labels for {int((~seen).sum())} samples")
    return LabeledAllocationSet(allocations, scores, labels, provenance=provenance)
