"""Angular distances, pair partitions, moments and the ADD loss values.

Everything here is a forward computation on already-normalized embeddings.
Embeddings are stored row-wise as ``(B, k)`` float64 arrays and labels as
``(B, c)`` probability arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SoftLabelsUnsupported, ZeroVector

UNIT_TOL = 1e-9
ZERO_NORM = 1e-12


def normalize(raw) -> np.ndarray:
    """Scale ``raw`` to unit Euclidean norm.

    Accepts a single vector or a ``(B, k)`` matrix (rows normalized
    independently). Raises :class:`ZeroVector` when any norm is below 1e-12.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.shape[-1] < 2:
        raise DimensionMismatch(f"embedding dimension must be >= 2, got {x.shape[-1]}")
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms < ZERO_NORM):
        raise ZeroVector("cannot normalize a vector with norm < 1e-12")
    return x / norms


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.clip(1.0 - a @ b, 0.0, 2.0))


def pairwise_cosine_distance(z: np.ndarray) -> np.ndarray:
    """All-pairs ``1 - z_i . z_j`` for row-normalized ``z``, clamped to [0, 2]."""
    return np.clip(1.0 - z @ z.T, 0.0, 2.0)


def label_distance(y: np.ndarray) -> np.ndarray:
    """All-pairs ``1 - y_i . y_j`` on raw probability vectors (no normalization)."""
    return 1.0 - y @ y.T


def hard_rows(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of rows that are exactly one-hot."""
    labels = np.asarray(labels)
    ones = labels == 1.0
    zeros = labels == 0.0
    return (ones.sum(axis=1) == 1) & ((ones | zeros).all(axis=1))


def is_hard(labels) -> bool:
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    return bool(hard_rows(labels).all())


def check_label_vectors(labels: np.ndarray, tol: float = 1e-9) -> None:
    if labels.ndim != 2 or labels.shape[1] < 1:
        raise DimensionMismatch(f"labels must be (B, c), got shape {labels.shape}")
    if np.any(labels < 0.0) or np.any(labels > 1.0):
        raise ValueError("label entries must lie in [0, 1]")
    if np.any(np.abs(labels.sum(axis=1) - 1.0) > tol):
        raise ValueError("label rows must sum to 1")


def one_hot(class_ids, n_classes: int) -> np.ndarray:
    ids = np.asarray(class_ids, dtype=np.int64)
    out = np.zeros((ids.size, n_classes))
    out[np.arange(ids.size), ids] = 1.0
    return out


@dataclass(frozen=True)
class Batch:
    """Unit embeddings paired with label vectors.

    Use :meth:`from_raw` to build one from unnormalized extractor outputs.
    """

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.embeddings, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if z.ndim != 2 or y.ndim != 2:
            raise DimensionMismatch("embeddings and labels must both be 2-D")
        if z.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"{z.shape[0]} embeddings but {y.shape[0]} labels")
        if z.shape[0] < 2:
            raise ValueError("a batch needs at least 2 samples")
        if z.shape[1] < 2:
            raise DimensionMismatch("embedding dimension must be >= 2")
        if np.any(np.abs(np.linalg.norm(z, axis=1) - 1.0) > UNIT_TOL):
            raise ValueError("embeddings must be unit-norm; call normalize() first")
        check_label_vectors(y)
        object.__setattr__(self, "embeddings", z)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_raw(cls, raw, labels) -> "Batch":
        return cls(normalize(raw), labels)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    def is_hard(self) -> bool:
        return bool(hard_rows(self.labels).all())


@dataclass(frozen=True)
class PairPartition:
    d_p: np.ndarray
    d_n: np.ndarray


@dataclass(frozen=True)
class DistanceStats:
    mu_p: float
    sigma_p: float
    mu_n: float
    sigma_n: float
    n_p: int
    n_n: int

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_p, self.sigma_p, self.mu_n, self.sigma_n])


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights on (mu_p, sigma_p, mu_n, sigma_n)."""

    lambda_mu_p: float = 1.0
    lambda_sigma_p: float = 1.0
    lambda_mu_n: float = 1.0
    lambda_sigma_n: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite nonnegative number, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_mu_p, self.lambda_sigma_p,
                         self.lambda_mu_n, self.lambda_sigma_n])

    def is_zero(self) -> bool:
        return not self.as_array().any()

    @property
    def tag(self) -> str:
        return ",".join(f"{v:g}" for v in self.as_array())

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        """Parse ``"1,0,1,0"`` (or the compact ``"1010"`` for 0/1 weights)."""
        text = text.strip()
        if "," in text:
            parts = [float(p) for p in text.split(",")]
        elif len(text) == 4 and set(text) <= {"0", "1"}:
            parts = [float(ch) for ch in text]
        else:
            raise ValueError(f"cannot parse loss weights from {text!r}")
        if len(parts) != 4:
            raise ValueError(f"expected 4 weights, got {len(parts)}")
        return cls(*parts)

    @classmethod
    def zero(cls) -> "LossWeights":
        return cls(0.0, 0.0, 0.0, 0.0)


DEFAULT_ABLATION = tuple(LossWeights.parse(t) for t in
                       ("1000", "0100", "0010", "0001", "1010", "1111"))


def _require_hard(batch: Batch) -> np.ndarray:
    if not batch.is_hard():
        raise SoftLabelsUnsupported(
            "pair partition needs one-hot labels; use the soft loss for mixed labels")
    return np.argmax(batch.labels, axis=1)


def same_class_mask(labels: np.ndarray) -> np.ndarray:
    """(B, B) mask of pairs sharing the argmax class (ties -> lowest index)."""
    ids = np.argmax(labels, axis=1)
    return ids[:, None] == ids[None, :]


def partition_pairs(batch: Batch) -> PairPartition:
    """Squared intra-class distances and squared (1 - d) inter-class values.

    Pairs are unordered (i < j), visited in row-major order.
    """
    ids = _require_hard(batch)
    d = pairwise_cosine_distance(batch.embeddings)
    iu, ju = np.triu_indices(batch.size, k=1)
    dist = d[iu, ju]
    same = ids[iu] == ids[ju]
    return PairPartition(d_p=dist[same] ** 2, d_n=(1.0 - dist[~same]) ** 2)


def moments(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator).

    Empty input gives (0, 0); a single value gives (value, 0).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        return 0.0, 0.0
    mean = float(v.sum() / n)
    if n == 1:
        return mean, 0.0
    return mean, float(np.sqrt(((v - mean) ** 2).sum() / (n - 1)))


def distance_stats(partition: PairPartition) -> DistanceStats:
    mu_p, sigma_p = moments(partition.d_p)
    mu_n, sigma_n = moments(partition.d_n)
    return DistanceStats(mu_p, sigma_p, mu_n, sigma_n,
                         int(partition.d_p.size), int(partition.d_n.size))


def add_loss_hard(batch: Batch, w: LossWeights) -> tuple[float, DistanceStats]:
    stats = distance_stats(partition_pairs(batch))
    return float(w.as_array() @ stats.as_array()), stats


def l_mu_soft(batch: Batch) -> float:
    """Mean squared gap between label and embedding distances over ordered pairs."""
    b = batch.size
    gap = label_distance(batch.labels) - pairwise_cosine_distance(batch.embeddings)
    np.fill_diagonal(gap, 0.0)
    return float((gap ** 2).sum() / (b * (b - 1)))


def soft_positive_values(batch: Batch) -> np.ndarray:
    """Squared distances of unordered pairs whose labels share an argmax."""
    same = same_class_mask(batch.labels)
    iu, ju = np.triu_indices(batch.size, k=1)
    d = pairwise_cosine_distance(batch.embeddings)[iu, ju]
    return d[same[iu, ju]] ** 2


def add_loss_soft(batch: Batch, lambda_mu: float, lambda_sigma_p: float) -> float:
    if lambda_mu < 0 or lambda_sigma_p < 0:
        raise ValueError("soft loss weights must be nonnegative")
    _, sigma_p = moments(soft_positive_values(batch))
    return float(lambda_mu * l_mu_soft(batch) + lambda_sigma_p * sigma_p)
