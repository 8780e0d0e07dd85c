"""Datasets: synthetic Gaussian blobs, CSV feature files, splits, batching, mixup."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (DimensionMismatch, InconsistentWidth, IndexOutOfRange,
                     InfeasibleGeometry, ParseError, UnknownLabelColumn)
from .geometry import check_label_vectors, hard_rows, one_hot

LABEL_PREFIX = "label_"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"features {x.shape} and labels {y.shape} disagree")
        if x.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 rows")
        if y.shape[1] != len(self.class_names):
            raise DimensionMismatch(
                f"{y.shape[1]} label columns but {len(self.class_names)} class names")
        check_label_vectors(y)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_ids(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    def is_hard(self) -> bool:
        return bool(hard_rows(self.labels).all())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names)


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 5
    dim: int = 8
    per_class: int = 200
    spread: float = 1.0
    separation: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 1 or self.dim < 1 or self.per_class < 1:
            raise ValueError("classes, dim and per_class must all be >= 1")
        if not self.spread > 0:
            raise ValueError("spread must be > 0")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if self.classes * self.per_class < 2:
            raise ValueError("synthetic dataset would have fewer than 2 rows")


def _place_centroids(cfg: SynthConfig, rng: np.random.Generator,
                     max_tries: int = 1000) -> np.ndarray:
    # rejection sampling from N(0, separation^2 I)
    scale = max(cfg.separation, 1.0)
    centroids = []
    for idx in range(cfg.classes):
        for _ in range(max_tries):
            cand = rng.normal(scale=scale, size=cfg.dim)
            if all(np.linalg.norm(cand - c) >= cfg.separation for c in centroids):
                centroids.append(cand)
                break
        else:
            raise InfeasibleGeometry(
                f"could not place centroid {idx} of {cfg.classes} at separation "
                f"{cfg.separation} in {cfg.dim} dimensions after {max_tries} tries")
    return np.array(centroids)


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Isotropic Gaussian blobs, one per class, rows ordered class by class."""
    rng = np.random.default_rng(cfg.seed)
    centroids = _place_centroids(cfg, rng)
    ids = np.repeat(np.arange(cfg.classes), cfg.per_class)
    noise = rng.normal(size=(ids.size, cfg.dim))
    features = centroids[ids] + cfg.spread * noise
    names = tuple(str(i) for i in range(cfg.classes))
    return Dataset(features, one_hot(ids, cfg.classes), names)


# CSV ----------------------------------------------------------------------

def _parse_float(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", line) from None


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Read a feature CSV.

    With ``label_column`` set, that column holds categorical class names
    (indexed in first-appearance order). Otherwise the file must carry
    probability columns ``label_0 .. label_{c-1}``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file (header row required)", 1) from None
        rows = list(reader)

    header = [h.strip() for h in header]
    if label_column is not None:
        if label_column not in header:
            raise UnknownLabelColumn(label_column)
        label_idx = [header.index(label_column)]
        names = None
    else:
        label_idx = [i for i, h in enumerate(header) if h.startswith(LABEL_PREFIX)]
        if not label_idx:
            raise UnknownLabelColumn(
                f"no categorical label column given and no {LABEL_PREFIX}* columns found")
        suffixes = [header[i][len(LABEL_PREFIX):] for i in label_idx]
        expected = [str(j) for j in range(len(label_idx))]
        if suffixes != expected:
            raise ParseError(f"probability columns must be {LABEL_PREFIX}0..{LABEL_PREFIX}"
                             f"{len(label_idx) - 1} in order", 1)
        names = expected
    feature_idx = [i for i in range(len(header)) if i not in label_idx]

    features, cats, probs = [], [], []
    for offset, row in enumerate(rows):
        line = offset + 2
        if not row:
            continue
        if len(row) != len(header):
            raise InconsistentWidth(
                f"expected {len(header)} fields, found {len(row)}", line)
        features.append([_parse_float(row[i], line, header[i]) for i in feature_idx])
        if label_column is not None:
            cats.append(row[label_idx[0]].strip())
        else:
            probs.append([_parse_float(row[i], line, header[i]) for i in label_idx])

    if label_column is not None:
        names = list(dict.fromkeys(cats))
        lookup = {n: i for i, n in enumerate(names)}
        labels = one_hot([lookup[c] for c in cats], len(names))
    else:
        labels = np.array(probs, dtype=np.float64)
        try:
            check_label_vectors(labels)
        except ValueError as exc:
            bad = np.nonzero((np.abs(labels.sum(axis=1) - 1.0) > 1e-9)
                             | (labels < 0).any(axis=1) | (labels > 1).any(axis=1))[0]
            line = int(bad[0]) + 2 if bad.size else None
            raise ParseError(str(exc), line) from None
    return Dataset(np.array(features, dtype=np.float64).reshape(len(features), -1),
                   labels, tuple(names))


def save_csv(dataset: Dataset, path, label_column: str | None = None,
             feature_prefix: str = "x") -> None:
    """Write ``dataset`` in the schema :func:`load_csv` reads.

    Probability columns are the default; pass ``label_column`` to write hard
    labels as a single categorical column of class names instead.
    """
    if label_column is not None and not dataset.is_hard():
        raise ValueError("categorical label column needs hard labels")
    feat_names = [f"{feature_prefix}{j}" for j in range(dataset.dim)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if label_column is not None:
            writer.writerow(feat_names + [label_column])
            for x, cid in zip(dataset.features, dataset.class_ids):
                writer.writerow([repr(float(v)) for v in x] + [dataset.class_names[cid]])
        else:
            writer.writerow(feat_names + [f"{LABEL_PREFIX}{j}" for j in range(dataset.n_classes)])
            for x, y in zip(dataset.features, dataset.labels):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])


# splits and batching ------------------------------------------------------

def train_eval_split(dataset: Dataset, eval_fraction: float,
                     seed: int) -> tuple[Dataset, Dataset | None]:
    """Disjoint random split; ``eval_fraction == 0`` returns ``(dataset, None)``."""
    if not 0.0 <= eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in [0, 1)")
    if eval_fraction == 0.0:
        return dataset, None
    n = len(dataset)
    n_eval = max(2, int(round(n * eval_fraction)))
    if n - n_eval < 2:
        raise ValueError("split leaves fewer than 2 rows on one side")
    perm = np.random.default_rng(seed).permutation(n)
    eval_idx = np.sort(perm[:n_eval])
    train_idx = np.sort(perm[n_eval:])
    return dataset.subset(train_idx), dataset.subset(eval_idx)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``ceil(n / batch_size)`` index batches."""
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


# mixup --------------------------------------------------------------------

@dataclass(frozen=True)
class MixedBatch:
    features: np.ndarray
    labels: np.ndarray
    coefficients: np.ndarray


def mixup(batch_a_indices, batch_b_indices, dataset: Dataset, alpha: float,
          rng: np.random.Generator, mode: str = "beta") -> MixedBatch:
    """Convex combinations ``m * a + (1 - m) * b`` of features and labels.

    ``mode="beta"`` draws ``m ~ Beta(alpha, alpha)`` per pair (``alpha = 0``
    disables mixing, m = 1). ``mode="fixed"`` uses ``m = alpha`` for every pair.
    """
    a = np.asarray(batch_a_indices, dtype=np.int64)
    b = np.asarray(batch_b_indices, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("index lists must have equal length")
    n = len(dataset)
    for idx in (a, b):
        if idx.size and (idx.min() < -n or idx.max() >= n):
            raise IndexOutOfRange(f"index out of range for dataset of size {n}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")

    if mode == "beta":
        if alpha == 0:
            return MixedBatch(dataset.features[a].copy(), dataset.labels[a].copy(),
                              np.ones(a.size))
        m = rng.beta(alpha, alpha, size=a.size)
    elif mode == "fixed":
        if alpha > 1:
            raise ValueError("a fixed mixing coefficient must lie in [0, 1]")
        m = np.full(a.size, float(alpha))
    else:
        raise ValueError(f"unknown mixup mode {mode!r}")

    col = m[:, None]
    x = col * dataset.features[a] + (1.0 - col) * dataset.features[b]
    y = col * dataset.labels[a] + (1.0 - col) * dataset.labels[b]
    return MixedBatch(x, y, m)
