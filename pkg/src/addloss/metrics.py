"""Embedding-geometry report: per-class-pair mean and CV of cosine distances.

Four scalar scores summarize the report (lower is better for all of them):

intra_clustering
    mean of the diagonal of the mean matrix.
intra_equidistance
    mean of the diagonal of the CV matrix (defined cells only).
inter_separation
    mean of ``|mean - 1|`` over off-diagonal cells; 0 means classes are
    mutually orthogonal on average.
inter_equidistance
    CV of all inter-class pairwise distances pooled together.

These scalar definitions belong to this package; the matrices are the
primary output.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClassTooSmall, DimensionMismatch
from .geometry import pairwise_cosine_distance

SCORE_NAMES = ("intra_clustering", "intra_equidistance",
               "inter_separation", "inter_equidistance")


def coefficient_of_variation(values: np.ndarray) -> float:
    """Sample std / mean. 0 when both vanish; NaN when undefined."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return math.nan
    mean = v.sum() / v.size
    std = math.sqrt(((v - mean) ** 2).sum() / (v.size - 1))
    if mean == 0.0:
        return 0.0 if std == 0.0 else math.nan
    return std / mean


@dataclass(frozen=True)
class GeometryReport:
    classes: tuple
    mean_matrix: np.ndarray
    cv_matrix: np.ndarray
    cv_defined: np.ndarray
    counts: np.ndarray
    intra_clustering: float
    intra_equidistance: float
    inter_separation: float
    inter_equidistance: float

    def scores(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in SCORE_NAMES}

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        def matrix(m):
            return [[clean(float(v)) for v in row] for row in m]

        return {
            "classes": [c if isinstance(c, str) else int(c) for c in self.classes],
            "mean_matrix": matrix(self.mean_matrix),
            "cv_matrix": matrix(self.cv_matrix),
            "cv_defined": self.cv_defined.tolist(),
            "pair_counts": self.counts.tolist(),
            "scores": {k: clean(float(v)) for k, v in self.scores().items()},
        }

    def write(self, out_dir, class_names=None) -> dict[str, Path]:
        """Write mean_matrix.csv, cv_matrix.csv and scores.json into ``out_dir``.

        Undefined CV cells are written as empty fields.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = list(class_names) if class_names is not None else [str(c) for c in self.classes]
        paths = {}
        for stem, m in (("mean_matrix", self.mean_matrix), ("cv_matrix", self.cv_matrix)):
            path = out / f"{stem}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["class", *names])
                for name, row in zip(names, m):
                    w.writerow([name, *("" if math.isnan(v) else repr(float(v)) for v in row)])
            paths[stem] = path
        path = out / "scores.json"
        path.write_text(json.dumps(self.to_dict()["scores"], indent=2))
        paths["scores"] = path
        return paths


def geometry_report(embeddings, class_ids, classes=None) -> GeometryReport:
    """Build a :class:`GeometryReport` from unit embeddings and hard class ids.

    ``classes`` optionally restricts the report (and its pooled scores) to a
    subset of class ids, in the given order; by default all present classes
    are used in sorted order.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    ids = np.asarray(class_ids)
    if z.ndim != 2 or ids.shape != (z.shape[0],):
        raise DimensionMismatch(f"embeddings {z.shape} and class ids {ids.shape} disagree")
    present = np.unique(ids)
    classes = tuple(present.tolist()) if classes is None else tuple(classes)
    groups = [np.nonzero(ids == c)[0] for c in classes]
    small = [c for c, g in zip(classes, groups) if g.size < 2]
    if small:
        raise ClassTooSmall(small)

    d = pairwise_cosine_distance(z)
    c = len(classes)
    mean = np.zeros((c, c))
    cv = np.zeros((c, c))
    counts = np.zeros((c, c), dtype=np.int64)
    inter = []
    for a in range(c):
        for b in range(a, c):
            if a == b:
                block = d[np.ix_(groups[a], groups[a])]
                vals = block[np.triu_indices(groups[a].size, k=1)]
            else:
                vals = d[np.ix_(groups[a], groups[b])].ravel()
                inter.append(vals)
            mean[a, b] = mean[b, a] = vals.sum() / vals.size
            cv[a, b] = cv[b, a] = coefficient_of_variation(vals)
            counts[a, b] = counts[b, a] = vals.size
    defined = ~np.isnan(cv)

    diag_cv = np.diag(cv)[np.diag(defined)]
    intra_eq = float(diag_cv.mean()) if diag_cv.size else math.nan
    if c >= 2:
        iu = np.triu_indices(c, k=1)
        inter_sep = float(np.abs(mean[iu] - 1.0).mean())
        inter_eq = coefficient_of_variation(np.concatenate(inter))
    else:
        inter_sep = inter_eq = math.nan
    return GeometryReport(
        classes=classes,
        mean_matrix=mean,
        cv_matrix=cv,
        cv_defined=defined,
        counts=counts,
        intra_clustering=float(np.diag(mean).mean()),
        intra_equidistance=intra_eq,
        inter_separation=inter_sep,
        inter_equidistance=float(inter_eq),
    )
