"""Closed-form gradients of the ADD losses w.r.t. raw (pre-normalization) embeddings.

All gradients are built the same way: a symmetric (B, B) matrix ``G`` holds
dL/dd_ij for each unordered pair, the unit-embedding gradient is ``-G @ z``,
and the result is pulled back through ``z = u / ||u||``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry as geo
from .errors import NonFiniteGradient

SIGMA_EPS = 1e-12


def normalize_backward(z: np.ndarray, norms: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Apply the Jacobian ``(I - z z^T) / ||u||`` row-wise."""
    return (dz - z * np.sum(dz * z, axis=1, keepdims=True)) / norms


def _moment_value_grads(values: np.ndarray, w_mu: float, w_sigma: float) -> np.ndarray:
    """d(w_mu * mean + w_sigma * std)/d(values), std smoothed as sqrt(v + eps)."""
    n = values.size
    grad = np.zeros(n)
    if n == 0:
        return grad
    grad += w_mu / n
    if n >= 2 and w_sigma != 0.0:
        centered = values - values.sum() / n
        var = (centered ** 2).sum() / (n - 1)
        grad += w_sigma * centered / ((n - 1) * np.sqrt(var + SIGMA_EPS))
    return grad


def _pullback(z, norms, pair_grad):
    dz = -pair_grad @ z
    grads = normalize_backward(z, norms, dz)
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("non-finite entry in embedding gradient")
    return grads


def _prepare(raw):
    u = np.asarray(raw, dtype=np.float64)
    z = geo.normalize(u)
    return z, np.linalg.norm(u, axis=1, keepdims=True)


def add_loss_hard_grad(raw, labels, w: geo.LossWeights) -> tuple[float, np.ndarray]:
    """Hard-label ADD loss and its gradient w.r.t. each raw embedding row."""
    z, norms = _prepare(raw)
    batch = geo.Batch(z, labels)
    loss, _ = geo.add_loss_hard(batch, w)

    b = batch.size
    ids = np.argmax(batch.labels, axis=1)
    d = geo.pairwise_cosine_distance(z)
    iu, ju = np.triu_indices(b, k=1)
    dist = d[iu, ju]
    same = ids[iu] == ids[ju]

    # chain rule: value -> distance; positives d^2, negatives (1 - d)^2
    dpos = dist[same]
    dneg = dist[~same]
    g_pos = _moment_value_grads(dpos ** 2, w.lambda_mu_p, w.lambda_sigma_p) * 2.0 * dpos
    g_neg = _moment_value_grads((1.0 - dneg) ** 2, w.lambda_mu_n, w.lambda_sigma_n) \
        * -2.0 * (1.0 - dneg)

    pair = np.zeros(iu.size)
    pair[same] = g_pos
    pair[~same] = g_neg
    G = np.zeros((b, b))
    G[iu, ju] = pair
    G[ju, iu] = pair
    return loss, _pullback(z, norms, G)


def add_loss_soft_grad(raw, labels, lambda_mu: float,
                       lambda_sigma_p: float) -> tuple[float, np.ndarray]:
    """Soft ADD loss (mean-gap term plus argmax-positive spread) and its gradient."""
    z, norms = _prepare(raw)
    batch = geo.Batch(z, labels)
    loss = geo.add_loss_soft(batch, lambda_mu, lambda_sigma_p)

    b = batch.size
    d = geo.pairwise_cosine_distance(z)
    gap = geo.label_distance(batch.labels) - d
    np.fill_diagonal(gap, 0.0)
    # each unordered pair appears twice in the ordered sum
    G = lambda_mu * 2.0 * (-2.0 * gap / (b * (b - 1)))

    iu, ju = np.triu_indices(b, k=1)
    same = geo.same_class_mask(batch.labels)[iu, ju]
    dpos = d[iu, ju][same]
    g_pos = _moment_value_grads(dpos ** 2, 0.0, lambda_sigma_p) * 2.0 * dpos
    G[iu[same], ju[same]] += g_pos
    G[ju[same], iu[same]] += g_pos
    return loss, _pullback(z, norms, G)


def finite_difference_grad(loss_fn: Callable[[np.ndarray], float], raw,
                           h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` at ``raw``, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(raw, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        f_plus = loss_fn(x)
        flat[idx] = orig - h
        f_minus = loss_fn(x)
        flat[idx] = orig
        gflat[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   floor: float = 1e-8) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|)`` over coordinates above ``floor``."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    mask = scale > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a - n)[mask] / scale[mask]))


def vector_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)`` over the whole gradient; 0 if both vanish."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(a - n) / scale)


@dataclass
class GradCheckResult:
    trials: int
    max_rel_error: float
    max_elementwise_error: float
    worst: dict

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error <= tolerance


def random_raw(rng: np.random.Generator, b: int, k: int,
               norm_range: tuple[float, float] = (0.5, 2.0)) -> np.ndarray:
    """Random directions with norms drawn uniformly from ``norm_range``.

    Keeping norms away from 0 keeps a fixed step ``h`` small relative to the
    input; the normalization's curvature grows like ``1 / ||u||^3``.
    """
    u = rng.normal(size=(b, k))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * rng.uniform(*norm_range, size=(b, 1))


def random_hard_labels(rng: np.random.Generator, b: int, c: int) -> np.ndarray:
    return geo.one_hot(rng.integers(0, c, size=b), c)


def random_soft_labels(rng: np.random.Generator, b: int, c: int) -> np.ndarray:
    """Mixup-style labels: about half the rows are convex pairs of one-hots."""
    y = random_hard_labels(rng, b, c)
    partner = random_hard_labels(rng, b, c)
    m = rng.uniform(0.0, 1.0, size=(b, 1))
    mixed = rng.uniform(size=b) < 0.5
    y[mixed] = m[mixed] * y[mixed] + (1.0 - m[mixed]) * partner[mixed]
    return y


def gradcheck(trials: int = 100, dims=range(2, 9), batch_sizes=range(2, 17),
              n_weights: int = 5, h: float = 1e-5, seed: int = 0) -> GradCheckResult:
    """Randomized analytic-vs-central-difference comparison for both loss variants.

    Each trial draws a batch, hard and soft labels, and ``n_weights`` random
    nonnegative weight vectors. ``max_rel_error`` is the worst per-gradient
    :func:`vector_relative_error`; the elementwise maximum is reported alongside.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dims = list(dims)
    batch_sizes = list(batch_sizes)
    rng = np.random.default_rng(seed)
    worst_err, worst_elem, worst = 0.0, 0.0, {}
    for t in range(trials):
        k = int(rng.choice(dims))
        b = int(rng.choice(batch_sizes))
        c = int(rng.integers(2, 5))
        raw = random_raw(rng, b, k)
        hard = random_hard_labels(rng, b, c)
        soft = random_soft_labels(rng, b, c)
        for _ in range(n_weights):
            wv = rng.uniform(0.0, 2.0, size=4)
            w = geo.LossWeights(*wv)
            checks = (
                ("hard", add_loss_hard_grad(raw, hard, w)[1],
                 lambda x: geo.add_loss_hard(geo.Batch.from_raw(x, hard), w)[0]),
                ("soft", add_loss_soft_grad(raw, soft, wv[0], wv[1])[1],
                 lambda x: geo.add_loss_soft(geo.Batch.from_raw(x, soft), wv[0], wv[1])),
            )
            for kind, g, fn in checks:
                fd = finite_difference_grad(fn, raw, h)
                worst_elem = max(worst_elem, relative_error(g, fd))
                err = vector_relative_error(g, fd)
                if err > worst_err:
                    worst_err, worst = err, {"trial": t, "loss": kind, "B": b, "k": k}
    return GradCheckResult(trials, worst_err, worst_elem, worst)
