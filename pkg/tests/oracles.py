"""Independent reference implementations used only by the tests.

Two flavours:

* ``naive_*`` -- plain Python double loops over pairs with ``math.fsum``;
  these never touch the vectorized code paths in ``addloss``.
* ``ext_*`` -- the same losses evaluated in extended precision
  (``np.longdouble``) for use inside finite differences, so the difference
  quotient is limited by truncation rather than float64 rounding.
"""

import math

import numpy as np

LD = np.longdouble


def _unit(v):
    n = math.sqrt(math.fsum(x * x for x in v))
    return [x / n for x in v]


def _dot(a, b):
    return math.fsum(x * y for x, y in zip(a, b))


def _dc(a, b):
    return min(max(1.0 - _dot(a, b), 0.0), 2.0)


def _argmax(v):
    best = 0
    for i, x in enumerate(v):
        if x > v[best]:
            best = i
    return best


def naive_moments(values):
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def naive_partition(z, labels):
    z = [list(map(float, r)) for r in z]
    ids = [_argmax(list(r)) for r in labels]
    dp, dn = [], []
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            d = _dc(z[i], z[j])
            if ids[i] == ids[j]:
                dp.append(d * d)
            else:
                dn.append((1.0 - d) ** 2)
    return dp, dn


def naive_add_hard(z, labels, w):
    dp, dn = naive_partition(z, labels)
    mp, sp = naive_moments(dp)
    mn, sn = naive_moments(dn)
    return math.fsum([w[0] * mp, w[1] * sp, w[2] * mn, w[3] * sn])


def naive_l_mu(z, labels):
    z = [list(map(float, r)) for r in z]
    y = [list(map(float, r)) for r in labels]
    b = len(z)
    terms = []
    for i in range(b):
        for j in range(b):
            if i != j:
                terms.append((1.0 - _dot(y[i], y[j]) - _dc(z[i], z[j])) ** 2)
    return math.fsum(terms) / (b * (b - 1))


def naive_add_soft(z, labels, lam_mu, lam_sigma):
    z = [list(map(float, r)) for r in z]
    ids = [_argmax(list(r)) for r in labels]
    pos = []
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            if ids[i] == ids[j]:
                pos.append(_dc(z[i], z[j]) ** 2)
    _, sp = naive_moments(pos)
    return lam_mu * naive_l_mu(z, labels) + lam_sigma * sp


def naive_geometry(z, class_ids):
    """Grouped per-cell lists of d_c, then means/CVs; returns (classes, mean, cv, pooled_inter)."""
    z = [list(map(float, r)) for r in z]
    classes = sorted(set(int(c) for c in class_ids))
    cells = {(a, b): [] for a in classes for b in classes}
    pooled = []
    for i in range(len(z)):
        for j in range(len(z)):
            ci, cj = int(class_ids[i]), int(class_ids[j])
            if i == j or (ci == cj and j < i):
                continue
            d = _dc(z[i], z[j])
            cells[(ci, cj)].append(d)
            if ci < cj:
                pooled.append(d)
    c = len(classes)
    mean = [[0.0] * c for _ in range(c)]
    cv = [[0.0] * c for _ in range(c)]
    for ai, a in enumerate(classes):
        for bi, b in enumerate(classes):
            m, s = naive_moments(cells[(a, b)])
            mean[ai][bi] = m
            if m == 0.0:
                cv[ai][bi] = 0.0 if s == 0.0 else float("nan")
            else:
                cv[ai][bi] = s / m
    return classes, mean, cv, pooled


# extended precision, for finite differences ---------------------------------

def _ext_unit(raw):
    u = np.asarray(raw, dtype=LD)
    return u / np.sqrt((u * u).sum(axis=1, keepdims=True))


def _ext_moments(v):
    n = v.size
    if n == 0:
        return LD(0), LD(0)
    m = v.sum() / n
    if n == 1:
        return m, LD(0)
    return m, np.sqrt(((v - m) ** 2).sum() / (n - 1))


def ext_add_hard(raw, labels, w):
    z = _ext_unit(raw)
    d = np.clip(LD(1) - z @ z.T, LD(0), LD(2))
    ids = np.argmax(labels, axis=1)
    iu, ju = np.triu_indices(len(z), k=1)
    same = ids[iu] == ids[ju]
    dist = d[iu, ju]
    mp, sp = _ext_moments(dist[same] ** 2)
    mn, sn = _ext_moments((LD(1) - dist[~same]) ** 2)
    w = [LD(x) for x in w]
    return w[0] * mp + w[1] * sp + w[2] * mn + w[3] * sn


def ext_add_soft(raw, labels, lam_mu, lam_sigma):
    z = _ext_unit(raw)
    y = np.asarray(labels, dtype=LD)
    b = len(z)
    d = np.clip(LD(1) - z @ z.T, LD(0), LD(2))
    gap = (LD(1) - y @ y.T) - d
    np.fill_diagonal(gap, LD(0))
    l_mu = (gap ** 2).sum() / (b * (b - 1))
    ids = np.argmax(labels, axis=1)
    iu, ju = np.triu_indices(b, k=1)
    same = ids[iu] == ids[ju]
    _, sp = _ext_moments(d[iu, ju][same] ** 2)
    return LD(lam_mu) * l_mu + LD(lam_sigma) * sp


def ext_central_diff(fn, raw, h=1e-5):
    """Central differences of ``fn`` with the perturbed point held in long double."""
    x = np.asarray(raw, dtype=LD).copy()
    h = LD(h)
    grad = np.zeros(x.shape)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        grad[idx] = float((fp - fm) / (2 * h))
    return grad
