"""Independent oracles used to check the library implementations.

Each oracle deliberately uses a different computational route from the
code under test: plain loops, exhaustive enumeration, or closed-form
arithmetic.
"""

from __future__ import annotations

import math

import numpy as np


def pearson_bruteforce(x: np.ndarray, y: np.ndarray) -> float:
    """Two-pass Pearson r with explicit loops."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sxx = syy = 0.0
    for a, b in zip(x, y):
        sxy += (a - mx) * (b - my)
        sxx += (a - mx) ** 2
        syy += (b - my) ** 2
    return sxy / math.sqrt(sxx * syy)


def enumerate_kmeans_optimum(x: np.ndarray, k: int) -> float:
    """Minimum wcss over every assignment of n points to at most k clusters.

    Vectorized enumeration of all k^n assignment vectors; allowing empty
    clusters only adds partitions with fewer effective clusters, which can
    never beat the exact-k optimum on points in general position.
    """
    n, d = x.shape
    codes = (np.arange(k ** n)[:, None] // (k ** np.arange(n))) % k
    onehot = (codes[:, :, None] == np.arange(k)).astype(np.float64)
    counts = onehot.sum(axis=1)
    centers = np.einsum("ank,nd->akd", onehot, x) / np.where(counts == 0, 1, counts)[:, :, None]
    wcss = (x * x).sum() - (counts * (centers * centers).sum(axis=2)).sum(axis=1)
    return float(wcss.min())


def anova_f_bruteforce(z: np.ndarray, labels: np.ndarray, column: int) -> float:
    """One-way ANOVA F via explicit group loops."""
    values = z[:, column]
    groups = sorted(set(labels.tolist()))
    n = len(values)
    k = len(groups)
    grand = sum(values) / n
    between = 0.0
    within = 0.0
    for g in groups:
        members = [v for v, lab in zip(values, labels) if lab == g]
        gm = sum(members) / len(members)
        between += len(members) * (gm - grand) ** 2
        within += sum((v - gm) ** 2 for v in members)
    return (between / (k - 1)) / (within / (n - k))


def adjusted_rand_index(a: np.ndarray, b: np.ndarray) -> float:
    """ARI from the contingency table."""
    a = np.asarray(a)
    b = np.asarray(b)
    table = np.zeros((int(a.max()) + 1, int(b.max()) + 1))
    for x, y in zip(a, b):
        table[x, y] += 1

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(len(a))
    return float((sum_ij - expected) / ((sum_a + sum_b) / 2.0 - expected))


def reference_gap_selection(
    data: np.ndarray,
    k_values: list[int],
    b: int,
    rng: np.random.Generator,
) -> int:
    """Independent implementation of the gap procedure with its own Lloyd.

    Uses a deliberately different K-means (permutation init, plain loops)
    so agreement with the library is a genuine cross-check.
    """

    def lloyd(x: np.ndarray, k: int) -> float:
        n = x.shape[0]
        centers = x[rng.permutation(n)[:k]].copy()
        assign = np.zeros(n, dtype=int)
        for _ in range(200):
            d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = d2.argmin(axis=1)
            for c in range(k):
                if not (new_assign == c).any():
                    new_assign[d2[np.arange(n), new_assign].argmax()] = c
            if (new_assign == assign).all():
                break
            assign = new_assign
            for c in range(k):
                centers[c] = x[assign == c].mean(axis=0)
        return float(((x - centers[assign]) ** 2).sum())

    lo = data.min(axis=0)
    hi = data.max(axis=0)
    log_w = np.log([lloyd(data, k) for k in k_values])
    log_ref = np.empty((b, len(k_values)))
    for i in range(b):
        ref = rng.uniform(lo, hi, size=data.shape)
        log_ref[i] = np.log([lloyd(ref, k) for k in k_values])
    gaps = log_ref.mean(axis=0) - log_w
    s = log_ref.std(axis=0, ddof=0) * np.sqrt(1 + 1 / b)
    for i in range(len(k_values) - 1):
        if gaps[i] >= gaps[i + 1] - s[i + 1]:
            return k_values[i]
    return k_values[-1]


def type7_quartiles(values: list[float]) -> tuple[float, float, float]:
    """Linear-interpolation quartiles computed by hand."""

    def quantile(sorted_vals, q):
        pos = (len(sorted_vals) - 1) * q
        lo = math.floor(pos)
        hi = math.ceil(pos)
        frac = pos - lo
        return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac

    s = sorted(values)
    return quantile(s, 0.25), quantile(s, 0.5), quantile(s, 0.75)
