"""K-means partitioning with repeated randomized restarts.

The Lloyd iteration lives in a JIT-compiled kernel (numba): assignment,
empty-cluster repair, center update and convergence checks run in one fused
pass per iteration, so the thousands of fits behind the restart protocol
and the k-selection diagnostics stay cheap. Every restart owns a seed
derived from (master_seed, index), which makes results independent of
execution order and worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, KTooLarge, KZero
from .preprocess import FeatureMatrix

MAX_ITER = 300
SHIFT_TOL = 1e-9
_TOL2 = SHIFT_TOL * SHIFT_TOL
_BLOCK = 250  # fixed restart-block size; independent of worker count


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from an integer path such as (master, restart)."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ClusterModel:
    """A fitted partition: centers in z-space plus per-district assignments."""

    k: int
    centers: np.ndarray      # (k, d)
    assignments: np.ndarray  # (n,) int64, cluster ids in [0, k)
    wcss: float
    seed: int                # master seed of the fitting call
    best_restart: int
    iterations: int
    converged: bool

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


# --- JIT kernels ------------------------------------------------------------

@njit(cache=True, fastmath=True)
def _lloyd_kernel(x, centers, assign, sums, counts, max_iter, trace, want_trace):
    """One Lloyd run in place; centers/assign are mutated.

    Convergence: assignments unchanged, or max center shift below tolerance.
    An empty cluster seizes the point farthest from its own current center,
    never emptying another cluster. Returns (iterations, converged).
    """
    n, d = x.shape
    k = centers.shape[0]
    n_iter = 0
    converged = False
    for it in range(1, max_iter + 1):
        n_iter = it
        changed = False
        counts[:] = 0
        sums[:, :] = 0.0
        for i in range(n):
            best = 0
            bestd = np.inf
            for c in range(k):
                s = 0.0
                for j in range(d):
                    diff = x[i, j] - centers[c, j]
                    s += diff * diff
                if s < bestd:
                    bestd = s
                    best = c
            if assign[i] != best:
                changed = True
                assign[i] = best
            counts[best] += 1
            for j in range(d):
                sums[best, j] += x[i, j]
        for c in range(k):
            while counts[c] == 0:
                farthest = -1.0
                target = -1
                for i in range(n):
                    a = assign[i]
                    if counts[a] > 1:
                        s = 0.0
                        for j in range(d):
                            diff = x[i, j] - centers[a, j]
                            s += diff * diff
                        if s > farthest:
                            farthest = s
                            target = i
                old = assign[target]
                counts[old] -= 1
                assign[target] = c
                counts[c] += 1
                for j in range(d):
                    sums[old, j] -= x[target, j]
                    sums[c, j] += x[target, j]
                changed = True
        shift2 = 0.0
        for c in range(k):
            if counts[c] > 0:
                inv = 1.0 / counts[c]
                s = 0.0
                for j in range(d):
                    v = sums[c, j] * inv
                    diff = v - centers[c, j]
                    s += diff * diff
                    centers[c, j] = v
                if s > shift2:
                    shift2 = s
        if want_trace:
            trace[it - 1] = _wcss_kernel(x, centers, assign)
        if (not changed) or shift2 < _TOL2:
            converged = True
            break
    return n_iter, converged


@njit(cache=True)
def _wcss_kernel(x, centers, assign):
    n, d = x.shape
    total = 0.0
    for i in range(n):
        a = assign[i]
        for j in range(d):
            diff = x[i, j] - centers[a, j]
            total += diff * diff
    return total


@njit(cache=True, fastmath=True)
def _fit_best_kernel(x, init_idx, max_iter):
    """Best-of-restarts fit; ties go to the lowest restart index."""
    restarts, k = init_idx.shape
    n, d = x.shape
    centers = np.empty((k, d))
    assign = np.empty(n, np.int64)
    sums = np.empty((k, d))
    counts = np.empty(k, np.int64)
    trace = np.empty(0)
    best_w = np.inf
    best_r = -1
    best_it = 0
    best_conv = False
    best_centers = np.empty((k, d))
    best_assign = np.empty(n, np.int64)
    for r in range(restarts):
        for c in range(k):
            for j in range(d):
                centers[c, j] = x[init_idx[r, c], j]
        assign[:] = -1
        it, conv = _lloyd_kernel(x, centers, assign, sums, counts, max_iter, trace, False)
        w = _wcss_kernel(x, centers, assign)
        if w < best_w:
            best_w = w
            best_r = r
            best_it = it
            best_conv = conv
            for c in range(k):
                for j in range(d):
                    best_centers[c, j] = centers[c, j]
            best_assign[:] = assign
    return best_w, best_r, best_centers, best_assign, best_it, best_conv


# --- initialization ----------------------------------------------------------

def _forgy_indices(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.choice(n, size=k, replace=False)


def _kmeanspp_indices(rng: np.random.Generator, x: np.ndarray, k: int) -> np.ndarray:
    n = x.shape[0]
    idx = np.empty(k, dtype=np.int64)
    idx[0] = rng.integers(n)
    d2 = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            remaining = np.setdiff1d(np.arange(n), idx[:j])
            idx[j] = rng.choice(remaining)
        else:
            idx[j] = rng.choice(n, p=d2 / total)
        d2 = np.minimum(d2, ((x - x[idx[j]]) ** 2).sum(axis=1))
    return idx


def _init_indices(x: np.ndarray, k: int, seeds: list[int], init: str) -> np.ndarray:
    """(len(seeds), k) start-point indices, one independent draw per seed."""
    n = x.shape[0]
    out = np.empty((len(seeds), k), dtype=np.int64)
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        out[i] = _kmeanspp_indices(rng, x, k) if init == "kmeans++" else _forgy_indices(rng, n, k)
    return out


# --- single-run internals -----------------------------------------------------

def _lloyd_single(x: np.ndarray, init_idx: np.ndarray, collect_trace: bool = False):
    """One run from given start indices; optionally records per-iteration wcss."""
    n, d = x.shape
    k = init_idx.shape[0]
    centers = x[init_idx].astype(np.float64).copy()
    assign = np.full(n, -1, dtype=np.int64)
    sums = np.empty((k, d))
    counts = np.empty(k, dtype=np.int64)
    trace = np.empty(MAX_ITER if collect_trace else 0, dtype=np.float64)
    iters, conv = _lloyd_kernel(
        x, centers, assign, sums, counts, MAX_ITER, trace, collect_trace
    )
    wcss = float(_wcss_kernel(x, centers, assign))
    return centers, assign, wcss, iters, conv, trace[:iters].tolist()


def _canonical_relabel(centers: np.ndarray, assign: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relabel cluster ids by descending size, ties by lowest member index."""
    k = centers.shape[0]
    sizes = np.bincount(assign, minlength=k)
    first = np.full(k, assign.shape[0], dtype=np.int64)
    np.minimum.at(first, assign, np.arange(assign.shape[0]))
    order = sorted(range(k), key=lambda c: (-sizes[c], first[c]))
    remap = np.empty(k, dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    return centers[order].copy(), remap[assign]


def _fit_block(x: np.ndarray, k: int, seeds: list[int], init: str):
    """Best fit over one block of restart seeds."""
    init_idx = _init_indices(x, k, seeds, init)
    w, r, centers, assign, iters, conv = _fit_best_kernel(x, init_idx, MAX_ITER)
    return float(w), int(r), centers, assign, int(iters), bool(conv)


def _restart_block_worker(args):
    x, k, seeds, base, init = args
    w, local, centers, assign, iters, conv = _fit_block(x, k, seeds, init)
    return (w, base + local, centers, assign, iters, conv)


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise KZero(f"k must be at least 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of districts ({n})")


# --- public operations --------------------------------------------------------

def kmeans_once(
    features: FeatureMatrix, k: int, seed: int, init: str = "forgy"
) -> ClusterModel:
    """Single Lloyd run from k distinct data points drawn with `seed`."""
    x = np.ascontiguousarray(features.z, dtype=np.float64)
    _check_k(k, x.shape[0])
    wcss, _, centers, assign, iters, conv = _fit_block(x, k, [seed], init)
    centers, assign = _canonical_relabel(centers, assign)
    return ClusterModel(
        k=k,
        centers=centers,
        assignments=assign,
        wcss=wcss,
        seed=seed,
        best_restart=0,
        iterations=iters,
        converged=conv,
    )


def kmeans_restarts(
    features: FeatureMatrix,
    k: int,
    restarts: int = 1000,
    master_seed: int = 0,
    threads: int = 1,
    init: str = "forgy",
) -> ClusterModel:
    """Best-of-`restarts` K-means fit under a single master seed.

    Restart r runs with seed derive_seed(master_seed, r); the model with the
    lowest wcss wins, ties broken by the lowest restart index. Work is split
    into fixed-size blocks, so results do not depend on `threads`.
    """
    if restarts < 1:
        raise KZero(f"restarts must be at least 1, got {restarts}")
    x = np.ascontiguousarray(features.z, dtype=np.float64)
    _check_k(k, x.shape[0])

    blocks = []
    for base in range(0, restarts, _BLOCK):
        seeds = [derive_seed(master_seed, r) for r in range(base, min(restarts, base + _BLOCK))]
        blocks.append((x, k, seeds, base, init))

    if threads > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_restart_block_worker, blocks))
    else:
        results = [_restart_block_worker(b) for b in blocks]

    wcss, best_restart, centers, assign, iters, conv = min(
        results, key=lambda r: (r[0], r[1])
    )
    centers, assign = _canonical_relabel(centers, assign)
    return ClusterModel(
        k=k,
        centers=centers,
        assignments=assign,
        wcss=wcss,
        seed=master_seed,
        best_restart=best_restart,
        iterations=iters,
        converged=conv,
    )


def best_wcss_many(
    datasets: np.ndarray,
    k: int,
    restarts: int,
    seeds: np.ndarray,
    init: str = "forgy",
) -> np.ndarray:
    """Best-of-restarts wcss for many datasets at once.

    `datasets` is (m, n, d) with one entry of `seeds` per dataset, or (n, d)
    shared by every seed. Equivalent to calling kmeans_restarts per dataset
    with the matching seed and returning only the wcss values.
    """
    shared = datasets.ndim == 2
    m = len(seeds)
    n = datasets.shape[-2]
    _check_k(k, n)
    out = np.empty(m, dtype=np.float64)
    xs = np.ascontiguousarray(datasets, dtype=np.float64)
    for i in range(m):
        x = xs if shared else xs[i]
        run_seeds = [derive_seed(int(seeds[i]), r) for r in range(restarts)]
        init_idx = _init_indices(x, k, run_seeds, init)
        w, _, _, _, _, _ = _fit_best_kernel(x, init_idx, MAX_ITER)
        out[i] = w
    return out


def distances_to_center(features: FeatureMatrix, model: ClusterModel) -> np.ndarray:
    """Euclidean distance of each district to its assigned cluster center."""
    x = np.asarray(features.z, dtype=np.float64)
    if model.centers.shape[1] != x.shape[1]:
        raise DimensionMismatch(
            f"model has {model.centers.shape[1]} dimensions, features have {x.shape[1]}"
        )
    if model.assignments.shape[0] != x.shape[0]:
        raise DimensionMismatch(
            f"model assigns {model.assignments.shape[0]} districts, features hold {x.shape[0]}"
        )
    diff = x - model.centers[model.assignments]
    return np.sqrt((diff * diff).sum(axis=1))
