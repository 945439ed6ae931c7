"""Cluster-count selection: gap statistic and clustergram diagnostics.

Both diagnostics repeat the full procedure many times with fresh K-means
seeds and aggregate across repetitions. All randomness derives from the
master seed through fixed integer paths (tag, repetition, reference index,
k, restart), so results are bit-for-bit reproducible at any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster import _canonical_relabel, _fit_block, best_wcss_many, derive_seed
from .errors import DegenerateCovariance, DegenerateData, KRangeInvalid
from .preprocess import FeatureMatrix

# seed-path tags keep the diagnostics' random streams disjoint
_TAG_GAP_REF = 101
_TAG_GAP_FIT = 102
_TAG_CLUSTERGRAM = 103

_RUNS_PER_CALL = 512  # cap on batched Lloyd runs per engine call


@dataclass
class PC1:
    """First principal component: unit loadings and per-district scores."""

    loadings: np.ndarray  # (d,) unit norm
    scores: np.ndarray    # (n,)


def pca_first_component(features: FeatureMatrix) -> PC1:
    """Top eigenvector of the sample covariance, sign-fixed, plus scores."""
    z = np.asarray(features.z, dtype=np.float64)
    n, d = z.shape
    if n < 2 or d < 1:
        raise DegenerateCovariance(f"need at least 2 districts and 1 variable, got {z.shape}")
    centered = z - z.mean(axis=0)
    cov = (centered.T @ centered) / (n - 1)
    if not np.any(cov):
        raise DegenerateCovariance("sample covariance is identically zero")
    _, vectors = np.linalg.eigh(cov)
    loadings = vectors[:, -1]
    top = int(np.argmax(np.abs(loadings)))
    if loadings[top] < 0:
        loadings = -loadings
    return PC1(loadings=loadings, scores=z @ loadings)


@dataclass
class GapReport:
    """Gap curves averaged over repetitions plus per-repetition selections."""

    k_values: list[int]
    gap_mean: np.ndarray        # (K,)
    s_k_mean: np.ndarray        # (K,)
    log_w_obs_mean: np.ndarray  # (K,)
    log_w_ref_mean: np.ndarray  # (K,)
    selections: np.ndarray      # (reps,) selected k per repetition
    modal_k: int
    reps: int
    b: int

    def selection_frequency(self, k: int) -> float:
        return float(np.count_nonzero(self.selections == k)) / len(self.selections)


@dataclass
class ClustergramRow:
    rep: int
    k: int
    cluster_id: int
    weighted_pc1_mean: float
    size: int
    parent_cluster_id: int | None


@dataclass
class ClustergramTable:
    """Per-repetition cluster PC1 means across the candidate k range."""

    k_values: list[int]
    reps: int
    rows: list[ClustergramRow] = field(default_factory=list)

    def at(self, rep: int, k: int) -> list[ClustergramRow]:
        return [r for r in self.rows if r.rep == rep and r.k == k]


def _expand_k_range(k_range: tuple[int, int]) -> list[int]:
    lo, hi = int(k_range[0]), int(k_range[1])
    if lo < 1 or hi < lo:
        raise KRangeInvalid(f"invalid k range {k_range}")
    return list(range(lo, hi + 1))


def _one_se_selection(gaps: np.ndarray, s: np.ndarray, k_values: list[int]) -> int:
    """Smallest k with gap(k) >= gap(k+1) - s(k+1); the largest k otherwise."""
    for i in range(len(k_values) - 1):
        if gaps[i] >= gaps[i + 1] - s[i + 1]:
            return k_values[i]
    return k_values[-1]


def _gap_obs_worker(args):
    master_seed, x, reps_slice, k_values, restarts, init = args
    out = np.empty((len(reps_slice), len(k_values)))
    for j, k in enumerate(k_values):
        seeds = np.array(
            [derive_seed(master_seed, _TAG_GAP_FIT, rep, 0, k) for rep in reps_slice]
        )
        out[:, j] = best_wcss_many(x, k, restarts, seeds, init)
    return reps_slice, out


def _gap_ref_worker(args):
    master_seed, pairs, lows, highs, n, k_values, restarts, init = args
    d = lows.shape[0]
    data = np.empty((len(pairs), n, d))
    for i, (rep, b) in enumerate(pairs):
        rng = np.random.default_rng(
            np.random.SeedSequence([master_seed, _TAG_GAP_REF, rep, b])
        )
        data[i] = rng.uniform(lows, highs, size=(n, d))
    out = np.empty((len(pairs), len(k_values)))
    for j, k in enumerate(k_values):
        seeds = np.array(
            [derive_seed(master_seed, _TAG_GAP_FIT, rep, b, k) for rep, b in pairs]
        )
        out[:, j] = best_wcss_many(data, k, restarts, seeds, init)
    return pairs, out


def gap_statistic(
    features: FeatureMatrix,
    k_range: tuple[int, int] = (1, 10),
    b: int = 50,
    reps: int = 500,
    master_seed: int = 0,
    restarts: int = 25,
    threads: int = 1,
    init: str = "forgy",
) -> GapReport:
    """Tibshirani-style gap statistic repeated `reps` times.

    Each repetition fits K-means (best of `restarts`) on the observed data
    and on `b` reference sets drawn uniformly over the per-variable
    min-max bounding box, then applies the one-standard-error rule
    gap(k) >= gap(k+1) - s(k+1). The report carries per-k means across
    repetitions and the modal selected k.
    """
    x = np.ascontiguousarray(features.z, dtype=np.float64)
    n = x.shape[0]
    k_values = _expand_k_range(k_range)
    if k_values[-1] > n - 1:
        raise KRangeInvalid(f"k range {k_range} exceeds n-1 = {n - 1}")
    if b < 2:
        raise KRangeInvalid(f"need at least 2 reference sets, got {b}")
    if reps < 1:
        raise KRangeInvalid(f"need at least 1 repetition, got {reps}")

    lows = x.min(axis=0)
    highs = x.max(axis=0)

    datasets_per_call = max(1, _RUNS_PER_CALL // max(1, restarts))
    obs_jobs = [
        (master_seed, x, list(range(lo, min(reps, lo + datasets_per_call))),
         k_values, restarts, init)
        for lo in range(0, reps, datasets_per_call)
    ]
    pairs = [(rep, ref) for rep in range(reps) for ref in range(1, b + 1)]
    ref_jobs = [
        (master_seed, pairs[lo:lo + datasets_per_call], lows, highs, n,
         k_values, restarts, init)
        for lo in range(0, len(pairs), datasets_per_call)
    ]

    log_w_obs = np.empty((reps, len(k_values)))
    log_w_ref = np.empty((reps, b, len(k_values)))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            obs_futures = [pool.submit(_gap_obs_worker, j) for j in obs_jobs]
            ref_futures = [pool.submit(_gap_ref_worker, j) for j in ref_jobs]
            obs_results = [f.result() for f in obs_futures]
            ref_results = [f.result() for f in ref_futures]
    else:
        obs_results = [_gap_obs_worker(j) for j in obs_jobs]
        ref_results = [_gap_ref_worker(j) for j in ref_jobs]

    for reps_slice, wcss in obs_results:
        if (wcss <= 0.0).any():
            raise DegenerateData("observed within-cluster sum of squares is zero")
        log_w_obs[reps_slice] = np.log(wcss)
    for job_pairs, wcss in ref_results:
        if (wcss <= 0.0).any():
            raise DegenerateData("reference within-cluster sum of squares is zero")
        for row, (rep, ref) in enumerate(job_pairs):
            log_w_ref[rep, ref - 1] = np.log(wcss[row])

    ref_mean = log_w_ref.mean(axis=1)                      # (reps, K)
    gaps = ref_mean - log_w_obs
    sd = log_w_ref.std(axis=1, ddof=0)
    s_k = sd * np.sqrt(1.0 + 1.0 / b)

    selections = np.array(
        [_one_se_selection(gaps[r], s_k[r], k_values) for r in range(reps)],
        dtype=np.int64,
    )
    freq = np.bincount(selections, minlength=k_values[-1] + 1)
    modal_k = int(np.argmax(freq))  # argmax takes the smallest k on ties

    return GapReport(
        k_values=k_values,
        gap_mean=gaps.mean(axis=0),
        s_k_mean=s_k.mean(axis=0),
        log_w_obs_mean=log_w_obs.mean(axis=0),
        log_w_ref_mean=ref_mean.mean(axis=0),
        selections=selections,
        modal_k=modal_k,
        reps=reps,
        b=b,
    )


def _cg_chunk_worker(args):
    master_seed, x, reps_slice, k, restarts, init = args
    n = x.shape[0]
    assigns = np.empty((len(reps_slice), n), dtype=np.int64)
    for i, rep in enumerate(reps_slice):
        seeds = [derive_seed(master_seed, _TAG_CLUSTERGRAM, rep, k, r) for r in range(restarts)]
        _, _, centers, assign, _, _ = _fit_block(x, k, seeds, init)
        _, assigns[i] = _canonical_relabel(centers, assign)
    return reps_slice, assigns


def _overlap_parent(child_members: np.ndarray, parent_assign: np.ndarray) -> int:
    """Parent cluster sharing the most members; ties to the lowest id."""
    counts = np.bincount(parent_assign[child_members])
    return int(np.argmax(counts))


def clustergram(
    features: FeatureMatrix,
    k_range: tuple[int, int] = (1, 12),
    reps: int = 100,
    master_seed: int = 0,
    restarts: int = 25,
    threads: int = 1,
    init: str = "forgy",
) -> ClustergramTable:
    """Size-weighted PC1 cluster means across k, one overlay per repetition.

    Rows link each cluster to its parent at k-1 (within the same
    repetition) by maximal member overlap.
    """
    x = np.ascontiguousarray(features.z, dtype=np.float64)
    n = x.shape[0]
    k_values = _expand_k_range(k_range)
    if k_values[-1] > n:
        raise KRangeInvalid(f"k range {k_range} exceeds n = {n}")
    if reps < 1:
        raise KRangeInvalid(f"need at least 1 repetition, got {reps}")

    scores = pca_first_component(features).scores

    datasets_per_call = max(1, _RUNS_PER_CALL // max(1, restarts))
    jobs = []
    for k in k_values:
        for lo in range(0, reps, datasets_per_call):
            jobs.append((
                master_seed, x, list(range(lo, min(reps, lo + datasets_per_call))),
                k, restarts, init,
            ))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cg_chunk_worker, jobs))
    else:
        results = [_cg_chunk_worker(j) for j in jobs]

    assign_by: dict[tuple[int, int], np.ndarray] = {}
    for (job, (reps_slice, assigns)) in zip(jobs, results):
        k = job[3]
        for i, rep in enumerate(reps_slice):
            assign_by[(rep, k)] = assigns[i]

    table = ClustergramTable(k_values=k_values, reps=reps)
    for rep in range(reps):
        for ki, k in enumerate(k_values):
            assign = assign_by[(rep, k)]
            parent_assign = assign_by.get((rep, k - 1)) if ki > 0 and k_values[ki - 1] == k - 1 else None
            for c in range(k):
                members = np.nonzero(assign == c)[0]
                parent = (
                    _overlap_parent(members, parent_assign)
                    if parent_assign is not None
                    else None
                )
                table.rows.append(ClustergramRow(
                    rep=rep,
                    k=k,
                    cluster_id=c,
                    weighted_pc1_mean=float(scores[members].mean()),
                    size=int(members.size),
                    parent_cluster_id=parent,
                ))
    return table


def average_clustergram(table: ClustergramTable) -> list[dict]:
    """Mean PC1 position and size per (k, cluster id) across repetitions."""
    acc: dict[tuple[int, int], list] = {}
    for row in table.rows:
        acc.setdefault((row.k, row.cluster_id), []).append(row)
    out = []
    for (k, c) in sorted(acc):
        rows = acc[(k, c)]
        out.append({
            "k": k,
            "cluster_id": c,
            "weighted_pc1_mean": float(np.mean([r.weighted_pc1_mean for r in rows])),
            "size": float(np.mean([r.size for r in rows])),
            "repetitions": len(rows),
        })
    return out


@dataclass
class KSelection:
    """Chosen cluster count plus the diagnostics that justified it."""

    chosen_k: int
    source: str  # "override" or "gap_modal"
    modal_k: int
    runner_up_k: int | None
    selection_frequencies: dict[int, float]
    clustergram_candidates: list[int]
    note: str


def _clustergram_candidates(table: ClustergramTable, top: int = 2) -> list[int]:
    """Rank k by average minimum separation between cluster PC1 means."""
    separations: dict[int, list[float]] = {}
    for rep in range(table.reps):
        by_k: dict[int, list[float]] = {}
        for row in table.rows:
            if row.rep == rep:
                by_k.setdefault(row.k, []).append(row.weighted_pc1_mean)
        for k, means in by_k.items():
            if k < 2:
                continue
            means = sorted(means)
            gapmin = min(b - a for a, b in zip(means, means[1:]))
            separations.setdefault(k, []).append(gapmin)
    ranked = sorted(
        separations,
        key=lambda k: (-float(np.mean(separations[k])), k),
    )
    return ranked[:top]


def select_k(
    gap: GapReport,
    cg: ClustergramTable,
    override: int | None = None,
) -> KSelection:
    """Combine the diagnostics into a cluster count.

    An explicit override wins (the analyst may weigh both diagnostics
    judgmentally); otherwise the gap statistic's modal selection is used.
    """
    freq = {k: gap.selection_frequency(k) for k in gap.k_values}
    others = sorted(
        (k for k in gap.k_values if k != gap.modal_k),
        key=lambda k: (-freq[k], k),
    )
    runner_up = others[0] if others and freq[others[0]] > 0 else None
    candidates = _clustergram_candidates(cg)

    if override is not None:
        return KSelection(
            chosen_k=int(override),
            source="override",
            modal_k=gap.modal_k,
            runner_up_k=runner_up,
            selection_frequencies=freq,
            clustergram_candidates=candidates,
            note=f"manual override to k={override}; gap modal k was {gap.modal_k}",
        )
    return KSelection(
        chosen_k=gap.modal_k,
        source="gap_modal",
        modal_k=gap.modal_k,
        runner_up_k=runner_up,
        selection_frequencies=freq,
        clustergram_candidates=candidates,
        note=f"gap statistic modal selection over {gap.reps} repetitions",
    )
