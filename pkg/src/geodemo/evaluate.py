"""Cluster quality measures.

Per-variable one-way ANOVA F contributions, cluster cardinalities, and
distance-to-center distribution statistics with Tukey outlier detection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import ClusterModel, distances_to_center
from .errors import EmptyCluster, SingleCluster
from .preprocess import FeatureMatrix


@dataclass
class VariableF:
    """ANOVA F decomposition for one variable."""

    name: str
    f: float  # np.inf when within-group variance is zero
    df_between: int
    df_within: int
    between_ss: float
    within_ss: float

    @property
    def infinite(self) -> bool:
        return not np.isfinite(self.f)


@dataclass
class AnovaReport:
    variables: list[VariableF]
    mean_f: float
    spread_f: float  # max F - min F

    def by_name(self, name: str) -> VariableF:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


def anova_f(features: FeatureMatrix, assignments: np.ndarray) -> AnovaReport:
    """One-way ANOVA F per variable over the cluster grouping.

    F_j = [sum_c n_c (mean_cj - mean_j)^2 / (k-1)]
        / [sum_c sum_{i in c} (z_ij - mean_cj)^2 / (n-k)]
    """
    z = np.asarray(features.z, dtype=np.float64)
    assignments = np.asarray(assignments)
    n, p = z.shape
    k = int(assignments.max()) + 1 if assignments.size else 0
    if k < 2:
        raise SingleCluster(f"ANOVA needs at least 2 clusters, got {k}")
    if n <= k:
        raise SingleCluster(f"ANOVA needs more districts ({n}) than clusters ({k})")

    sizes = np.bincount(assignments, minlength=k).astype(np.float64)
    onehot = (assignments[:, None] == np.arange(k)).astype(np.float64)
    group_means = (onehot.T @ z) / sizes[:, None]
    grand = z.mean(axis=0)

    between = (sizes[:, None] * (group_means - grand) ** 2).sum(axis=0)
    resid = z - group_means[assignments]
    within = (resid * resid).sum(axis=0)

    df_b, df_w = k - 1, n - k
    names = features.variable_names
    if len(names) != p:
        names = [f"v{j}" for j in range(p)]
    variables = []
    for j, name in enumerate(names):
        if within[j] == 0.0:
            f = np.inf
        else:
            f = (between[j] / df_b) / (within[j] / df_w)
        variables.append(VariableF(
            name=name,
            f=float(f),
            df_between=df_b,
            df_within=df_w,
            between_ss=float(between[j]),
            within_ss=float(within[j]),
        ))
    fs = np.array([v.f for v in variables])
    finite = fs[np.isfinite(fs)]
    # summaries cover the finite F values; infinite markers are reported per
    # variable but would swamp a mean or spread
    if finite.size:
        mean_f = float(finite.mean())
        spread_f = float(finite.max() - finite.min())
    else:
        mean_f = np.inf
        spread_f = 0.0
    return AnovaReport(variables=variables, mean_f=mean_f, spread_f=spread_f)


def cluster_sizes(assignments: np.ndarray, k: int | None = None) -> dict[int, int]:
    """Districts per cluster id, zero-count clusters reported explicitly."""
    assignments = np.asarray(assignments)
    if assignments.size == 0:
        raise EmptyCluster("no assignments")
    if k is None:
        k = int(assignments.max()) + 1
    counts = np.bincount(assignments, minlength=k)
    return {c: int(counts[c]) for c in range(k)}


@dataclass
class ClusterBox:
    """Five-number summary of member distances plus Tukey outliers."""

    cluster_id: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float
    whisker_low: float   # smallest distance inside the lower fence
    whisker_high: float  # largest distance inside the upper fence
    outliers: list[tuple[str, float]]  # (district code, distance)


@dataclass
class BoxplotStats:
    clusters: list[ClusterBox]

    def by_id(self, cluster_id: int) -> ClusterBox:
        for c in self.clusters:
            if c.cluster_id == cluster_id:
                return c
        raise KeyError(cluster_id)


def distance_distribution(features: FeatureMatrix, model: ClusterModel) -> BoxplotStats:
    """Per-cluster distance-to-center boxplot statistics.

    Quartiles use linear interpolation (R type 7); outliers fall beyond
    1.5 IQR Tukey fences.
    """
    dists = distances_to_center(features, model)
    codes = [d.code for d in features.districts]
    clusters = []
    for c in range(model.k):
        members = np.nonzero(model.assignments == c)[0]
        if members.size == 0:
            raise EmptyCluster(f"cluster {c} has no members")
        d = dists[members]
        q1, med, q3 = np.percentile(d, [25.0, 50.0, 75.0])
        iqr = q3 - q1
        lo_fence = q1 - 1.5 * iqr
        hi_fence = q3 + 1.5 * iqr
        inside = (d >= lo_fence) & (d <= hi_fence)
        outliers = sorted(
            ((codes[members[i]], float(d[i])) for i in np.nonzero(~inside)[0]),
            key=lambda t: (t[1], t[0]),
        )
        clusters.append(ClusterBox(
            cluster_id=c,
            minimum=float(d.min()),
            q1=float(q1),
            median=float(med),
            q3=float(q3),
            maximum=float(d.max()),
            mean=float(d.mean()),
            whisker_low=float(d[inside].min()),
            whisker_high=float(d[inside].max()),
            outliers=outliers,
        ))
    return BoxplotStats(clusters=clusters)
