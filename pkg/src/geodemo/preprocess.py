"""Variable suitability and normalization.

Pairwise Pearson correlation with significance, greedy multicollinearity
pruning, and z-score standardization into the clustering feature space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import AllVariablesRemoved, ConstantColumn, ThresholdOutOfRange
from .ingest import DistrictCode, RateTable

DOMAINS = ("Demographic", "Social")
POLARITIES = ("AsIs", "Inverted")


@dataclass(frozen=True)
class VariableMeta:
    """Classification variable with its domain placement and polarity."""

    name: str
    domain: str = "Social"
    dimension: str = ""
    polarity: str = "AsIs"

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")


@dataclass
class CorrMatrix:
    """Symmetric Pearson correlation matrix with two-sided p-values."""

    variables: list[str]
    r: np.ndarray         # (p, p)
    p_values: np.ndarray  # (p, p)

    def max_off_diagonal(self) -> float:
        if len(self.variables) < 2:
            return 0.0
        mask = ~np.eye(len(self.variables), dtype=bool)
        return float(np.abs(self.r[mask]).max())

    def pair(self, a: str, b: str) -> float:
        return float(self.r[self.variables.index(a), self.variables.index(b)])


@dataclass
class FeatureMatrix:
    """Districts by variables matrix of z-scores, with scaling provenance."""

    districts: list[DistrictCode]
    variables: list[VariableMeta]
    z: np.ndarray             # (n, p)
    column_means: np.ndarray  # (p,) post-polarity means
    column_sds: np.ndarray    # (p,) post-polarity sample SDs

    @property
    def n_districts(self) -> int:
        return len(self.districts)

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]


def correlation_matrix(rates: RateTable) -> CorrMatrix:
    """Pearson r for every variable pair, with two-sided t-test p-values."""
    x = np.asarray(rates.values, dtype=np.float64)
    n, p = x.shape
    if n < 3:
        raise ValueError(f"need at least 3 districts, got {n}")
    sds = x.std(axis=0, ddof=1)
    for j, name in enumerate(rates.variables):
        if sds[j] == 0.0:
            raise ConstantColumn(name)

    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    r = (centered.T @ centered) / np.outer(norms, norms)
    r = np.clip(r, -1.0, 1.0)
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)

    # two-sided t test on n-2 degrees of freedom
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p_values = 2.0 * stats.t.sf(np.abs(t), df=n - 2)
    p_values[np.isnan(p_values)] = 0.0  # |r| == 1 exactly
    np.fill_diagonal(p_values, 0.0)

    return CorrMatrix(variables=list(rates.variables), r=r, p_values=p_values)


@dataclass
class Removal:
    """One pruning step: the removed variable and its triggering pair."""

    removed: str
    trigger_pair: tuple[str, str]
    abs_r: float


def prune_multicollinear(
    corr: CorrMatrix,
    threshold: float = 0.7,
    priority: list[str] | None = None,
) -> tuple[list[str], list[Removal]]:
    """Iteratively drop variables until no off-diagonal |r| exceeds `threshold`.

    At each step the variable with the highest mean absolute correlation to
    the other remaining variables is removed from among those in violating
    pairs; ties remove the later variable in declared order. Variables in
    `priority` are never removed.
    """
    if not (0.0 < threshold <= 1.0):
        raise ThresholdOutOfRange(f"threshold must be in (0, 1], got {threshold}")
    keep_list = set(priority or [])
    names = list(corr.variables)
    kept = list(range(len(names)))
    removals: list[Removal] = []

    while len(kept) > 1:
        sub = np.abs(corr.r[np.ix_(kept, kept)])
        np.fill_diagonal(sub, 0.0)
        violating_pairs = [
            (i, j)
            for i in range(len(kept))
            for j in range(i + 1, len(kept))
            if sub[i, j] > threshold
            and not (names[kept[i]] in keep_list and names[kept[j]] in keep_list)
        ]
        if not violating_pairs:
            break
        candidates = sorted({
            idx
            for pair in violating_pairs
            for idx in pair
            if names[kept[idx]] not in keep_list
        })
        mean_abs = sub.sum(axis=1) / (len(kept) - 1)
        # ties resolve to the later variable in declared order; scanning in
        # order with >= keeps the last of equals
        best = None
        for idx in candidates:
            if best is None or mean_abs[idx] >= mean_abs[best]:
                best = idx
        trigger = max(
            (pair for pair in violating_pairs if best in pair),
            key=lambda pr: sub[pr[0], pr[1]],
        )
        removals.append(Removal(
            removed=names[kept[best]],
            trigger_pair=(names[kept[trigger[0]]], names[kept[trigger[1]]]),
            abs_r=float(sub[trigger[0], trigger[1]]),
        ))
        del kept[best]

    if not kept:
        raise AllVariablesRemoved("pruning removed every variable")
    return [names[i] for i in kept], removals


def zscore(rates: RateTable, meta: list[VariableMeta]) -> FeatureMatrix:
    """Standardize each column to mean 0, sample SD 1, applying polarity first."""
    by_name = {m.name: m for m in meta}
    missing = [v for v in rates.variables if v not in by_name]
    if missing:
        raise KeyError(f"no metadata for variables: {', '.join(missing)}")
    metas = [by_name[v] for v in rates.variables]

    x = np.array(rates.values, dtype=np.float64, copy=True)
    for j, m in enumerate(metas):
        if m.polarity == "Inverted":
            x[:, j] = -x[:, j]

    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    for j, m in enumerate(metas):
        if sds[j] == 0.0:
            raise ConstantColumn(m.name)
    z = (x - means) / sds

    return FeatureMatrix(
        districts=list(rates.districts),
        variables=metas,
        z=z,
        column_means=means,
        column_sds=sds,
    )
