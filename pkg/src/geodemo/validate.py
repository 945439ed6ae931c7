"""External validation against broadband performance and internet-usage data.

Joins the classification to district-level upload/download speeds and to
area-level internet-usage shares, producing per-cluster aggregates and
case-study rank tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateCode, MissingArea, MissingLookup, NoJoinedRows

# national context speeds attached to every report (Mbit/s)
GB_AVERAGE_UPLOAD_MBITS = 10.0
GB_AVERAGE_DOWNLOAD_MBITS = 58.0

# rank direction conventions, embedded in output headers
USAGE_RANK_HEADER = "usage_rank_1_is_highest_usage"
NONUSE_RANK_HEADER = "nonuse_rank_1_is_most_nonusers"


@dataclass(frozen=True)
class PerformanceRecord:
    """District broadband performance in Mbit/s."""

    district_code: str
    upload: float
    download: float

    def __post_init__(self):
        if not (np.isfinite(self.upload) and self.upload >= 0):
            raise ValueError(f"upload speed must be finite and non-negative, got {self.upload}")
        if not (np.isfinite(self.download) and self.download >= 0):
            raise ValueError(f"download speed must be finite and non-negative, got {self.download}")


@dataclass(frozen=True)
class UsageRecord:
    """Area-level internet usage shares in percent."""

    area_code: str
    used_last_3_months: float
    never_or_lapsed: float

    def __post_init__(self):
        for v in (self.used_last_3_months, self.never_or_lapsed):
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"usage percentage {v} outside [0, 100]")


@dataclass(frozen=True)
class AreaLookup:
    """District to usage-area mapping with a boundary-compatibility flag."""

    district_code: str
    area_code: str
    same_boundary: bool


@dataclass
class JoinedRow:
    district_code: str
    cluster_id: int
    upload: float
    download: float


@dataclass
class JoinResult:
    rows: list[JoinedRow]
    unmatched_districts: list[str]    # classified but without speed records
    unmatched_performance: list[str]  # speed records without a classification


def join_performance(
    assignments: dict[str, int], perf: list[PerformanceRecord]
) -> JoinResult:
    """Inner join of cluster assignments to performance records on code."""
    seen: set[str] = set()
    for rec in perf:
        if rec.district_code in seen:
            raise DuplicateCode(f"performance code {rec.district_code!r} repeated")
        seen.add(rec.district_code)

    by_code = {rec.district_code: rec for rec in perf}
    rows = []
    unmatched_districts = []
    for code in sorted(assignments):
        rec = by_code.get(code)
        if rec is None:
            unmatched_districts.append(code)
        else:
            rows.append(JoinedRow(
                district_code=code,
                cluster_id=int(assignments[code]),
                upload=rec.upload,
                download=rec.download,
            ))
    unmatched_performance = sorted(set(by_code) - set(assignments))
    return JoinResult(
        rows=rows,
        unmatched_districts=unmatched_districts,
        unmatched_performance=unmatched_performance,
    )


@dataclass
class ClusterSpeeds:
    cluster_id: int
    matched: int
    mean_upload: float
    median_upload: float
    mean_download: float
    median_download: float
    upload_vs_national: float    # mean_upload - national mean upload
    download_vs_national: float


@dataclass
class SpeedSummary:
    clusters: list[ClusterSpeeds]  # ordered by mean upload, ascending
    national_mean_upload: float    # over the joined rows
    national_mean_download: float
    context_upload: float = GB_AVERAGE_UPLOAD_MBITS
    context_download: float = GB_AVERAGE_DOWNLOAD_MBITS


def cluster_speed_summary(joined: JoinResult) -> SpeedSummary:
    """Per-cluster mean and median speeds with deviation from national mean."""
    if not joined.rows:
        raise NoJoinedRows("no joined rows to summarize")
    uploads = np.array([r.upload for r in joined.rows])
    downloads = np.array([r.download for r in joined.rows])
    clusters = np.array([r.cluster_id for r in joined.rows])
    nat_up = float(uploads.mean())
    nat_down = float(downloads.mean())

    summaries = []
    for c in sorted(set(clusters.tolist())):
        m = clusters == c
        summaries.append(ClusterSpeeds(
            cluster_id=int(c),
            matched=int(m.sum()),
            mean_upload=float(uploads[m].mean()),
            median_upload=float(np.median(uploads[m])),
            mean_download=float(downloads[m].mean()),
            median_download=float(np.median(downloads[m])),
            upload_vs_national=float(uploads[m].mean() - nat_up),
            download_vs_national=float(downloads[m].mean() - nat_down),
        ))
    summaries.sort(key=lambda s: (s.mean_upload, s.cluster_id))
    return SpeedSummary(
        clusters=summaries,
        national_mean_upload=nat_up,
        national_mean_download=nat_down,
    )


@dataclass
class CaseRank:
    district_code: str
    area_code: str
    usage_rank: int    # 1 = highest share used in the last 3 months
    nonuse_rank: int   # 1 = highest share never used or lapsed
    total_areas: int
    same_boundary: bool


def usage_ranks(
    usage: list[UsageRecord],
    lookup: list[AreaLookup],
    cases: list[str],
) -> list[CaseRank]:
    """Rank usage areas and report the ranks of the case-study districts.

    Areas are ranked by used_last_3_months descending and by
    never_or_lapsed descending; ties break by area code in lexicographic
    order so the ranks are a stable permutation of 1..len(usage).
    """
    seen: set[str] = set()
    for rec in usage:
        if rec.area_code in seen:
            raise DuplicateCode(f"usage area code {rec.area_code!r} repeated")
        seen.add(rec.area_code)
    lookup_by_district: dict[str, AreaLookup] = {}
    for row in lookup:
        if row.district_code in lookup_by_district:
            raise DuplicateCode(f"lookup district {row.district_code!r} repeated")
        lookup_by_district[row.district_code] = row

    usage_order = sorted(usage, key=lambda r: (-r.used_last_3_months, r.area_code))
    nonuse_order = sorted(usage, key=lambda r: (-r.never_or_lapsed, r.area_code))
    usage_rank = {r.area_code: i + 1 for i, r in enumerate(usage_order)}
    nonuse_rank = {r.area_code: i + 1 for i, r in enumerate(nonuse_order)}

    out = []
    for code in cases:
        row = lookup_by_district.get(code)
        if row is None:
            raise MissingLookup(f"case district {code!r} has no area lookup")
        if row.area_code not in usage_rank:
            raise MissingArea(f"area {row.area_code!r} not present in the usage data")
        out.append(CaseRank(
            district_code=code,
            area_code=row.area_code,
            usage_rank=usage_rank[row.area_code],
            nonuse_rank=nonuse_rank[row.area_code],
            total_areas=len(usage),
            same_boundary=row.same_boundary,
        ))
    return out


@dataclass
class ValidationReport:
    """Everything the validation stage produces, ready for serialization."""

    speed: SpeedSummary
    unmatched_districts: list[str]
    unmatched_performance: list[str]
    case_ranks: list[CaseRank] = field(default_factory=list)
