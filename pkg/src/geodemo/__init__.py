"""Geodemographic classification toolkit.

Builds district-level classifications from survey tables: suppressed-cell
reconstruction, correlation screening and z-scoring, K-means with restarts,
gap-statistic and clustergram k-selection, cluster evaluation, pen-portrait
profiling with at-risk flagging, and external validation against broadband
performance and internet-usage data.
"""

__version__ = "0.1.0"

from .cluster import ClusterModel, distances_to_center, kmeans_once, kmeans_restarts
from .evaluate import anova_f, cluster_sizes, distance_distribution
from .ingest import (
    DistrictCode,
    RateTable,
    RawTable,
    TableSchema,
    load_district_table,
    load_schema,
    reconstruct_suppressed,
    to_percentages,
)
from .kselect import clustergram, gap_statistic, pca_first_component, select_k
from .preprocess import (
    CorrMatrix,
    FeatureMatrix,
    VariableMeta,
    correlation_matrix,
    prune_multicollinear,
    zscore,
)
from .profiles import ClusterProfile, RiskRule, flag_risk, name_clusters, pen_portrait
from .validate import (
    PerformanceRecord,
    UsageRecord,
    cluster_speed_summary,
    join_performance,
    usage_ranks,
)

__all__ = [
    "ClusterModel",
    "ClusterProfile",
    "CorrMatrix",
    "DistrictCode",
    "FeatureMatrix",
    "PerformanceRecord",
    "RateTable",
    "RawTable",
    "RiskRule",
    "TableSchema",
    "UsageRecord",
    "VariableMeta",
    "anova_f",
    "cluster_sizes",
    "cluster_speed_summary",
    "clustergram",
    "correlation_matrix",
    "distance_distribution",
    "distances_to_center",
    "flag_risk",
    "gap_statistic",
    "join_performance",
    "kmeans_once",
    "kmeans_restarts",
    "load_district_table",
    "load_schema",
    "name_clusters",
    "pca_first_component",
    "pen_portrait",
    "prune_multicollinear",
    "reconstruct_suppressed",
    "select_k",
    "to_percentages",
    "usage_ranks",
    "zscore",
]
