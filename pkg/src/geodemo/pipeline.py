"""Batch pipeline orchestration.

Runs ingest, preprocessing, k-selection, clustering, evaluation, profiling,
external validation and export as composable stages. Every artifact is
written with round-trip float formatting so stages re-run from persisted
intermediates reproduce the monolithic run byte for byte. The manifest
records the effective config, stage timings, library versions and a SHA-256
digest of every output file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .charts import boxplot_svg, clustergram_svg, corr_heatmap_svg, gap_curve_svg
from .cluster import ClusterModel, distances_to_center, kmeans_restarts
from .config import PipelineConfig, config_snapshot
from .errors import ConfigError, DataError, GeodemoError
from .evaluate import AnovaReport, BoxplotStats, anova_f, cluster_sizes, distance_distribution
from .geo import GeoJoinResult, dumps_geojson, export_geojson
from .ingest import (
    DistrictCode,
    RawTable,
    ingestion_report,
    load_district_table,
    load_schema,
    reconstruct_suppressed,
    to_percentages,
)
from .kselect import (
    ClustergramTable,
    GapReport,
    KSelection,
    clustergram,
    gap_statistic,
    select_k,
)
from .preprocess import (
    CorrMatrix,
    FeatureMatrix,
    VariableMeta,
    correlation_matrix,
    prune_multicollinear,
    zscore,
)
from .profiles import (
    ClusterProfile,
    default_risk_rule,
    flag_risk,
    name_clusters,
    parse_risk_rule,
    pen_portrait,
)
from .validate import (
    AreaLookup,
    PerformanceRecord,
    UsageRecord,
    ValidationReport,
    cluster_speed_summary,
    join_performance,
    usage_ranks,
)

log = logging.getLogger(__name__)

CHARTS_DIR = "charts"


def _r(x: float) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# --- writers ---------------------------------------------------------------

def write_ingest_report(path: Path, table: RawTable) -> None:
    rows = ingestion_report(table)
    _write_csv(
        path,
        ["district_code", "district_name", "measure", "status", "value"],
        [[r["district_code"], r["district_name"], r["measure"], r["status"], r["value"]]
         for r in rows],
    )


def write_corr_matrix(path: Path, corr: CorrMatrix) -> None:
    header = ["variable"] + corr.variables
    rows = [
        [name] + [_r(corr.r[i, j]) for j in range(len(corr.variables))]
        for i, name in enumerate(corr.variables)
    ]
    _write_csv(path, header, rows)


def write_corr_pvalues(path: Path, corr: CorrMatrix) -> None:
    header = ["variable"] + corr.variables
    rows = [
        [name] + [_r(corr.p_values[i, j]) for j in range(len(corr.variables))]
        for i, name in enumerate(corr.variables)
    ]
    _write_csv(path, header, rows)


def write_pruning_log(path: Path, removals) -> None:
    _write_csv(
        path,
        ["removed_variable", "trigger_pair", "abs_r"],
        [[r.removed, f"{r.trigger_pair[0]}|{r.trigger_pair[1]}", _r(r.abs_r)]
         for r in removals],
    )


def write_features(dir_: Path, features: FeatureMatrix) -> None:
    names = features.variable_names
    rows = [
        [d.code, d.name] + [_r(features.z[i, j]) for j in range(len(names))]
        for i, d in enumerate(features.districts)
    ]
    _write_csv(dir_ / "features.csv", ["district_code", "district_name"] + names, rows)
    _write_csv(
        dir_ / "variables.csv",
        ["name", "domain", "dimension", "polarity", "column_mean", "column_sd"],
        [[v.name, v.domain, v.dimension, v.polarity,
          _r(features.column_means[j]), _r(features.column_sds[j])]
         for j, v in enumerate(features.variables)],
    )


def load_features(dir_: Path) -> FeatureMatrix:
    fpath, vpath = dir_ / "features.csv", dir_ / "variables.csv"
    if not fpath.exists() or not vpath.exists():
        raise DataError(f"no persisted features in {dir_}; run the fit or kselect stage first")
    with open(vpath, newline="", encoding="utf-8") as fh:
        vrows = list(csv.DictReader(fh))
    metas = [
        VariableMeta(name=r["name"], domain=r["domain"], dimension=r["dimension"],
                     polarity=r["polarity"])
        for r in vrows
    ]
    means = np.array([float(r["column_mean"]) for r in vrows])
    sds = np.array([float(r["column_sd"]) for r in vrows])
    with open(fpath, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[2:]
        districts = []
        z_rows = []
        for row in reader:
            districts.append(DistrictCode(code=row[0], name=row[1]))
            z_rows.append([float(v) for v in row[2:]])
    if names != [m.name for m in metas]:
        raise DataError("features.csv and variables.csv disagree on variables")
    return FeatureMatrix(
        districts=districts,
        variables=metas,
        z=np.array(z_rows, dtype=np.float64),
        column_means=means,
        column_sds=sds,
    )


def write_model(dir_: Path, model: ClusterModel, features: FeatureMatrix,
                restarts: int) -> None:
    _write_csv(
        dir_ / "assignments.csv",
        ["district_code", "cluster_id"],
        [[d.code, int(model.assignments[i])] for i, d in enumerate(features.districts)],
    )
    names = features.variable_names
    _write_csv(
        dir_ / "centers.csv",
        ["cluster_id", "variable", "center_z"],
        [[c, names[j], _r(model.centers[c, j])]
         for c in range(model.k) for j in range(len(names))],
    )
    payload = {
        "seed": model.seed,
        "k": model.k,
        "restarts": restarts,
        "wcss": model.wcss,
        "best_restart": model.best_restart,
        "iterations": model.iterations,
        "converged": model.converged,
        "n_districts": len(features.districts),
    }
    (dir_ / "model.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(dir_: Path, features: FeatureMatrix) -> ClusterModel:
    apath, cpath, mpath = dir_ / "assignments.csv", dir_ / "centers.csv", dir_ / "model.json"
    for p in (apath, cpath, mpath):
        if not p.exists():
            raise DataError(f"no persisted model in {dir_}; run the fit stage first")
    meta = json.loads(mpath.read_text(encoding="utf-8"))
    with open(apath, newline="", encoding="utf-8") as fh:
        assign_by_code = {r["district_code"]: int(r["cluster_id"]) for r in csv.DictReader(fh)}
    try:
        assignments = np.array([assign_by_code[d.code] for d in features.districts])
    except KeyError as exc:
        raise DataError(f"assignments.csv lacks district {exc}") from None
    k = int(meta["k"])
    names = features.variable_names
    centers = np.zeros((k, len(names)))
    with open(cpath, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            centers[int(r["cluster_id"]), names.index(r["variable"])] = float(r["center_z"])
    return ClusterModel(
        k=k,
        centers=centers,
        assignments=assignments,
        wcss=float(meta["wcss"]),
        seed=int(meta["seed"]),
        best_restart=int(meta["best_restart"]),
        iterations=int(meta["iterations"]),
        converged=bool(meta["converged"]),
    )


def write_gap(path: Path, report: GapReport) -> None:
    _write_csv(
        path,
        ["k", "gap_mean", "se", "selection_frequency", "log_w_obs_mean", "log_w_ref_mean"],
        [[k, _r(report.gap_mean[i]), _r(report.s_k_mean[i]),
          _r(report.selection_frequency(k)),
          _r(report.log_w_obs_mean[i]), _r(report.log_w_ref_mean[i])]
         for i, k in enumerate(report.k_values)],
    )


def write_clustergram(path: Path, table: ClustergramTable) -> None:
    _write_csv(
        path,
        ["rep", "k", "cluster_id", "weighted_pc1_mean", "size", "parent_cluster_id"],
        [[r.rep, r.k, r.cluster_id, _r(r.weighted_pc1_mean), r.size,
          "" if r.parent_cluster_id is None else r.parent_cluster_id]
         for r in table.rows],
    )


def write_k_selection(path: Path, selection: KSelection) -> None:
    payload = {
        "chosen_k": selection.chosen_k,
        "source": selection.source,
        "modal_k": selection.modal_k,
        "runner_up_k": selection.runner_up_k,
        "selection_frequencies": {str(k): v for k, v in selection.selection_frequencies.items()},
        "clustergram_candidates": selection.clustergram_candidates,
        "note": selection.note,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_anova(path: Path, report: AnovaReport) -> None:
    _write_csv(
        path,
        ["variable", "F", "df1", "df2"],
        [[v.name, "inf" if v.infinite else _r(v.f), v.df_between, v.df_within]
         for v in report.variables],
    )


def write_sizes(path: Path, sizes: dict[int, int]) -> None:
    _write_csv(path, ["cluster_id", "count"], [[c, n] for c, n in sorted(sizes.items())])


def write_boxplot(path: Path, stats: BoxplotStats) -> None:
    _write_csv(
        path,
        ["cluster_id", "min", "q1", "median", "q3", "max", "mean_distance",
         "whisker_low", "whisker_high", "outliers"],
        [[c.cluster_id, _r(c.minimum), _r(c.q1), _r(c.median), _r(c.q3),
          _r(c.maximum), _r(c.mean), _r(c.whisker_low), _r(c.whisker_high),
          " ".join(f"{code}={_r(d)}" for code, d in c.outliers)]
         for c in stats.clusters],
    )


def write_profiles(dir_: Path, profiles: list[ClusterProfile]) -> None:
    rows = []
    for p in profiles:
        for var, mz in p.mean_z.items():
            rows.append([p.cluster_id, p.name, p.size, str(p.at_risk).lower(),
                         var, _r(mz), p.directions[var]])
    _write_csv(
        dir_ / "profiles.csv",
        ["cluster_id", "name", "size", "at_risk", "variable", "mean_z", "direction"],
        rows,
    )

    lines = ["# Cluster profiles", ""]
    for p in profiles:
        risk = "at risk" if p.at_risk else "not at risk"
        lines += [f"## {p.name} (cluster {p.cluster_id})", "",
                  f"- districts: {p.size}", f"- flag: {risk}"]
        if p.rationale:
            lines.append(f"- rationale: {'; '.join(p.rationale)}")
        lines += ["", "| variable | mean z | direction |", "| --- | --- | --- |"]
        lines += [
            f"| {var} | {p.mean_z[var]:.3f} | {p.directions[var]} |"
            for var in p.mean_z
        ]
        lines.append("")
    (dir_ / "portraits.md").write_text("\n".join(lines), encoding="utf-8")


def load_profiles(dir_: Path) -> list[ClusterProfile]:
    path = dir_ / "profiles.csv"
    if not path.exists():
        raise DataError(f"no persisted profiles in {dir_}; run the profile stage first")
    acc: dict[int, ClusterProfile] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            cid = int(r["cluster_id"])
            p = acc.get(cid)
            if p is None:
                p = ClusterProfile(
                    cluster_id=cid, name=r["name"], size=int(r["size"]),
                    mean_z={}, directions={}, at_risk=r["at_risk"] == "true",
                )
                acc[cid] = p
            p.mean_z[r["variable"]] = float(r["mean_z"])
            p.directions[r["variable"]] = r["direction"]
    return [acc[c] for c in sorted(acc)]


def write_validation(dir_: Path, report: ValidationReport) -> None:
    from .validate import NONUSE_RANK_HEADER, USAGE_RANK_HEADER

    header = [
        "section", "cluster_id", "matched", "mean_upload", "median_upload",
        "mean_download", "median_download", "upload_vs_national",
        "download_vs_national", "district_code", "area_code",
        USAGE_RANK_HEADER, NONUSE_RANK_HEADER, "total_areas", "same_boundary",
        "code",
    ]
    blank = [""] * len(header)

    def row(**kw):
        r = list(blank)
        for key, value in kw.items():
            r[header.index(key)] = value
        return r

    rows = [row(
        section="national",
        mean_upload=_r(report.speed.national_mean_upload),
        mean_download=_r(report.speed.national_mean_download),
        upload_vs_national=_r(report.speed.context_upload),
        download_vs_national=_r(report.speed.context_download),
    )]
    for c in report.speed.clusters:
        rows.append(row(
            section="speeds", cluster_id=c.cluster_id, matched=c.matched,
            mean_upload=_r(c.mean_upload), median_upload=_r(c.median_upload),
            mean_download=_r(c.mean_download), median_download=_r(c.median_download),
            upload_vs_national=_r(c.upload_vs_national),
            download_vs_national=_r(c.download_vs_national),
        ))
    for cr in report.case_ranks:
        rows.append(row(
            section="ranks", district_code=cr.district_code, area_code=cr.area_code,
            **{USAGE_RANK_HEADER: cr.usage_rank, NONUSE_RANK_HEADER: cr.nonuse_rank},
            total_areas=cr.total_areas, same_boundary=str(cr.same_boundary).lower(),
        ))
    for code in report.unmatched_districts:
        rows.append(row(section="unmatched_district", code=code))
    for code in report.unmatched_performance:
        rows.append(row(section="unmatched_performance", code=code))
    _write_csv(dir_ / "validation_report.csv", header, rows)

    lines = [
        "# External validation",
        "",
        f"Matched districts: {sum(c.matched for c in report.speed.clusters)}; "
        f"unmatched: {len(report.unmatched_districts)}.",
        "",
        f"National mean upload {report.speed.national_mean_upload:.2f} Mbit/s "
        f"(context average {report.speed.context_upload:.0f}); national mean "
        f"download {report.speed.national_mean_download:.2f} Mbit/s "
        f"(context average {report.speed.context_download:.0f}).",
        "",
        "Clusters by mean upload, ascending:",
        "",
    ]
    for c in report.speed.clusters:
        lines.append(
            f"- cluster {c.cluster_id}: upload {c.mean_upload:.2f} "
            f"({c.upload_vs_national:+.2f} vs national), download {c.mean_download:.2f}"
        )
    if report.case_ranks:
        lines += ["", "Case-study ranks (1 = highest usage / most non-users):", ""]
        for cr in report.case_ranks:
            caveat = "" if cr.same_boundary else " (boundary differs; compare with care)"
            lines.append(
                f"- {cr.district_code} via {cr.area_code}: usage rank {cr.usage_rank}, "
                f"non-use rank {cr.nonuse_rank} of {cr.total_areas}{caveat}"
            )
    lines.append("")
    (dir_ / "validation_report.md").write_text("\n".join(lines), encoding="utf-8")


# --- external input loaders --------------------------------------------------

def load_performance_csv(path: str | Path) -> list[PerformanceRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"code", "upload_mbits", "download_mbits"}
        if not need.issubset(reader.fieldnames or []):
            raise DataError(f"{path} must have columns: {', '.join(sorted(need))}")
        for r in reader:
            out.append(PerformanceRecord(
                district_code=r["code"],
                upload=float(r["upload_mbits"]),
                download=float(r["download_mbits"]),
            ))
    return out


def load_usage_csv(path: str | Path) -> list[UsageRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"area_code", "used_pct", "lapsed_pct"}
        if not need.issubset(reader.fieldnames or []):
            raise DataError(f"{path} must have columns: {', '.join(sorted(need))}")
        for r in reader:
            out.append(UsageRecord(
                area_code=r["area_code"],
                used_last_3_months=float(r["used_pct"]),
                never_or_lapsed=float(r["lapsed_pct"]),
            ))
    return out


def load_lookup_csv(path: str | Path) -> list[AreaLookup]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"district_code", "area_code", "same_boundary"}
        if not need.issubset(reader.fieldnames or []):
            raise DataError(f"{path} must have columns: {', '.join(sorted(need))}")
        for r in reader:
            out.append(AreaLookup(
                district_code=r["district_code"],
                area_code=r["area_code"],
                same_boundary=r["same_boundary"].strip().lower() in ("true", "1", "yes"),
            ))
    return out


# --- orchestration -----------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    versions: dict
    stages: list[dict] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "versions": self.versions,
                "stages": self.stages,
                "outputs": self.outputs,
                "notes": self.notes,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


class _StageClock:
    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def run(self, name: str, fn):
        t0 = time.perf_counter()
        log.info("stage %s started", name)
        try:
            result = fn()
        except GeodemoError as exc:
            raise type(exc)(f"stage {name}: {exc}") from exc
        self.manifest.stages.append(
            {"name": name, "seconds": round(time.perf_counter() - t0, 3)}
        )
        return result


def _new_manifest(cfg: PipelineConfig) -> RunManifest:
    return RunManifest(
        config=config_snapshot(cfg),
        versions={
            "geodemo": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    )


def _finalize_manifest(out: Path, manifest: RunManifest) -> Path:
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.outputs[path.relative_to(out).as_posix()] = _sha256(path)
    target = out / "manifest.json"
    target.write_text(manifest.to_json(), encoding="utf-8")
    return target


def _require_file(path: str | None, label: str) -> Path:
    if not path:
        raise ConfigError(f"{label} path is required")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{label} file not found: {p}")
    return p


def _stage_ingest(cfg: PipelineConfig, out: Path) -> RawTable:
    _require_file(cfg.table, "table")
    _require_file(cfg.schema, "schema")
    schema = load_schema(cfg.schema)
    if cfg.suppression_threshold is not None:
        schema.suppression_threshold = cfg.suppression_threshold
    table = load_district_table(cfg.table, schema)
    table = reconstruct_suppressed(table)
    write_ingest_report(out / "ingest_report.csv", table)
    return table


def _stage_preprocess(cfg: PipelineConfig, out: Path, table: RawTable) -> FeatureMatrix:
    rates = to_percentages(table)
    corr = correlation_matrix(rates)
    write_corr_matrix(out / "corr_matrix.csv", corr)
    write_corr_pvalues(out / "corr_pvalues.csv", corr)
    (out / CHARTS_DIR).mkdir(exist_ok=True)
    (out / CHARTS_DIR / "corr_heatmap.svg").write_text(corr_heatmap_svg(corr), encoding="utf-8")

    kept, removals = prune_multicollinear(
        corr, cfg.correlation_threshold, priority=cfg.keep_variables or None
    )
    write_pruning_log(out / "pruning_log.csv", removals)

    metas = [
        VariableMeta(name=m.name, domain=m.domain, dimension=m.dimension, polarity=m.polarity)
        for m in table.schema.measures
        if m.name in kept
    ]
    features = zscore(rates.select(kept), metas)
    write_features(out, features)
    return features


def _stage_kselect(cfg: PipelineConfig, out: Path, features: FeatureMatrix) -> KSelection:
    seed = cfg.require_seed()
    gap = gap_statistic(
        features,
        k_range=(cfg.gap_k_min, cfg.gap_k_max),
        b=cfg.gap_b,
        reps=cfg.gap_reps,
        master_seed=seed,
        restarts=cfg.kselect_restarts,
        threads=cfg.threads,
    )
    write_gap(out / "gap.csv", gap)
    cg = clustergram(
        features,
        k_range=(cfg.clustergram_k_min, cfg.clustergram_k_max),
        reps=cfg.clustergram_reps,
        master_seed=seed,
        restarts=cfg.kselect_restarts,
        threads=cfg.threads,
    )
    write_clustergram(out / "clustergram.csv", cg)
    (out / CHARTS_DIR).mkdir(exist_ok=True)
    (out / CHARTS_DIR / "gap_curve.svg").write_text(gap_curve_svg(gap), encoding="utf-8")
    (out / CHARTS_DIR / "clustergram.svg").write_text(clustergram_svg(cg), encoding="utf-8")

    selection = select_k(gap, cg, override=cfg.k)
    write_k_selection(out / "k_selection.json", selection)
    return selection


def _stage_cluster(cfg: PipelineConfig, out: Path, features: FeatureMatrix,
                   k: int) -> ClusterModel:
    seed = cfg.require_seed()
    model = kmeans_restarts(
        features, k, restarts=cfg.restarts, master_seed=seed, threads=cfg.threads
    )
    write_model(out, model, features, cfg.restarts)
    return model


def _stage_evaluate(cfg: PipelineConfig, out: Path, features: FeatureMatrix,
                    model: ClusterModel) -> BoxplotStats:
    report = anova_f(features, model.assignments)
    write_anova(out / "anova.csv", report)
    write_sizes(out / "sizes.csv", cluster_sizes(model.assignments, model.k))
    stats = distance_distribution(features, model)
    write_boxplot(out / "boxplot.csv", stats)
    (out / CHARTS_DIR).mkdir(exist_ok=True)
    (out / CHARTS_DIR / "boxplot.svg").write_text(boxplot_svg(stats), encoding="utf-8")
    return stats


def _stage_profile(cfg: PipelineConfig, out: Path, features: FeatureMatrix,
                   model: ClusterModel) -> list[ClusterProfile]:
    profiles = pen_portrait(features, model, epsilon=cfg.profile_epsilon)
    if cfg.risk_rule:
        rule = parse_risk_rule(cfg.risk_rule)
    else:
        rule = default_risk_rule(features.variables)
    profiles = flag_risk(profiles, rule)
    if cfg.cluster_names:
        profiles = name_clusters(profiles, cfg.cluster_names)
    write_profiles(out, profiles)
    return profiles


def _stage_validate(cfg: PipelineConfig, out: Path, features: FeatureMatrix,
                    model: ClusterModel) -> ValidationReport:
    assignments = {
        d.code: int(model.assignments[i]) for i, d in enumerate(features.districts)
    }
    perf = load_performance_csv(_require_file(cfg.performance, "performance"))
    joined = join_performance(assignments, perf)
    summary = cluster_speed_summary(joined)
    ranks = []
    if cfg.usage and cfg.lookup:
        usage = load_usage_csv(_require_file(cfg.usage, "usage"))
        lookup = load_lookup_csv(_require_file(cfg.lookup, "lookup"))
        cases = cfg.cases or sorted(
            row.district_code for row in lookup if row.district_code in assignments
        )
        ranks = usage_ranks(usage, lookup, cases)
    report = ValidationReport(
        speed=summary,
        unmatched_districts=joined.unmatched_districts,
        unmatched_performance=joined.unmatched_performance,
        case_ranks=ranks,
    )
    write_validation(out, report)
    return report


def _stage_export(cfg: PipelineConfig, out: Path, features: FeatureMatrix,
                  model: ClusterModel, profiles: list[ClusterProfile]) -> GeoJoinResult:
    bpath = _require_file(cfg.boundaries, "boundaries")
    try:
        boundaries = json.loads(bpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"boundaries {bpath} is not valid JSON: {exc}") from None
    assignments = {
        d.code: int(model.assignments[i]) for i, d in enumerate(features.districts)
    }
    dists = distances_to_center(features, model)
    distances = {d.code: float(dists[i]) for i, d in enumerate(features.districts)}
    result = export_geojson(
        assignments,
        profiles,
        boundaries,
        distances=distances,
        code_property=cfg.boundary_code_property,
        bbox=cfg.bbox,
    )
    (out / "classification.geojson").write_text(
        dumps_geojson(result.collection), encoding="utf-8"
    )
    return result


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    """Run every configured stage and write the manifest.

    Outputs of completed stages stay on disk if a later stage fails.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest(cfg)
    clock = _StageClock(manifest)

    try:
        table = clock.run("ingest", lambda: _stage_ingest(cfg, out))
        features = clock.run("preprocess", lambda: _stage_preprocess(cfg, out, table))

        run_ksel = cfg.run_kselect == "always" or (
            cfg.run_kselect == "auto" and cfg.k is None
        )
        if run_ksel:
            selection = clock.run("kselect", lambda: _stage_kselect(cfg, out, features))
            chosen_k = selection.chosen_k
            manifest.notes["k_selection"] = {
                "chosen_k": selection.chosen_k,
                "source": selection.source,
                "modal_k": selection.modal_k,
            }
        elif cfg.k is not None:
            chosen_k = cfg.k
        else:
            raise ConfigError("run_kselect=never requires an explicit k")

        model = clock.run("cluster", lambda: _stage_cluster(cfg, out, features, chosen_k))
        clock.run("evaluate", lambda: _stage_evaluate(cfg, out, features, model))
        profiles = clock.run("profile", lambda: _stage_profile(cfg, out, features, model))

        if cfg.performance:
            report = clock.run("validate", lambda: _stage_validate(cfg, out, features, model))
            manifest.notes["unmatched_districts"] = report.unmatched_districts
            manifest.notes["unmatched_performance"] = report.unmatched_performance

        if cfg.boundaries:
            geo = clock.run(
                "export-geojson", lambda: _stage_export(cfg, out, features, model, profiles)
            )
            manifest.notes["unmatched_boundaries"] = geo.unmatched_boundaries
            manifest.notes["districts_without_boundary"] = geo.unmatched_districts

        if table.clamped_cells:
            manifest.notes["clamped_cells"] = len(table.clamped_cells)
    finally:
        _finalize_manifest(out, manifest)
    return manifest
