"""Cluster-attributed GeoJSON export.

Joins cluster assignments and profiles onto a boundary FeatureCollection
by district code and optionally filters to a bounding box (for a
capital-inset style extract). Styling is left to the GIS tool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyAssignments, InvalidGeoJSON, NoCodeProperty
from .profiles import ClusterProfile


@dataclass
class GeoJoinResult:
    collection: dict
    unmatched_boundaries: list[str] = field(default_factory=list)
    unmatched_districts: list[str] = field(default_factory=list)
    filtered_out: int = 0


def _geometry_bbox(geometry: dict) -> tuple[float, float, float, float]:
    lons: list[float] = []
    lats: list[float] = []

    def walk(coords):
        if isinstance(coords, (list, tuple)):
            if coords and isinstance(coords[0], (int, float)):
                lons.append(float(coords[0]))
                lats.append(float(coords[1]))
            else:
                for c in coords:
                    walk(c)

    walk(geometry.get("coordinates", []))
    if not lons:
        raise InvalidGeoJSON("geometry has no coordinates")
    return min(lons), min(lats), max(lons), max(lats)


def _bbox_intersects(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def export_geojson(
    assignments: dict[str, int],
    profiles: list[ClusterProfile],
    boundaries: dict,
    distances: dict[str, float] | None = None,
    code_property: str = "code",
    bbox: tuple[float, float, float, float] | None = None,
) -> GeoJoinResult:
    """Attach cluster_id, cluster_name, at_risk and distances to boundaries.

    Boundary features lacking a classified district are dropped and listed;
    classified districts lacking a boundary are listed too. With `bbox`,
    only features whose geometry envelope intersects the box are kept.
    """
    if not assignments:
        raise EmptyAssignments("no cluster assignments to export")
    if boundaries.get("type") != "FeatureCollection" or not isinstance(
        boundaries.get("features"), list
    ):
        raise InvalidGeoJSON("boundaries must be a GeoJSON FeatureCollection")

    by_id = {p.cluster_id: p for p in profiles}
    distances = distances or {}
    cluster_mean_distance: dict[int, float] = {}
    if distances:
        acc: dict[int, list[float]] = {}
        for code, cluster in assignments.items():
            if code in distances:
                acc.setdefault(cluster, []).append(distances[code])
        cluster_mean_distance = {c: float(np.mean(v)) for c, v in acc.items()}

    out_features = []
    unmatched_boundaries = []
    matched_codes = set()
    filtered = 0
    for feature in boundaries["features"]:
        props = feature.get("properties") or {}
        if code_property not in props:
            raise NoCodeProperty(
                f"boundary feature lacks the {code_property!r} property"
            )
        code = str(props[code_property])
        if code not in assignments:
            unmatched_boundaries.append(code)
            continue
        if bbox is not None and not _bbox_intersects(
            _geometry_bbox(feature.get("geometry") or {}), bbox
        ):
            filtered += 1
            matched_codes.add(code)
            continue
        matched_codes.add(code)
        cluster = assignments[code]
        profile = by_id.get(cluster)
        new_props = dict(props)
        new_props["cluster_id"] = int(cluster)
        new_props["cluster_name"] = profile.name if profile else f"Cluster {cluster}"
        new_props["at_risk"] = bool(profile.at_risk) if profile else False
        if code in distances:
            new_props["distance_to_center"] = float(distances[code])
        if cluster in cluster_mean_distance:
            new_props["cluster_mean_distance"] = cluster_mean_distance[cluster]
        out_features.append({
            "type": "Feature",
            "geometry": feature.get("geometry"),
            "properties": new_props,
        })

    out_features.sort(key=lambda f: str(f["properties"][code_property]))
    unmatched_districts = sorted(set(assignments) - matched_codes)
    return GeoJoinResult(
        collection={"type": "FeatureCollection", "features": out_features},
        unmatched_boundaries=sorted(unmatched_boundaries),
        unmatched_districts=unmatched_districts,
        filtered_out=filtered,
    )


def dumps_geojson(collection: dict) -> str:
    """Deterministic GeoJSON serialization."""
    return json.dumps(collection, sort_keys=True, separators=(",", ":")) + "\n"
