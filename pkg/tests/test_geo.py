import json

import pytest

from geodemo.errors import EmptyAssignments, InvalidGeoJSON, NoCodeProperty
from geodemo.geo import dumps_geojson, export_geojson
from geodemo.profiles import ClusterProfile


def square(lon, lat, size=1.0):
    return {
        "type": "Polygon",
        "coordinates": [[
            [lon, lat], [lon + size, lat], [lon + size, lat + size],
            [lon, lat + size], [lon, lat],
        ]],
    }


def collection(features):
    return {"type": "FeatureCollection", "features": features}


def feature(code, lon=0.0, lat=0.0):
    return {"type": "Feature", "geometry": square(lon, lat), "properties": {"code": code}}


def profile(cid, name, at_risk=False):
    return ClusterProfile(
        cluster_id=cid, name=name, size=1, mean_z={}, directions={}, at_risk=at_risk
    )


def test_attaches_cluster_properties():
    result = export_geojson(
        {"E08000035": 6},
        [profile(6, "Student Central")],
        collection([feature("E08000035")]),
        distances={"E08000035": 1.25},
    )
    props = result.collection["features"][0]["properties"]
    assert props["cluster_id"] == 6
    assert props["cluster_name"] == "Student Central"
    assert props["at_risk"] is False
    assert props["distance_to_center"] == 1.25
    assert props["cluster_mean_distance"] == 1.25


def test_empty_assignments_rejected():
    with pytest.raises(EmptyAssignments):
        export_geojson({}, [], collection([feature("E08000035")]))


def test_invalid_geojson_rejected():
    with pytest.raises(InvalidGeoJSON):
        export_geojson({"E08000035": 0}, [], {"type": "Feature"})


def test_missing_code_property_rejected():
    bad = {"type": "Feature", "geometry": square(0, 0), "properties": {"name": "x"}}
    with pytest.raises(NoCodeProperty):
        export_geojson({"E08000035": 0}, [], collection([bad]))


def test_unmatched_sides_listed():
    result = export_geojson(
        {"E08000035": 0, "E06000001": 0},
        [profile(0, "Cluster 0")],
        collection([feature("E08000035"), feature("W06000002")]),
    )
    assert result.unmatched_boundaries == ["W06000002"]
    assert result.unmatched_districts == ["E06000001"]
    assert len(result.collection["features"]) == 1


def test_bbox_filter_extracts_inset():
    # one feature near the origin, one far away: a capital-inset style crop
    result = export_geojson(
        {"E09000001": 0, "E06000002": 0},
        [profile(0, "Cluster 0")],
        collection([feature("E09000001", 0.0, 51.0), feature("E06000002", -3.0, 57.0)]),
        bbox=(-0.6, 51.0, 0.4, 51.8),
    )
    codes = [f["properties"]["code"] for f in result.collection["features"]]
    assert codes == ["E09000001"]
    assert result.filtered_out == 1
    assert result.unmatched_districts == []  # filtered is not unmatched


def test_features_sorted_and_serialization_deterministic():
    result = export_geojson(
        {"E09000002": 1, "E06000001": 0},
        [profile(0, "A"), profile(1, "B")],
        collection([feature("E09000002"), feature("E06000001")]),
    )
    codes = [f["properties"]["code"] for f in result.collection["features"]]
    assert codes == sorted(codes)
    text = dumps_geojson(result.collection)
    assert text == dumps_geojson(json.loads(text))
