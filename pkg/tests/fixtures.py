"""Synthetic fixtures shared across the test suite.

The planted-district fixture draws 370 districts from 7 archetype mean
vectors over 11 variables. The archetype matrix was tuned so that, after
the pipeline's own standardization:

  * every archetype pair differs by at least 2.0 in at least 3 coordinates,
  * the sampled correlation matrix stays below the 0.7 pruning threshold,
  * the default at-risk rule flags exactly archetypes 2, 3 and 6
    (9 + 4 + 6 = 19 districts) with > 4 sigma margins against noise.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

VARIABLES = [
    "age_16_24", "age_25_34", "age_35_44",
    "eth_mixed", "eth_indian", "eth_pakistani_bangladeshi", "eth_black",
    "eth_other_minority", "nvq3_plus", "unemployed", "inactive",
]
DIMENSIONS = {
    "age_16_24": ("Demographic", "Age"),
    "age_25_34": ("Demographic", "Age"),
    "age_35_44": ("Demographic", "Age"),
    "eth_mixed": ("Demographic", "Ethnicity"),
    "eth_indian": ("Demographic", "Ethnicity"),
    "eth_pakistani_bangladeshi": ("Demographic", "Ethnicity"),
    "eth_black": ("Demographic", "Ethnicity"),
    "eth_other_minority": ("Demographic", "Ethnicity"),
    "nvq3_plus": ("Social", "Qualifications"),
    "unemployed": ("Social", "EmploymentStatus"),
    "inactive": ("Social", "EmploymentStatus"),
}

ARCHETYPE_SIZES = (137, 151, 9, 4, 25, 38, 6)
AT_RISK_ARCHETYPES = (2, 3, 6)
NOISE_SD = 0.3

ARCHETYPES = np.array([
    [-1.3, -1.5, -0.2, -0.2,  0.0, -0.5, -0.3, -0.5,  1.0, -1.1,  1.6],
    [ 0.8, -0.7,  1.8,  0.2, -0.7, -0.4, -0.7, -0.1,  2.2, -1.0, -0.4],
    [ 0.6,  1.7,  0.7,  1.0,  2.3,  2.1,  2.0,  0.8, -1.8,  1.8,  1.3],
    [-0.5,  1.8,  2.0, -0.5,  3.9, -0.1, -0.5,  2.6, -0.9, -0.4,  1.7],
    [ 1.0,  1.7, -0.1,  2.9,  0.5, -0.1,  1.3,  0.6,  1.5, -1.2, -0.8],
    [ 3.4,  0.1, -2.7, -0.6, -0.9, -0.3, -0.4, -0.4,  0.2,  1.1,  0.8],
    [ 0.7,  2.1, -0.1,  0.6, -0.3,  4.4, -1.7, -0.3, -1.7,  0.2,  1.3],
])

_PREFIX_CYCLE = ("E06", "E07", "E08", "E09", "W06", "S12")


def district_codes(n: int) -> list[tuple[str, str]]:
    """Synthetic GSS-style codes cycling through the region prefixes."""
    return [
        (f"{_PREFIX_CYCLE[i % len(_PREFIX_CYCLE)]}{i:06d}", f"District {i}")
        for i in range(n)
    ]


def planted_labels() -> np.ndarray:
    return np.concatenate([
        np.full(size, c, dtype=np.int64) for c, size in enumerate(ARCHETYPE_SIZES)
    ])


def planted_z(seed: int = 20190501) -> tuple[np.ndarray, np.ndarray]:
    """(labels, z) with archetype means plus Gaussian noise."""
    labels = planted_labels()
    rng = np.random.default_rng(seed)
    z = ARCHETYPES[labels] + rng.normal(0.0, NOISE_SD, size=(labels.size, 11))
    return labels, z


def planted_rates(seed: int = 20190501) -> tuple[np.ndarray, np.ndarray]:
    """(labels, rates) with rates affinely mapped into (0, 100)."""
    labels, z = planted_z(seed)
    return labels, 50.0 + 4.0 * z


def write_planted_csv(dir_: Path, seed: int = 20190501) -> tuple[Path, Path]:
    """Write the fixture as a (table.csv, schema.ini) pair for the pipeline."""
    labels, rates = planted_rates(seed)
    codes = district_codes(labels.size)
    table = dir_ / "districts.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("district_code,district_name," + ",".join(VARIABLES) + "\n")
        for i, (code, name) in enumerate(codes):
            cells = ",".join(repr(float(v)) for v in rates[i])
            fh.write(f"{code},{name},{cells}\n")
    schema = dir_ / "schema.ini"
    lines = ["[measures]"]
    for v in VARIABLES:
        domain, dimension = DIMENSIONS[v]
        lines.append(f"{v} = {domain}/{dimension}/AsIs/percentage")
    schema.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table, schema


def three_blobs(seed: int = 1, per_blob: int = 30, sd: float = 0.3) -> np.ndarray:
    """Three well-separated 2-D blobs (centers >= 10 apart)."""
    rng = np.random.default_rng(seed)
    centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    return np.vstack([rng.normal(c, sd, size=(per_blob, 2)) for c in centers])


def write_external_fixtures(dir_: Path, seed: int = 20190501) -> dict[str, Path]:
    """Performance, usage, lookup and boundary files matching the planted fixture.

    At-risk archetypes get systematically lower upload speeds so the
    validation narrative has signal to report.
    """
    labels = planted_labels()
    codes = district_codes(labels.size)
    rng = np.random.default_rng(seed + 1)

    performance = dir_ / "performance.csv"
    with open(performance, "w", encoding="utf-8") as fh:
        fh.write("code,upload_mbits,download_mbits\n")
        for (code, _), lab in zip(codes, labels):
            base_up = 7.0 if lab in AT_RISK_ARCHETYPES else 10.5
            up = base_up + float(rng.uniform(-1.0, 1.0))
            down = 58.0 + float(rng.uniform(-20.0, 20.0))
            fh.write(f"{code},{up!r},{down!r}\n")

    n_areas = 40
    usage = dir_ / "usage.csv"
    with open(usage, "w", encoding="utf-8") as fh:
        fh.write("area_code,used_pct,lapsed_pct\n")
        for i in range(n_areas):
            used = float(rng.uniform(55, 95))
            lapsed = float(rng.uniform(2, 30))
            fh.write(f"UKX{i:03d},{used!r},{lapsed!r}\n")

    lookup = dir_ / "lookup.csv"
    with open(lookup, "w", encoding="utf-8") as fh:
        fh.write("district_code,area_code,same_boundary\n")
        for i in range(n_areas):
            fh.write(f"{codes[i][0]},UKX{i:03d},{'true' if i % 3 else 'false'}\n")

    boundaries = dir_ / "boundaries.geojson"
    features = []
    for i, (code, name) in enumerate(codes):
        lon = float(i % 20)
        lat = float(i // 20)
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "Polygon",
                "coordinates": [[
                    [lon, lat], [lon + 1.0, lat], [lon + 1.0, lat + 1.0],
                    [lon, lat + 1.0], [lon, lat],
                ]],
            },
            "properties": {"code": code, "name": name},
        })
    import json

    boundaries.write_text(
        json.dumps({"type": "FeatureCollection", "features": features}),
        encoding="utf-8",
    )
    return {
        "performance": performance,
        "usage": usage,
        "lookup": lookup,
        "boundaries": boundaries,
    }


def write_config(
    dir_: Path,
    table: Path,
    schema: Path,
    out_dir: Path,
    externals: dict[str, Path] | None = None,
    **overrides,
) -> Path:
    """Write a pipeline INI config; keyword overrides become [pipeline] keys."""
    values = {
        "table": table,
        "schema": schema,
        "out_dir": out_dir,
        "seed": 20190501,
        "k": 7,
        "run_kselect": "always",
        "restarts": 300,
        "gap_reps": 4,
        "gap_b": 4,
        "gap_k_min": 1,
        "gap_k_max": 8,
        "clustergram_reps": 3,
        "clustergram_k_min": 1,
        "clustergram_k_max": 8,
        "kselect_restarts": 2,
        "threads": 1,
    }
    names = overrides.pop("cluster_names", None)
    if externals:
        values.update(externals)
    values.update(overrides)
    lines = ["[pipeline]"]
    for key, val in values.items():
        if val is None:
            continue
        lines.append(f"{key} = {val}")
    if names:
        lines.append("[cluster_names]")
        for cid, name in names.items():
            lines.append(f"{cid} = {name}")
    path = dir_ / "pipeline.ini"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
