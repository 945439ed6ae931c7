"""Pipeline configuration.

INI file with a [pipeline] section whose keys mirror the CLI flag names;
flags override file values. Randomized stages require an explicit seed so
no run ever depends on the wall clock.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class PipelineConfig:
    """Every knob of the batch pipeline, defaults matching the standard protocol."""

    table: str | None = None
    schema: str | None = None
    boundaries: str | None = None
    performance: str | None = None
    usage: str | None = None
    lookup: str | None = None
    out_dir: str = "out"

    seed: int | None = None
    k: int | None = None
    restarts: int = 1000
    correlation_threshold: float = 0.7
    suppression_threshold: float | None = None  # None defers to the schema
    keep_variables: list[str] = field(default_factory=list)

    gap_reps: int = 500
    gap_b: int = 50
    gap_k_min: int = 1
    gap_k_max: int = 10
    clustergram_reps: int = 100
    clustergram_k_min: int = 1
    clustergram_k_max: int = 12
    kselect_restarts: int = 25
    run_kselect: str = "auto"  # auto | always | never

    risk_rule: str = ""        # empty -> default rule built from metadata
    profile_epsilon: float = 0.1
    cases: list[str] = field(default_factory=list)

    threads: int = 1
    boundary_code_property: str = "code"
    bbox: tuple[float, float, float, float] | None = None
    cluster_names: dict[int, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not (0.0 < self.correlation_threshold <= 1.0):
            raise ConfigError(
                f"correlation_threshold must be in (0, 1], got {self.correlation_threshold}"
            )
        if self.suppression_threshold is not None and self.suppression_threshold < 0:
            raise ConfigError("suppression_threshold must be non-negative")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        for name in ("gap_reps", "gap_b", "clustergram_reps", "kselect_restarts", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not (1 <= self.gap_k_min <= self.gap_k_max):
            raise ConfigError("invalid gap k range")
        if not (1 <= self.clustergram_k_min <= self.clustergram_k_max):
            raise ConfigError("invalid clustergram k range")
        if self.run_kselect not in ("auto", "always", "never"):
            raise ConfigError("run_kselect must be auto, always or never")
        if self.bbox is not None and (self.bbox[0] >= self.bbox[2] or self.bbox[1] >= self.bbox[3]):
            raise ConfigError("bbox must be lon_min,lat_min,lon_max,lat_max with min < max")

    def needs_seed(self) -> bool:
        return True  # clustering always runs; k-selection too unless overridden

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(
                "a seed is required for the stochastic stages; pass --seed or set it in the config"
            )
        return self.seed


_INT_KEYS = {
    "seed", "k", "restarts", "gap_reps", "gap_b", "gap_k_min", "gap_k_max",
    "clustergram_reps", "clustergram_k_min", "clustergram_k_max",
    "kselect_restarts", "threads",
}
_FLOAT_KEYS = {"correlation_threshold", "suppression_threshold", "profile_epsilon"}
_LIST_KEYS = {"keep_variables", "cases"}
_STR_KEYS = {
    "table", "schema", "boundaries", "performance", "usage", "lookup",
    "out_dir", "run_kselect", "risk_rule", "boundary_code_property",
}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a PipelineConfig from an INI file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None

    cfg = PipelineConfig()
    if cp.has_section("pipeline"):
        for key, raw in cp.items("pipeline"):
            _apply(cfg, key, raw)
    if cp.has_section("cluster_names"):
        for key, raw in cp.items("cluster_names"):
            try:
                cfg.cluster_names[int(key)] = raw
            except ValueError:
                raise ConfigError(f"[cluster_names] keys must be cluster ids, got {key!r}") from None
    cfg.validate()
    return cfg


def _apply(cfg: PipelineConfig, key: str, raw: str) -> None:
    raw = raw.strip()
    if key == "bbox":
        if raw:
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 4:
                raise ConfigError(f"bbox needs 4 comma-separated numbers, got {raw!r}")
            try:
                cfg.bbox = tuple(float(p) for p in parts)  # type: ignore[assignment]
            except ValueError:
                raise ConfigError(f"bbox values must be numbers: {raw!r}") from None
        return
    if key in _LIST_KEYS:
        setattr(cfg, key, [p.strip() for p in raw.split(",") if p.strip()])
        return
    if key in _INT_KEYS:
        if raw == "":
            setattr(cfg, key, None if key in ("seed", "k") else getattr(cfg, key))
            return
        try:
            setattr(cfg, key, int(raw))
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
        return
    if key in _FLOAT_KEYS:
        if raw == "":
            return
        try:
            setattr(cfg, key, float(raw))
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None
        return
    if key in _STR_KEYS:
        if raw != "":
            setattr(cfg, key, raw)
        return
    raise ConfigError(f"unknown config key {key!r}")


def config_snapshot(cfg: PipelineConfig) -> dict:
    """JSON-ready dict of the effective configuration."""
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out
