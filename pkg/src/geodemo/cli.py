"""Batch command-line interface.

Subcommands mirror the pipeline stages; later stages read the intermediates
persisted by earlier ones, so a sequence of subcommands reproduces run-all
byte for byte. Flags override config-file values of the same name.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config
from .errors import ConfigError, GeodemoError
from .pipeline import (
    _finalize_manifest,
    _new_manifest,
    _stage_cluster,
    _stage_evaluate,
    _stage_export,
    _stage_ingest,
    _stage_kselect,
    _stage_preprocess,
    _stage_profile,
    _stage_validate,
    _StageClock,
    load_features,
    load_model,
    load_profiles,
    run_pipeline,
)

COMMANDS = (
    "validate-input", "fit", "kselect", "evaluate", "profile",
    "external-validate", "export-geojson", "run-all",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geodemo",
        description="Geodemographic classification pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file; flags override its values")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--seed", type=int, help="master seed for all stochastic stages")
        p.add_argument("--k", type=int, help="cluster count override")
        p.add_argument("--restarts", type=int, help="K-means restarts")
        p.add_argument("--threads", type=int, help="parallel workers (never changes results)")
        p.add_argument("--table", help="district table CSV")
        p.add_argument("--schema", help="measure schema INI")
        p.add_argument("--boundaries", help="district boundaries GeoJSON")
        p.add_argument("--performance", help="broadband performance CSV")
        p.add_argument("--usage", help="internet usage CSV")
        p.add_argument("--lookup", help="district-to-area lookup CSV")
    return parser


_FLAG_KEYS = (
    "out_dir", "seed", "k", "restarts", "threads",
    "table", "schema", "boundaries", "performance", "usage", "lookup",
)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _resolve_k(cfg: PipelineConfig, out: Path) -> int:
    if cfg.k is not None:
        return cfg.k
    selection = out / "k_selection.json"
    if selection.exists():
        import json

        return int(json.loads(selection.read_text(encoding="utf-8"))["chosen_k"])
    raise ConfigError(
        "no cluster count: pass --k or run the kselect subcommand first"
    )


def _dispatch(command: str, cfg: PipelineConfig) -> int:
    if command == "run-all":
        run_pipeline(cfg)
        print(f"pipeline complete; outputs in {cfg.out_dir}")
        return 0

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest(cfg)
    clock = _StageClock(manifest)

    try:
        if command == "validate-input":
            table = clock.run("ingest", lambda: _stage_ingest(cfg, out))
            n_sup = len(table.suppressed_cells()) + len(table.reconstructed_cells())
            print(
                f"{table.n_districts} districts x {len(table.schema.measures)} measures; "
                f"{len(table.reconstructed_cells())} reconstructed cells, "
                f"{len(table.suppressed_cells())} unresolved, {n_sup} flagged in total"
            )
        elif command == "kselect":
            table = clock.run("ingest", lambda: _stage_ingest(cfg, out))
            features = clock.run("preprocess", lambda: _stage_preprocess(cfg, out, table))
            selection = clock.run("kselect", lambda: _stage_kselect(cfg, out, features))
            print(
                f"chosen k = {selection.chosen_k} ({selection.source}); "
                f"gap modal k = {selection.modal_k}"
            )
        elif command == "fit":
            table = clock.run("ingest", lambda: _stage_ingest(cfg, out))
            features = clock.run("preprocess", lambda: _stage_preprocess(cfg, out, table))
            k = _resolve_k(cfg, out)
            model = clock.run("cluster", lambda: _stage_cluster(cfg, out, features, k))
            print(
                f"fitted k={model.k} over {cfg.restarts} restarts: "
                f"wcss={model.wcss:.6f}, best restart {model.best_restart}"
            )
        elif command == "evaluate":
            features = load_features(out)
            model = load_model(out, features)
            clock.run("evaluate", lambda: _stage_evaluate(cfg, out, features, model))
            print(f"evaluation written to {out}")
        elif command == "profile":
            features = load_features(out)
            model = load_model(out, features)
            profiles = clock.run("profile", lambda: _stage_profile(cfg, out, features, model))
            flagged = [p.cluster_id for p in profiles if p.at_risk]
            print(f"{len(profiles)} profiles; at-risk clusters: {flagged or 'none'}")
        elif command == "external-validate":
            if not cfg.performance:
                raise ConfigError("external-validate requires a performance CSV")
            features = load_features(out)
            model = load_model(out, features)
            report = clock.run("validate", lambda: _stage_validate(cfg, out, features, model))
            print(
                f"validated {sum(c.matched for c in report.speed.clusters)} districts; "
                f"{len(report.unmatched_districts)} unmatched"
            )
        elif command == "export-geojson":
            if not cfg.boundaries:
                raise ConfigError("export-geojson requires a boundaries GeoJSON")
            features = load_features(out)
            model = load_model(out, features)
            profiles = load_profiles(out)
            geo = clock.run(
                "export-geojson", lambda: _stage_export(cfg, out, features, model, profiles)
            )
            n = len(geo.collection["features"])
            print(f"wrote classification.geojson with {n} features")
        else:  # pragma: no cover - argparse restricts choices
            raise ConfigError(f"unknown command {command!r}")
    finally:
        _finalize_manifest(out, manifest)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        return _dispatch(args.command, cfg)
    except GeodemoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
