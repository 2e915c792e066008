"""Command-line interface.

Subcommands: forge (pseudo-fake synthesis, also a persistent --serve line
mode), degrade (training degradation model over a tree), sweep (test-time
degradations), auc (robustness curves from score files), replay
(regenerate one manifest entry), preview (contact sheet of sampled
outputs). Every subcommand prints one machine-readable JSON summary line
on stdout; exit codes are 0 (success), 1 (per-item errors), 2 (fatal
configuration or I/O errors). PMM_LOG in {error, info, debug} controls
stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness as harness_mod
from . import pipeline as pipeline_mod
from .core import (
    ConfigError,
    PmmConfig,
    PseudofakeError,
    RngStream,
    ValidationError,
    load_config,
    load_image,
    load_landmarks,
    save_image_png,
)
from .stg import ArtifactCache

SERVE_SCHEMA_VERSION = 1

log = logging.getLogger("pseudofake")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("PMM_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(
        stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (defaults when absent)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    parser.add_argument("--out", required=True, help="output directory or file")


def _load_config(args) -> PmmConfig:
    config = load_config(args.config) if args.config else PmmConfig()
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def _parse_caches(specs: list[str] | None) -> list[ArtifactCache]:
    caches = []
    for spec in specs or []:
        if "=" not in spec:
            raise ConfigError(f"--caches expects name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        if not Path(path).is_dir():
            raise ConfigError(f"cache directory {path!r} does not exist")
        caches.append(ArtifactCache(name, Path(path)))
    return caches


def _summary(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudofake",
        description="Blended pseudo-fake synthesis and detector robustness tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forge", help="synthesize pseudo-fakes over a dataset")
    _add_common(p)
    p.add_argument("--in", dest="input_root", required=True)
    p.add_argument("--landmarks", dest="landmark_root", required=True)
    p.add_argument("--caches", action="append", metavar="NAME=PATH")
    p.add_argument("--serve", action="store_true", help="persistent line-protocol mode")

    p = sub.add_parser("degrade", help="apply the training degradation model to a tree")
    _add_common(p)
    p.add_argument("--in", dest="input_root", required=True)

    p = sub.add_parser("sweep", help="apply fixed test-time degradations")
    _add_common(p)
    p.add_argument("--in", dest="input_root", required=True)
    p.add_argument("--kind", choices=[k.value for k in harness_mod.SweepKind])
    p.add_argument("--levels", help="comma-separated levels (defaults per kind)")
    p.add_argument("--spec", help="JSON sweep spec {kind, levels}")

    p = sub.add_parser("auc", help="robustness curve from per-level score files")
    _add_common(p)
    p.add_argument("--spec", required=True, help="JSON sweep spec {kind, levels}")
    p.add_argument(
        "--scores-dir", required=True, help="directory of <level>.csv score files"
    )

    p = sub.add_parser("replay", help="regenerate one manifest entry bit-exactly")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--id", dest="entry_id", required=True, help="input path of the entry")
    p.add_argument("--in", dest="input_root", required=True)
    p.add_argument("--landmarks", dest="landmark_root")
    p.add_argument("--caches", action="append", metavar="NAME=PATH")

    p = sub.add_parser("preview", help="contact sheet of sampled pipeline outputs")
    _add_common(p)
    p.add_argument("--in", dest="input_root", required=True)
    p.add_argument("--landmarks", dest="landmark_root", required=True)
    p.add_argument("--caches", action="append", metavar="NAME=PATH")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--columns", type=int, default=4)
    return parser


def _cmd_forge(args) -> int:
    config = _load_config(args)
    caches = _parse_caches(args.caches)
    if args.serve:
        return _serve_loop(args, config, caches)
    manifest = pipeline_mod.run_dataset(
        config,
        args.input_root,
        args.landmark_root,
        args.out,
        caches=caches,
        workers=args.workers,
        mode="forge",
    )
    return _report_manifest("forge", manifest)


def _cmd_degrade(args) -> int:
    config = _load_config(args)
    manifest = pipeline_mod.run_dataset(
        config,
        args.input_root,
        None,
        args.out,
        workers=args.workers,
        mode="real",
    )
    return _report_manifest("degrade", manifest)


def _report_manifest(command: str, manifest: pipeline_mod.Manifest) -> int:
    errors = manifest.errors
    for entry in errors:
        log.error("%s failed: %s", entry.input_path, entry.error)
        print(f"error: {entry.input_path}: {entry.error}", file=sys.stderr)
    _summary(
        {
            "command": command,
            "images": len(manifest.entries),
            "errors": len(errors),
            "manifest": str(manifest.path),
        }
    )
    return 1 if errors else 0


def _sweep_spec_from_args(args) -> harness_mod.SweepSpec:
    if getattr(args, "spec", None):
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        return harness_mod.SweepSpec(
            harness_mod.SweepKind(raw["kind"]), tuple(raw["levels"])
        )
    if not args.kind:
        raise ConfigError("sweep needs --kind or --spec")
    kind = harness_mod.SweepKind(args.kind)
    if args.levels:
        levels = tuple(float(x) for x in args.levels.split(","))
        return harness_mod.SweepSpec(kind, levels)
    return harness_mod.SweepSpec.default(kind)


def _cmd_sweep(args) -> int:
    spec = _sweep_spec_from_args(args)
    seed = args.seed if args.seed is not None else 0
    count = harness_mod.run_sweep(args.input_root, args.out, spec, seed=seed)
    _summary(
        {
            "command": "sweep",
            "kind": spec.kind.value,
            "levels": list(spec.levels),
            "images_written": count,
            "out": str(args.out),
        }
    )
    return 0


def _cmd_auc(args) -> int:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = harness_mod.SweepSpec(harness_mod.SweepKind(raw["kind"]), tuple(raw["levels"]))
    scores_dir = Path(args.scores_dir)
    score_files = {
        lv: scores_dir / f"{harness_mod.format_level(lv)}.csv" for lv in spec.levels
    }
    missing = [str(p) for p in score_files.values() if not p.is_file()]
    if missing:
        raise ConfigError(f"missing score files: {missing}")
    out_csv = Path(args.out) / f"{spec.kind.value}_auc.csv"
    rows = harness_mod.robustness_curve(spec, score_files, out_csv=out_csv)
    for lv, value, n_pos, n_neg in rows:
        print(f"{harness_mod.format_level(lv)}\t{value:.6f}\t{n_pos}\t{n_neg}")
    _summary(
        {
            "command": "auc",
            "kind": spec.kind.value,
            "curve": [[lv, value] for lv, value, _, _ in rows],
            "out": str(out_csv),
        }
    )
    return 0


def _cmd_replay(args) -> int:
    config = _load_config(args)
    caches = _parse_caches(args.caches)
    manifest = pipeline_mod.Manifest.load(args.manifest)
    entry = manifest.find(args.entry_id)
    regenerated = pipeline_mod.replay_entry(
        entry, config, args.input_root, args.landmark_root, caches=caches
    )
    out_path = Path(args.out) / entry.output_path
    save_image_png(regenerated, out_path)
    original_path = Path(args.manifest).parent / entry.output_path
    match = None
    if original_path.is_file():
        match = original_path.read_bytes() == out_path.read_bytes()
    _summary(
        {
            "command": "replay",
            "id": entry.input_path,
            "output": str(out_path),
            "matches_original": match,
        }
    )
    return 0 if match in (True, None) else 1


def _cmd_preview(args) -> int:
    config = _load_config(args)
    caches = _parse_caches(args.caches)
    input_root = Path(args.input_root)
    rels = pipeline_mod.discover_images(input_root)
    if not rels:
        raise ConfigError(f"no images under {input_root}")
    gallery = [str(input_root / r) for r in rels]
    root_rng = RngStream(config.seed)
    tiles = []
    for i in range(args.count):
        rel = rels[i % len(rels)]
        image = load_image(input_root / rel)
        landmarks = load_landmarks(
            Path(args.landmark_root) / pipeline_mod._landmark_rel(rel)
        )
        # cycle labels so repeated visits of one input still differ
        label = rel if i < len(rels) else f"{rel}#preview{i}"
        out, _ = pipeline_mod.synthesize_pseudo_fake(
            rel, image, landmarks, caches, gallery, root_rng.fork(label), config
        )
        tiles.append(out)
    sheet = pipeline_mod.contact_sheet(tiles, columns=args.columns)
    out_path = Path(args.out)
    if out_path.suffix.lower() != ".png":
        out_path = out_path / "preview.png"
    save_image_png(sheet, out_path)
    _summary({"command": "preview", "tiles": len(tiles), "out": str(out_path)})
    return 0


# ---------------------------------------------------------------------------
# Serve mode (line protocol for external dataloaders)


def _serve_loop(args, config: PmmConfig, caches: list[ArtifactCache]) -> int:
    input_root = Path(args.input_root)
    output_root = Path(args.out)
    output_root.mkdir(parents=True, exist_ok=True)
    rels = set(pipeline_mod.discover_images(input_root))
    gallery = [str(input_root / r) for r in sorted(rels)]
    stdout = sys.stdout

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj, sort_keys=True) + "\n")
        stdout.flush()

    emit({"ok": True, "schema_version": SERVE_SCHEMA_VERSION, "protocol": "pseudofake-serve"})
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            emit({"ok": False, "error": {"code": "bad-request", "message": str(exc)}})
            continue
        op = request.get("op")
        if op == "shutdown":
            emit({"ok": True, "bye": True})
            return 0
        if op == "ping":
            emit({"ok": True, "pong": True})
            continue
        if op != "synthesize":
            emit(
                {
                    "ok": False,
                    "error": {"code": "bad-request", "message": f"unknown op {op!r}"},
                }
            )
            continue
        rel = request.get("path")
        if rel not in rels:
            emit(
                {
                    "ok": False,
                    "error": {
                        "code": "not-found",
                        "message": f"path {rel!r} is not part of the input root",
                    },
                }
            )
            continue
        try:
            line_out = pipeline_mod._process_one(
                (
                    rel,
                    "forge",
                    config,
                    str(input_root),
                    str(args.landmark_root),
                    str(output_root),
                    caches,
                    gallery,
                )
            )
            entry_obj = json.loads(line_out)
            if entry_obj.get("error"):
                emit(
                    {
                        "ok": False,
                        "error": {"code": "pipeline", "message": entry_obj["error"]},
                    }
                )
            else:
                emit(
                    {
                        "ok": True,
                        "output": str(output_root / entry_obj["output_path"]),
                        "entry": entry_obj,
                    }
                )
        except PseudofakeError as exc:
            emit({"ok": False, "error": {"code": "pipeline", "message": str(exc)}})
    return 0


_COMMANDS = {
    "forge": _cmd_forge,
    "degrade": _cmd_degrade,
    "sweep": _cmd_sweep,
    "auc": _cmd_auc,
    "replay": _cmd_replay,
    "preview": _cmd_preview,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2
    except PseudofakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
