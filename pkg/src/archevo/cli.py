"""Command-line entry point.

Subcommands: run (evolution loop), validate (verdict + diagnostics),
analyze (static cost report), score (detection metrics against KITTI-format
ground truth), metrics (figure-data CSV export).  Machine output is JSON on
stdout; domain failures exit 1 with a diagnostic JSON object on stderr;
usage errors exit 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .arch import GraphError, build_graph, cost_report, validate_text
from .detection import Detection, BBox, DEFAULT_CLASS_MAP, evaluate_detections, load_kitti_labels
from .evolution import RunConfig, SeedInvalidError, run_evolution
from .export import export_run_metrics
from .genome import GenomeError, parse_genome


def _fail(payload: dict, code: int = 1) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    try:
        cfg = RunConfig.from_file(
            args.config,
            rng_seed=args.seed,
            generations=args.generations,
            population_size=args.population,
        )
        log = run_evolution(cfg, args.out, resume=args.resume)
    except (ValueError, SeedInvalidError, FileNotFoundError) as exc:
        return _fail({"error": type(exc).__name__, "message": str(exc)})
    print(json.dumps(log.report, indent=2))
    return 0


def _cmd_validate(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        return _fail({"error": "ReadError", "message": str(exc)})
    verdict = validate_text(text, args.mode, scale=args.scale)
    print(json.dumps(verdict.to_dict(), indent=2))
    return 0 if verdict.valid else 1


def _cmd_analyze(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        return _fail({"error": "ReadError", "message": str(exc)})
    verdict = validate_text(text, args.mode, scale=args.scale)
    out = verdict.to_dict()
    if verdict.valid:
        genome = parse_genome(text, args.mode)
        graph = build_graph(genome, scale=args.scale)
        report = cost_report(graph, input_hw=(args.imgsz, args.imgsz))
        out.update(report.to_dict())
        print(json.dumps(out, indent=2))
        return 0
    print(json.dumps(out, indent=2))
    return 1


def _load_detections(path: str) -> list[Detection]:
    dets = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            bbox = BBox(*[float(v) for v in row["bbox"]])
            dets.append(
                Detection(
                    image_id=str(row["image_id"]),
                    class_id=int(row["class_id"]),
                    bbox=bbox,
                    confidence=float(row["confidence"]),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad detection row: {exc}") from exc
    return dets


def _cmd_score(args) -> int:
    try:
        class_map = DEFAULT_CLASS_MAP
        if args.class_map:
            class_map = json.loads(Path(args.class_map).read_text())
        gts = load_kitti_labels(args.gt, class_map=class_map)
        dets = _load_detections(args.dets)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail({"error": type(exc).__name__, "message": str(exc)})
    metrics = evaluate_detections(dets, gts, conf_thresh=args.conf)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _cmd_metrics(args) -> int:
    try:
        paths = export_run_metrics(args.runs, args.out, joint_norm=args.joint_norm)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail({"error": type(exc).__name__, "message": str(exc)})
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="archevo")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the evolution loop")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--resume", action="store_true")
    p_run.add_argument("--seed", type=int, default=None, help="override rng_seed")
    p_run.add_argument("--generations", type=int, default=None)
    p_run.add_argument("--population", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="parse + graph-validity verdict")
    p_val.add_argument("file")
    p_val.add_argument("--mode", default="split", choices=["split", "whole"])
    p_val.add_argument("--scale", default=None)
    p_val.set_defaults(func=_cmd_validate)

    p_an = sub.add_parser("analyze", help="static parameter/cost report")
    p_an.add_argument("file")
    p_an.add_argument("--mode", default="split", choices=["split", "whole"])
    p_an.add_argument("--scale", default=None)
    p_an.add_argument("--imgsz", type=int, default=640)
    p_an.set_defaults(func=_cmd_analyze)

    p_sc = sub.add_parser("score", help="detection metrics from files")
    p_sc.add_argument("--dets", required=True, help="detections JSONL")
    p_sc.add_argument("--gt", required=True, help="KITTI label dir or file")
    p_sc.add_argument("--class-map", default=None, help="JSON {name: id}")
    p_sc.add_argument("--conf", type=float, default=0.0)
    p_sc.set_defaults(func=_cmd_score)

    p_me = sub.add_parser("metrics", help="export figure-data CSVs")
    p_me.add_argument("--runs", nargs="+", required=True)
    p_me.add_argument("--out", required=True)
    p_me.add_argument("--joint-norm", action="store_true")
    p_me.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
