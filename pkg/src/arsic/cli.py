"""Command-line entry point: ``arsic {ingest,analyze,caption,select,score,run}``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import ingest, pipeline
from .config import PipelineConfig
from .errors import ArsicError, ConfigError
from .patterns import SceneDescription
from .spatial import ThresholdStats

logger = logging.getLogger("arsic")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _add_config(p):
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser():
    parser = argparse.ArgumentParser(prog="arsic", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert annotations to the canonical JSON schema")
    p.add_argument("inputs", nargs="+", help="annotation files or directories")
    p.add_argument("--format", required=True, choices=pipeline.FORMATS)
    p.add_argument("--label-map", help="xView type_id -> label JSON")
    p.add_argument("--max-objects", type=int)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="skip report path (default: <output>.report.json)")
    _add_config(p)

    p = sub.add_parser("analyze", help="cluster objects and write scene descriptions")
    p.add_argument("canonical")
    p.add_argument("-o", "--output", required=True, help="scenes JSONL")
    p.add_argument("--stats", help="where to save threshold stats (default: <output dir>/threshold.json)")
    p.add_argument("--load-stats", help="reuse threshold stats from an earlier run")
    p.add_argument("--threshold", type=float, help="fixed cut threshold; skips percentile sampling")
    p.add_argument("--percentile", type=float)
    p.add_argument("--penalty", type=float, help="absolute type penalty in pixels")
    _add_config(p)

    p = sub.add_parser("caption", help="prompt the LLM for captions")
    p.add_argument("scenes")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mock", help="canned LLM responses JSON (no network)")
    p.add_argument("--exemplars", help="few-shot exemplar JSON")
    p.add_argument("--dump-prompts", help="directory to write each prompt's message list")
    p.add_argument("--workers", type=int)
    _add_config(p)

    p = sub.add_parser("select", help="filter, score and rank captions")
    p.add_argument("captions")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--scorer", help="scorer endpoint URL or 'offline'")
    p.add_argument("--wq", type=float)
    p.add_argument("--wd", type=float)
    p.add_argument("-k", type=int)
    _add_config(p)

    p = sub.add_parser("score", help="CIDEr-D of selected captions against references")
    p.add_argument("selected")
    p.add_argument("references", help='JSON {"image_id": [refs, ...]}')
    p.add_argument("-o", "--output", required=True, help="per-image scores JSONL")
    p.add_argument("--summary", help="corpus summary JSON (default: <output>.summary.json)")

    p = sub.add_parser("run", help="ingest -> analyze -> caption -> select")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--format", default="dota", choices=pipeline.FORMATS)
    p.add_argument("--label-map")
    p.add_argument("--mock")
    p.add_argument("--scorer")
    p.add_argument("--threshold", type=float)
    p.add_argument("--resume", action="store_true", help="reuse stages whose inputs are unchanged")
    _add_config(p)
    return parser


def _config(args, **overrides):
    return PipelineConfig.load(getattr(args, "config", None), **overrides)


def _with_scorer(cfg, endpoint):
    if endpoint:
        cfg.scorer = {**cfg.scorer, "endpoint": endpoint}
        cfg.validate()
    return cfg


def cmd_ingest(args):
    cfg = _config(args, max_objects=args.max_objects)
    label_map = ingest.load_label_map(args.label_map) if args.label_map else None
    kept, report = pipeline.ingest_files(args.inputs, args.format, label_map, cfg.max_objects)
    pipeline.write_json(args.output, ingest.write_canonical(kept))
    report_path = args.report or f"{args.output}.report.json"
    pipeline.write_json(report_path, report)
    for item in report["skipped_over_cap"]:
        print(f"skipped {item['image_id']}: {item['objects']} objects > {cfg.max_objects}", file=sys.stderr)
    if report["dropped_features"]:
        print(f"dropped {report['dropped_features']} feature(s) with unmapped type_id", file=sys.stderr)
    print(f"wrote {len(kept)} image(s) to {args.output}", file=sys.stderr)


def cmd_analyze(args):
    cfg = _config(args, threshold=args.threshold, percentile=args.percentile, penalty=args.penalty)
    images = ingest.parse_canonical(pipeline.read_json(args.canonical))
    loaded = ThresholdStats.load(args.load_stats) if args.load_stats else None
    stats, scenes = pipeline.analyze(images, cfg, loaded)
    stats_path = args.stats or str(Path(args.output).parent / "threshold.json")
    stats.save(stats_path)
    pipeline.write_jsonl(args.output, [s.to_dict() for s in scenes])
    print(f"threshold {stats.threshold:.3f} (penalty {stats.penalty:.3f}); {len(scenes)} scene(s)", file=sys.stderr)


def cmd_caption(args):
    cfg = _config(args, mock_responses=args.mock, exemplars=args.exemplars, workers=args.workers)
    scenes = [SceneDescription.from_dict(r) for r in pipeline.read_jsonl(args.scenes)]
    records = pipeline.caption_scenes(scenes, cfg, dump_dir=args.dump_prompts)
    pipeline.write_jsonl(args.output, records)
    failed = sum(1 for r in records if r["error"])
    print(f"captioned {len(records) - failed}/{len(records)} image(s)", file=sys.stderr)


def cmd_select(args):
    cfg = _with_scorer(_config(args, wq=args.wq, wd=args.wd, k=args.k), args.scorer)
    records = pipeline.select_stage(pipeline.read_jsonl(args.captions), cfg)
    pipeline.write_jsonl(args.output, records)
    failed = sum(1 for r in records if r.get("error"))
    print(f"selected captions for {len(records) - failed}/{len(records)} image(s)", file=sys.stderr)


def cmd_score(args):
    references = pipeline.read_json(args.references)
    if not isinstance(references, dict):
        raise ConfigError("references must be a JSON object of image_id -> list of captions")
    rows, summary = pipeline.score_stage(pipeline.read_jsonl(args.selected), references)
    pipeline.write_jsonl(args.output, rows)
    pipeline.write_json(args.summary or f"{args.output}.summary.json", summary)
    print(json.dumps(summary, indent=2))


def cmd_run(args):
    cfg = _with_scorer(_config(args, mock_responses=args.mock, threshold=args.threshold), args.scorer)
    status = pipeline.run_pipeline(args.inputs, args.out_dir, cfg, args.format, args.label_map, args.resume)
    for name, state in status.items():
        print(f"{name}: {state}", file=sys.stderr)


COMMANDS = {
    "ingest": cmd_ingest,
    "analyze": cmd_analyze,
    "caption": cmd_caption,
    "select": cmd_select,
    "score": cmd_score,
    "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"arsic: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArsicError, OSError, ValueError) as exc:
        print(f"arsic {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
