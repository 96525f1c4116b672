"""Stage implementations behind the CLI subcommands.

Every stage reads and writes plain files; outputs are ordered by image_id
and contain nothing run-specific, so identical inputs give identical bytes.
"""
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ingest, spatial
from .errors import (
    ArsicError,
    CaptionParseError,
    ConfigError,
    EmptyDataset,
    EmptySample,
    IngestError,
    LlmError,
    NoOverlap,
)
from .llm_io import API_KEY_ENV, ChatClient, parse_caption_list
from .metrics import corpus_cider_d
from .patterns import SceneDescription, assemble_scene
from .prompt import CORRECTIVE_MESSAGE, ChatMessage, build_prompt, load_exemplars
from .select import ScorerClient, select_captions

logger = logging.getLogger(__name__)

FORMATS = ("dota", "xview", "canonical")


class StageError(ArsicError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path, records):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except ValueError as exc:
                    raise ArsicError(f"{path}:{line_no}: invalid JSON: {exc}") from None
    return out


# ingest


def expand_inputs(paths, fmt):
    pattern = {"dota": "*.txt", "xview": "*.geojson", "canonical": "*.json"}[fmt]
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob(pattern)))
        elif p.exists():
            files.append(p)
        else:
            raise IngestError(f"{p}: no such file or directory")
    return files


def ingest_files(paths, fmt, label_map=None, max_objects=ingest.DEFAULT_MAX_OBJECTS):
    """Read annotation files into images; returns ``(kept images, report dict)``."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    files = expand_inputs(paths, fmt)
    if not files:
        raise EmptyDataset("no annotation files found in the inputs")
    if fmt == "xview" and label_map is None:
        raise ConfigError("xview input needs a label map (--label-map)")

    images = []
    dropped = 0
    for f in files:
        try:
            text = f.read_text(encoding="utf-8")
            if fmt == "dota":
                images.append(ingest.parse_dota(text, f.stem))
            elif fmt == "xview":
                found, n = ingest.parse_xview_geojson(json.loads(text), label_map)
                images.extend(found)
                dropped += n
            else:
                images.extend(ingest.parse_canonical(json.loads(text)))
        except (IngestError, ValueError) as exc:
            raise IngestError(f"{f}: {type(exc).__name__}: {exc}") from exc

    seen = set()
    for img in images:
        if img.image_id in seen:
            raise IngestError(f"duplicate image_id {img.image_id!r}")
        seen.add(img.image_id)
    images.sort(key=lambda im: im.image_id)

    kept, cap = ingest.apply_object_cap(images, max_objects)
    report = {
        "max_objects": max_objects,
        "images_read": len(images),
        "images_kept": len(kept),
        "skipped_over_cap": [{"image_id": i, "objects": n} for i, n in cap.skipped],
        "dropped_features": dropped,
    }
    return kept, report


# analyze


def analyze(images, cfg, stats=None):
    """Two-pass clustering over a dataset; returns ``(ThresholdStats, scenes)``."""
    images = sorted(images, key=lambda im: im.image_id)
    if not images:
        raise EmptyDataset("no images to analyze")
    if cfg.penalty is not None:
        penalty = cfg.penalty
    elif stats is not None and stats.penalty is not None:
        penalty = stats.penalty
    else:
        penalty = spatial.estimate_penalty(images, cfg.penalty_scale)

    if cfg.threshold is not None:
        stats = spatial.ThresholdStats(cfg.threshold, 0, cfg.percentile, penalty)
    elif stats is not None:
        stats = spatial.ThresholdStats(stats.threshold, stats.sample_count, stats.percentile, penalty)
    else:
        try:
            stats = spatial.dataset_threshold(images, penalty, cfg.percentile)
        except EmptySample:
            raise EmptyDataset(
                "dataset has no MST edges (single-object images only); pass --threshold explicitly"
            ) from None

    scenes = []
    for img in images:
        clustering = spatial.cluster_image(img, penalty, stats.threshold)
        scenes.append(
            assemble_scene(img, clustering, stats.threshold, cfg.near_factor, cfg.tol_factor, cfg.gap_tol_deg)
        )
    return stats, scenes


# caption


def caption_scenes(scenes, cfg, exemplars=None, client=None, dump_dir=None):
    """Prompt the LLM for each scene; per-image failures are recorded, not raised."""
    llm_cfg = cfg.llm_config()
    if not llm_cfg.is_mock and not llm_cfg.api_key:
        raise ConfigError(f"live LLM mode needs an API key in the {API_KEY_ENV} environment variable")
    if exemplars is None:
        exemplars = load_exemplars(cfg.exemplars)
    own = client is None
    client = client or ChatClient(llm_cfg)
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)

    def run(scene):
        bundle = build_prompt(scene, exemplars)
        if dump_dir is not None:
            write_json(Path(dump_dir) / f"{scene.image_id}.json", bundle.to_json())
        rec = {"image_id": scene.image_id, "captions": [], "error": None, "attempts": 0}
        try:
            reply = client.complete(bundle)
            rec["attempts"] += 1
            try:
                captions = parse_caption_list(reply.text)
            except CaptionParseError as first:
                logger.info("%s: unparsable reply (%s); asking again", scene.image_id, first)
                retry = bundle.with_messages(
                    ChatMessage("assistant", reply.text or "(empty)"), ChatMessage("user", CORRECTIVE_MESSAGE)
                )
                reply = client.complete(retry)
                rec["attempts"] += 1
                captions = parse_caption_list(reply.text)
            rec["captions"] = [c for c in captions if c.strip()]
            if not rec["captions"]:
                rec["error"] = "EmptyList: every caption was blank"
        except (CaptionParseError, LlmError) as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec

    ordered = sorted(scenes, key=lambda s: s.image_id)
    try:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(run, ordered))
    finally:
        if own:
            client.close()


# select


def select_stage(caption_records, cfg, client=None):
    scorer_cfg = cfg.scorer_config()
    by_image = {}
    upstream_errors = {}
    for rec in caption_records:
        if rec.get("error"):
            upstream_errors[rec["image_id"]] = rec["error"]
        else:
            by_image[rec["image_id"]] = list(rec["captions"])
    own = client is None and not scorer_cfg.offline
    if own:
        client = ScorerClient(scorer_cfg)
    try:
        selections = select_captions(by_image, scorer_cfg, client, workers=cfg.workers)
    finally:
        if own:
            client.close()
    records = [s.to_dict() for s in selections]
    for image_id, err in upstream_errors.items():
        records.append({"image_id": image_id, "candidates": [], "error": f"caption stage: {err}"})
    records.sort(key=lambda r: r["image_id"])
    return records


# score


def best_caption(record):
    if "caption" in record:
        return record["caption"]
    for c in record.get("candidates", []):
        if c.get("selected"):
            return c["text"]
    return None


def score_stage(selected_records, references):
    candidates = {}
    for rec in selected_records:
        cap = best_caption(rec)
        if cap is not None:
            candidates[rec["image_id"]] = cap
    overlap = sorted(set(candidates) & set(references))
    if not overlap:
        raise NoOverlap("no image has both a selected caption and references")
    skipped = sorted(set(candidates) - set(references))
    per_image, mean = corpus_cider_d({i: candidates[i] for i in overlap}, references)
    rows = [{"image_id": i, "caption": candidates[i], "cider_d": per_image[i]} for i in overlap]
    summary = {
        "images_scored": len(overlap),
        "images_skipped_no_references": len(skipped),
        "images_without_caption": len([r for r in selected_records if best_caption(r) is None]),
        "cider_d": mean,
        "cider_d_x10": mean * 10.0,
    }
    return rows, summary


# run


def _digest(*parts):
    h = hashlib.sha256()
    for part in parts:
        data = part if isinstance(part, bytes) else json.dumps(part, sort_keys=True).encode("utf-8")
        h.update(hashlib.sha256(data).digest())
    return h.hexdigest()


def _file_bytes(path):
    return Path(path).read_bytes() if path else b""


class Manifest:
    """Per-stage input hashes used by ``--resume`` to skip unchanged stages."""

    def __init__(self, path):
        self.path = Path(path)
        self.stages = read_json(self.path) if self.path.exists() else {}

    def fresh(self, stage, key, outputs):
        return self.stages.get(stage) == key and all(Path(o).exists() for o in outputs)

    def record(self, stage, key):
        self.stages[stage] = key
        write_json(self.path, dict(sorted(self.stages.items())))


def run_pipeline(inputs, out_dir, cfg, fmt="dota", label_map_path=None, resume=False):
    """ingest -> analyze -> caption -> select, keeping every artifact in ``out_dir``.

    Returns a dict of stage name -> "ran" | "reused".
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out / "manifest.json")
    paths = {
        "canonical": out / "canonical.json",
        "report": out / "ingest_report.json",
        "threshold": out / "threshold.json",
        "scenes": out / "scenes.jsonl",
        "captions": out / "captions.jsonl",
        "selected": out / "selected.jsonl",
    }
    status = {}
    cfg_doc = cfg.to_dict()

    def stage(name, key, outputs, fn):
        if resume and manifest.fresh(name, key, outputs):
            status[name] = "reused"
            return
        try:
            fn()
        except ArsicError as exc:
            raise StageError(name, exc) from exc
        manifest.record(name, key)
        status[name] = "ran"

    try:
        files = expand_inputs(inputs, fmt)
    except IngestError as exc:
        raise StageError("ingest", exc) from exc
    if not files:
        raise StageError("ingest", EmptyDataset("no annotation files found in the inputs"))

    def do_ingest():
        label_map = ingest.load_label_map(label_map_path) if label_map_path else None
        kept, report = ingest_files(files, fmt, label_map, cfg.max_objects)
        if not kept:
            raise EmptyDataset("every image was skipped at ingest")
        write_json(paths["canonical"], ingest.write_canonical(kept))
        write_json(paths["report"], report)

    ingest_key = _digest(
        "ingest", fmt, cfg.max_objects, [f.name for f in files], *[f.read_bytes() for f in files],
        _file_bytes(label_map_path),
    )
    stage("ingest", ingest_key, [paths["canonical"], paths["report"]], do_ingest)

    def do_analyze():
        images = ingest.parse_canonical(read_json(paths["canonical"]))
        stats, scenes = analyze(images, cfg)
        stats.save(paths["threshold"])
        write_jsonl(paths["scenes"], [s.to_dict() for s in scenes])

    analyze_cfg = {k: cfg_doc[k] for k in ("percentile", "penalty_scale", "penalty", "threshold", "tol_factor",
                                           "gap_tol_deg", "near_factor")}
    analyze_key = _digest("analyze", analyze_cfg, paths["canonical"].read_bytes())
    stage("analyze", analyze_key, [paths["threshold"], paths["scenes"]], do_analyze)

    def do_caption():
        scenes = [SceneDescription.from_dict(r) for r in read_jsonl(paths["scenes"])]
        write_jsonl(paths["captions"], caption_scenes(scenes, cfg))

    # file contents are hashed below; paths only record whether each is set
    caption_cfg = {"llm": cfg_doc["llm"], "exemplars": cfg.exemplars is not None,
                   "mock": cfg.mock_responses is not None}
    caption_key = _digest(
        "caption", caption_cfg, paths["scenes"].read_bytes(), _file_bytes(cfg.mock_responses),
        _file_bytes(cfg.exemplars),
    )
    stage("caption", caption_key, [paths["captions"]], do_caption)

    def do_select():
        write_jsonl(paths["selected"], select_stage(read_jsonl(paths["captions"]), cfg))

    select_cfg = {k: cfg_doc[k] for k in ("wq", "wd", "k", "scorer")}
    select_key = _digest("select", select_cfg, paths["captions"].read_bytes())
    stage("select", select_key, [paths["selected"]], do_select)
    return status
