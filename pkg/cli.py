"""Command-line surface: assign, sweep, compare, synth, nms-demo and runs."""

import argparse
from dataclasses import replace
import json
import logging
import os
import sys

import pytz

from config import OUTPUT_FORMATS, Settings, build_run_config, load_config_file, merge_values, parse_float_list
from models.anchor_models import parse_aspect_ratio
from models.assignment_models import STRATEGIES
from models.box_models import BBox, Detection
from models.dataset_models import LoadedDataset
from sampling.errors import ConfigError, DataError, SamplingError
from sampling.geometry import NMS_IOU_THRESHOLD, NMS_POST_TOPK, NMS_PRE_TOPK, NMS_SCORE_FLOOR, nms
from sampling.ingest import load_coco, parse_coco, resize_dataset
from sampling.report import SWEEP_PARAMETERS, compare_strategies, report_config, run_sweep, summarize, write_json
from sampling.runner import assign_dataset
from sampling.synth import SyntheticSpec, generate_corpus, write_corpus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

# Flags that override values from the config file
OVERRIDE_FLAGS = (
    "dataset", "synthetic", "strategy", "k", "theta_p", "theta_n", "force_best_match", "scale_ranges",
    "anchor_scale", "aspect_ratios", "scales_per_octave", "strides", "resize_shorter", "resize_longer",
    "out", "format", "seed", "workers",
)


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse that reports usage errors instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _data_options():
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("data")
    group.add_argument("--dataset", help="COCO instance-annotation JSON file")
    group.add_argument("--synthetic", help="synthetic corpus, e.g. 'seed=1,images=1000,boxes=5,min_size=16,max_size=512'")
    group.add_argument("--resize-shorter", dest="resize_shorter", help="shorter image side after resize (800)")
    group.add_argument("--resize-longer", dest="resize_longer", help="longer side cap after resize (1333)")
    group.add_argument("--seed", help="seed of every random choice in the run (0)")
    return parent


def _assign_options():
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("assignment")
    group.add_argument("--strategy", help=f"label-assignment strategy: {', '.join(STRATEGIES)} (atss)")
    group.add_argument("--k", help="ATSS candidates per pyramid level (9)")
    group.add_argument("--theta-p", dest="theta_p", help="IoU strategy positive threshold (0.5)")
    group.add_argument("--theta-n", dest="theta_n", help="IoU strategy negative threshold (0.4)")
    group.add_argument("--no-force-best-match", dest="force_best_match", action="store_const", const=False,
                       help="do not force each GT's best anchor positive (IoU strategy)")
    group.add_argument("--scale-ranges", dest="scale_ranges", help="regression-range boundaries, e.g. '0,64,128,256,512,inf'")
    group.add_argument("--anchor-scale", dest="anchor_scale", help="anchor side as a multiple of the stride (8)")
    group.add_argument("--aspect-ratios", dest="aspect_ratios", help="anchor aspect ratios w:h, e.g. '1:2,1:1,2:1'")
    group.add_argument("--scales-per-octave", dest="scales_per_octave", help="anchor scales per octave (1)")
    group.add_argument("--strides", help="pyramid strides (8,16,32,64,128)")
    return parent


def _output_options():
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("output")
    group.add_argument("--out", help="output directory (out)")
    group.add_argument("--format", help=f"comma list of {', '.join(OUTPUT_FORMATS)} (all)")
    group.add_argument("--workers", help="worker threads over images (ASSIGN_WORKERS or 1)")
    group.add_argument("--config", help="JSON run config; flags override its values")
    group.add_argument("--ledger", help="SQLAlchemy URL of the run ledger (LEDGER_URL)")
    return parent


def build_parser():
    parser = CliParser(prog="main.py", description="Training-sample label assignment for object detectors.")
    subparsers = parser.add_subparsers(dest="command", parser_class=CliParser)
    data, assign, output = _data_options(), _assign_options(), _output_options()

    subparsers.add_parser("assign", parents=[data, assign, output], help="run one strategy and write its report")

    sweep = subparsers.add_parser("sweep", parents=[data, assign, output], help="one report row per parameter value")
    sweep.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    sweep.add_argument("--values", required=True, help="comma list of values, e.g. '3,5,7' or '1:2,1:1,2:1'")

    compare = subparsers.add_parser("compare", parents=[data, assign, output], help="pairwise agreement of strategies")
    compare.add_argument("--strategies", default=",".join(STRATEGIES), help="comma list of strategies (all)")

    subparsers.add_parser("synth", parents=[data, output], help="write a synthetic COCO corpus")

    demo = subparsers.add_parser("nms-demo", parents=[output], help="per-category NMS over a detections file")
    demo.add_argument("--detections", required=True,
                      help="JSON list of {bbox: [x1, y1, x2, y2], score, category_id, level?}")
    demo.add_argument("--iou-threshold", dest="iou_threshold", type=float, default=NMS_IOU_THRESHOLD)
    demo.add_argument("--score-floor", dest="score_floor", type=float, default=NMS_SCORE_FLOOR)
    demo.add_argument("--pre-topk", dest="pre_topk", type=int, default=NMS_PRE_TOPK)
    demo.add_argument("--post-topk", dest="post_topk", type=int, default=NMS_POST_TOPK)

    runs = subparsers.add_parser("runs", help="list the latest run-ledger entries")
    runs.add_argument("--ledger", help="SQLAlchemy URL of the run ledger (LEDGER_URL)")
    runs.add_argument("--limit", type=int, default=20)
    return parser


def _run_config(args, settings, require_source=True):
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flag_values = {key: getattr(args, key, None) for key in OVERRIDE_FLAGS}
    return build_run_config(merge_values(file_values, flag_values), settings, require_source=require_source)


def load_images(config):
    """Images of the configured source, resized to the run's policy."""
    if config.synthetic is not None:
        dataset = parse_coco(generate_corpus(config.synthetic), source="synthetic corpus")
    else:
        dataset = load_coco(config.dataset)
    dataset = resize_dataset(dataset, config.resize)
    if dataset.dropped_by_resize:
        logger.warning(f"{dataset.dropped_by_resize} boxes lost their area in the resize and were dropped")
    return dataset


def _off_grid_images(dataset: LoadedDataset, pyramid):
    return sum(
        1 for img in dataset.images
        if any(img.resized_width % s or img.resized_height % s for s in pyramid.strides)
    )


def _dataset_notes(dataset: LoadedDataset, pyramid):
    notes = [
        f"annotations: {dataset.raw_annotation_count} read, {dataset.dropped_crowd} crowd, "
        f"{dataset.dropped_degenerate} degenerate and {dataset.dropped_by_resize} clipped away",
    ]
    off_grid = _off_grid_images(dataset, pyramid)
    if off_grid:
        notes.append(
            f"anchors are not clipped: {off_grid} of {len(dataset.images)} images have a side that is not a "
            "multiple of every stride, so the last row or column of centres there can sit up to S/2 outside the image"
        )
    return tuple(notes)


def _write_outputs(result, out_dir, stem, formats):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, f"{stem}.json")
        write_json(result.to_dict(), path)
        written.append(path)
    if "txt" in formats:
        path = os.path.join(out_dir, f"{stem}.txt")
        with open(path, "w", encoding="utf-8") as f:
            f.write(result.to_text())
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, f"{stem}.csv")
        result.write_csv(path)
        written.append(path)
    for path in written:
        logger.info(f"Wrote {path}")
    return written


def cmd_assign(args, settings):
    config = _run_config(args, settings)
    dataset = load_images(config)
    assignments = assign_dataset(dataset.images, config.pyramid, config.assign, workers=config.workers)
    cfg = report_config(config.pyramid, config.assign)
    cfg["source"] = config.source()
    report = summarize(assignments, config.assign.strategy, cfg, notes=_dataset_notes(dataset, config.pyramid))

    _write_outputs(report, config.out, "report", config.formats)
    return config, report


def _sweep_values(param, text):
    items = [v.strip() for v in str(text).split(",") if v.strip()]
    if not items:
        raise ConfigError("values", "at least one sweep value is required")
    if param == "aspect_ratio":
        return [parse_aspect_ratio(v) for v in items]
    values = parse_float_list(items, "values")
    if param == "k" and any(not v.is_integer() for v in values):
        raise ConfigError("values", f"k values must be integers, got '{text}'")
    return list(values)


def cmd_sweep(args, settings):
    config = _run_config(args, settings)
    values = _sweep_values(args.param, args.values)
    dataset = load_images(config)
    table = run_sweep(dataset.images, config.pyramid, config.assign, args.param, values, workers=config.workers)
    _write_outputs(table, config.out, "sweep", config.formats)
    return config, None


def cmd_compare(args, settings):
    config = _run_config(args, settings)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in names if s not in STRATEGIES]
    if unknown or len(names) < 2 or len(set(names)) != len(names):
        raise ConfigError("strategies", f"need two or more distinct strategies among {', '.join(STRATEGIES)}, got '{args.strategies}'")
    configs = {}
    for name in names:
        strategy_config = replace(config.assign, strategy=name)
        strategy_config.validate(config.pyramid.num_levels)
        configs[name] = strategy_config
    dataset = load_images(config)
    record = compare_strategies(dataset.images, config.pyramid, configs, workers=config.workers)
    _write_outputs(record, config.out, "comparison", config.formats)
    return config, None


def cmd_synth(args, settings):
    config = _run_config(args, settings, require_source=False)
    spec = config.synthetic or SyntheticSpec(seed=config.seed)
    os.makedirs(config.out, exist_ok=True)
    write_corpus(generate_corpus(spec), os.path.join(config.out, "synthetic_coco.json"))
    return config, None


def load_detections(path):
    if not os.path.exists(path):
        raise DataError(f"Detections file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed JSON in {path}: {e}")
    if not isinstance(raw, list):
        raise DataError(f"{path} must hold a JSON list of detections")
    dets = []
    for n, item in enumerate(raw):
        try:
            dets.append(Detection(
                box=BBox(*(float(v) for v in item["bbox"])),
                score=float(item["score"]),
                category=int(item["category_id"]),
                level=int(item.get("level", 0)),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed detection #{n} in {path}: {e}")
    return dets


def cmd_nms_demo(args, settings):
    if not 0.0 <= args.iou_threshold <= 1.0:
        raise ConfigError("iou_threshold", f"must lie in [0, 1], got {args.iou_threshold}")
    if args.pre_topk < 1 or args.post_topk < 1:
        raise ConfigError("pre_topk", f"top-k limits must be >= 1, got {args.pre_topk}/{args.post_topk}")
    out = args.out or "out"
    dets = load_detections(args.detections)
    kept = nms(dets, args.iou_threshold, args.score_floor, args.pre_topk, args.post_topk)
    logger.info(f"NMS kept {len(kept)} of {len(dets)} detections")
    os.makedirs(out, exist_ok=True)
    write_json(
        {
            "settings": {
                "iou_threshold": args.iou_threshold,
                "score_floor": args.score_floor,
                "pre_topk": args.pre_topk,
                "post_topk": args.post_topk,
            },
            "num_input": len(dets),
            "num_kept": len(kept),
            "detections": [d.to_dict() for d in kept],
        },
        os.path.join(out, "nms.json"),
    )
    return None, None


def cmd_runs(args, settings):
    from models.run_models import latest_runs

    url = args.ledger or settings.ledger_url
    if not url:
        raise ConfigError("ledger", "no run ledger configured (use --ledger or LEDGER_URL)")
    try:
        zone = pytz.timezone(settings.ledger_tz)
    except pytz.UnknownTimeZoneError:
        raise ConfigError("LEDGER_TZ", f"unknown time zone '{settings.ledger_tz}'")
    try:
        rows = latest_runs(url, args.limit)
    except Exception as e:
        logger.error(f"Cannot read run ledger at {url}: {str(e)}")
        raise DataError(f"Cannot read run ledger at {url}")

    for run in rows:
        created = run.created_at
        if created is not None and created.tzinfo is None:
            created = pytz.utc.localize(created)
        stamp = created.astimezone(zone).strftime("%Y-%m-%d %H:%M:%S %Z") if created else "-"
        mean = "-" if run.mean_positives is None else f"{run.mean_positives:.3f}"
        print(f"#{run.id:<5} {stamp}  {run.command:<8} {run.strategy or '-':<16} "
              f"images={run.num_images} gts={run.num_ground_truths} mean_pos={mean}")
    return None, None


COMMANDS = {
    "assign": cmd_assign,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "synth": cmd_synth,
    "nms-demo": cmd_nms_demo,
    "runs": cmd_runs,
}


def _record(args, settings, config, report):
    from models.run_models import record_run

    url = getattr(args, "ledger", None) or settings.ledger_url
    if not url or config is None:
        return
    record_run(
        url,
        command=args.command,
        config_json=config.to_json(),
        strategy=config.assign.strategy if args.command != "synth" else None,
        seed=config.seed,
        output_dir=os.path.abspath(config.out),
        report=report,
    )


def run(argv, settings=None) -> int:
    """Parse argv, run one subcommand and return the process exit status."""
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        settings = settings or Settings.from_env()
        config, report = COMMANDS[args.command](args, settings)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SamplingError) as e:
        logger.error(f"Data error: {e}")
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        # --out pointing at a file, no write permission
        logger.error(f"I/O error: {str(e)}")
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_DATA

    _record(args, settings, config, report)
    return EXIT_OK
