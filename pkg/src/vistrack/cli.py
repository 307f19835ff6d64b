"""Command-line interface: the pipeline as composable subcommands over the
interchange files, plus a one-shot end-to-end mode.

Every subcommand is a pure function of its input files, flags and seed;
re-running produces byte-identical outputs, also with --jobs > 1 (per-video
work is independent and results are canonicalized by video id).

Exit codes: 0 success, 1 validation failures found, 2 I/O or schema errors
(argparse itself exits 2 on unknown flags).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .evaluate import eval_f1, eval_vis
from .labeling import assign_labels, score_filter
from .pmf import (
    DEFAULT_CLUSTER_DIVISOR,
    DEFAULT_MAX_K,
    build_bank,
    default_k_rule,
    pmf_filter,
)
from .synth import SynthConfig, generate
from .tracking import frames_from_detections, run_video, track_baseline
from .types import Manifest
from .validate import validate_dataset

# config keys mirror flag names; "lambda" is a Python keyword so its
# argparse destination differs
_CONFIG_DEST = {"lambda": "blend"}


def main(argv=None) -> int:
    try:
        parser, subparsers = _build_parser()
        argv = sys.argv[1:] if argv is None else list(argv)
        _apply_config_defaults(argv, subparsers)
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_help()
            return 2
        return args.func(args)
    except (io.SchemaError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _apply_config_defaults(argv, subparsers) -> None:
    if argv and argv[0] == "synth":
        return  # synth's --config holds generator settings, not flag defaults
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    pre, _ = probe.parse_known_args(argv)
    if not pre.config:
        return
    cfg = io._load_json(pre.config, "config")
    if not isinstance(cfg, dict):
        raise io.SchemaError(f"config file {pre.config} must hold a JSON object")
    known = set()
    for sub in subparsers.values():
        for action in sub._actions:
            known.add(action.dest)
    defaults = {}
    for key, value in cfg.items():
        dest = _CONFIG_DEST.get(key, key.replace("-", "_"))
        if dest not in known:
            raise io.SchemaError(f"config key {key!r} does not mirror any flag")
        defaults[dest] = value
    for sub in subparsers.values():
        sub.set_defaults(**{k: v for k, v in defaults.items() if any(a.dest == k for a in sub._actions)})


def _build_parser():
    parser = argparse.ArgumentParser(prog="vistrack")
    sub = parser.add_subparsers(dest="command")
    subparsers = {}

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file whose keys mirror flag names; flags override")
        subparsers[name] = p
        return p

    p = add("validate", "check every dataset invariant")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth")
    p.add_argument("--class-table")
    p.set_defaults(func=_cmd_validate)

    p = add("label", "assign class labels from the class table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--class-table", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_label)

    p = add("filter", "score-threshold and prototype-memory filtering")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--objectness-min", type=float, default=0.7)
    p.add_argument("--class-score-min", type=float, default=0.7)
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pmf-cluster-divisor", type=int, default=DEFAULT_CLUSTER_DIVISOR)
    p.add_argument("--pmf-max-k", type=int, default=DEFAULT_MAX_K)
    p.add_argument("--no-score-filter", action="store_true")
    p.add_argument("--no-pmf", action="store_true")
    p.add_argument("--bank-out", help="write the prototype bank JSON here")
    p.set_defaults(func=_cmd_filter)

    for name, fn in (("track", _cmd_track), ("baseline", _cmd_baseline)):
        p = add(name, "link per-frame instances into tracklets")
        p.add_argument("--manifest", required=True)
        p.add_argument("--detections", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--jobs", type=int, default=1)
        if name == "track":
            p.add_argument("--lambda", dest="blend", type=float, default=0.5)
            p.add_argument("--num-slots", type=int, default=100)
            p.add_argument("--top-k", type=int, default=10)
            p.add_argument(
                "--hold-last-embedding",
                action=argparse.BooleanOptionalAction,
                default=True,
            )
        else:
            p.add_argument("--appearance-weight", type=float, default=1.0)
            p.add_argument("--iou-weight", type=float, default=1.0)
            p.add_argument("--max-age", type=int, default=5)
        p.set_defaults(func=fn)

    p = add("eval", "AP/AR of tracklets against ground-truth tracks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracklets", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out")
    p.add_argument("--ignore-class", action="store_true")
    p.add_argument("--text", action="store_true", help="print an aligned table instead of JSON")
    p.set_defaults(func=_cmd_eval)

    p = add("f1", "pseudo-label F1 against per-frame ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--f1-iou", type=float, default=0.5)
    p.add_argument("--ignore-class", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_f1)

    # synth's --config is the generator settings file, not flag defaults
    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--config", help="JSON file of generator settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_synth)
    subparsers["synth"] = p

    p = add("e2e", "label -> filter -> track -> eval in one shot")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--class-table", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--objectness-min", type=float, default=0.7)
    p.add_argument("--class-score-min", type=float, default=0.7)
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pmf-cluster-divisor", type=int, default=DEFAULT_CLUSTER_DIVISOR)
    p.add_argument("--pmf-max-k", type=int, default=DEFAULT_MAX_K)
    p.add_argument("--lambda", dest="blend", type=float, default=0.5)
    p.add_argument("--num-slots", type=int, default=100)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--hold-last-embedding", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_e2e)

    return parser, subparsers


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args) -> int:
    manifest = io.load_manifest(args.manifest)
    detections = io.read_detections(args.detections)
    gt = io.read_ground_truth(args.ground_truth) if args.ground_truth else None
    table = io.load_class_table(args.class_table) if args.class_table else None
    report = validate_dataset(manifest, detections, gt, table)
    for v in report.violations:
        print(f"{v.locator}: {v.message}")
    if report.ok:
        print("OK: dataset valid")
        return 0
    print(f"{len(report)} violation(s) found", file=sys.stderr)
    return 1


def _cmd_label(args) -> int:
    manifest = io.load_manifest(args.manifest)
    table = io.load_class_table(args.class_table)
    if table.dim != manifest.embedding_dim:
        raise ValueError(
            f"class table dimension {table.dim} does not match manifest {manifest.embedding_dim}"
        )
    records = io.read_detections(args.detections)
    io.write_detections(assign_labels(records, table), args.out)
    print(f"labeled {len(records)} detections -> {args.out}", file=sys.stderr)
    return 0


def _cmd_filter(args) -> int:
    io.load_manifest(args.manifest)
    records = io.read_detections(args.detections)
    kept = list(records)
    if not args.no_score_filter:
        kept = list(score_filter(kept, args.objectness_min, args.class_score_min))
    if not args.no_pmf:
        rule = default_k_rule(args.pmf_cluster_divisor, args.pmf_max_k)
        bank = build_bank(kept, rule, seed=args.seed)
        if args.bank_out:
            bank.save(args.bank_out)
        kept = list(pmf_filter(kept, bank, tau=args.tau))
    io.write_detections(kept, args.out)
    print(f"kept {len(kept)}/{len(records)} detections -> {args.out}", file=sys.stderr)
    return 0


def _track_one_video(payload):
    video, records, kwargs = payload
    frames = frames_from_detections(records, video)
    return run_video(
        frames,
        kwargs["num_slots"],
        kwargs["blend"],
        kwargs["top_k"],
        video_id=video.video_id,
        dim=kwargs["dim"],
        hold_last=kwargs["hold_last"],
    )


def _baseline_one_video(payload):
    video, records, kwargs = payload
    frames = frames_from_detections(records, video)
    return track_baseline(
        frames,
        kwargs["appearance_weight"],
        kwargs["iou_weight"],
        kwargs["max_age"],
        video_id=video.video_id,
    )


def _per_video(manifest: Manifest, records):
    by_video = {v.video_id: [] for v in manifest.videos}
    for rec in records:
        if rec.video_id not in by_video:
            raise ValueError(f"detection references unknown video {rec.video_id!r}")
        by_video[rec.video_id].append(rec)
    return [(manifest.video(vid), by_video[vid]) for vid in sorted(by_video)]


def _map_jobs(fn, payloads, jobs: int):
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, payloads))
    return [fn(p) for p in payloads]


def _cmd_track(args) -> int:
    manifest = io.load_manifest(args.manifest)
    records = io.read_detections(args.detections)
    kwargs = {
        "num_slots": args.num_slots,
        "blend": args.blend,
        "top_k": args.top_k,
        "dim": manifest.embedding_dim,
        "hold_last": args.hold_last_embedding,
    }
    payloads = [(video, recs, kwargs) for video, recs in _per_video(manifest, records)]
    results = _map_jobs(_track_one_video, payloads, args.jobs)
    tracklets = [t for group in results for t in group]
    io.write_tracklets(tracklets, args.out)
    print(f"tracked {len(tracklets)} tracklets -> {args.out}", file=sys.stderr)
    return 0


def _cmd_baseline(args) -> int:
    manifest = io.load_manifest(args.manifest)
    records = io.read_detections(args.detections)
    kwargs = {
        "appearance_weight": args.appearance_weight,
        "iou_weight": args.iou_weight,
        "max_age": args.max_age,
    }
    payloads = [(video, recs, kwargs) for video, recs in _per_video(manifest, records)]
    results = _map_jobs(_baseline_one_video, payloads, args.jobs)
    tracklets = [t for group in results for t in group]
    io.write_tracklets(tracklets, args.out)
    print(f"tracked {len(tracklets)} tracklets -> {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    manifest = io.load_manifest(args.manifest)
    preds = io.read_tracklets(args.tracklets)
    gt = io.read_ground_truth(args.ground_truth)
    report = eval_vis(preds, gt, manifest, ignore_class=args.ignore_class)
    payload = json.dumps(report.to_json(manifest.class_names), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    if args.text:
        print(report.text_table(manifest.class_names))
    else:
        print(payload)
    return 0


def _cmd_f1(args) -> int:
    manifest = io.load_manifest(args.manifest)
    dets = io.read_detections(args.detections)
    gt = io.read_ground_truth(args.ground_truth)
    report = eval_f1(dets, gt, iou_min=args.f1_iou, ignore_class=args.ignore_class)
    payload = json.dumps(report.to_json(manifest.class_names), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_synth(args) -> int:
    if args.config:
        cfg = SynthConfig.from_json(io._load_json(args.config, "synth config"))
    else:
        cfg = SynthConfig()
    dataset = generate(cfg, args.seed, jobs=args.jobs)
    dataset.write(args.out)
    print(
        f"wrote {len(dataset.detections)} detections, "
        f"{len(dataset.ground_truth)} ground-truth records -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_e2e(args) -> int:
    manifest = io.load_manifest(args.manifest)
    table = io.load_class_table(args.class_table)
    records = io.read_detections(args.detections)
    gt = io.read_ground_truth(args.ground_truth)

    labeled = list(assign_labels(records, table))
    print(f"stage label: {len(labeled)} detections", file=sys.stderr)
    scored = list(score_filter(labeled, args.objectness_min, args.class_score_min))
    print(f"stage score-filter: kept {len(scored)}", file=sys.stderr)
    rule = default_k_rule(args.pmf_cluster_divisor, args.pmf_max_k)
    bank = build_bank(scored, rule, seed=args.seed)
    filtered = list(pmf_filter(scored, bank, tau=args.tau))
    print(f"stage pmf-filter: kept {len(filtered)}", file=sys.stderr)
    kwargs = {
        "num_slots": args.num_slots,
        "blend": args.blend,
        "top_k": args.top_k,
        "dim": manifest.embedding_dim,
        "hold_last": args.hold_last_embedding,
    }
    payloads = [(video, recs, kwargs) for video, recs in _per_video(manifest, filtered)]
    results = _map_jobs(_track_one_video, payloads, args.jobs)
    tracklets = [t for group in results for t in group]
    print(f"stage track: {len(tracklets)} tracklets", file=sys.stderr)
    report = eval_vis(tracklets, gt, manifest)
    payload = json.dumps(report.to_json(manifest.class_names), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
