"""Command-line entry point.

Subcommands: ``match`` (evaluate detections against ground truth),
``bounds`` (per-category AP upper bounds over all candidate relations),
``capacity`` (per error type, how well any relation separates strong true
from strong false detections), ``oracle`` (ranking heuristic versus the
exact ordering search), and ``synth`` (synthetic dataset generation).

Exit codes: 0 success, 2 input or usage error, 3 nothing analyzable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .ap import ap_general_exact, build_bins, heuristic_rank, permutation_oracle
from .bounds import SearchConfig, analyze_bundle, iou_sweep
from .capacity import InsufficientSamples, max_capacity, select_balanced
from .dataset import (
    DatasetError,
    group_objects_by_image,
    load_bundle,
    validate_bundle,
    write_detections,
    write_ground_truth,
)
from .matching import ErrorType, MatchConfig, evaluate_bundle
from .relations import SpatialFrameConfig, eval_relation, relation_string
from .report import (
    RunManifest,
    csv_body,
    format_ap,
    format_ratio,
    render_csv,
    render_json,
    write_text,
)
from .synth import GenerationError, generate, parse_config_text

_ERROR_TYPE_ORDER = (
    ErrorType.BACKGROUND,
    ErrorType.CLASS_CONFUSION,
    ErrorType.LOCALIZATION,
)


def _parse_iou_list(raw: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in raw.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad IoU list {raw!r}") from exc
    if not values or any(not 0 < v <= 1 for v in values):
        raise argparse.ArgumentTypeError("IoU thresholds must be in (0, 1]")
    return values


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gt", required=True, help="ground-truth annotation JSON file")
    p.add_argument("--det", required=True, help="detection JSON file")


def _add_analysis_args(p: argparse.ArgumentParser, default_bins: int = 10) -> None:
    p.add_argument("--iou", type=_parse_iou_list, default=(0.5,),
                   help="comma-separated IoU thresholds (default 0.5)")
    p.add_argument("--bins", type=int, default=default_bins,
                   help=f"confidence bins per category (default {default_bins})")
    p.add_argument("--grid", type=int, default=3,
                   help="spatial grid extent; cells span [-G, G] (default 3)")
    p.add_argument("--height-factor", type=float, default=1.0,
                   help="spatial cell size as a multiple of detection height")
    p.add_argument("--top-k", type=int, default=50,
                   help="atoms composed into and/or pairs (default 50)")
    p.add_argument("--trials", type=int, default=10,
                   help="random-context trials (default 10)")
    p.add_argument("--seed", type=int, default=0, help="base seed for random context")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None,
                   help="report file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _search_config(args) -> SearchConfig:
    return SearchConfig(
        m1=args.bins,
        iou_threshold=args.iou[0],
        top_k=args.top_k,
        random_trials=args.trials,
        random_seed=args.seed,
        spatial=SpatialFrameConfig(args.height_factor, args.grid),
    )


def _config_echo(args, thresholds) -> dict:
    return {
        "iou": ",".join(str(v) for v in thresholds),
        "bins": args.bins,
        "grid": args.grid,
        "height_factor": args.height_factor,
        "top_k": args.top_k,
        "trials": args.trials,
        "seed": args.seed,
    }


def _load_validated(args):
    bundle = load_bundle(args.gt, args.det)
    issues = validate_bundle(bundle)
    if issues:
        for issue in issues:
            print(f"error: {issue}", file=sys.stderr)
        raise DatasetError(f"{len(issues)} validation issue(s) in input files")
    return bundle


def _emit(args, text: str) -> None:
    if args.out is not None:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_match(args) -> int:
    bundle = _load_validated(args)
    cfg = MatchConfig(iou_threshold=args.iou[0])
    evaluated = evaluate_bundle(bundle, cfg)

    counts: dict[str, dict[str, int]] = {
        c: {"detections": 0, "true": 0, "localization": 0,
            "class_confusion": 0, "background": 0}
        for c in bundle.categories
    }
    objects: dict[str, int] = {c: 0 for c in bundle.categories}
    for obj in bundle.objects:
        objects[obj.category] += 1
    for ev in evaluated:
        row = counts[ev.detection.category]
        row["detections"] += 1
        if ev.is_true:
            row["true"] += 1
        else:
            row[ev.error_type.value] += 1

    if args.out is not None:
        dump = []
        for ev in evaluated:
            det = ev.detection
            entry = {
                "image_id": det.image_id,
                "category_id": bundle.category_ids[det.category],
                "bbox": [det.box.x, det.box.y, det.box.w, det.box.h],
                "score": det.confidence,
                "status": "true" if ev.is_true else "false",
            }
            if not ev.is_true:
                entry["error_type"] = ev.error_type.value
            if ev.matched_object is not None:
                entry["matched_gt"] = ev.matched_object
            dump.append(entry)
        write_text(args.out, json.dumps(dump, indent=1) + "\n")

    header = ("category", "detections", "objects", "true",
              "localization", "class_confusion", "background")
    widths = [max(len(h), 14) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for category in sorted(bundle.categories):
        row = counts[category]
        cells = (category, row["detections"], objects[category], row["true"],
                 row["localization"], row["class_confusion"], row["background"])
        print("  ".join(str(c).ljust(w) for c, w in zip(cells, widths)))
    return 0


def cmd_bounds(args) -> int:
    bundle = _load_validated(args)
    cfg = _search_config(args)
    thresholds = args.iou
    sweep = iou_sweep(bundle, cfg, thresholds)

    for threshold in thresholds:
        for category, reason in sorted(sweep.skipped[threshold].items()):
            print(f"note: {category} at iou {threshold}: skipped ({reason})",
                  file=sys.stderr)
    if all(not sweep.analyses[t] for t in thresholds):
        print("error: no category is analyzable", file=sys.stderr)
        return 3

    manifest = RunManifest.create(
        "bounds", _config_echo(args, thresholds),
        [("gt", args.gt), ("det", args.det)],
    )

    if args.format == "json":
        payload = []
        for threshold in thresholds:
            for category in sorted(sweep.analyses[threshold]):
                a = sweep.analyses[threshold][category]
                payload.append({
                    "category": category,
                    "iou": threshold,
                    "pos": a.pos,
                    "best_relation": relation_string(a.best.relation),
                    "ap_bound": a.best.ap_bound,
                    "baseline_bound": a.baseline,
                    "improvement": a.best.improvement,
                    "random_mean": a.random.mean,
                    "random_trials": list(a.random.trials),
                    "degraded": a.degraded,
                })
        _emit(args, render_json(manifest, payload))
    else:
        fields = ("category", "iou", "best_relation", "ap_bound",
                  "baseline_bound", "improvement", "random_mean", "degraded")
        rows = []
        for threshold in thresholds:
            for category in sorted(sweep.analyses[threshold]):
                a = sweep.analyses[threshold][category]
                rows.append({
                    "category": category,
                    "iou": threshold,
                    "best_relation": relation_string(a.best.relation),
                    "ap_bound": format_ap(a.best.ap_bound),
                    "baseline_bound": format_ap(a.baseline),
                    "improvement": format_ap(a.best.improvement),
                    "random_mean": format_ratio(a.random.mean),
                    "degraded": int(a.degraded),
                })
        _emit(args, render_csv(manifest, fields, rows))

    plot_path = args.plot_out
    if plot_path is None and args.out is not None:
        plot_path = args.out.with_suffix(".plot.csv")
    if plot_path is not None:
        primary = thresholds[0]
        fields = ["category"]
        fields += [f"improvement@{t}" for t in thresholds]
        fields.append("random_mean")
        ordered = sorted(
            sweep.analyses[primary],
            key=lambda c: (-sweep.analyses[primary][c].best.improvement, c),
        )
        rows = []
        for category in ordered:
            row = {"category": category}
            for threshold in thresholds:
                a = sweep.analyses[threshold].get(category)
                row[f"improvement@{threshold}"] = (
                    format_ap(a.best.improvement) if a else "n/a"
                )
            row["random_mean"] = format_ratio(
                sweep.analyses[primary][category].random.mean
            )
            rows.append(row)
        write_text(plot_path, render_csv(manifest, fields, rows))
    return 0


def cmd_capacity(args) -> int:
    bundle = _load_validated(args)
    cfg = _search_config(args)
    analyses, skipped = analyze_bundle(bundle, cfg)
    for category, reason in sorted(skipped.items()):
        print(f"note: {category}: skipped ({reason})", file=sys.stderr)
    if not analyses:
        print("error: no category is analyzable", file=sys.stderr)
        return 3

    evaluated = evaluate_bundle(bundle, MatchConfig(cfg.iou_threshold))
    by_category: dict[str, list] = {}
    for ev in evaluated:
        by_category.setdefault(ev.detection.category, []).append(ev)
    objects_by_image = group_objects_by_image(bundle.objects)

    manifest = RunManifest.create(
        "capacity", _config_echo(args, args.iou),
        [("gt", args.gt), ("det", args.det)],
    )
    rows = []
    payload = []
    for category in sorted(analyses):
        pool = analyses[category].relations()
        dets = by_category.get(category, [])
        for error_type in _ERROR_TYPE_ORDER:
            try:
                result = max_capacity(
                    category, dets, pool, error_type, objects_by_image, cfg.spatial
                )
                rows.append({
                    "category": category,
                    "error_type": error_type.value,
                    "n": result.n,
                    "accuracy": format_ratio(result.accuracy),
                    "best_relation": relation_string(result.relation),
                })
                payload.append({
                    "category": category,
                    "error_type": error_type.value,
                    "n": result.n,
                    "accuracy": result.accuracy,
                    "best_relation": relation_string(result.relation),
                })
            except InsufficientSamples:
                rows.append({
                    "category": category, "error_type": error_type.value,
                    "n": 0, "accuracy": "n/a", "best_relation": "n/a",
                })
                payload.append({
                    "category": category, "error_type": error_type.value,
                    "n": 0, "accuracy": None, "best_relation": None,
                })

    if args.format == "json":
        _emit(args, render_json(manifest, payload))
    else:
        fields = ("category", "error_type", "n", "accuracy", "best_relation")
        _emit(args, render_csv(manifest, fields, rows))
    return 0


def cmd_oracle(args) -> int:
    if args.bins > 5:
        print(
            f"error: oracle needs --bins of at most 5 (binary context doubles "
            f"the bin count); got {args.bins}",
            file=sys.stderr,
        )
        return 2
    bundle = _load_validated(args)
    cfg = _search_config(args)
    analyses, skipped = analyze_bundle(bundle, cfg)
    for category, reason in sorted(skipped.items()):
        print(f"note: {category}: skipped ({reason})", file=sys.stderr)
    if not analyses:
        print("error: no category is analyzable", file=sys.stderr)
        return 3

    evaluated = evaluate_bundle(bundle, MatchConfig(cfg.iou_threshold))
    by_category: dict[str, list] = {}
    for ev in evaluated:
        by_category.setdefault(ev.detection.category, []).append(ev)
    objects_by_image = group_objects_by_image(bundle.objects)

    manifest = RunManifest.create(
        "oracle", _config_echo(args, args.iou),
        [("gt", args.gt), ("det", args.det)],
    )
    rows = []
    payload = []
    for category in sorted(analyses):
        analysis = analyses[category]
        best = analysis.best
        triples = [
            (
                d.detection.confidence,
                d.is_true,
                eval_relation(
                    best.relation, d,
                    objects_by_image.get(d.detection.image_id, ()),
                    cfg.spatial,
                ),
            )
            for d in by_category.get(category, [])
        ]
        grid = build_bins(triples, cfg.m1, analysis.pos, "binary")
        ranked = heuristic_rank(grid)
        ordering, oracle_ap = permutation_oracle(grid)
        heuristic_exact = ap_general_exact(ranked.bins, analysis.pos)
        oracle_exact = ap_general_exact(
            [grid.bins[i] for i in ordering], analysis.pos
        )
        gap = oracle_exact - heuristic_exact
        assert gap >= 0, "exact ordering search fell below the heuristic"
        rows.append({
            "category": category,
            "best_relation": relation_string(best.relation),
            "heuristic_ap": format_ap(float(heuristic_exact)),
            "oracle_ap": format_ap(oracle_ap),
            "gap": format_ratio(float(gap)),
        })
        payload.append({
            "category": category,
            "best_relation": relation_string(best.relation),
            "heuristic_ap": float(heuristic_exact),
            "oracle_ap": float(oracle_exact),
            "gap": float(gap),
            "oracle_ordering": list(ordering),
        })

    if args.format == "json":
        _emit(args, render_json(manifest, payload))
    else:
        fields = ("category", "best_relation", "heuristic_ap", "oracle_ap", "gap")
        _emit(args, render_csv(manifest, fields, rows))
    return 0


def cmd_synth(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config_text(text)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    bundle = generate(cfg)
    write_ground_truth(bundle, args.out_gt)
    write_detections(bundle, args.out_det)
    print(
        f"generated {len(bundle.images)} images, {len(bundle.objects)} objects, "
        f"{len(bundle.detections)} detections "
        f"({', '.join(bundle.categories)}; seed {cfg.seed})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxbound",
        description="Upper bounds on AP improvement from contextual relations.",
    )
    parser.add_argument("--version", action="version", version=f"ctxbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match detections and tabulate error types")
    _add_input_args(p)
    p.add_argument("--iou", type=_parse_iou_list, default=(0.5,))
    p.add_argument("--out", type=Path, default=None,
                   help="write the evaluated-detection JSON dump here")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("bounds", help="per-category AP upper bounds and best relations")
    _add_input_args(p)
    _add_analysis_args(p)
    _add_output_args(p)
    p.add_argument("--plot-out", type=Path, default=None,
                   help="plot-data CSV (default: <out>.plot.csv when --out is set)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("capacity", help="classification capacity per error type")
    _add_input_args(p)
    _add_analysis_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("oracle", help="heuristic ranking versus exact ordering search")
    _add_input_args(p)
    _add_analysis_args(p, default_bins=5)
    _add_output_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="flat key-value config file")
    p.add_argument("--out-gt", type=Path, required=True)
    p.add_argument("--out-det", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, GenerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
