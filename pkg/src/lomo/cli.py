"""Command-line interface.

Subcommands: curate, eval-render, ratio-match, metrics {mir|pcd|decomp},
stats. Exit codes: 0 success, 1 runtime error, 2 usage error. Machine
output is JSON on stdout; a config file supplies defaults and explicit
flags win over it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import hsd, metrics
from .corpus import CurationManifest
from .pipeline import PipelineConfig, curate, match_modality_ratio, parse_ratio
from .render import RenderConfig
from .rendered_eval import transform_benchmark
from .segmentation import PositionMode


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return value


def _ratio(text: str) -> tuple[int, int]:
    try:
        return parse_ratio(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _emit(doc: dict, out: str | None) -> None:
    rendered = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(rendered + "\n", encoding="utf-8")
    else:
        print(rendered)


def _load_pipeline_config(args) -> PipelineConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = PipelineConfig.from_dict(json.load(fh))
    else:
        cfg = PipelineConfig()
    # explicit flags override the config file
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "rewrite_ratio", None) is not None:
        cfg.rewrite_ratio = args.rewrite_ratio
    if getattr(args, "position", None) is not None:
        cfg.position_mode = PositionMode.coerce(args.position)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "no_distortion", False):
        cfg.distortion_enabled = False
    if getattr(args, "lenient", False):
        cfg.lenient = True
    if getattr(args, "latex_cmd", None) is not None:
        cfg.render.latex_command_template = args.latex_cmd or None
    return cfg.validate()


def _render_config(args) -> RenderConfig:
    kwargs = {}
    if getattr(args, "font_size", None) is not None:
        kwargs["font_size"] = args.font_size
        if getattr(args, "line_height", None) is None:
            kwargs["line_height"] = max(args.font_size + 2, args.font_size)
    if getattr(args, "line_height", None) is not None:
        kwargs["line_height"] = args.line_height
    return RenderConfig(**kwargs)


def cmd_curate(args) -> int:
    cfg = _load_pipeline_config(args)
    manifest, stats = curate(args.infile, args.outfile, cfg)
    doc = stats.to_json()
    doc["counts"] = manifest.counts
    doc["manifest"] = str(Path(str(args.outfile) + ".manifest.json"))
    doc["count_identity"] = "OK" if manifest.check_count_identity() else "VIOLATED"
    _emit(doc, args.stats_out)
    return 0


def cmd_eval_render(args) -> int:
    manifest = transform_benchmark(args.infile, args.outfile, _render_config(args))
    _emit({"counts": manifest.counts, "manifest": str(Path(str(args.outfile) + ".manifest.json"))}, None)
    return 0


def cmd_ratio_match(args) -> int:
    if args.target is not None:
        target = args.target
    else:
        cfg = _load_pipeline_config(args)
        if cfg.target_image_text_ratio is None:
            print("error: no --target given and the config has no target_image_text_ratio", file=sys.stderr)
            return 2
        target = cfg.target_image_text_ratio
    manifest = match_modality_ratio(args.infile, args.outfile, target, args.seed or 0)
    _emit({"counts": manifest.counts, **manifest.extra}, None)
    return 0


def cmd_metrics_mir(args) -> int:
    report = metrics.mir(hsd.read_hsd(args.hsd))
    _emit({"mir": report.mir, "per_layer_fid": report.per_layer_fid}, args.out)
    return 0


def cmd_metrics_pcd(args) -> int:
    report = metrics.pairwise_cross_modal_distance(hsd.read_hsd(args.hsd), layer=args.layer)
    doc = {
        "layer": report.layer,
        "pcd_mean": report.mean,
        "pcd_per_sample": dict(zip(report.sample_ids, report.per_sample)),
        "pcd_histogram": metrics.quantile_histogram(report.per_sample, bins=args.bins),
    }
    _emit(doc, args.out)
    return 0


def cmd_metrics_decomp(args) -> int:
    with open(args.dist, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    answer_index = args.answer_index if args.answer_index is not None else doc.get("answer_index")
    if answer_index is None:
        print("error: answer index missing (give --answer-index or put answer_index in the file)", file=sys.stderr)
        return 2
    result = metrics.decomposition_check(doc["p_x"], doc["p_tx"], int(answer_index))
    _emit(dataclasses.asdict(result), args.out)
    return 0


def cmd_stats(args) -> int:
    manifest = CurationManifest.load(args.manifest)
    route_hist: dict[str, int] = {}
    family_hist: dict[str, int] = {}
    for record in manifest.per_instance_records:
        for r in record.get("routes", []):
            route_hist[r] = route_hist.get(r, 0) + 1
        for d in record.get("distortions", []):
            family_hist[d] = family_hist.get(d, 0) + 1
    identity_ok = manifest.check_count_identity()
    doc = {
        "counts": manifest.counts,
        "count_identity": "OK" if identity_ok else "VIOLATED",
        "route_histogram": dict(sorted(route_hist.items())),
        "distortion_histogram": dict(sorted(family_hist.items())),
    }
    if args.stats:
        with open(args.stats, "r", encoding="utf-8") as fh:
            run = json.load(fh)
        doc["instances_per_sec"] = run.get("instances_per_sec")
        doc["elapsed_seconds"] = run.get("elapsed_seconds")
    if args.format == "json":
        _emit(doc, None)
    else:
        print(f"count identity: {doc['count_identity']}")
        for key, value in manifest.counts.items():
            print(f"  {key:>24}: {value}")
        if route_hist:
            print("routes:")
            for key, value in sorted(route_hist.items()):
                print(f"  {key:>24}: {value}")
        if family_hist:
            print("distortions:")
            for key, value in sorted(family_hist.items()):
                print(f"  {key:>24}: {value}")
        if "instances_per_sec" in doc and doc["instances_per_sec"] is not None:
            print(f"throughput: {doc['instances_per_sec']} instances/sec")
    return 0 if identity_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lomo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cur = sub.add_parser("curate", help="rewrite a fraction of text-only instances into interleaved ones")
    cur.add_argument("--in", dest="infile", required=True)
    cur.add_argument("--out", dest="outfile", required=True)
    cur.add_argument("--config", help="JSON config file mirroring the pipeline configuration")
    cur.add_argument("--seed", type=int)
    cur.add_argument("--rewrite-ratio", dest="rewrite_ratio", type=_fraction)
    cur.add_argument("--position", choices=[m.value for m in PositionMode])
    cur.add_argument("--workers", type=_positive_int)
    cur.add_argument("--no-distortion", dest="no_distortion", action="store_true")
    cur.add_argument("--lenient", action="store_true", help="skip malformed corpus lines instead of aborting")
    cur.add_argument("--latex-cmd", dest="latex_cmd", help="external LaTeX command template")
    cur.add_argument("--stats-out", dest="stats_out", help="write the run stats JSON here instead of stdout")
    cur.set_defaults(func=cmd_curate)

    ev = sub.add_parser("eval-render", help="render whole benchmark questions as single images")
    ev.add_argument("--in", dest="infile", required=True)
    ev.add_argument("--out", dest="outfile", required=True)
    ev.add_argument("--font-size", dest="font_size", type=_positive_int)
    ev.add_argument("--line-height", dest="line_height", type=_positive_int)
    ev.set_defaults(func=cmd_eval_render)

    rm = sub.add_parser("ratio-match", help="downsample so image-bearing:text-only matches a target")
    rm.add_argument("--in", dest="infile", required=True)
    rm.add_argument("--out", dest="outfile", required=True)
    rm.add_argument("--target", type=_ratio, help="target ratio, e.g. 1:1")
    rm.add_argument("--seed", type=int)
    rm.add_argument("--config")
    rm.set_defaults(func=cmd_ratio_match)

    met = sub.add_parser("metrics", help="alignment diagnostics over hidden-state dumps")
    met_sub = met.add_subparsers(dest="metric", required=True)

    mir_p = met_sub.add_parser("mir", help="layer-wise Frechet distance, averaged")
    mir_p.add_argument("--hsd", required=True)
    mir_p.add_argument("--out")
    mir_p.set_defaults(func=cmd_metrics_mir)

    pcd_p = met_sub.add_parser("pcd", help="pairwise cross-modal cosine distance")
    pcd_p.add_argument("--hsd", required=True)
    pcd_p.add_argument("--layer", type=int, default=1)
    pcd_p.add_argument("--bins", type=_positive_int, default=4)
    pcd_p.add_argument("--out")
    pcd_p.set_defaults(func=cmd_metrics_pcd)

    dec_p = met_sub.add_parser("decomp", help="loss decomposition identity checker")
    dec_p.add_argument("--dist", required=True, help="JSON file with p_x, p_tx, answer_index")
    dec_p.add_argument("--answer-index", dest="answer_index", type=int)
    dec_p.add_argument("--out")
    dec_p.set_defaults(func=cmd_metrics_decomp)

    st = sub.add_parser("stats", help="summarize a curation manifest")
    st.add_argument("--manifest", required=True)
    st.add_argument("--stats", help="run-stats JSON emitted by curate")
    st.add_argument("--format", choices=["text", "json"], default="text")
    st.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, hsd.HsdFormatError, metrics.MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
