"""Command-line surface: synth, render, orient, localize, benchmark.

Every subcommand emits machine-parseable output (JSON on stdout, CSV or
JSON files via --out); plotting is left to external tools. Exit codes: 0
for a completed run (an unsuccessful localization is data, not an error),
2 for usage, format, or configuration problems, 3 for internal invariant
violations. SPHERELOC_THREADS caps worker parallelism in the localizer.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .descriptor import DescriptorConfig
from .errors import ContractError, SphereLocError
from .evaluation import (
    export_query_dump,
    ingest_trajectory,
    interpolate_trajectory,
    read_trajectory,
    run_benchmark,
    write_report,
)
from .localizer import (
    DescriptorCache,
    HierarchyConfig,
    PipelineConfig,
    export_trace_jsonl,
    localize_bruteforce,
    localize_hierarchical,
)
from .orientation import estimate_yaw
from .projection import (
    MATCHING_CAP_DEG,
    OverheadMap,
    Pose,
    RenderSpec,
    load_map,
    read_ppm,
    render_view,
    save_map,
    write_ppm,
)
from .sphere import SphericalImage
from .world import SyntheticWorldSpec, generate_world


def _parse_floats(text: str, counts: tuple[int, ...], flag: str) -> list[float]:
    parts = text.split(",")
    if len(parts) not in counts:
        raise argparse.ArgumentTypeError(
            f"{flag} expects {' or '.join(map(str, counts))} comma-separated numbers"
        )
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag}: {text!r} is not numeric") from None


def _pose_arg(text: str) -> Pose:
    vals = _parse_floats(text, (3, 4), "--pose")
    yaw = vals[3] if len(vals) == 4 else 0.0
    return Pose(vals[0], vals[1], vals[2], yaw=yaw)


def _extent_arg(text: str) -> tuple[float, float]:
    vals = _parse_floats(text, (2,), "--extent")
    return (vals[0], vals[1])


def _add_map_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--map", required=True, help="overhead raster (binary PPM)")
    sub.add_argument("--sidecar", required=True, help="JSON metadata beside the raster")


def _add_pipeline_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--band-limit", type=int, default=32,
                     help="spherical grid is 2B x 2B (default 32)")
    sub.add_argument("--backend", choices=("sconv-vlad", "power-spectrum"),
                     default="sconv-vlad")
    sub.add_argument("--weights", default=None, help="fixed descriptor weight file")
    sub.add_argument("--alpha", type=float, default=3.0, help="altitude ratio per level")
    sub.add_argument("--levels", type=int, default=3, help="hierarchy depth l_max")
    sub.add_argument("--r-olp", type=float, default=0.65, help="footprint overlap ratio")
    sub.add_argument("--cull", type=float, default=0.2, help="cull fraction per descent")
    sub.add_argument("--seed", type=int, default=0, help="run RNG seed")
    sub.add_argument("--threshold", type=float, default=20.0,
                     help="success radius in meters")


def _pipeline_config(args: argparse.Namespace, base_altitude: float) -> PipelineConfig:
    return PipelineConfig(
        hierarchy=HierarchyConfig(alpha=args.alpha, l_max=args.levels,
                                  base_altitude=base_altitude, r_olp=args.r_olp,
                                  cull_fraction=args.cull),
        descriptor=DescriptorConfig(backend=args.backend, weight_file=args.weights),
        render=RenderSpec(output_size=2 * args.band_limit, cap_deg=MATCHING_CAP_DEG),
        threshold_m=args.threshold,
        rng_seed=args.seed,
    )


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    print(text)


def _image_from_ppm(path: str) -> SphericalImage:
    return SphericalImage(read_ppm(path).astype(float) / 255.0)


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticWorldSpec(extent_m=args.extent, gsd=args.gsd,
                              landmark_count=args.landmarks, seed=args.seed)
    world = generate_world(spec)
    raster_path = args.out + ".ppm"
    sidecar_path = args.out + ".json"
    save_map(world, raster_path, sidecar_path)
    _emit({"raster": raster_path, "sidecar": sidecar_path,
           "extent_m": list(spec.extent_m), "landmarks": spec.landmark_count,
           "seed": spec.seed}, None)
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    map_ = load_map(args.map, args.sidecar)
    spec = RenderSpec(output_size=2 * args.band_limit, cap_deg=args.cap_deg)
    view = render_view(map_, args.pose, spec)
    write_ppm(args.out, np.clip(np.round(view.data * 255.0), 0, 255).astype(np.uint8))
    _emit({"out": args.out, "grid": list(view.data.shape[:2]),
           "truncated": view.truncated}, None)
    return 0


def cmd_orient(args: argparse.Namespace) -> int:
    estimate = estimate_yaw(_image_from_ppm(args.query), _image_from_ppm(args.reference))
    _emit({"yaw_deg": math.degrees(estimate.yaw), "confidence": estimate.confidence},
          args.out)
    return 0


def _localize_one(map_: OverheadMap, pose: Pose, cfg: PipelineConfig, method: str,
                  cache: DescriptorCache):
    h = cfg.hierarchy
    if method == "hier":
        views = [render_view(map_, Pose(pose.x, pose.y, h.altitude(l), yaw=pose.yaw),
                             cfg.render) for l in range(h.l_max)]
        return localize_hierarchical(map_, views, cfg, ground_truth=(pose.x, pose.y),
                                     cache=cache)
    view = render_view(map_, pose, cfg.render)
    return localize_bruteforce(map_, view, pose.altitude, cfg,
                               ground_truth=(pose.x, pose.y), cache=cache)


def _result_payload(pose: Pose, result, method: str, threshold: float) -> dict:
    return {
        "method": method,
        "query_pose": [pose.x, pose.y, pose.altitude, pose.yaw],
        "estimate_m": list(result.estimate),
        "yaw_rad": result.yaw,
        "dist_m": math.hypot(result.estimate[0] - pose.x, result.estimate[1] - pose.y),
        "success": result.success,
        "diverged": result.diverged,
        "n_descriptor_evals": result.n_descriptor_evals,
        "threshold_m": threshold,
    }


def cmd_localize(args: argparse.Namespace) -> int:
    if (args.pose is None) == (args.trajectory is None):
        print("error: provide exactly one of --pose or --trajectory", file=sys.stderr)
        return 2
    map_ = load_map(args.map, args.sidecar)
    cache = DescriptorCache()
    if args.pose is not None:
        cfg = _pipeline_config(args, base_altitude=args.pose.altitude)
        result = _localize_one(map_, args.pose, cfg, args.method, cache)
        if args.trace_out:
            export_trace_jsonl(result.trace, args.trace_out)
        _emit(_result_payload(args.pose, result, args.method, cfg.threshold_m), args.out)
        return 0
    poses = interpolate_trajectory(read_trajectory(args.trajectory), args.rate_hz)
    payloads = []
    for pose in poses:
        cfg = _pipeline_config(args, base_altitude=pose.altitude)
        result = _localize_one(map_, pose, cfg, args.method, cache)
        payloads.append(_result_payload(pose, result, args.method, cfg.threshold_m))
    _emit(payloads, args.out)
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    map_ = load_map(args.map, args.sidecar)
    data = read_trajectory(args.trajectory)
    base_altitude = float(np.median(data[:, 3]))
    cfg = _pipeline_config(args, base_altitude=base_altitude)
    cache = DescriptorCache()
    qs = ingest_trajectory(args.trajectory, map_, cfg, rate_hz=args.rate_hz,
                           threshold_m=args.threshold, cache=cache)
    rows = run_benchmark(map_, qs, cfg, cache=cache)
    if args.out:
        write_report(rows, args.out, fmt=args.format)
    if args.dump:
        export_query_dump(map_, qs, args.dump, cfg)
    print(json.dumps(rows, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphereloc",
        description="Spherical place recognition and hierarchical localization "
                    "over overhead imagery.",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)

    synth = subs.add_parser("synth", help="generate a seeded synthetic world")
    synth.add_argument("--extent", type=_extent_arg, default=(1000.0, 500.0),
                       help="map size in meters as W,H")
    synth.add_argument("--gsd", type=float, default=1.0, help="meters per pixel")
    synth.add_argument("--landmarks", type=int, default=10)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output path prefix")
    synth.set_defaults(func=cmd_synth)

    render = subs.add_parser("render", help="render one spherical view of a map")
    _add_map_flags(render)
    render.add_argument("--pose", type=_pose_arg, required=True,
                        help="x,y,alt[,yaw] in meters and radians")
    render.add_argument("--band-limit", type=int, default=64)
    render.add_argument("--cap-deg", type=float, default=MATCHING_CAP_DEG,
                        help="polar cap half-angle excluded from the render")
    render.add_argument("--out", required=True, help="output PPM path")
    render.set_defaults(func=cmd_render)

    orient = subs.add_parser("orient", help="relative yaw between two views")
    orient.add_argument("--query", required=True, help="query view (PPM)")
    orient.add_argument("--reference", required=True, help="reference view (PPM)")
    orient.add_argument("--out", default=None, help="also write the JSON here")
    orient.set_defaults(func=cmd_orient)

    localize = subs.add_parser("localize", help="global re-localization on a map")
    _add_map_flags(localize)
    localize.add_argument("--pose", type=_pose_arg, default=None,
                          help="single query pose x,y,alt[,yaw]")
    localize.add_argument("--trajectory", default=None, help="query trajectory CSV")
    localize.add_argument("--rate-hz", type=float, default=1.0)
    localize.add_argument("--method", choices=("hier", "brute"), default="hier")
    localize.add_argument("--trace-out", default=None,
                          help="per-iteration particle trace (JSON lines)")
    localize.add_argument("--out", default=None, help="also write the JSON here")
    _add_pipeline_flags(localize)
    localize.set_defaults(func=cmd_localize)

    bench = subs.add_parser("benchmark", help="hierarchical vs brute-force report")
    _add_map_flags(bench)
    bench.add_argument("--trajectory", required=True, help="query trajectory CSV")
    bench.add_argument("--rate-hz", type=float, default=1.0)
    bench.add_argument("--out", default=None, help="report file")
    bench.add_argument("--format", choices=("csv", "json"), default="csv")
    bench.add_argument("--dump", default=None, help="per-query retrieval CSV")
    _add_pipeline_flags(bench)
    bench.set_defaults(func=cmd_benchmark)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SphereLocError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
