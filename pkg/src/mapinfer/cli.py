# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Command-line interface for road-network inference."""

import argparse
import logging
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, NoReturn, Optional, Sequence

import numpy as np

from mapinfer.exceptions import DataError, MapInferError, UsageError
from mapinfer.geograph import BoundingBox, Point, SpatialGraph, load_graph, save_graph
from mapinfer.loader import (
    apply_overrides,
    dump_config,
    load_config,
    parse_assignments,
    write_text_atomic,
)
from mapinfer.logging import get_logger, parse_level, setup_logging
from mapinfer.metrics import (
    METRICS,
    SPReport,
    best_threshold,
    hausdorff_distance,
    report_tsv,
    run_metric,
    sweep,
    sweep_tsv,
)
from mapinfer.models import RunConfig
from mapinfer.oracle import (
    LabelSettings,
    OracleDecider,
    OracleState,
    TrainingExample,
    dynamic_training_session,
    generate_static_examples,
    load_examples,
    sample_start,
    save_examples,
)
from mapinfer.protocol import ExternalDecider, Hello, serve
from mapinfer.raster import RasterGrid, load_raster, save_raster
from mapinfer.render import MapRenderer, overlay_layers, render_bounds
from mapinfer.skeleton import RefineParams, extract_road_graph, seed_points
from mapinfer.synthworld import SensorDecider, gen_network, rasterize
from mapinfer.toy import ToyDecider, train_dynamic, train_toy_decider
from mapinfer.tracer import Decider, Region, SearchResult, format_trace, read_trace, run_multi_seed

logger = get_logger("cli")

SWEEP_THRESHOLDS = [round(0.2 + 0.05 * i, 2) for i in range(11)]
_THRESHOLD_IN_NAME = re.compile(r"_T(\d+(?:\.\d+)?)$")


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- shared helpers -----------------------------------------------------------


def read_graph(path: Path) -> SpatialGraph:
    logger.debug(f"Reading graph {path}")
    with open(path, encoding="utf-8") as f:
        return load_graph(f)


def write_graph(path: Path, graph: SpatialGraph) -> None:
    write_text_atomic(path, save_graph(graph))
    logger.info(f"Wrote {path} ({graph.vertex_count} vertices, {graph.edge_count} edges)")


def read_seeds(path: Path) -> list[Point]:
    """Start points, one ``x y`` pair per line."""
    seeds = []
    for line_number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            x, y = (float(v) for v in line.split())
        except ValueError as e:
            raise DataError(f"{path}: line {line_number}: expected 'x y', got {raw!r}") from e
        seeds.append((x, y))
    return seeds


def effective_config(args: argparse.Namespace, flags: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Config file, then --set assignments, then explicit flags."""
    config = load_config(args.config) if args.config else RunConfig()
    config = apply_overrides(config, parse_assignments(args.set))
    values = {
        key: getattr(args, dest)
        for dest, key in (flags or {}).items()
        if getattr(args, dest, None) is not None
    }
    return apply_overrides(config, values)


def label_settings(config: RunConfig) -> LabelSettings:
    t = config.tracer
    return LabelSettings(T=t.T, a=t.a, d=t.d, resolution=t.resolution)


def make_oracle(gt: SpatialGraph, config: RunConfig) -> OracleState:
    o = config.oracle
    return OracleState.from_ground_truth(
        gt,
        D=config.tracer.D,
        w=o.w,
        match_sigma=o.match_sigma,
        resample=o.resample,
        covered_tolerance_deg=o.covered_tolerance,
    )


def region_bbox(gt: SpatialGraph, config: RunConfig) -> BoundingBox:
    return BoundingBox.around(
        (gt.position(v) for v in gt.vertices()), max(config.tracer.margin, config.tracer.D)
    )


# -- synth ---------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> None:
    config = effective_config(
        args,
        {
            "seed": "world.seed",
            "style": "world.style",
            "extent": "world.extent",
            "occlusion": "world.occlusion_rate",
            "noise": "world.noise_sigma",
            "resolution": "world.resolution",
        },
    )
    out = args.out or config.workspace.world_dir
    spec = config.world
    logger.info(f"Generating {spec.style} world (seed {spec.seed}, extent {spec.extent} m)")
    gt = gen_network(spec)
    probability, imagery = rasterize(gt, spec)
    write_graph(out / "gt.graph", gt)
    save_raster(out / "probability.pgm", probability)
    save_raster(out / "imagery.ppm", imagery)
    logger.info(f"World written to {out}")


# -- trace -------------------------------------------------------------------------


@dataclass
class TraceInputs:
    gt: Optional[SpatialGraph] = None
    probability: Optional[RasterGrid] = None
    imagery: Optional[RasterGrid] = None
    weights: Optional[str] = None


def make_decider(kind: str, config: RunConfig, inputs: TraceInputs) -> Decider:
    """Build the decision function named on the command line.

    Raises:
        UsageError: If the inputs that decider needs are missing
    """
    t = config.tracer
    if kind == "oracle":
        if inputs.gt is None:
            raise UsageError("The oracle decider needs --gt")
        return OracleDecider(make_oracle(inputs.gt, config), t.a, config.oracle.seed)
    if kind == "sensor":
        if inputs.probability is None:
            raise UsageError("The sensor decider needs --probability")
        s = config.sensor
        return SensorDecider(inputs.probability, t.D, t.a, s.lookahead, s.suppress_radius, s.samples)
    if kind == "toy":
        if inputs.weights is None:
            raise UsageError("The toy decider needs --weights")
        decider = ToyDecider.load(inputs.weights)
        if decider.a != t.a:
            raise UsageError(f"Weights were trained for a={decider.a}, config has a={t.a}")
        return decider
    if kind.startswith("external:"):
        return ExternalDecider(kind[len("external:") :], t.a, t.d, t.resolution, config.external.timeout)
    raise UsageError(f"Unknown decider: {kind}")


def trace_once(kind: str, config: RunConfig, inputs: TraceInputs, seeds: Sequence[Point], bbox: BoundingBox, T: float) -> SearchResult:
    t = config.tracer
    decider = make_decider(kind, config, inputs)
    try:
        return run_multi_seed(seeds, bbox, decider, T, t.D, t.a, t.d, t.resolution, t.max_steps, inputs.imagery)
    finally:
        if isinstance(decider, ExternalDecider):
            decider.close()


def cmd_trace(args: argparse.Namespace) -> None:
    config = effective_config(
        args, {"D": "tracer.D", "a": "tracer.a", "d": "tracer.d", "max_steps": "tracer.max_steps"}
    )
    t = config.tracer
    inputs = TraceInputs(
        gt=read_graph(args.gt) if args.gt else None,
        probability=load_raster(args.probability) if args.probability else None,
        imagery=load_raster(args.imagery) if args.imagery else None,
        weights=args.weights.read_text(encoding="utf-8") if args.weights else None,
    )

    if inputs.probability is not None:
        bbox = inputs.probability.bounds()
    elif inputs.imagery is not None:
        bbox = inputs.imagery.bounds()
    elif inputs.gt is not None and inputs.gt.vertex_count:
        bbox = region_bbox(inputs.gt, config)
    else:
        raise UsageError("trace needs --probability, --imagery or --gt to know its region")

    if args.seed_file:
        seeds = read_seeds(args.seed_file)
    elif inputs.probability is not None:
        seeds = seed_points(inputs.probability, t.seed_min_prob, t.seed_spacing)
    elif inputs.gt is not None:
        gt = inputs.gt
        seeds = [gt.position(component[0]) for component in gt.connected_components()]
    else:
        raise UsageError("trace needs --seed-file when there is no raster or ground truth")
    logger.info(f"Tracing from {len(seeds)} seeds with the {args.decider} decider")

    thresholds = SWEEP_THRESHOLDS if args.sweep else (args.T or [t.T])
    out = args.out or config.workspace.run_dir

    def run(T: float) -> tuple[float, SearchResult]:
        return T, trace_once(args.decider, config, inputs, seeds, bbox, T)

    if len(thresholds) == 1:
        results = [run(thresholds[0])]
    else:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(run, thresholds))

    for T, result in results:
        suffix = "" if len(thresholds) == 1 else f"_T{T:.2f}"
        write_graph(out / f"inferred{suffix}.graph", result.graph)
        write_text_atomic(out / f"trace{suffix}.txt", format_trace(result.trace))
        logger.info(f"T={T:.2f}: {result.steps} steps{' (truncated)' if result.truncated else ''}")


# -- postprocess -------------------------------------------------------------------


def cmd_postprocess(args: argparse.Namespace) -> None:
    config = effective_config(
        args,
        {
            "t": "skeleton.threshold",
            "epsilon": "skeleton.epsilon",
            "min_segment": "skeleton.min_segment",
            "min_component": "skeleton.min_component",
            "extend_dist": "skeleton.extend_dist",
            "junction_merge": "skeleton.junction_merge",
        },
    )
    s = config.skeleton
    mask = load_raster(args.probability)
    if mask.channels != 1:
        raise UsageError(f"{args.probability} is not a single-channel probability raster")
    params = None if args.no_refine else RefineParams(s.min_segment, s.min_component, s.extend_dist, s.junction_merge)
    stages = extract_road_graph(mask, s.threshold, s.epsilon, params)

    out = args.out or config.workspace.run_dir / "skeleton.graph"
    write_graph(out, stages.refined)
    if args.dump_stages:
        save_raster(args.dump_stages / "binary.pgm", stages.binary)
        save_raster(args.dump_stages / "skeleton.pgm", stages.skeleton)
        write_graph(args.dump_stages / "graph.graph", stages.graph)
        write_graph(args.dump_stages / "simplified.graph", stages.simplified)
        write_graph(args.dump_stages / "refined.graph", stages.refined)
    if args.gt:
        distance = hausdorff_distance(read_graph(args.gt), stages.refined)
        logger.info(f"Hausdorff distance to ground truth: {distance:.2f} m")


# -- eval ------------------------------------------------------------------------


def threshold_of(path: Path, default: float) -> float:
    match = _THRESHOLD_IN_NAME.search(path.stem)
    return float(match.group(1)) if match else default


def cmd_eval(args: argparse.Namespace) -> None:
    config = effective_config(args)
    gt = read_graph(args.gt)
    inferred = {threshold_of(path, float(i)): path for i, path in enumerate(args.inferred)}
    if len(inferred) != len(args.inferred):
        raise UsageError("Inferred graphs must have distinct thresholds")
    graphs = {t: read_graph(path) for t, path in inferred.items()}
    metrics = METRICS if args.metric == "all" else (args.metric,)
    out = args.out or config.workspace.reports_dir

    for name in metrics:

        def metric(g: SpatialGraph, h: SpatialGraph, name: str = name) -> Any:
            return run_metric(name, g, h, config.metrics)

        if len(graphs) == 1:
            (path,) = inferred.values()
            table = report_tsv(path.stem, metric(gt, graphs[next(iter(graphs))]))
            target = out / f"{name}.tsv"
        else:
            rows = sweep(gt, graphs, metric)
            table = sweep_tsv(rows)
            target = out / f"{name}_sweep.tsv"
            if isinstance(rows[0].report, SPReport):
                best = best_threshold(rows)
                logger.info(f"Best shortest-path threshold: {best.threshold} ({best.recall:.3f} correct)")
        write_text_atomic(target, table)
        sys.stdout.write(table)
        logger.info(f"Wrote {target}")


# -- render -------------------------------------------------------------------------


def cmd_render(args: argparse.Namespace) -> None:
    gt = read_graph(args.gt) if args.gt else None
    inferred = [read_graph(path) for path in args.graphs]
    if gt is None and not inferred:
        raise UsageError("render needs at least one graph")
    underlay = load_raster(args.underlay) if args.underlay else None
    bbox = render_bounds(([gt] if gt else []) + inferred, underlay)
    renderer = MapRenderer(bbox, args.resolution)
    renderer.save(args.out, overlay_layers(gt, inferred), underlay)
    if args.trace:
        if not args.frames_dir:
            raise UsageError("--trace needs --frames-dir")
        records = read_trace(args.trace.read_text(encoding="utf-8"))
        renderer.frames(records, args.frames_dir, gt, underlay)


# -- labels and training -------------------------------------------------------------


def _imagery(args: argparse.Namespace) -> Optional[RasterGrid]:
    return load_raster(args.imagery) if getattr(args, "imagery", None) else None


def cmd_labels(args: argparse.Namespace) -> None:
    config = effective_config(args, {"count": "oracle.count"})
    gt = read_graph(args.gt)
    oracle = make_oracle(gt, config)
    bbox = region_bbox(gt, config)
    settings = label_settings(config)
    imagery = _imagery(args)

    if args.mode == "static":
        examples = generate_static_examples(
            bbox,
            oracle,
            config.oracle.count,
            config.oracle.seed,
            config.oracle.max_n,
            settings,
            imagery,
            config.oracle.jitter_sigma,
        )
    else:
        decider: Optional[Decider] = None
        if args.decider == "toy":
            if not args.weights:
                raise UsageError("Dynamic labels with the toy decider need --weights")
            decider = ToyDecider.load(args.weights.read_text(encoding="utf-8"))
        elif args.decider != "oracle":
            raise UsageError(f"Unsupported decider for labels: {args.decider}")
        gen = np.random.default_rng(config.oracle.seed)
        examples = []
        for k in range(config.toy.sessions):
            region = Region(sample_start(oracle, bbox, gen), bbox)
            session = dynamic_training_session(
                oracle.fresh(), decider, region, config.oracle.session_steps, settings, imagery, gen, session=k
            )
            examples.extend(ex for ex, _ in session)

    out = args.out or config.workspace.run_dir / "labels.jsonl"
    write_text_atomic(out, save_examples(examples))
    logger.info(f"Wrote {len(examples)} {args.mode} examples to {out}")


def cmd_train(args: argparse.Namespace) -> None:
    config = effective_config(args, {"epochs": "toy.epochs", "lr": "toy.lr"})
    toy = config.toy
    if args.labels:
        sessions: list[list[TrainingExample]] = []
        for path in args.labels:
            with open(path, encoding="utf-8") as f:
                sessions.append(load_examples(f))
        decider, losses = train_toy_decider(sessions, toy.epochs, toy.lr, config.tracer.a, toy.pool, toy.seed)
    elif args.gt:
        gt = read_graph(args.gt)
        oracle = make_oracle(gt, config)
        bbox = region_bbox(gt, config)
        gen = np.random.default_rng(toy.seed)
        regions = [Region(sample_start(oracle, bbox, gen), bbox) for _ in range(toy.sessions)]
        decider, losses = train_dynamic(
            oracle,
            regions,
            toy.epochs,
            toy.lr,
            config.oracle.session_steps,
            label_settings(config),
            _imagery(args),
            toy.pool,
            gen,
        )
    else:
        raise UsageError("train needs --labels files or --gt for live sessions")

    out = args.out or config.workspace.run_dir / "toy.json"
    write_text_atomic(out, decider.save())
    final = losses[-1] if losses else math.nan
    logger.info(f"Wrote weights to {out} (final loss {final:.6f})")


# -- config and child ---------------------------------------------------------------


def cmd_config(args: argparse.Namespace) -> None:
    sys.stdout.write(dump_config(effective_config(args)))


def cmd_oracle_child(args: argparse.Namespace) -> None:
    config = effective_config(args)
    gt = read_graph(args.gt)

    def make(hello: Hello) -> Decider:
        return OracleDecider(make_oracle(gt, config), hello.a, config.oracle.seed)

    answered = serve(make, sys.stdin, sys.stdout, wants_state=True)
    logger.debug(f"Answered {answered} decisions")


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="mapinfer",
        description="Infer road networks from aerial rasters and evaluate them",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate a synthetic world and trace it with the ground-truth oracle
  mapinfer synth --seed 3 --style grid
  mapinfer trace --decider oracle --gt world/gt.graph

  # Segmentation baseline and a junction-metric comparison
  mapinfer postprocess --probability world/probability.pgm
  mapinfer eval --gt world/gt.graph runs/default/inferred.graph runs/default/skeleton.graph
        """,
    )
    parser.add_argument("-c", "--config", type=Path, help="Config file (flat key=value or YAML)")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key, e.g. tracer.D=10 (repeatable)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--log-file", type=str, help="Also write logs to this file")
    parser.add_argument(
        "--log-level",
        action="append",
        default=[],
        metavar="STAGE=LEVEL",
        help="Level of one stage logger, e.g. tracer=warning (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic world")
    p.add_argument("--seed", type=int)
    p.add_argument("--style", choices=["grid", "radial", "organic", "ring"])
    p.add_argument("--extent", type=float)
    p.add_argument("--occlusion", type=float, help="Occluded fraction of road length")
    p.add_argument("--noise", type=float, help="Gaussian noise sigma of the probability raster")
    p.add_argument("--resolution", type=float, help="Meters per pixel")
    p.add_argument("-o", "--out", type=Path, help="Output directory (default: workspace world/)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("trace", help="Run the iterative graph search")
    p.add_argument("--decider", required=True, help="oracle, sensor, toy or external:<command>")
    p.add_argument("--gt", type=Path, help="Ground-truth graph (oracle)")
    p.add_argument("--probability", type=Path, help="Probability raster (sensor, seeds)")
    p.add_argument("--imagery", type=Path, help="Imagery raster for decision windows")
    p.add_argument("--weights", type=Path, help="Toy decider weights")
    p.add_argument("--seed-file", type=Path, help="Start points, one 'x y' per line")
    p.add_argument("--T", type=float, nargs="+", help="Walk threshold(s); several values sweep")
    p.add_argument("--sweep", action="store_true", help="Sweep T over 0.20..0.70 in steps of 0.05")
    p.add_argument("--workers", type=int, default=1, help="Threads for sweeps")
    p.add_argument("--D", "-D", dest="D", type=float, help="Step distance in meters")
    p.add_argument("--a", "-a", dest="a", type=int, help="Number of angle buckets")
    p.add_argument("--d", dest="d", type=int, help="Decision window size in pixels")
    p.add_argument("--max-steps", type=int, help="Safety bound on search steps")
    p.add_argument("-o", "--out", type=Path, help="Output directory (default: workspace runs/<run>/)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("postprocess", help="Segmentation post-processing baseline")
    p.add_argument("--probability", type=Path, required=True)
    p.add_argument("--t", type=float, help="Probability threshold")
    p.add_argument("--epsilon", type=float, help="Douglas-Peucker tolerance, meters")
    p.add_argument("--min-segment", type=float)
    p.add_argument("--min-component", type=float)
    p.add_argument("--extend-dist", type=float)
    p.add_argument("--junction-merge", type=float)
    p.add_argument("--no-refine", action="store_true", help="Skip the refinement heuristics")
    p.add_argument("--dump-stages", type=Path, help="Directory for intermediate stages")
    p.add_argument("--gt", type=Path, help="Log the Hausdorff distance to this graph")
    p.add_argument("-o", "--out", type=Path, help="Output graph file")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="Compare inferred graphs with the ground truth")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("inferred", type=Path, nargs="+", help="Inferred graph(s); several form a sweep")
    p.add_argument("--metric", choices=[*METRICS, "all"], default="all")
    p.add_argument("-o", "--out", type=Path, help="Report directory (default: workspace reports/)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="Draw graphs over an optional raster")
    p.add_argument("graphs", type=Path, nargs="*", help="Inferred graphs (yellow)")
    p.add_argument("--gt", type=Path, help="Ground truth (blue)")
    p.add_argument("--underlay", type=Path, help="Imagery or probability raster")
    p.add_argument("--resolution", type=float, default=1.0, help="Meters per output pixel")
    p.add_argument("--trace", type=Path, help="Step trace to animate")
    p.add_argument("--frames-dir", type=Path, help="Directory for animation frames")
    p.add_argument("-o", "--out", type=Path, required=True, help="Output image (.png, .ppm or .svg)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("labels", help="Export oracle training examples")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--mode", choices=["static", "dynamic"], default="static")
    p.add_argument("--decider", default="oracle", help="Decider driving dynamic sessions: oracle or toy")
    p.add_argument("--weights", type=Path)
    p.add_argument("--count", type=int, help="Number of static examples")
    p.add_argument("--imagery", type=Path)
    p.add_argument("-o", "--out", type=Path)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("train", help="Train the toy decider")
    p.add_argument("--labels", type=Path, nargs="*", help="Example files")
    p.add_argument("--gt", type=Path, help="Ground truth for live dynamic sessions")
    p.add_argument("--imagery", type=Path)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("-o", "--out", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("config", help="Print the effective configuration")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("oracle-child", help="Serve the oracle over the decider protocol on stdio")
    p.add_argument("--gt", type=Path, required=True)
    p.set_defaults(func=cmd_oracle_child)
    return parser


def main() -> None:
    """Main CLI entry point."""
    args = build_parser().parse_args()

    log_level = logging.DEBUG if args.verbose else logging.INFO
    try:
        assignments = parse_assignments(args.log_level)
        stage_levels = {stage: parse_level(str(level)) for stage, level in assignments.items()}
    except (MapInferError, ValueError) as e:
        print(f"mapinfer: --log-level: {e}", file=sys.stderr)
        sys.exit(1)
    setup_logging(level=log_level, log_file=args.log_file, component_levels=stage_levels)

    try:
        args.func(args)
    except MapInferError as e:
        logger.error(str(e))
        sys.exit(e.exit_code)
    except OSError as e:
        logger.error(str(e))
        sys.exit(2)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
