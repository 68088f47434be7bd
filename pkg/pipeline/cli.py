"""
probemap command line.

    probemap synth    --out demo                   synthetic masks, IV campaign, config
    probemap validate --config demo/probemap.yaml
    probemap run      --config demo/probemap.yaml [--seed N] [--out DIR] [--trace]
    probemap poses    --config ...                 masks -> poses.csv / poses.json
    probemap plan     --config ... [--poses FILE]  poses -> tour.csv
    probemap gcode    --config ... [--tour FILE]   tour -> program.gcode
    probemap analyze  --config ... [--iv DIR]      IV sweeps -> measurements, summaries, maps
    probemap bench    [--graphs 115] [--seed N]    planner benchmark
    probemap serve    [--host H] [--port P]        HTTP API

Exit status: 0 ok, 1 partial run, 2 failure or invalid config.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import ValidationError

import config
from analysis.iv_io import write_campaign
from analysis.synthetic import synth_campaign
from errors import ProbeMapError
from pipeline.runner import (
    EXIT_FAILED,
    EXIT_OK,
    TraceRecorder,
    analyze_campaign,
    compute_fields,
    load_masks,
    plan_route,
    predict_poses,
    run_pipeline,
    write_program,
)
from pipeline.settings import PipelineConfig, load_config, validate_config
from planning.benchmark import PLANNERS, benchmark, clustered_graphs, summarize, write_benchmark
from planning.graph import read_tour_csv, write_tour_csv
from planning.greedy import PlannerConfig
from poses.export import read_poses_json, write_poses_csv, write_poses_json
from shapes.mask import write_placements
from shapes.synthetic import film_array, write_film_array


def _setup_logging():
    if not logging.getLogger().handlers:
        logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, output_dir=args.out)


def _out_dir(cfg: PipelineConfig) -> Path:
    out = cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ============================================================================
# SUBCOMMANDS
# ============================================================================


def cmd_validate(args) -> int:
    diags = validate_config(args.config)
    for d in diags:
        print(f"⚠️  {d.message}")
    if diags:
        return EXIT_FAILED
    print(f"✅ {args.config} is valid")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_pipeline(cfg, trace=args.trace)
    for err in result.failures:
        print(f"⚠️  [{err.stage}] {err.message}")
    mark, state = ("⚠️ ", "partial") if result.partial else ("✅", "complete")
    print(f"{mark} run {state}: {len(result.artifacts)} artifact(s) in {cfg.resolve(cfg.output_dir)}")
    return result.status


def cmd_poses(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    recorder = TraceRecorder() if args.trace else None
    fields = compute_fields(load_masks(cfg), cfg, out)
    pose_sets = predict_poses(fields, cfg, recorder)
    write_poses_csv(pose_sets, out / "poses.csv")
    write_poses_json(pose_sets, out / "poses.json")
    if recorder is not None:
        recorder.write(out / "trace.jsonl", [f.segment_id for f in fields])
    valid = sum(ps.valid for ps in pose_sets)
    print(f"✅ {valid}/{len(pose_sets)} valid pose set(s) -> {out / 'poses.csv'}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load(args)
    if args.algorithm:
        cfg = cfg.model_copy(update={"planner": cfg.planner.model_copy(update={"algorithm": args.algorithm})})
    out = _out_dir(cfg)
    pose_sets = read_poses_json(args.poses or out / "poses.json")
    graph, tour = plan_route(pose_sets, cfg)
    path = write_tour_csv(graph, tour, out / "tour.csv")
    print(f"✅ {tour.algorithm}: {graph.size} node(s), {tour.length_mm:.3f} mm -> {path}")
    return EXIT_OK


def cmd_gcode(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    waypoints = read_tour_csv(args.tour or out / "tour.csv")
    program = write_program(waypoints, cfg, out / "program.gcode")
    print(f"✅ {program.contact_cycles} contact cycle(s) -> {out / 'program.gcode'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load(args)
    if args.iv:
        cfg = cfg.model_copy(update={"analysis": cfg.analysis.model_copy(update={"iv_dir": str(Path(args.iv).resolve())})})
    if cfg.analysis.iv_dir is None:
        raise ProbeMapError("no IV directory: set analysis.iv_dir or pass --iv")
    out = _out_dir(cfg)
    poses_path = Path(args.poses) if args.poses else out / "poses.json"
    pose_sets = read_poses_json(poses_path) if poses_path.exists() else None
    masks = load_masks(cfg) if pose_sets else None
    measurements, written = analyze_campaign(cfg, out, pose_sets, masks)
    print(f"✅ {len(measurements)} sweep(s) analyzed, {len(written)} file(s) in {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = PlannerConfig(seed=args.seed, alpha=args.alpha, generations=args.generations)
    graphs = clustered_graphs(args.graphs, args.seed)
    table = benchmark(graphs, cfg, args.algorithms, workers=args.workers)
    out = Path(args.out or config.DEFAULT_OUTPUT_DIR)
    write_benchmark(table, out / "benchmark.csv")
    summary = summarize(table)
    summary.to_csv(out / "benchmark_summary.csv", float_format="%.9g", lineterminator="\n")
    print(summary.to_string(float_format=lambda v: f"{v:.3f}"))
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a self-contained demo: film masks, placements, IV campaign and a config."""
    root = Path(args.out)
    masks = film_array(args.count, args.seed)
    write_film_array(masks, root / "masks")
    write_placements(masks, root / "masks" / "placements.csv")

    ids = [m.id for m in masks]
    compositions = {s: i / max(1, len(ids) - 1) for i, s in enumerate(ids)}
    records = synth_campaign(ids, {s: range(args.k) for s in ids}, compositions, seed=args.seed)
    write_campaign(records, root / "iv", compositions)

    run_config = {
        "config_version": config.CONFIG_VERSION,
        "seed": args.seed,
        "output_dir": "out",
        "masks": {"glob": "masks/*.pgm", "placements": "masks/placements.csv"},
        "optimizer": {"k": args.k},
        "analysis": {"iv_dir": "iv"},
    }
    with open(root / "probemap.yaml", "w") as f:
        yaml.safe_dump(run_config, f, sort_keys=False)
    print(f"✅ {len(masks)} film(s), {len(records)} IV sweep(s) -> {root}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("api.app:app", host=args.host, port=args.port)
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================


def _common(p: argparse.ArgumentParser, trace: bool = False):
    p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    p.add_argument("--out", default=None, help="Override the output directory")
    if trace:
        p.add_argument("--trace", action="store_true", help="Write per-iteration loss terms to trace.jsonl")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probemap", description="Autonomous contact-measurement pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Full pipeline")
    _common(p, trace=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("poses", help="Predict contact poses for every mask")
    _common(p, trace=True)
    p.set_defaults(func=cmd_poses)

    p = sub.add_parser("plan", help="Plan a tour over valid poses")
    _common(p)
    p.add_argument("--poses", default=None, help="poses.json (default: <out>/poses.json)")
    p.add_argument("--algorithm", choices=sorted(PLANNERS), default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gcode", help="Emit the contact program for a tour")
    _common(p)
    p.add_argument("--tour", default=None, help="tour.csv (default: <out>/tour.csv)")
    p.set_defaults(func=cmd_gcode)

    p = sub.add_parser("analyze", help="Photoconductance analysis of an IV campaign")
    _common(p)
    p.add_argument("--iv", default=None, help="Campaign directory (overrides analysis.iv_dir)")
    p.add_argument("--poses", default=None, help="poses.json used to place map samples")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="Planner benchmark on clustered synthetic graphs")
    p.add_argument("--graphs", type=int, default=115)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--alpha", type=float, default=config.DEFAULT_ALPHA)
    p.add_argument("--generations", type=int, default=config.DEFAULT_GENERATIONS)
    p.add_argument("--algorithms", nargs="+", choices=sorted(PLANNERS), default=None)
    p.add_argument("--workers", type=int, default=config.DEFAULT_WORKERS)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="Check a run configuration")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="Write a synthetic film array and IV campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=35)
    p.add_argument("--k", type=int, default=config.DEFAULT_POSE_COUNT, help="IV sweeps per film")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="Start the HTTP API")
    p.add_argument("--host", default=config.API_HOST)
    p.add_argument("--port", type=int, default=config.API_PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProbeMapError, ValidationError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
