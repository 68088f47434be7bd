"""
Pipeline runner: masks -> fields -> poses -> route -> G-code -> analysis.

Each stage is a plain function usable on its own (the CLI subcommands call
them individually). run_pipeline() chains them, tags failures with their
stage, keeps going with the stages that do not depend on a failed one and
records everything in manifest.json.

Output directory layout:

    poses.csv, poses.json       pose sets
    tour.csv                    ordered robot-frame waypoints
    program.gcode               contact program
    measurements.csv            per-pose G_ph (only with IV data)
    compositions_summary.csv    per-composition statistics
    films_summary.csv           per-film statistics and inhomogeneity flag
    maps/<segment>.sfld(.json)  interpolated G_ph maps
    fields/<segment>.sfld       smoothed fields (field.export)
    trace.jsonl                 per-iteration loss terms (--trace)
    manifest.json
"""

import glob as globlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from analysis.campaign import campaign_summary, composition_trend, film_summary, records_table, write_table
from analysis.iv_io import read_campaign
from analysis.photoconductance import MeasurementRecord, measure
from analysis.spatial_map import spatial_map, write_map
from errors import MeasurementError, ProbeMapError, StageError
from pipeline.settings import PipelineConfig
from planning.benchmark import run_planner
from planning.graph import Tour, TourGraph, build_graph, write_tour_csv
from poses.export import write_poses_csv, write_poses_json
from poses.loss import LossReport
from poses.optimizer import PoseSet, batch_optimize
from robot.calibration import FrameCalibration, load_calibration
from robot.gcode import GcodeProgram, check_gcode, emit_gcode
from shapes.field import ScalarField, smooth, write_sfld
from shapes.mask import SegmentMask, load_mask, read_placements

logger = logging.getLogger(__name__)

STAGES = ("masks", "fields", "poses", "plan", "gcode", "analysis")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FAILED = 2


@dataclass
class RunResult:
    status: int
    artifacts: List[Path] = field(default_factory=list)
    failures: List[StageError] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    pose_sets: List[PoseSet] = field(default_factory=list)
    graph: Optional[TourGraph] = None
    tour: Optional[Tour] = None
    program: Optional[GcodeProgram] = None
    measurements: List[MeasurementRecord] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures or self.skipped)


class TraceRecorder:
    """
    Collects LossReports from concurrent segment workers. Lines are written
    grouped by segment in input order, so the file does not depend on the
    thread schedule.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._lines: Dict[str, List[str]] = {}

    def __call__(self, segment_id: str, restart: int, iteration: int, report: LossReport):
        entry = {"segment_id": segment_id, "restart": restart, "iteration": iteration, **report.to_dict()}
        line = json.dumps(entry, sort_keys=True)
        with self._lock:
            self._lines.setdefault(segment_id, []).append(line)

    def write(self, path: Path, segment_order: List[str]) -> Path:
        with open(path, "w") as f:
            for segment_id in segment_order:
                for line in self._lines.get(segment_id, []):
                    f.write(line + "\n")
        return path


# ============================================================================
# STAGES
# ============================================================================


def load_masks(cfg: PipelineConfig, failures: Optional[List[StageError]] = None) -> List[SegmentMask]:
    """
    Masks matched by masks.glob, sorted by path, with placements applied.

    Files are read one at a time. With a failures list, an unreadable or
    empty mask is recorded there as a "masks" StageError and the rest still
    load; without one the first bad file raises.
    """
    pattern = str(cfg.resolve(cfg.masks.glob))
    paths = sorted(globlib.glob(pattern))
    if not paths:
        raise StageError("masks", f"no mask files match {pattern}")
    placements = {}
    if cfg.masks.placements:
        placements = read_placements(cfg.resolve(cfg.masks.placements))

    masks = []
    for p in paths:
        meta = placements.get(Path(p).stem, {"scale_mm_per_px": cfg.masks.scale_mm_per_px})
        try:
            masks.append(load_mask(p, **meta))
        except (ProbeMapError, OSError) as e:
            err = StageError("masks", f"{Path(p).name}: {e}")
            if failures is None:
                raise err from e
            logger.error("Mask %s skipped: %s", p, e)
            failures.append(err)
    logger.info("Loaded %d of %d mask(s) from %s", len(masks), len(paths), pattern)
    return masks


def compute_fields(masks: List[SegmentMask], cfg: PipelineConfig, out: Optional[Path] = None) -> List[ScalarField]:
    fields = [smooth(m, cfg.field.sigma) for m in masks]
    if cfg.field.export and out is not None:
        for f in fields:
            write_sfld(f, out / "fields" / f"{f.segment_id}.sfld")
    return fields


def predict_poses(fields: List[ScalarField], cfg: PipelineConfig, trace: Optional[TraceRecorder] = None) -> List[PoseSet]:
    return batch_optimize(
        fields,
        cfg.optimizer_config(),
        cfg.loss,
        cfg.probe.footprint(),
        workers=cfg.workers,
        trace=trace,
    )


def load_calibration_for(cfg: PipelineConfig) -> Optional[FrameCalibration]:
    if cfg.calibration.path is None:
        return None
    return load_calibration(cfg.resolve(cfg.calibration.path))


def plan_route(pose_sets: List[PoseSet], cfg: PipelineConfig) -> Tuple[TourGraph, Tour]:
    pcfg = cfg.planner_config()
    graph = build_graph(
        pose_sets,
        calib=load_calibration_for(cfg),
        home=pcfg.home_mm,
        geometry=cfg.effector.geometry(),
    )
    tour = run_planner(pcfg.algorithm, graph, pcfg)
    logger.info("Planned %s tour over %d node(s): %.3f mm", tour.algorithm, graph.size, tour.length_mm)
    return graph, tour


def write_program(waypoints, cfg: PipelineConfig, path: Path) -> GcodeProgram:
    program = emit_gcode(waypoints, cfg.effector.geometry(), cfg.gcode)
    check = check_gcode(program.text(), cfg.gcode.safe_z)
    if not check.safe:
        raise StageError("gcode", f"unsafe program: {check.violations[0]}")
    program.write(path)
    logger.info("Program %s: %d contact cycle(s), %.3f mm XY travel", path, check.contact_cycles, check.xy_travel_mm)
    return program


def analyze_campaign(
    cfg: PipelineConfig,
    out: Path,
    pose_sets: Optional[List[PoseSet]] = None,
    masks: Optional[List[SegmentMask]] = None,
) -> Tuple[List[MeasurementRecord], List[Path]]:
    """
    Photoconductance per IV sweep, campaign and film summaries, and one
    interpolated map per film that has pose coordinates and a mask.
    """
    records, compositions = read_campaign(cfg.resolve(cfg.analysis.iv_dir))
    if not records:
        raise MeasurementError(f"no IV sweeps under {cfg.analysis.iv_dir}")
    locations = {}
    for ps in pose_sets or []:
        for i, pose in enumerate(ps.poses):
            locations[(ps.segment_id, i)] = (pose.x, pose.y)

    measurements = []
    for rec in records:
        x, y = locations.get((rec.segment_id, rec.pose_index), (None, None))
        measurements.append(
            measure(rec, compositions.get(rec.segment_id), cfg.analysis.fit_intercept, x, y)
        )

    fraction = cfg.analysis.inhomogeneity_fraction
    written = [write_table(records_table(measurements), out / "measurements.csv")]
    films = film_summary(measurements, fraction)
    written.append(write_table(films, out / "films_summary.csv"))
    if any(m.composition_x is not None for m in measurements):
        summary = campaign_summary([m for m in measurements if m.composition_x is not None], fraction)
        written.append(write_table(summary, out / "compositions_summary.csv"))
        if len(summary) >= 2:
            logger.info("Composition trend (Spearman): %.3f", composition_trend(summary))

    if cfg.analysis.maps and masks:
        by_id = {m.id: m for m in masks}
        for segment_id in sorted({m.segment_id for m in measurements}):
            samples = [
                (m.x_px, m.y_px, m.G_ph)
                for m in measurements
                if m.segment_id == segment_id and m.x_px is not None
            ]
            if not samples or segment_id not in by_id:
                continue
            smap = spatial_map(samples, by_id[segment_id], cfg.analysis.bandwidth_px)
            written.append(write_map(smap, out / "maps" / f"{segment_id}.sfld"))
    logger.info("Analyzed %d IV sweep(s)", len(measurements))
    return measurements, written


# ============================================================================
# FULL RUN
# ============================================================================


def _fail(result: RunResult, stage: str, e: Exception):
    err = e if isinstance(e, StageError) else StageError(stage, str(e))
    logger.error("Stage %s failed: %s", err.stage, err.message)
    result.failures.append(err)


def _skip(result: RunResult, stages):
    for stage in stages:
        logger.warning("Stage %s skipped", stage)
        result.skipped.append(stage)


def write_manifest(result: RunResult, cfg: PipelineConfig, out: Path) -> Path:
    manifest = {
        "config_version": cfg.config_version,
        "seed": cfg.seed,
        "status": "partial" if result.partial else "complete",
        "partial": result.partial,
        "artifacts": sorted(p.relative_to(out).as_posix() for p in result.artifacts),
        "failures": [{"stage": e.stage, "message": e.message} for e in result.failures],
        "skipped": result.skipped,
        "pose_sets": len(result.pose_sets),
        "valid_pose_sets": sum(ps.valid for ps in result.pose_sets),
        "tour_length_mm": result.tour.length_mm if result.tour else None,
        "contact_cycles": result.program.contact_cycles if result.program else 0,
    }
    path = out / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def run_pipeline(cfg: PipelineConfig, trace: bool = False) -> RunResult:
    """
    Run every stage into cfg.output_dir.

    Returns:
        RunResult with status EXIT_OK, EXIT_PARTIAL (some stage failed or was
        skipped) or EXIT_FAILED (nothing beyond the manifest was produced)
    """
    out = cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(status=EXIT_OK)
    recorder = TraceRecorder() if trace else None
    logger.info("Run started: seed %d, output %s", cfg.seed, out)

    masks: List[SegmentMask] = []
    fields: List[ScalarField] = []
    try:
        masks = load_masks(cfg, result.failures)
    except Exception as e:
        _fail(result, "masks", e)
    if masks:
        try:
            fields = compute_fields(masks, cfg, out)
            if cfg.field.export:
                result.artifacts.extend(out / "fields" / f"{f.segment_id}.sfld" for f in fields)
        except Exception as e:
            _fail(result, "fields", e)

    if fields:
        try:
            result.pose_sets = predict_poses(fields, cfg, recorder)
            result.artifacts.append(write_poses_csv(result.pose_sets, out / "poses.csv"))
            result.artifacts.append(write_poses_json(result.pose_sets, out / "poses.json"))
            if recorder is not None:
                result.artifacts.append(recorder.write(out / "trace.jsonl", [f.segment_id for f in fields]))
        except Exception as e:
            _fail(result, "poses", e)
    else:
        _skip(result, ["poses"])

    if result.pose_sets:
        try:
            result.graph, result.tour = plan_route(result.pose_sets, cfg)
            result.artifacts.append(write_tour_csv(result.graph, result.tour, out / "tour.csv"))
        except Exception as e:
            _fail(result, "plan", e)
    else:
        _skip(result, ["plan"])

    if result.tour is not None:
        try:
            result.program = write_program(result.tour.waypoints(result.graph), cfg, out / "program.gcode")
            result.artifacts.append(out / "program.gcode")
        except Exception as e:
            _fail(result, "gcode", e)
    else:
        _skip(result, ["gcode"])

    if cfg.analysis.iv_dir is not None:
        try:
            result.measurements, written = analyze_campaign(cfg, out, result.pose_sets, masks)
            result.artifacts.extend(written)
        except Exception as e:
            _fail(result, "analysis", e)

    if result.partial:
        result.status = EXIT_PARTIAL if result.artifacts else EXIT_FAILED
    write_manifest(result, cfg, out)
    logger.info(
        "Run finished (%s): %d artifact(s), %d failure(s)",
        "partial" if result.partial else "complete",
        len(result.artifacts),
        len(result.failures),
    )
    return result
