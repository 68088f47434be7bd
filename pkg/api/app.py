"""
FastAPI Application - probemap HTTP API

This module exposes the pipeline operations for interactive tools:
- Health check
- Contact-pose prediction for an uploaded segment mask
- Route planning over robot-frame points
- Run-configuration validation
- Photoconductance extraction from one IV sweep
"""

import logging
from contextlib import asynccontextmanager
from pathlib import Path
from typing import List, Optional, Tuple

import yaml
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from analysis.photoconductance import IVRecord, photoconductance
from config import API_TITLE, DEFAULT_SIGMA_PX, LOG_FORMAT, LOG_LEVEL
from errors import ProbeMapError
from pipeline.settings import PLANNER_NAMES, parse_config
from planning.benchmark import run_planner
from planning.graph import graph_from_points
from planning.greedy import PlannerConfig
from poses.optimizer import OptimizerConfig, optimize
from shapes.field import smooth
from shapes.mask import mask_from_bytes

logger = logging.getLogger(__name__)

# ============================================================================
# FASTAPI APPLICATION INITIALIZATION
# ============================================================================


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Handle application startup and shutdown."""
    if not logging.getLogger().handlers:
        logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    logger.info("probemap API starting")
    yield
    logger.info("Shutting down probemap API...")


app = FastAPI(
    title=API_TITLE,
    description="Contact-pose prediction, route planning and photoconductance analysis",
    version="1.0.0",
    lifespan=lifespan,
)

# Local measurement-station tools only
app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://127.0.0.1:3000", "http://localhost:5173"],
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)


def _bad_request(e: Exception) -> HTTPException:
    logger.warning("Rejected request: %s", e)
    return HTTPException(status_code=400, detail=str(e))


# ============================================================================
# REQUEST MODELS
# ============================================================================


class PlanRequest(BaseModel):
    points: List[Tuple[float, float]] = Field(..., min_length=1)
    algorithm: str = "noisy_dijkstra"
    planner: PlannerConfig = Field(default_factory=PlannerConfig)


class ValidateRequest(BaseModel):
    config: str


class IVRequest(BaseModel):
    voltages: List[float]
    current_light: List[float]
    current_dark: List[float]
    fit_intercept: bool = True


# ------------------ Health Check ------------------ #
@app.get("/health")
def health_check():
    return {"status": "healthy", "message": "probemap API is running"}


# ------------------ Poses ------------------ #
@app.post("/poses")
async def predict_poses(
    file: UploadFile = File(...),
    k: int = Form(3),
    seed: int = Form(0),
    sigma: float = Form(DEFAULT_SIGMA_PX),
    restarts: Optional[int] = Form(None),
):
    """Optimize k contact poses for one uploaded mask (PGM or PNG)."""
    content = await file.read()
    segment_id = Path(file.filename or "upload").stem
    try:
        mask = mask_from_bytes(content, segment_id)
        update = {"k": k, "seed": seed}
        if restarts is not None:
            update["restarts"] = restarts
        cfg = OptimizerConfig(**update)
        result = optimize(smooth(mask, sigma), cfg)
    except (ProbeMapError, ValueError) as e:
        raise _bad_request(e)
    return result.to_dict()


# ------------------ Route Planning ------------------ #
@app.post("/plan")
def plan(request: PlanRequest):
    """Open-loop tour from points[0] (home) over the remaining points."""
    if request.algorithm not in PLANNER_NAMES:
        raise HTTPException(status_code=400, detail=f"unknown planner {request.algorithm!r}")
    try:
        graph = graph_from_points(request.points)
        tour = run_planner(request.algorithm, graph, request.planner)
    except ProbeMapError as e:
        raise _bad_request(e)
    return {
        "algorithm": tour.algorithm,
        "order": list(tour.order),
        "length_mm": tour.length_mm,
        "closed_length_mm": tour.closed_length_mm,
        "seed": tour.seed,
    }


# ------------------ Config Validation ------------------ #
@app.post("/validate")
def validate(request: ValidateRequest):
    """Schema and range diagnostics for YAML config text (file references resolve against the server cwd)."""
    try:
        data = yaml.safe_load(request.config) or {}
    except yaml.YAMLError as e:
        return {"valid": False, "diagnostics": [{"path": "", "message": f"unreadable YAML: {e}"}]}
    _, diags = parse_config(data)
    return {
        "valid": not diags,
        "diagnostics": [{"path": d.path, "message": d.message} for d in diags],
    }


# ------------------ Photoconductance ------------------ #
@app.post("/photoconductance")
def photoconductance_endpoint(request: IVRequest):
    try:
        rec = IVRecord(request.voltages, request.current_light, request.current_dark)
        g_ph, r2 = photoconductance(rec, request.fit_intercept)
    except ProbeMapError as e:
        raise _bad_request(e)
    return {"G_ph": g_ph, "fit_r2": r2, "points": len(rec.voltages)}
