"""
Configuration Module

Centralized defaults for the probemap pipeline.
Every value can be overridden from the environment (or a .env file);
run-specific settings live in the YAML run config (see pipeline/settings.py),
which falls back to the constants defined here.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# ============================================================================
# LOGGING
# ============================================================================

LOG_LEVEL = os.getenv("PROBEMAP_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# ============================================================================
# SHAPE FIELD
# ============================================================================

# Gaussian std-dev (px) used to smooth segment masks into I'
DEFAULT_SIGMA_PX = float(os.getenv("PROBEMAP_SIGMA_PX", "3.0"))

# Kernel support in multiples of sigma
KERNEL_TRUNCATE = 4.0

# Footprints are evaluated on a window reaching this many tip radii past the
# outer tips; the Gaussian mass left outside is below 1e-14
WINDOW_SIGMAS = 8.0

# Probe geometry in pixels (four-point probe contact line)
DEFAULT_TIP_COUNT = int(os.getenv("PROBEMAP_TIP_COUNT", "4"))
DEFAULT_TIP_SPACING_PX = float(os.getenv("PROBEMAP_TIP_SPACING_PX", "3.0"))
DEFAULT_TIP_RADIUS_PX = float(os.getenv("PROBEMAP_TIP_RADIUS_PX", "2.0"))

# Physical pixel pitch when a mask comes without one
DEFAULT_SCALE_MM_PER_PX = float(os.getenv("PROBEMAP_SCALE_MM_PER_PX", "0.1"))

# ============================================================================
# LOSS
# ============================================================================

DEFAULT_W_COVERAGE = float(os.getenv("PROBEMAP_W_COVERAGE", "1.0"))
DEFAULT_W_ANGLE = float(os.getenv("PROBEMAP_W_ANGLE", "1.0"))
DEFAULT_STEEPNESS = float(os.getenv("PROBEMAP_STEEPNESS", "10.0"))

# Measurable-area threshold on the max-normalized field
DEFAULT_TAU = float(os.getenv("PROBEMAP_TAU", "0.5"))

# Pairwise overlap a valid pose set must stay under
OVERLAP_VALID_LIMIT = 1e-3

# Feasibility barrier used during descent: tips are pushed up to tau + margin
# and pairwise overlaps down to OVERLAP_VALID_LIMIT * ratio; zero on that set
BARRIER_TIP_WEIGHT = float(os.getenv("PROBEMAP_BARRIER_TIP_WEIGHT", "50.0"))
BARRIER_OVERLAP_WEIGHT = float(os.getenv("PROBEMAP_BARRIER_OVERLAP_WEIGHT", "0.2"))
BARRIER_TIP_MARGIN = 0.1
BARRIER_OVERLAP_RATIO = 0.1

# ============================================================================
# POSE OPTIMIZER
# ============================================================================

DEFAULT_POSE_COUNT = int(os.getenv("PROBEMAP_POSE_COUNT", "3"))
DEFAULT_RESTARTS = int(os.getenv("PROBEMAP_RESTARTS", "8"))
DEFAULT_MAX_ITERS = int(os.getenv("PROBEMAP_MAX_ITERS", "150"))
DEFAULT_STEP_SIZE = float(os.getenv("PROBEMAP_STEP_SIZE", "10.0"))
DEFAULT_STEP_DECAY = float(os.getenv("PROBEMAP_STEP_DECAY", "1.0"))
DEFAULT_ANGLE_STEP_RATIO = 0.01
MAX_BACKTRACKS = 20
DEFAULT_TOLERANCE = 1e-7

# Stochastic oracle sample counts: benchmark/label oracle and restart seeding
ORACLE_SAMPLES = 100
RESTART_SAMPLES = 5

DEFAULT_SEED = int(os.getenv("PROBEMAP_SEED", "0"))

# ============================================================================
# ROUTE PLANNER
# ============================================================================

DEFAULT_ALPHA = float(os.getenv("PROBEMAP_ALPHA", "0.02"))
DEFAULT_GENERATIONS = int(os.getenv("PROBEMAP_GENERATIONS", "1000"))

# 2-opt untangling of the winning noisy tour; bounded number of sweeps
POLISH_TOUR = os.getenv("PROBEMAP_POLISH_TOUR", "true").lower() == "true"
MAX_POLISH_PASSES = 50

# Genetic algorithm hyperparameters
GA_POPULATION = int(os.getenv("PROBEMAP_GA_POPULATION", "10"))
GA_MUTATION_RATE = float(os.getenv("PROBEMAP_GA_MUTATION_RATE", "0.8"))

# A* runs an exact search up to this many nodes, a beam search above it
ASTAR_EXACT_LIMIT = 12
DEFAULT_BEAM_WIDTH = int(os.getenv("PROBEMAP_BEAM_WIDTH", "1000"))

# Robot home in the robot frame (mm)
DEFAULT_HOME_MM = (0.0, 0.0)

# ============================================================================
# ROBOT / G-CODE
# ============================================================================

DEFAULT_R0_MM = float(os.getenv("PROBEMAP_R0_MM", "30.0"))

SAFE_Z_MM = float(os.getenv("PROBEMAP_SAFE_Z_MM", "10.0"))
PLUNGE_Z_MM = float(os.getenv("PROBEMAP_PLUNGE_Z_MM", "0.0"))
TRAVEL_FEED_MM_MIN = float(os.getenv("PROBEMAP_TRAVEL_FEED", "3000"))
PLUNGE_FEED_MM_MIN = float(os.getenv("PROBEMAP_PLUNGE_FEED", "300"))
ROTARY_FEED_DEG_MIN = float(os.getenv("PROBEMAP_ROTARY_FEED", "1800"))

# Measurement window at each contact (light + dark sweep)
DWELL_MS = int(os.getenv("PROBEMAP_DWELL_MS", "2000"))
SETTLE_MS = int(os.getenv("PROBEMAP_SETTLE_MS", "250"))

# Rotary axis letter for theta ("A" or "E")
ROTARY_AXIS = os.getenv("PROBEMAP_ROTARY_AXIS", "A")

# Work envelope of the effector target (mm); the pivot arm reaches up to
# R0 left of and 2 * R0 below a contact point
WORK_ENVELOPE_MM = {"x_min": -40.0, "x_max": 220.0, "y_min": -70.0, "y_max": 220.0}

CALIB_VERSION = 1

# ============================================================================
# MEASUREMENT ANALYSIS
# ============================================================================

# Default sweep: 40 voltage steps across -40 V to 40 V
SWEEP_POINTS = 40
SWEEP_V_MIN = -40.0
SWEEP_V_MAX = 40.0

# Synthetic film conductance model G(x) = G_MIN * (G_MAX / G_MIN) ** x (siemens)
SYNTH_G_MIN_S = 1e-9
SYNTH_G_MAX_S = 1e-8
SYNTH_DARK_G_S = 2e-10
SYNTH_NOISE = 0.01

# Films whose minimum G_ph drops below this fraction of their median get flagged
INHOMOGENEITY_FRACTION = 0.5

# ============================================================================
# PIPELINE / API
# ============================================================================

CONFIG_VERSION = 1
DEFAULT_OUTPUT_DIR = os.getenv("PROBEMAP_OUTPUT_DIR", "out")
DEFAULT_WORKERS = int(os.getenv("PROBEMAP_WORKERS", "1"))

API_TITLE = "probemap API"
API_HOST = os.getenv("PROBEMAP_API_HOST", "127.0.0.1")
API_PORT = int(os.getenv("PROBEMAP_API_PORT", "8000"))
