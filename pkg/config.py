#!/usr/bin/env python3
"""
Configuration for the near-field / far-field mismatch toolkit.
Numerical constants are HARDCODED; only runtime knobs come from .env.
"""

import os
import sys
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional
from dotenv import load_dotenv
from scipy import constants

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger('nfff')

# One line per sweep cell; only persisted when NFFF_CELL_LOG is set.
cell_logger = logging.getLogger('nfff_cells')
cell_logger.setLevel(logging.INFO)
cell_logger.propagate = False


def threads_from_env(raw: Optional[str]) -> int:
    """Worker count from NFFF_THREADS; unset, 0 or unparsable means all cores."""
    cores = os.cpu_count() or 1
    if raw is None or not raw.strip():
        return cores
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"NFFF_THREADS={raw!r} is not an integer, using {cores} threads")
        return cores
    if value < 0:
        logger.warning(f"NFFF_THREADS={value} is negative, using {cores} threads")
        return cores
    return value or cores


class Config:
    """Toolkit configuration. Physics and solver limits are hardcoded constants."""

    VERSION = '0.4.0'

    # ── Runtime (from .env) ──
    LOG_LEVEL = os.getenv('NFFF_LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('NFFF_LOG_FILE', '')
    CELL_LOG_FILE = os.getenv('NFFF_CELL_LOG', '')
    THREADS = threads_from_env(os.getenv('NFFF_THREADS'))

    # ── Physics ──
    SPEED_OF_LIGHT = constants.c          # 299 792 458 m/s, exact
    EXCLUSION_RADIUS_M = 1e-9             # antenna-touching singularity
    MIN_ELEMENT_SEPARATION_M = 1e-12

    # ── Metric conventions ──
    MISMATCH_FLOOR_DB = -60.0
    CONDITION_CLAMP = 1e18
    MAX_CONDITION = 1e12                  # on the equilibrated matrix
    DOF_REL_THRESHOLD = 0.01
    MIN_KL_SAMPLES = 100
    MIN_SAMPLE_VARIANCE = 1e-15

    # ── Pseudo-true solver ──
    INIT_N_THETA = 181
    INIT_N_TAU = 256
    MAX_ITERATIONS = 200
    MAX_RESTARTS = 3
    GRADIENT_TOL = 1e-10
    STALL_GRADIENT_TOL = 1e-6             # accepted when no step can lower the cost
    STEP_TOL = 1e-12
    MAX_DAMPING = 1e12
    FD_REL_STEP = 1e-6

    # ── Channel models ──
    DEFAULT_D_CORR_M = 10.0
    UMI_BREAKPOINT_M = 18.0
    UMI_DECAY_M = 36.0

    # ── SER calibration ──
    TARGET_SER = 1e-3
    TOL_DB = 0.25
    SNR_SEARCH_MIN_DB = -20.0
    SNR_SEARCH_MAX_DB = 60.0
    SNR_SEARCH_START_DB = 10.0
    SNR_SEARCH_STEP_DB = 2.0
    MIN_SYMBOLS_PER_TARGET = 100          # n >= 100 / target_ser
    MAX_SYMBOLS_MULTIPLIER = 16
    SYMBOLS_PER_DRAW = 1024

    # ── Sweeps ──
    MAX_FAILED_FRACTION = 0.05
    CSV_FLOAT_FORMAT = '%.12g'


def configure_logging(level: Optional[str] = None, quiet: bool = False):
    """Attach console (stderr) and optional rotating file handlers."""
    root = logging.getLogger()
    if getattr(root, '_nfff_configured', False):
        return
    level_name = 'WARNING' if quiet else (level or Config.LOG_LEVEL)
    handlers = [logging.StreamHandler(sys.stderr)]
    if Config.LOG_FILE:
        handlers.append(RotatingFileHandler(Config.LOG_FILE, maxBytes=10*1024*1024, backupCount=5))
    logging.basicConfig(level=getattr(logging, level_name.upper(), logging.INFO),
                        format=LOG_FORMAT, handlers=handlers)

    if Config.CELL_LOG_FILE:
        _ch = RotatingFileHandler(Config.CELL_LOG_FILE, maxBytes=20*1024*1024, backupCount=3)
        _ch.setFormatter(logging.Formatter('%(asctime)s | %(message)s'))
        cell_logger.addHandler(_ch)
    root._nfff_configured = True
