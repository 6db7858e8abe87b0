#!/usr/bin/env python3
"""
Result persistence: sweep CSVs, metrics JSON and the per-run metadata
sidecar `<out>.meta.json`. All writes go through a temp file in the target
directory and os.replace, so a reader never sees a half-written file.
"""

import json
import math
import os
import platform
import tempfile
from datetime import datetime, timezone
from typing import Any, Callable, Dict, Optional
import numpy as np
import pandas as pd
import scipy
from config import Config, logger
from errors import OutputError
from sweep_config import ScenarioConfig


def sidecar_path(out_path: str) -> str:
    return f"{out_path}.meta.json"


def _atomic_write(path: str, write: Callable[[Any], None]):
    dir_name = os.path.dirname(os.path.abspath(path))
    tmp_path = None
    try:
        fd, tmp_path = tempfile.mkstemp(dir=dir_name, suffix='.tmp')
        with os.fdopen(fd, 'w', newline='') as f:
            write(f)
        os.replace(tmp_path, path)
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        if tmp_path and os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise OutputError(f"cannot write '{path}': {e}") from e


def _json_safe(value):
    """NaN/inf become null; numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: str, payload: dict):
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False)
    _atomic_write(path, lambda f: f.write(text + '\n'))


def write_csv(path: str, frame: pd.DataFrame):
    _atomic_write(path, lambda f: frame.to_csv(f, index=False, float_format=Config.CSV_FLOAT_FORMAT,
                                               na_rep='nan', lineterminator='\n'))


def run_metadata(cfg: ScenarioConfig, seed_source: str, wall_time_s: float, threads: int,
                 n_cells: int, n_failed: int, extras: Optional[Dict[str, float]] = None) -> dict:
    return {
        'kind': cfg.kind,
        'config_hash': cfg.config_hash(),
        'seed': cfg.seed,
        'seed_source': seed_source,
        'n_cells': n_cells,
        'n_failed': n_failed,
        'threads': threads,
        'shards': cfg.ser.n_shards,
        'wall_time_s': round(wall_time_s, 6),
        'finished_utc': datetime.now(timezone.utc).isoformat(),
        'versions': {
            'nfff': Config.VERSION,
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'pandas': pd.__version__,
        },
        'extras': extras or {},
        'config': cfg.to_dict(),
    }


def save_run(out_path: str, result_payload, metadata: dict):
    """Write the result (DataFrame → CSV, dict → JSON) and then its sidecar."""
    if isinstance(result_payload, pd.DataFrame):
        write_csv(out_path, result_payload)
    else:
        write_json(out_path, result_payload)
    write_json(sidecar_path(out_path), metadata)
    logger.info(f"Saved {out_path} and {sidecar_path(out_path)}")
