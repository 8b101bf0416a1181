# sparse_filter/utils.py
import hashlib
import json
import math
from typing import Any

import numpy as np


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def config_fingerprint(config: Any) -> str:
    """SHA256 від канонічного JSON-дампу конфігурації."""
    return hash_text(json.dumps(config, sort_keys=True, default=str))


def format_float(value: float) -> str:
    # repr() дає найкоротший рядок, що відновлює той самий double
    return repr(float(value))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def wrap_angle(angle):
    """Map angles into (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    # mod дає [-pi, pi), а нам потрібно (-pi, pi]
    return np.where(wrapped == -math.pi, math.pi, wrapped)
