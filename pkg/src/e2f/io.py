"""Raw-array file helpers shared by the frame, volume and latent formats.

Arrays are stored as little-endian float32 in C order with a one-line text
sidecar ``<path>.shape`` giving the space-separated dimensions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def sidecar_path(path) -> Path:
    return Path(str(path) + ".shape")


def write_raw(path, array: np.ndarray) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f4")
    path.write_bytes(arr.tobytes())
    sidecar_path(path).write_text(" ".join(str(d) for d in arr.shape) + "\n")


def read_raw(path) -> np.ndarray:
    """Load a raw float32 file; returns float64 with the sidecar's shape."""
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FileNotFoundError(f"missing shape sidecar: {side}")
    dims = tuple(int(tok) for tok in side.read_text().split())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = int(np.prod(dims)) if dims else 0
    if data.size != expected:
        raise ValueError(
            f"{path}: payload has {data.size} float32 values, "
            f"sidecar shape {dims} needs {expected}"
        )
    return data.reshape(dims).astype(np.float64)
