"""Raw video I/O: planar RGB, 8-bit, frame-major, no header."""

from __future__ import annotations

import os

import numpy as np

from .errors import ShapeError
from .tensor import FLOAT


def read_raw_video(path: str, width: int, height: int, frame_count: int) -> np.ndarray:
    """Read frames as (N, 3, H, W) float32 in [0, 1]."""
    need = frame_count * 3 * height * width
    size = os.path.getsize(path)
    if size < need:
        raise ShapeError(
            f"{path}: {size} bytes cannot hold {frame_count} frames of "
            f"{width}x{height} planar RGB ({need} bytes needed)"
        )
    raw = np.fromfile(path, dtype=np.uint8, count=need)
    frames = raw.reshape(frame_count, 3, height, width)
    return (frames.astype(FLOAT) / FLOAT(255.0)).astype(FLOAT)


def write_raw_video(path: str, frames: np.ndarray) -> None:
    """Write (N, 3, H, W) float32 [0, 1] frames as 8-bit planar RGB."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ShapeError(f"frames must be (N, 3, H, W), got {frames.shape}")
    data = np.clip(np.rint(frames * 255.0), 0, 255).astype(np.uint8)
    data.tofile(path)
