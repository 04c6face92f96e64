"""
Saliency heatmaps: spatial masks blended over their frame, temporal weights
as a strip of coloured cells.
"""

import os
from typing import Sequence

import cv2
import numpy as np

from .errors import InputError, PersistenceError
from .logger import get_logger

logger = get_logger(__name__)

COLORMAP = cv2.COLORMAP_VIRIDIS
ALPHA = 0.5


def _to_bgr8(frame: np.ndarray) -> np.ndarray:
    """RGB frame (float in [0, 1] or uint8) to BGR uint8"""
    image = np.asarray(frame)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 frame, got shape {image.shape}")
    if image.dtype != np.uint8:
        image = np.round(np.clip(image.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    return cv2.cvtColor(image, cv2.COLOR_RGB2BGR)


def _colorize(values: np.ndarray) -> np.ndarray:
    levels = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    return cv2.applyColorMap(levels, COLORMAP)


def _write_png(path: str, image: np.ndarray) -> None:
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        ok = cv2.imwrite(path, image)
    except (OSError, cv2.error) as e:
        raise PersistenceError(f"could not write heatmap {path}: {e}") from e
    if not ok:
        raise PersistenceError(f"could not write heatmap {path}")


def render_heatmap(frame: np.ndarray, mask: np.ndarray, out: str) -> np.ndarray:
    """Upsample ``mask`` to the frame, colour it and blend at alpha 0.5; returns the BGR image"""
    base = _to_bgr8(frame)
    values = np.asarray(mask, dtype=np.float32)
    if values.ndim != 2 or values.size == 0:
        raise InputError(f"mask must be a non-empty 2-D array, got shape {values.shape}")
    height, width = base.shape[:2]
    upsampled = cv2.resize(values, (width, height), interpolation=cv2.INTER_LINEAR)
    overlay = cv2.addWeighted(base, 1.0 - ALPHA, _colorize(upsampled), ALPHA, 0.0)
    _write_png(out, overlay)
    logger.debug(f"Wrote heatmap {out}")
    return overlay


def render_temporal_strip(weights: Sequence[float], out: str, cell: int = 32) -> np.ndarray:
    """One cell per timestep, coloured by weight relative to the largest weight"""
    values = np.asarray(weights, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InputError("no temporal weights to render")
    peak = values.max()
    scaled = values / peak if peak > 0 else values
    strip = np.repeat(np.repeat(scaled[None, :], cell, axis=0), cell, axis=1)
    image = _colorize(strip)
    _write_png(out, image)
    return image
