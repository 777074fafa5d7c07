"""Heatmap colouring of normalized ECS maps and overlays on grayscale images.

Score 0 maps to dark red (128, 0, 0) and score 1 to bright yellow
(255, 255, 0), linearly, rounding half up.
"""
from __future__ import annotations

import numpy as np

LOW = np.array([128.0, 0.0, 0.0])
HIGH = np.array([255.0, 255.0, 0.0])


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def colormap(scores) -> np.ndarray:
    """Map scores in [0, 1] (any shape) to uint8 RGB with a trailing axis of 3."""
    u = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)[..., None]
    return _round_half_up(LOW + u * (HIGH - LOW)).astype(np.uint8)


def to_gray8(pixels) -> np.ndarray:
    """Pixels in [0, 1] to 8-bit gray levels."""
    return _round_half_up(np.clip(np.asarray(pixels, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def overlay(gray8: np.ndarray, heat_rgb: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """``round(alpha * heat + (1 - alpha) * gray)`` per channel."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"overlay alpha must lie in [0, 1], got {alpha}")
    gray = np.repeat(np.asarray(gray8, dtype=float)[..., None], 3, axis=-1)
    blend = alpha * heat_rgb.astype(float) + (1.0 - alpha) * gray
    return np.clip(_round_half_up(blend), 0, 255).astype(np.uint8)
