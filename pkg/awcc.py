"""
Adaptive Weighted Channel Compensation.

Red and blue are pulled toward the green-channel mean by two learned
scalars, then a gray-world pass equalizes the three channel means.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import ConfigurationError, ShapeError
from tensor_core import DTYPE, as_tensor, clamp01

logger = logging.getLogger(__name__)

GRAY_WORLD_EPS = 1e-6
ALPHA_RANGE = (0.0, 2.0)


@dataclass(frozen=True)
class AwccParams:
    alpha_r: float = 1.0
    alpha_b: float = 1.0

    def __post_init__(self):
        for name in ('alpha_r', 'alpha_b'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigurationError(f"AWCC {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    def warn_if_out_of_range(self) -> bool:
        """Log a warning when an alpha leaves the recommended operating range."""
        low, high = ALPHA_RANGE
        outside = [
            f"{name}={getattr(self, name):.4f}"
            for name in ('alpha_r', 'alpha_b')
            if not low <= getattr(self, name) <= high
        ]
        if outside:
            logger.warning("AWCC weights outside [%.0f, %.0f]: %s", low, high, ", ".join(outside))
        return bool(outside)


def _rgb(image: np.ndarray) -> np.ndarray:
    image = as_tensor(image, "AWCC input")
    if image.shape[1] != 3:
        raise ShapeError(f"AWCC needs a 3-channel image, got {image.shape[1]} channels")
    return image


def _means(image: np.ndarray) -> np.ndarray:
    # (N, 3, 1, 1) float64
    return image.mean(axis=(2, 3), dtype=np.float64, keepdims=True)


def channel_means(image: np.ndarray) -> Tuple[float, float, float]:
    """Mean of each RGB channel over every pixel of a single image."""
    image = _rgb(image)
    if image.shape[0] != 1:
        raise ShapeError(f"channel_means expects a single image, got batch {image.shape[0]}")
    means = _means(image).reshape(3)
    return float(means[0]), float(means[1]), float(means[2])


def compensate(image: np.ndarray, params: AwccParams) -> np.ndarray:
    """
    Shift red and blue by alpha times their gap to the green mean.

    The shift is one scalar per channel and image; the result is not clamped.
    """
    image = _rgb(image)
    means = _means(image)
    out = image.astype(np.float64)
    out[:, 0] += params.alpha_r * (means[:, 1] - means[:, 0])
    out[:, 2] += params.alpha_b * (means[:, 1] - means[:, 2])
    return out.astype(DTYPE)


def gray_world_correct(image: np.ndarray, clamp: bool = True) -> np.ndarray:
    """
    Scale each channel so its mean moves to the mean of all three channel means.

    Args:
        image: 3-channel tensor, values may exceed [0, 1]
        clamp: Clamp the result to [0, 1]

    Returns:
        Corrected tensor
    """
    image = _rgb(image)
    means = _means(image)
    gray = means.mean(axis=1, keepdims=True)
    gains = gray / (means + GRAY_WORLD_EPS)
    out = (image.astype(np.float64) * gains).astype(DTYPE)
    return clamp01(out) if clamp else out


def awcc_forward(image: np.ndarray, params: AwccParams) -> np.ndarray:
    return gray_world_correct(compensate(image, params), clamp=True)
