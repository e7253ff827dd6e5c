"""
Statistical Global Color Adjustment.

Twelve global statistics (channel mean, standard deviation, bright-tail
mean, dark-tail mean) drive a small perceptron that predicts a temperature
shift, a tint shift and a saturation gain. The correction is applied in RGB
around the Rec.709 luminance.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigurationError, DegenerateInputError, ShapeError
from tensor_core import DTYPE, as_tensor, clamp01

logger = logging.getLogger(__name__)

STAT_COUNT = 12
RAW_OUTPUTS = 3
TAIL_FRACTION = 0.05
MIN_PIXELS = 20
REC709 = (0.2126, 0.7152, 0.0722)
STAT_GROUPS = ('mean', 'std', 'bright', 'dark')


@dataclass(frozen=True)
class StatVector:
    """Per-channel statistics, each an array of 3 (r, g, b)."""

    mu: np.ndarray
    sigma: np.ndarray
    v_bright: np.ndarray
    v_dark: np.ndarray

    def as_array(self) -> np.ndarray:
        """[mu_r, mu_g, mu_b, sigma_r, ..., vd_b] as float64."""
        return np.concatenate([self.mu, self.sigma, self.v_bright, self.v_dark]).astype(np.float64)

    @classmethod
    def from_array(cls, values) -> 'StatVector':
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != STAT_COUNT:
            raise ShapeError(f"stat vector needs {STAT_COUNT} values, got {values.shape[0]}")
        return cls(values[0:3], values[3:6], values[6:9], values[9:12])


@dataclass(frozen=True)
class ColorAdjustment:
    delta_t: float = 0.0
    delta_tau: float = 0.0
    s_gain: float = 1.0

    def within_bounds(self, lambda_t: float = 0.15, lambda_s: float = 0.5) -> bool:
        return (
            abs(self.delta_t) <= lambda_t
            and abs(self.delta_tau) <= lambda_t
            and 1.0 - lambda_s <= self.s_gain <= 1.0 + lambda_s
        )

    def to_dict(self) -> dict:
        return {'delta_t': self.delta_t, 'delta_tau': self.delta_tau, 's_gain': self.s_gain}


@dataclass(frozen=True)
class SgcaParams:
    """
    Weights of the 12 -> hidden (ReLU) -> 3 perceptron plus the output scales.

    Args:
        w1: (hidden, 12) first layer weight
        b1: (hidden,) first layer bias
        w2: (3, hidden) output layer weight
        b2: (3,) output layer bias
        lambda_t: Bound of the temperature and tint shifts
        lambda_s: Bound of the saturation gain around 1
        stat_mask: Which statistic groups (mean, std, bright, dark) feed the network
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    lambda_t: float = 0.15
    lambda_s: float = 0.5
    stat_mask: Tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __post_init__(self):
        w1 = np.ascontiguousarray(self.w1, dtype=DTYPE)
        b1 = np.ascontiguousarray(self.b1, dtype=DTYPE).reshape(-1)
        w2 = np.ascontiguousarray(self.w2, dtype=DTYPE)
        b2 = np.ascontiguousarray(self.b2, dtype=DTYPE).reshape(-1)
        if w1.ndim != 2 or w1.shape[1] != STAT_COUNT:
            raise ConfigurationError(f"SGCA first layer must be (hidden, {STAT_COUNT}), got {w1.shape}")
        hidden = w1.shape[0]
        if b1.shape != (hidden,):
            raise ConfigurationError(f"SGCA first bias must have {hidden} entries, got {b1.shape[0]}")
        if w2.shape != (RAW_OUTPUTS, hidden):
            raise ConfigurationError(f"SGCA output layer must be ({RAW_OUTPUTS}, {hidden}), got {w2.shape}")
        if b2.shape != (RAW_OUTPUTS,):
            raise ConfigurationError(f"SGCA output bias must have {RAW_OUTPUTS} entries, got {b2.shape[0]}")
        mask = tuple(bool(m) for m in self.stat_mask)
        if len(mask) != len(STAT_GROUPS):
            raise ConfigurationError(f"stat_mask needs {len(STAT_GROUPS)} flags, got {len(mask)}")
        for name, value in (('w1', w1), ('b1', b1), ('w2', w2), ('b2', b2), ('stat_mask', mask)):
            object.__setattr__(self, name, value)

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    @classmethod
    def zeros(cls, hidden: int = 16, **kwargs) -> 'SgcaParams':
        return cls(
            np.zeros((hidden, STAT_COUNT)), np.zeros(hidden),
            np.zeros((RAW_OUTPUTS, hidden)), np.zeros(RAW_OUTPUTS),
            **kwargs,
        )

    @classmethod
    def random(cls, rng: np.random.Generator, hidden: int = 16, scale: float = 0.5, **kwargs) -> 'SgcaParams':
        return cls(
            rng.uniform(-scale, scale, (hidden, STAT_COUNT)), rng.uniform(-scale, scale, hidden),
            rng.uniform(-scale, scale, (RAW_OUTPUTS, hidden)), rng.uniform(-scale, scale, RAW_OUTPUTS),
            **kwargs,
        )

    def feature_mask(self) -> np.ndarray:
        return np.repeat(np.asarray(self.stat_mask, dtype=np.float64), 3)


def compute_stats(image: np.ndarray) -> StatVector:
    """
    Channel statistics of a single RGB image.

    The bright and dark tails hold k = max(1, floor(0.05 * H * W)) values,
    found by partial selection.
    """
    image = as_tensor(image, "SGCA input")
    if image.shape[0] != 1 or image.shape[1] != 3:
        raise ShapeError(f"compute_stats expects a 1x3xHxW image, got {image.shape}")
    pixels = image.shape[2] * image.shape[3]
    if pixels < MIN_PIXELS:
        raise DegenerateInputError(f"SGCA statistics need at least {MIN_PIXELS} pixels, got {pixels}")

    k = max(1, int(math.floor(TAIL_FRACTION * pixels)))
    flat = image.reshape(3, pixels).astype(np.float64)

    mu = flat.mean(axis=1)
    sigma = flat.std(axis=1)
    bright = np.partition(flat, pixels - k, axis=1)[:, pixels - k:].mean(axis=1)
    dark = np.partition(flat, k - 1, axis=1)[:, :k].mean(axis=1)
    # tail means can drift past the mean by rounding on flat channels
    bright = np.maximum(bright, mu)
    dark = np.minimum(dark, mu)
    return StatVector(mu, sigma, bright, dark)


def predict_adjustment(stats: StatVector, params: SgcaParams) -> ColorAdjustment:
    features = stats.as_array() * params.feature_mask()
    hidden = np.maximum(params.w1.astype(np.float64) @ features + params.b1, 0.0)
    raw = params.w2.astype(np.float64) @ hidden + params.b2
    return ColorAdjustment(
        delta_t=float(params.lambda_t * np.tanh(raw[0])),
        delta_tau=float(params.lambda_t * np.tanh(raw[1])),
        s_gain=float(1.0 + params.lambda_s * np.tanh(raw[2])),
    )


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec.709 luminance, shape (N, 1, H, W)."""
    r, g, b = REC709
    return (r * image[:, 0:1] + g * image[:, 1:2] + b * image[:, 2:3]).astype(image.dtype)


def apply_adjustment(image: np.ndarray, adj: ColorAdjustment, clamp: bool = True) -> np.ndarray:
    """
    Shift temperature and tint, then scale chroma about the luminance.

    Args:
        image: (N, 3, H, W) tensor in [0, 1]
        adj: Adjustment to apply
        clamp: Clamp the result to [0, 1]

    Returns:
        Adjusted tensor
    """
    image = as_tensor(image, "SGCA input")
    if image.shape[1] != 3:
        raise ShapeError(f"apply_adjustment needs 3 channels, got {image.shape[1]}")

    shifted = image.astype(np.float64)
    shifted[:, 0] += adj.delta_t
    shifted[:, 1] -= adj.delta_tau
    shifted[:, 2] -= adj.delta_t
    y = luminance(shifted)
    out = (y + adj.s_gain * (shifted - y)).astype(DTYPE)
    return clamp01(out) if clamp else out


def sgca_forward(image: np.ndarray, params: SgcaParams,
                 adjustments: Optional[List[ColorAdjustment]] = None) -> np.ndarray:
    """
    Apply the predicted adjustment to every image of a batch.

    Args:
        image: (N, 3, H, W) tensor in [0, 1]
        params: Perceptron weights
        adjustments: When given, the per-image predictions are appended here

    Returns:
        Adjusted tensor, clamped to [0, 1]
    """
    image = as_tensor(image, "SGCA input")
    outputs = []
    for i in range(image.shape[0]):
        single = image[i:i + 1]
        adj = predict_adjustment(compute_stats(single), params)
        if adjustments is not None:
            adjustments.append(adj)
        outputs.append(apply_adjustment(single, adj))
    return np.concatenate(outputs, axis=0)
