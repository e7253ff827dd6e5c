"""
Loss Evaluation Module
Training objectives evaluated as plain scores: Charbonnier, normalized
PSNR loss, feature (perceptual) distance and RGB angular colour loss.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from errors import ShapeError
from tensor_core import as_tensor

CHARBONNIER_EPS = 1e-8
RMSE_EPS = 1e-8
COLOR_EPS = 1e-8

FeatureExtractor = Callable[[np.ndarray], np.ndarray]


def identity_extractor(x: np.ndarray) -> np.ndarray:
    return x


@dataclass(frozen=True)
class LossWeights:
    charbonnier: float = 1.0
    psnr: float = 2.0
    perceptual: float = 0.01
    color: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    charbonnier: float
    psnr_loss: float
    perceptual: float
    color: float
    total: float
    weights: LossWeights = LossWeights()

    def to_dict(self) -> Dict[str, float]:
        return {
            'charbonnier': self.charbonnier,
            'psnr_loss': self.psnr_loss,
            'perceptual': self.perceptual,
            'color': self.color,
            'total': self.total,
        }


def _pair(out: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    out = as_tensor(out, "output").astype(np.float64)
    gt = as_tensor(gt, "ground truth").astype(np.float64)
    if out.shape != gt.shape:
        raise ShapeError(f"loss inputs differ in shape: {out.shape} vs {gt.shape}")
    return out, gt


def charbonnier(out: np.ndarray, gt: np.ndarray) -> float:
    """mean(sqrt(d^2 + eps^2)), eps = 1e-8."""
    out, gt = _pair(out, gt)
    return float(np.mean(np.sqrt((out - gt) ** 2 + CHARBONNIER_EPS ** 2)))


def psnr_loss(out: np.ndarray, gt: np.ndarray) -> float:
    """(50 - 20 log10(1 / RMSE)) / 100 with RMSE = sqrt(MSE + 1e-8)."""
    out, gt = _pair(out, gt)
    rmse = np.sqrt(np.mean((out - gt) ** 2) + RMSE_EPS)
    return float((50.0 - 20.0 * np.log10(1.0 / rmse)) / 100.0)


def perceptual(out: np.ndarray, gt: np.ndarray, extractor: Optional[FeatureExtractor] = None) -> float:
    """
    Mean squared distance between extracted features.

    Args:
        out: Enhanced image
        gt: Reference image
        extractor: Any tensor -> tensor map; identity when omitted

    Returns:
        Mean of squared feature differences
    """
    out, gt = _pair(out, gt)
    extractor = extractor or identity_extractor
    f_out = np.asarray(extractor(out), dtype=np.float64)
    f_gt = np.asarray(extractor(gt), dtype=np.float64)
    if f_out.shape != f_gt.shape:
        raise ShapeError(f"feature extractor returned shapes {f_out.shape} and {f_gt.shape}")
    if f_out.size == 0:
        return 0.0
    return float(np.mean((f_out - f_gt) ** 2))


def color_loss(out: np.ndarray, gt: np.ndarray) -> float:
    """
    Mean angle (radians) between per-pixel RGB vectors.

    The norm product is floored at eps, so a black pixel scores pi/2 and
    parallel vectors score 0.
    """
    out, gt = _pair(out, gt)
    if out.shape[1] != 3:
        raise ShapeError(f"color loss needs 3 channels, got {out.shape[1]}")
    dot = np.sum(out * gt, axis=1)
    norms = np.linalg.norm(out, axis=1) * np.linalg.norm(gt, axis=1)
    cosine = np.clip(dot / np.maximum(norms, COLOR_EPS), -1.0, 1.0)
    return float(np.mean(np.arccos(cosine)))


def total_loss(out: np.ndarray, gt: np.ndarray, extractor: Optional[FeatureExtractor] = None,
               weights: Optional[LossWeights] = None) -> LossBreakdown:
    """Weighted sum of the four terms (default weights 1, 2, 0.01, 1)."""
    weights = weights or LossWeights()
    terms = dict(
        charbonnier=charbonnier(out, gt),
        psnr_loss=psnr_loss(out, gt),
        perceptual=perceptual(out, gt, extractor),
        color=color_loss(out, gt),
    )
    total = (weights.charbonnier * terms['charbonnier']
             + weights.psnr * terms['psnr_loss']
             + weights.perceptual * terms['perceptual']
             + weights.color * terms['color'])
    return LossBreakdown(total=total, weights=weights, **terms)
