"""
Image Quality Metrics
Full-reference (PSNR, SSIM, CIEDE2000) and no-reference (UIQM, UCIQE)
scores for underwater images.

Conventions:
    - Tensors are 1x3xHxW in [0, 1].
    - sRGB -> CIELab uses skimage.color.rgb2lab: D65 white point, 2 degree
      observer, sRGB transfer (linear below 0.04045, ((c+0.055)/1.055)^2.4 above).
    - UIQM works on the 0-255 scale with 8x8 blocks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from skimage.color import rgb2hsv, rgb2lab
from skimage.metrics import structural_similarity

from errors import DegenerateInputError, ShapeError
from loss_eval import total_loss
from tensor_core import as_tensor

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11

UCIQE_WEIGHTS = (0.4680, 0.2745, 0.2576)
CONTRAST_FRACTION = 0.01

UIQM_WEIGHTS = (0.0282, 0.2953, 3.5753)
UIQM_BLOCK = 8
UICM_ALPHA = 0.1
UISM_CHANNEL_WEIGHTS = (0.299, 0.587, 0.114)

REC709 = (0.2126, 0.7152, 0.0722)


def _hwc(image: np.ndarray, name: str = "image") -> np.ndarray:
    """1x3xHxW tensor -> (H, W, 3) float64."""
    image = as_tensor(image, name)
    if image.shape[0] != 1 or image.shape[1] != 3:
        raise ShapeError(f"{name} must be a single 3-channel image (1x3xHxW), got {image.shape}")
    return image[0].transpose(1, 2, 0).astype(np.float64)


def _pair(ref: np.ndarray, test: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ref = _hwc(ref, "reference image")
    test = _hwc(test, "test image")
    if ref.shape != test.shape:
        raise ShapeError(f"image sizes differ: {ref.shape[1]}x{ref.shape[0]} vs {test.shape[1]}x{test.shape[0]}")
    return ref, test


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB (peak 1.0), capped at 99 dB."""
    ref, test = _pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _luma(rgb: np.ndarray) -> np.ndarray:
    r, g, b = REC709
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """
    Single-scale SSIM on Rec.709 luminance.

    11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, data range 1,
    population covariances.
    """
    ref, test = _pair(ref, test)
    height, width = ref.shape[:2]
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise DegenerateInputError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {width}x{height}")
    return float(structural_similarity(
        _luma(ref), _luma(test),
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
    ))


@dataclass(frozen=True)
class UciqeComponents:
    sigma_c: float
    con_l: float
    mu_s: float
    uciqe: float

    @classmethod
    def from_components(cls, sigma_c: float, con_l: float, mu_s: float) -> 'UciqeComponents':
        return cls(sigma_c, con_l, mu_s, combine_uciqe(sigma_c, con_l, mu_s))

    def to_dict(self) -> Dict[str, float]:
        return {'sigma_c': self.sigma_c, 'con_l': self.con_l, 'mu_s': self.mu_s, 'uciqe': self.uciqe}


def combine_uciqe(sigma_c: float, con_l: float, mu_s: float) -> float:
    c1, c2, c3 = UCIQE_WEIGHTS
    return c1 * sigma_c + c2 * con_l + c3 * mu_s


def uciqe(image: np.ndarray) -> UciqeComponents:
    """
    UCIQE and its components.

    sigma_c: population std of CIELab chroma / 100
    con_l:   (mean of brightest 1% L - mean of darkest 1% L) / 100
    mu_s:    mean HSV saturation
    """
    rgb = np.clip(_hwc(image), 0.0, 1.0)
    lab = rgb2lab(rgb)
    chroma = np.hypot(lab[..., 1], lab[..., 2]) / 100.0
    sigma_c = float(chroma.std())

    lightness = np.sort(lab[..., 0].ravel())
    k = max(1, int(math.floor(lightness.size * CONTRAST_FRACTION)))
    con_l = float((lightness[-k:].mean() - lightness[:k].mean()) / 100.0)

    mu_s = float(rgb2hsv(rgb)[..., 1].mean())
    return UciqeComponents.from_components(sigma_c, con_l, mu_s)


@dataclass(frozen=True)
class UiqmComponents:
    uicm: float
    uism: float
    uiconm: float

    @property
    def uiqm(self) -> float:
        c1, c2, c3 = UIQM_WEIGHTS
        return c1 * self.uicm + c2 * self.uism + c3 * self.uiconm

    def to_dict(self) -> Dict[str, float]:
        return {'uicm': self.uicm, 'uism': self.uism, 'uiconm': self.uiconm}


def _trimmed_stats(values: np.ndarray, alpha: float = UICM_ALPHA) -> Tuple[float, float]:
    """Asymmetric alpha-trimmed mean and the variance around it."""
    ordered = np.sort(values)
    count = ordered.size
    low = int(math.ceil(alpha * count))
    high = int(math.floor(alpha * count))
    kept = ordered[low:count - high]
    mean = float(kept.mean()) if kept.size else float(ordered.mean())
    variance = float(np.mean((values - mean) ** 2))
    return mean, variance


def _uicm(rgb255: np.ndarray) -> float:
    r, g, b = rgb255[..., 0].ravel(), rgb255[..., 1].ravel(), rgb255[..., 2].ravel()
    mu_rg, var_rg = _trimmed_stats(r - g)
    mu_yb, var_yb = _trimmed_stats((r + g) / 2.0 - b)
    return -0.0268 * math.sqrt(mu_rg ** 2 + mu_yb ** 2) + 0.1586 * math.sqrt(var_rg + var_yb)


def _blocks(plane: np.ndarray, block: int) -> np.ndarray:
    """Crop to whole blocks and return (rows, cols, block, block[, C])."""
    rows, cols = plane.shape[0] // block, plane.shape[1] // block
    cropped = plane[:rows * block, :cols * block]
    shaped = cropped.reshape((rows, block, cols, block) + plane.shape[2:])
    return np.moveaxis(shaped, 2, 1)


def _eme(plane: np.ndarray, block: int = UIQM_BLOCK) -> float:
    tiles = _blocks(plane, block)
    rows, cols = tiles.shape[:2]
    peak = tiles.max(axis=(2, 3))
    floor = tiles.min(axis=(2, 3))
    valid = (peak > 0) & (floor > 0)
    ratio = np.where(valid, peak / np.where(valid, floor, 1.0), 1.0)
    return 2.0 / (rows * cols) * float(np.sum(np.log(ratio)))


def sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude rescaled so its maximum is 255."""
    magnitude = np.hypot(ndimage.sobel(plane, axis=1), ndimage.sobel(plane, axis=0))
    peak = magnitude.max()
    if peak > 0:
        magnitude *= 255.0 / peak
    return magnitude


def _uism(rgb255: np.ndarray) -> float:
    total = 0.0
    for c, weight in enumerate(UISM_CHANNEL_WEIGHTS):
        channel = rgb255[..., c]
        total += weight * _eme(sobel_magnitude(channel) * channel)
    return total


def _uiconm(rgb255: np.ndarray, block: int = UIQM_BLOCK) -> float:
    tiles = _blocks(rgb255, block)
    rows, cols = tiles.shape[:2]
    peak = tiles.max(axis=(2, 3, 4))
    floor = tiles.min(axis=(2, 3, 4))
    top = peak - floor
    bottom = peak + floor
    valid = (top > 0) & (bottom > 0)
    ratio = np.where(valid, top / np.where(valid, bottom, 1.0), 1.0)
    return -1.0 / (rows * cols) * float(np.sum(np.where(valid, ratio * np.log(ratio), 0.0)))


def uiqm_components(image: np.ndarray) -> UiqmComponents:
    rgb = _hwc(image)
    height, width = rgb.shape[:2]
    if height < UIQM_BLOCK or width < UIQM_BLOCK:
        raise DegenerateInputError(f"UIQM needs at least one {UIQM_BLOCK}x{UIQM_BLOCK} block, got {width}x{height}")
    rgb255 = np.clip(rgb, 0.0, 1.0) * 255.0
    return UiqmComponents(uicm=_uicm(rgb255), uism=_uism(rgb255), uiconm=_uiconm(rgb255))


def uiqm(image: np.ndarray) -> float:
    """UIQM = 0.0282 UICM + 0.2953 UISM + 3.5753 UIConM."""
    return uiqm_components(image).uiqm


def _delta_e00(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]
    pow25_7 = 25.0 ** 7

    c_bar = (np.hypot(a1, b1) + np.hypot(a2, b2)) / 2.0
    g = 0.5 * (1.0 - np.sqrt(c_bar ** 7 / (c_bar ** 7 + pow25_7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)
    h1p = np.mod(np.arctan2(b1, a1p), 2.0 * np.pi)
    h2p = np.mod(np.arctan2(b2, a2p), 2.0 * np.pi)

    chroma_product = c1p * c2p
    dh = h2p - h1p
    dh = np.where(dh > np.pi, dh - 2.0 * np.pi, dh)
    dh = np.where(dh < -np.pi, dh + 2.0 * np.pi, dh)
    dh = np.where(chroma_product == 0, 0.0, dh)

    dL = L2 - L1
    dC = c2p - c1p
    dH = 2.0 * np.sqrt(chroma_product) * np.sin(dh / 2.0)

    L_bar = (L1 + L2) / 2.0
    cp_bar = (c1p + c2p) / 2.0
    h_sum = h1p + h2p
    h_bar = np.where(
        np.abs(h1p - h2p) <= np.pi,
        h_sum / 2.0,
        np.where(h_sum < 2.0 * np.pi, (h_sum + 2.0 * np.pi) / 2.0, (h_sum - 2.0 * np.pi) / 2.0),
    )
    h_bar = np.where(chroma_product == 0, h_sum, h_bar)

    t = (1.0
         - 0.17 * np.cos(h_bar - np.radians(30.0))
         + 0.24 * np.cos(2.0 * h_bar)
         + 0.32 * np.cos(3.0 * h_bar + np.radians(6.0))
         - 0.20 * np.cos(4.0 * h_bar - np.radians(63.0)))
    d_theta = np.radians(30.0) * np.exp(-(((np.degrees(h_bar) - 275.0) / 25.0) ** 2))
    r_c = 2.0 * np.sqrt(cp_bar ** 7 / (cp_bar ** 7 + pow25_7))
    s_l = 1.0 + 0.015 * (L_bar - 50.0) ** 2 / np.sqrt(20.0 + (L_bar - 50.0) ** 2)
    s_c = 1.0 + 0.045 * cp_bar
    s_h = 1.0 + 0.015 * cp_bar * t
    r_t = -np.sin(2.0 * d_theta) * r_c

    lightness = dL / s_l
    chroma = dC / s_c
    hue = dH / s_h
    return np.sqrt(lightness ** 2 + chroma ** 2 + hue ** 2 + r_t * chroma * hue)


def ciede2000(lab1, lab2):
    """
    CIEDE2000 colour difference (kL = kC = kH = 1).

    Args:
        lab1: Lab triple or array (..., 3)
        lab2: Lab triple or array (..., 3)

    Returns:
        float for single triples, array otherwise
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    if lab1.shape != lab2.shape or lab1.shape[-1:] != (3,):
        raise ShapeError(f"Lab inputs must share a (..., 3) shape, got {lab1.shape} and {lab2.shape}")
    result = _delta_e00(lab1, lab2)
    return float(result) if result.ndim == 0 else result


def srgb_to_lab(image: np.ndarray) -> np.ndarray:
    """1x3xHxW sRGB tensor -> (H, W, 3) CIELab (D65)."""
    return rgb2lab(np.clip(_hwc(image), 0.0, 1.0))


def ciede2000_image(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean per-pixel CIEDE2000 between two sRGB images."""
    _pair(ref, test)
    return float(np.mean(_delta_e00(srgb_to_lab(ref), srgb_to_lab(test))))


@dataclass
class MetricReport:
    """Named metric values with a fixed JSON layout."""

    values: Dict[str, float] = field(default_factory=dict)
    uciqe: Optional[UciqeComponents] = None
    uiqm: Optional[UiqmComponents] = None
    loss: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        for name in ('psnr', 'ssim'):
            if name in self.values:
                data[name] = self.values[name]
        if self.uciqe is not None:
            data['uciqe'] = self.uciqe.to_dict()
        if self.uiqm is not None:
            data['uiqm'] = self.uiqm.uiqm
            data['uiqm_components'] = self.uiqm.to_dict()
        if 'ciede2000' in self.values:
            data['ciede2000'] = self.values['ciede2000']
        if self.loss is not None:
            data['loss'] = dict(self.loss)
        return data


def no_reference_report(image: np.ndarray) -> MetricReport:
    return MetricReport(uciqe=uciqe(image), uiqm=uiqm_components(image))


def full_reference_report(ref: np.ndarray, test: np.ndarray, include_loss: bool = True) -> MetricReport:
    """
    PSNR, SSIM, CIEDE2000 against the reference plus UIQM/UCIQE of the test image.

    Args:
        ref: Reference image
        test: Image under evaluation
        include_loss: Add the loss breakdown (identity feature extractor)

    Returns:
        MetricReport
    """
    _pair(ref, test)
    report = MetricReport(
        values={'psnr': psnr(ref, test), 'ssim': ssim(ref, test), 'ciede2000': ciede2000_image(ref, test)},
        uciqe=uciqe(test),
        uiqm=uiqm_components(test),
    )
    if include_loss:
        report.loss = total_loss(test, ref).to_dict()
    return report
