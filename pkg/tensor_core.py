"""
Tensor Core Module
Dense NCHW tensor helpers and the forward primitives (dilated convolution,
inference batch normalization, elementwise ops) every stage builds on.

Tensors are plain numpy arrays of dtype float32 with shape
(batch, channels, height, width).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from errors import ConfigurationError, ShapeError

DTYPE = np.float32


def as_tensor(data, name: str = "tensor") -> np.ndarray:
    """
    Validate and convert an array-like to a float32 NCHW tensor.

    Args:
        data: Array-like of rank 4
        name: Name used in error messages

    Returns:
        C-contiguous float32 array
    """
    array = np.ascontiguousarray(data, dtype=DTYPE)
    if array.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (batch, channels, height, width), got shape {array.shape}")
    if min(array.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {array.shape}")
    return array


def _pair(value, name: str) -> Tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise ConfigurationError(f"{name} must have two components, got {value!r}")
    return pair


@dataclass(frozen=True)
class Conv2dParams:
    """Stride-1 dilated cross-correlation parameters."""

    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    dilation: Tuple[int, int] = (1, 1)
    padding: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        weight = np.ascontiguousarray(self.weight, dtype=DTYPE)
        if weight.ndim != 4 or min(weight.shape) < 1:
            raise ConfigurationError(f"conv weight must be (out, in, kh, kw) with positive sizes, got {weight.shape}")
        object.__setattr__(self, 'weight', weight)

        if self.bias is not None:
            bias = np.ascontiguousarray(self.bias, dtype=DTYPE).reshape(-1)
            if bias.shape[0] != weight.shape[0]:
                raise ConfigurationError(f"conv bias has {bias.shape[0]} entries for {weight.shape[0]} output channels")
            object.__setattr__(self, 'bias', bias)

        dilation = _pair(self.dilation, "dilation")
        padding = _pair(self.padding, "padding")
        if min(dilation) < 1:
            raise ConfigurationError(f"dilation must be >= 1, got {dilation}")
        if min(padding) < 0:
            raise ConfigurationError(f"padding must be >= 0, got {padding}")
        object.__setattr__(self, 'dilation', dilation)
        object.__setattr__(self, 'padding', padding)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-mode batch normalization (running statistics only)."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        arrays = {}
        for key in ('gamma', 'beta', 'running_mean', 'running_var'):
            arrays[key] = np.ascontiguousarray(getattr(self, key), dtype=DTYPE).reshape(-1)
            object.__setattr__(self, key, arrays[key])

        sizes = {a.shape[0] for a in arrays.values()}
        if len(sizes) != 1:
            raise ConfigurationError(f"batch norm arrays disagree in length: {sorted(sizes)}")
        if np.any(arrays['running_var'] < 0):
            raise ConfigurationError("batch norm running_var must be non-negative")
        if not self.epsilon > 0:
            raise ConfigurationError(f"batch norm epsilon must be positive, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, channels: int, epsilon: float = 1e-5) -> 'BatchNormParams':
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            epsilon=epsilon,
        )


def output_size(size: int, kernel: int, dilation: int, padding: int) -> int:
    """Spatial output size of a stride-1 convolution."""
    return size + 2 * padding - dilation * (kernel - 1)


def conv2d(x: np.ndarray, params: Conv2dParams) -> np.ndarray:
    """
    Dilated 2-D cross-correlation, stride 1, zero padding.

    Each kernel tap contributes one channel-mixing product over a shifted
    window of the padded input. Taps are accumulated in float64 and the
    result is rounded to float32 once.

    Args:
        x: Input tensor (N, C_in, H, W)
        params: Convolution parameters

    Returns:
        Output tensor (N, C_out, H_out, W_out)
    """
    x = as_tensor(x, "conv input")
    n, channels, height, width = x.shape
    if channels != params.in_channels:
        raise ConfigurationError(
            f"conv expects {params.in_channels} input channels, got {channels}"
        )

    kh, kw = params.kernel_size
    dh, dw = params.dilation
    ph, pw = params.padding
    out_h = output_size(height, kh, dh, ph)
    out_w = output_size(width, kw, dw, pw)
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"conv output would be {out_h}x{out_w} for input {height}x{width}, "
            f"kernel {kh}x{kw}, dilation {params.dilation}, padding {params.padding}"
        )

    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    weight = params.weight.astype(np.float64)
    out = np.zeros((n, params.out_channels, out_h, out_w), dtype=np.float64)

    for ky in range(kh):
        for kx in range(kw):
            window = padded[:, :, ky * dh:ky * dh + out_h, kx * dw:kx * dw + out_w]
            out += np.einsum('oc,nchw->nohw', weight[:, :, ky, kx], window, optimize=True)

    if params.bias is not None:
        out += params.bias.astype(np.float64)[None, :, None, None]
    return out.astype(DTYPE)


def batchnorm_infer(x: np.ndarray, params: BatchNormParams) -> np.ndarray:
    """out = gamma * (x - mean) / sqrt(var + eps) + beta, per channel."""
    x = as_tensor(x, "batch norm input")
    if x.shape[1] != params.channels:
        raise ConfigurationError(
            f"batch norm has {params.channels} channels, input has {x.shape[1]}"
        )
    factor = params.gamma / np.sqrt(params.running_var + DTYPE(params.epsilon))
    shift = params.beta - params.running_mean * factor
    return (x * factor[None, :, None, None] + shift[None, :, None, None]).astype(DTYPE)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot add tensors of shapes {a.shape} and {b.shape}")
    return a + b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return as_tensor(a) * DTYPE(s)


def clamp01(a: np.ndarray) -> np.ndarray:
    return np.clip(as_tensor(a), 0.0, 1.0)


def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(as_tensor(a), DTYPE(0.0))


def leaky_relu(a: np.ndarray, slope: float = 0.05) -> np.ndarray:
    a = as_tensor(a)
    return np.where(a >= 0, a, a * DTYPE(slope)).astype(DTYPE)
