"""
MRDConv Module
Multi-branch re-parameterized dilated convolution.

Training form: five dilated branches (conv + batch norm) are summed and
projected by a 1x1 fusion conv. Inference form: the same operator collapsed
into one dense 5x5 convolution with padding 2.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigurationError, ShapeError
from tensor_core import (
    DTYPE,
    BatchNormParams,
    Conv2dParams,
    as_tensor,
    batchnorm_infer,
    conv2d,
)

logger = logging.getLogger(__name__)

KERNEL_GRID = 5
GRID_PADDING = 2


class BranchKind(Enum):
    """Branch geometry: (kernel, dilation, padding)."""

    S3 = ((3, 3), (2, 2), (2, 2))
    S2 = ((2, 2), (2, 2), (1, 1))
    S1 = ((1, 1), (1, 1), (0, 0))
    V = ((3, 2), (2, 2), (2, 1))
    H = ((2, 3), (2, 2), (1, 2))

    @property
    def kernel(self) -> Tuple[int, int]:
        return self.value[0]

    @property
    def dilation(self) -> Tuple[int, int]:
        return self.value[1]

    @property
    def padding(self) -> Tuple[int, int]:
        return self.value[2]

    @property
    def key(self) -> str:
        """Lower-case name used in weight files."""
        return self.name.lower()

    def grid_rows(self) -> List[int]:
        """Rows of the 5x5 grid the kernel taps land on."""
        return [self.dilation[0] * k - self.padding[0] + GRID_PADDING for k in range(self.kernel[0])]

    def grid_cols(self) -> List[int]:
        return [self.dilation[1] * k - self.padding[1] + GRID_PADDING for k in range(self.kernel[1])]

    def matches(self, conv: Conv2dParams) -> bool:
        return (
            conv.kernel_size == self.kernel
            and conv.dilation == self.dilation
            and conv.padding == self.padding
        )


BRANCH_ORDER = (BranchKind.S3, BranchKind.S2, BranchKind.S1, BranchKind.V, BranchKind.H)


@dataclass(frozen=True)
class BranchWeights:
    conv: Conv2dParams
    bn: BatchNormParams


@dataclass(frozen=True)
class MrdConvTrainWeights:
    """Training-form weights: five bias-free branches plus the 1x1 fusion."""

    branches: Dict[BranchKind, BranchWeights]
    fusion: Conv2dParams

    def __post_init__(self):
        missing = [kind.name for kind in BRANCH_ORDER if kind not in self.branches]
        if missing:
            raise ConfigurationError(f"MRDConv branches missing: {', '.join(missing)}")

        first = self.branches[BranchKind.S3].conv
        for kind in BRANCH_ORDER:
            branch = self.branches[kind]
            if not kind.matches(branch.conv):
                raise ConfigurationError(
                    f"branch {kind.name} has kernel {branch.conv.kernel_size}, dilation {branch.conv.dilation}, "
                    f"padding {branch.conv.padding}; expected {kind.kernel}, {kind.dilation}, {kind.padding}"
                )
            if branch.conv.in_channels != first.in_channels or branch.conv.out_channels != first.out_channels:
                raise ConfigurationError(f"branch {kind.name} channels disagree with branch S3")
            if branch.bn.channels != branch.conv.out_channels:
                raise ConfigurationError(f"branch {kind.name} batch norm width {branch.bn.channels} != {branch.conv.out_channels}")

        if self.fusion.kernel_size != (1, 1) or self.fusion.padding != (0, 0):
            raise ConfigurationError(f"fusion must be a 1x1 convolution without padding, got {self.fusion.kernel_size}")
        if self.fusion.in_channels != first.out_channels:
            raise ConfigurationError(
                f"fusion expects {self.fusion.in_channels} mid channels, branches produce {first.out_channels}"
            )
        if self.fusion.bias is None:
            object.__setattr__(self, 'fusion', Conv2dParams(
                self.fusion.weight, np.zeros(self.fusion.out_channels), self.fusion.dilation, self.fusion.padding
            ))

    @property
    def in_channels(self) -> int:
        return self.branches[BranchKind.S3].conv.in_channels

    @property
    def mid_channels(self) -> int:
        return self.fusion.in_channels

    @property
    def out_channels(self) -> int:
        return self.fusion.out_channels

    @property
    def rep_scale(self) -> float:
        return self.mid_channels / self.out_channels


@dataclass(frozen=True)
class MrdConvInferWeights:
    """Collapsed form: a single 5x5 convolution, padding 2, dilation 1."""

    conv: Conv2dParams

    def __post_init__(self):
        if (
            self.conv.kernel_size != (KERNEL_GRID, KERNEL_GRID)
            or self.conv.dilation != (1, 1)
            or self.conv.padding != (GRID_PADDING, GRID_PADDING)
        ):
            raise ConfigurationError(
                f"inference layer must be 5x5 / dilation 1 / padding 2, got kernel {self.conv.kernel_size}, "
                f"dilation {self.conv.dilation}, padding {self.conv.padding}"
            )
        if self.conv.bias is None:
            object.__setattr__(self, 'conv', Conv2dParams(
                self.conv.weight, np.zeros(self.conv.out_channels), self.conv.dilation, self.conv.padding
            ))

    @property
    def in_channels(self) -> int:
        return self.conv.in_channels

    @property
    def out_channels(self) -> int:
        return self.conv.out_channels


def forward_train(x: np.ndarray, w: MrdConvTrainWeights) -> np.ndarray:
    """Y = fusion(sum over branches of BN_i(conv_i(x)))."""
    x = as_tensor(x, "MRDConv input")
    height, width = x.shape[2:]
    total = np.zeros((x.shape[0], w.mid_channels, height, width), dtype=np.float64)
    for kind in BRANCH_ORDER:
        branch = w.branches[kind]
        y = batchnorm_infer(conv2d(x, branch.conv), branch.bn)
        if y.shape[2:] != (height, width):
            raise ShapeError(
                f"branch {kind.name} produced {y.shape[2]}x{y.shape[3]} from {height}x{width}; geometry is broken"
            )
        total += y
    return conv2d(total, w.fusion)


def forward_infer(x: np.ndarray, w: MrdConvInferWeights) -> np.ndarray:
    return conv2d(x, w.conv)


def fuse_conv_bn(conv: Conv2dParams, bn: BatchNormParams) -> Conv2dParams:
    """
    Fold an inference batch norm into the preceding convolution.

    Args:
        conv: Convolution (bias optional)
        bn: Batch norm over the convolution's output channels

    Returns:
        Convolution with the same geometry whose forward equals BN(conv(x))
    """
    weight, bias = _fold(conv, bn)
    return Conv2dParams(weight, bias, conv.dilation, conv.padding)


def _fold(conv: Conv2dParams, bn: BatchNormParams) -> Tuple[np.ndarray, np.ndarray]:
    # float64 (weight, bias) of BN(conv(.))
    if conv.out_channels != bn.channels:
        raise ConfigurationError(f"cannot fuse conv with {conv.out_channels} outputs into batch norm of {bn.channels}")
    t = bn.gamma.astype(np.float64) / np.sqrt(bn.running_var.astype(np.float64) + bn.epsilon)
    weight = conv.weight.astype(np.float64) * t[:, None, None, None]
    conv_bias = conv.bias.astype(np.float64) if conv.bias is not None else 0.0
    bias = bn.beta.astype(np.float64) + (conv_bias - bn.running_mean.astype(np.float64)) * t
    return weight, bias


def _embed(weight: np.ndarray, kind: BranchKind) -> np.ndarray:
    out_c, in_c = weight.shape[:2]
    kernel = np.zeros((out_c, in_c, KERNEL_GRID, KERNEL_GRID), dtype=weight.dtype)
    rows, cols = np.ix_(kind.grid_rows(), kind.grid_cols())
    kernel[:, :, rows, cols] = weight
    return kernel


def embed_to_5x5(fused: Conv2dParams, kind: BranchKind) -> np.ndarray:
    """Scatter a branch kernel into the 5x5 grid that reproduces it under padding 2."""
    if not kind.matches(fused):
        raise ConfigurationError(
            f"kernel {fused.kernel_size} / dilation {fused.dilation} / padding {fused.padding} "
            f"is not the geometry of branch {kind.name}"
        )
    return _embed(fused.weight, kind)


def reparameterize(w: MrdConvTrainWeights) -> MrdConvInferWeights:
    """
    Collapse training-form weights into one 5x5 convolution.

    Each branch is BN-fused and embedded into the 5x5 grid; the summed kernel
    and bias are then mixed through the 1x1 fusion weights. The algebra runs
    in float64 and is rounded to float32 at the end.
    """
    k_sum = np.zeros((w.mid_channels, w.in_channels, KERNEL_GRID, KERNEL_GRID), dtype=np.float64)
    b_sum = np.zeros(w.mid_channels, dtype=np.float64)

    for kind in BRANCH_ORDER:
        branch = w.branches[kind]
        fused_weight, fused_bias = _fold(branch.conv, branch.bn)
        k_sum += _embed(fused_weight, kind)
        b_sum += fused_bias

    w_f = w.fusion.weight[:, :, 0, 0].astype(np.float64)
    b_f = w.fusion.bias.astype(np.float64)
    weight = np.einsum('om,mikl->oikl', w_f, k_sum)
    bias = w_f @ b_sum + b_f

    logger.debug("Collapsed MRDConv %d->%d (mid %d) into a 5x5 kernel", w.in_channels, w.out_channels, w.mid_channels)
    return MrdConvInferWeights(Conv2dParams(weight.astype(DTYPE), bias.astype(DTYPE), (1, 1), (GRID_PADDING, GRID_PADDING)))


def train_param_count(in_channels: int, out_channels: int, rep_scale: int) -> int:
    """
    Learnable parameters of a training-form layer.

    Branch kernels, batch norm gamma/beta per branch, fusion weight and bias.
    Running statistics are buffers and are not counted.
    """
    mid = out_channels * rep_scale
    taps = sum(kind.kernel[0] * kind.kernel[1] for kind in BRANCH_ORDER)
    branches = mid * in_channels * taps + 2 * mid * len(BRANCH_ORDER)
    return branches + out_channels * mid + out_channels


def infer_param_count(in_channels: int, out_channels: int) -> int:
    return out_channels * (KERNEL_GRID * KERNEL_GRID * in_channels + 1)


def init_train_weights(
    in_channels: int,
    out_channels: int,
    rep_scale: int = 4,
    rng: Optional[np.random.Generator] = None,
    weight_range: float = 1.0,
    var_range: Tuple[float, float] = (0.1, 2.0),
    epsilon: float = 1e-5,
    zero: bool = False,
) -> MrdConvTrainWeights:
    """
    Build training-form weights, either all-zero or uniformly sampled.

    Args:
        in_channels: Input channels
        out_channels: Output channels
        rep_scale: Mid-channel expansion factor
        rng: Random generator (required unless zero=True)
        weight_range: Conv/fusion weights and biases drawn from [-range, range]
        var_range: Batch norm running variance range
        epsilon: Batch norm epsilon
        zero: Zero kernels, identity batch norm, zero fusion

    Returns:
        MrdConvTrainWeights
    """
    if rep_scale < 1:
        raise ConfigurationError(f"rep_scale must be >= 1, got {rep_scale}")
    mid = out_channels * rep_scale

    branches = {}
    for kind in BRANCH_ORDER:
        shape = (mid, in_channels) + kind.kernel
        if zero:
            conv = Conv2dParams(np.zeros(shape), None, kind.dilation, kind.padding)
            bn = BatchNormParams.identity(mid, epsilon)
        else:
            conv = Conv2dParams(rng.uniform(-weight_range, weight_range, shape), None, kind.dilation, kind.padding)
            bn = BatchNormParams(
                gamma=rng.uniform(-weight_range, weight_range, mid),
                beta=rng.uniform(-weight_range, weight_range, mid),
                running_mean=rng.uniform(-weight_range, weight_range, mid),
                running_var=rng.uniform(var_range[0], var_range[1], mid),
                epsilon=epsilon,
            )
        branches[kind] = BranchWeights(conv, bn)

    if zero:
        fusion = Conv2dParams(np.zeros((out_channels, mid, 1, 1)), np.zeros(out_channels))
    else:
        fusion = Conv2dParams(
            rng.uniform(-weight_range, weight_range, (out_channels, mid, 1, 1)),
            rng.uniform(-weight_range, weight_range, out_channels),
        )
    return MrdConvTrainWeights(branches, fusion)
