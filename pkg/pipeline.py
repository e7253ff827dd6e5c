"""
Pipeline Module
Assembles AWCC -> MRDConv backbone -> SGCA into one model, converts
training-form weights into the collapsed inference form and accounts for
parameters and FLOPs.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from awcc import AwccParams, awcc_forward
from errors import ConfigurationError, StateError
from mrdconv import (
    BRANCH_ORDER,
    KERNEL_GRID,
    MrdConvInferWeights,
    MrdConvTrainWeights,
    forward_infer,
    forward_train,
    infer_param_count,
    init_train_weights,
    reparameterize,
    train_param_count,
)
from sgca import RAW_OUTPUTS, STAT_COUNT, SgcaParams, sgca_forward
from tensor_core import as_tensor, clamp01, leaky_relu, relu

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'leaky_relu', 'none')

# Elementwise FLOPs per pixel of the non-convolution stages.
AWCC_FLOPS_PER_PIXEL = 3 + 2 + 3 + 3        # mean sums, red/blue shift, gain multiply, clamp
SGCA_STATS_FLOPS_PER_PIXEL = 3 * 4          # mean, variance (sub, square, add) per channel
SGCA_APPLY_FLOPS_PER_PIXEL = 3 + 5 + 9 + 3  # shift, luminance, chroma scale, clamp

FLOP_FORMULA = (
    "conv: 2*C_in*kh*kw*C_out*H*W + C_out*H*W (bias); batch norm: 2*C*H*W; branch sum: C*H*W; "
    "activation: C*H*W; residual add and clamp: 3*H*W each; "
    f"AWCC: {AWCC_FLOPS_PER_PIXEL}*H*W; SGCA: {SGCA_STATS_FLOPS_PER_PIXEL + SGCA_APPLY_FLOPS_PER_PIXEL}*H*W "
    "+ 2*(12*hidden + hidden*3) MLP; 1 MAC = 2 FLOPs"
)


class Mode(str, Enum):
    TRAIN = 'train'
    INFERENCE = 'inference'


@dataclass(frozen=True)
class ModelConfig:
    """
    Backbone layout and the settings that shape the whole model.

    Args:
        channel_plan: (in_channels, out_channels) per MRDConv layer
        rep_scale: Mid-channel expansion of the training form
        activation: 'relu', 'leaky_relu' or 'none', applied between layers
        leaky_slope: Negative slope of leaky_relu
        residual: Add the AWCC output to the backbone output
        sgca_hidden: Hidden width of the SGCA perceptron
        bn_eps: Batch norm epsilon
        lambda_t: SGCA temperature/tint bound
        lambda_s: SGCA saturation bound
        stat_mask: SGCA statistic groups in use (mean, std, bright, dark)
        use_awcc: Run the AWCC stage
        use_sgca: Run the SGCA stage
    """

    channel_plan: Tuple[Tuple[int, int], ...] = ((3, 6), (6, 6), (6, 3))
    rep_scale: int = 4
    activation: str = 'leaky_relu'
    leaky_slope: float = 0.05
    residual: bool = True
    sgca_hidden: int = 128
    bn_eps: float = 1e-5
    lambda_t: float = 0.15
    lambda_s: float = 0.5
    stat_mask: Tuple[bool, bool, bool, bool] = (True, True, True, True)
    use_awcc: bool = True
    use_sgca: bool = True

    def __post_init__(self):
        try:
            plan = tuple((int(cin), int(cout)) for cin, cout in self.channel_plan)
        except (TypeError, ValueError):
            raise ConfigurationError(f"channel_plan must be a list of (in, out) pairs, got {self.channel_plan!r}")
        if len(tuple(self.stat_mask)) != 4:
            raise ConfigurationError(f"stat_mask needs four flags, got {self.stat_mask!r}")
        object.__setattr__(self, 'channel_plan', plan)
        object.__setattr__(self, 'stat_mask', tuple(bool(m) for m in self.stat_mask))

        if plan:
            if plan[0][0] != 3:
                raise ConfigurationError(f"first backbone layer must take 3 channels, got {plan[0][0]}")
            if plan[-1][1] != 3:
                raise ConfigurationError(f"last backbone layer must produce 3 channels, got {plan[-1][1]}")
            for i in range(1, len(plan)):
                if plan[i][0] != plan[i - 1][1]:
                    raise ConfigurationError(
                        f"backbone layer {i} takes {plan[i][0]} channels but layer {i - 1} produces {plan[i - 1][1]}"
                    )
            if min(min(layer) for layer in plan) < 1:
                raise ConfigurationError("backbone channel counts must be positive")
        if self.rep_scale < 1:
            raise ConfigurationError(f"rep_scale must be >= 1, got {self.rep_scale}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.sgca_hidden < 1:
            raise ConfigurationError(f"sgca_hidden must be >= 1, got {self.sgca_hidden}")
        if not self.bn_eps > 0:
            raise ConfigurationError(f"bn_eps must be positive, got {self.bn_eps}")

    @classmethod
    def default(cls) -> 'ModelConfig':
        """Shipped layout: 3,868 inference parameters (non-canonical approximation)."""
        return cls()

    @classmethod
    def compact(cls) -> 'ModelConfig':
        """Three 8-wide layers and a 16-wide SGCA perceptron (3,080 inference parameters)."""
        return cls(channel_plan=((3, 8), (8, 8), (8, 3)), sgca_hidden=16)

    @classmethod
    def preset(cls, name: str) -> 'ModelConfig':
        presets = {'default': cls.default, 'compact': cls.compact}
        if name not in presets:
            raise ConfigurationError(f"unknown config preset {name!r}; choose from {sorted(presets)}")
        return presets[name]()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['channel_plan'] = [list(layer) for layer in self.channel_plan]
        data['stat_mask'] = list(self.stat_mask)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        values = dict(data)
        if 'channel_plan' in values:
            values['channel_plan'] = tuple(tuple(layer) for layer in values['channel_plan'])
        if 'stat_mask' in values:
            values['stat_mask'] = tuple(values['stat_mask'])
        return cls(**values)


LayerWeights = Union[MrdConvTrainWeights, MrdConvInferWeights]


@dataclass(frozen=True)
class ModelWeights:
    """Every learnable of the model in one form (train or inference)."""

    mode: Mode
    config: ModelConfig
    awcc: AwccParams
    backbone: Tuple[LayerWeights, ...]
    sgca: SgcaParams

    def __post_init__(self):
        object.__setattr__(self, 'mode', Mode(self.mode))
        object.__setattr__(self, 'backbone', tuple(self.backbone))
        expected = MrdConvTrainWeights if self.mode is Mode.TRAIN else MrdConvInferWeights

        if len(self.backbone) != len(self.config.channel_plan):
            raise ConfigurationError(
                f"config has {len(self.config.channel_plan)} backbone layers, weights have {len(self.backbone)}"
            )
        for i, (layer, (cin, cout)) in enumerate(zip(self.backbone, self.config.channel_plan)):
            if not isinstance(layer, expected):
                raise StateError(f"backbone layer {i} is not in {self.mode.value} form")
            if layer.in_channels != cin or layer.out_channels != cout:
                raise ConfigurationError(
                    f"backbone layer {i} maps {layer.in_channels}->{layer.out_channels}, config says {cin}->{cout}"
                )
            if self.mode is Mode.TRAIN and layer.mid_channels != cout * self.config.rep_scale:
                raise ConfigurationError(
                    f"backbone layer {i} has {layer.mid_channels} mid channels, rep_scale {self.config.rep_scale} "
                    f"needs {cout * self.config.rep_scale}"
                )
        if self.sgca.hidden != self.config.sgca_hidden:
            raise ConfigurationError(f"SGCA hidden width {self.sgca.hidden} != config {self.config.sgca_hidden}")
        if (self.sgca.lambda_t, self.sgca.lambda_s, self.sgca.stat_mask) != (
                self.config.lambda_t, self.config.lambda_s, self.config.stat_mask):
            raise ConfigurationError("SGCA bounds or statistic mask differ from the config")


def _activate(x: np.ndarray, config: ModelConfig) -> np.ndarray:
    if config.activation == 'relu':
        return relu(x)
    if config.activation == 'leaky_relu':
        return leaky_relu(x, config.leaky_slope)
    return x


def enhance(image: np.ndarray, weights: ModelWeights, config: Optional[ModelConfig] = None) -> np.ndarray:
    """
    Run the full model on a batch of RGB images.

    Args:
        image: (N, 3, H, W) tensor in [0, 1]
        weights: Model weights (either form)
        config: Layout to check against; defaults to the weights' own config

    Returns:
        Enhanced tensor of the same shape, in [0, 1]
    """
    if config is not None and config != weights.config:
        raise ConfigurationError("config does not match the config the weights were built for")
    config = weights.config

    x = as_tensor(image, "image")
    if x.shape[1] != 3:
        raise ConfigurationError(f"enhance needs a 3-channel image, got {x.shape[1]} channels")

    base = awcc_forward(x, weights.awcc) if config.use_awcc else x
    h = base
    last = len(weights.backbone) - 1
    for i, layer in enumerate(weights.backbone):
        h = forward_train(h, layer) if weights.mode is Mode.TRAIN else forward_infer(h, layer)
        if i < last:
            h = _activate(h, config)
    if weights.backbone and config.residual:
        h = h + base
    h = clamp01(h)

    return sgca_forward(h, weights.sgca) if config.use_sgca else h


def convert_to_inference(weights: ModelWeights) -> ModelWeights:
    """Collapse every backbone layer; AWCC and SGCA are carried over unchanged."""
    if weights.mode is not Mode.TRAIN:
        raise StateError("weights are already in inference form")
    backbone = tuple(reparameterize(layer) for layer in weights.backbone)
    logger.info("Re-parameterized %d backbone layers", len(backbone))
    return replace(weights, mode=Mode.INFERENCE, backbone=backbone)


def sgca_param_count(hidden: int) -> int:
    return STAT_COUNT * hidden + hidden + hidden * RAW_OUTPUTS + RAW_OUTPUTS


@dataclass(frozen=True)
class ParamCount:
    train: int
    inference: int
    mode: Mode = Mode.TRAIN

    @property
    def current(self) -> int:
        return self.train if self.mode is Mode.TRAIN else self.inference

    def to_dict(self) -> Dict[str, Any]:
        return {'train': self.train, 'inference': self.inference,
                'train_k': round(self.train / 1000, 2), 'inference_k': round(self.inference / 1000, 2)}


def params_for_config(config: ModelConfig, mode: Mode = Mode.TRAIN) -> ParamCount:
    shared = 2 + sgca_param_count(config.sgca_hidden)
    train = shared + sum(train_param_count(cin, cout, config.rep_scale) for cin, cout in config.channel_plan)
    inference = shared + sum(infer_param_count(cin, cout) for cin, cout in config.channel_plan)
    if inference >= train and config.channel_plan:
        raise ConfigurationError(f"inference form has {inference} parameters, training form {train}")
    return ParamCount(train=train, inference=inference, mode=Mode(mode))


def count_params(weights: ModelWeights) -> ParamCount:
    """Closed-form parameter counts of both forms for the weights' layout."""
    return params_for_config(weights.config, weights.mode)


@dataclass(frozen=True)
class FlopReport:
    height: int
    width: int
    mode: Mode
    breakdown: Dict[str, int]
    formula: str = FLOP_FORMULA

    @property
    def total(self) -> int:
        return sum(self.breakdown.values())

    @property
    def gflops(self) -> float:
        return self.total / 1e9

    def to_dict(self) -> Dict[str, Any]:
        return {
            'height': self.height, 'width': self.width, 'mode': self.mode.value,
            'total': self.total, 'gflops': round(self.gflops, 4),
            'breakdown': dict(self.breakdown), 'formula': self.formula,
        }


def _conv_flops(cin: int, cout: int, taps: int, pixels: int) -> int:
    return 2 * cin * taps * cout * pixels + cout * pixels


def count_flops(config: ModelConfig, height: int, width: int, mode: Union[Mode, str] = Mode.INFERENCE) -> FlopReport:
    """
    FLOPs of one enhance call at height x width.

    Args:
        config: Model layout
        height: Image height
        width: Image width
        mode: Which backbone form to count

    Returns:
        FlopReport with a per-stage breakdown
    """
    mode = Mode(mode)
    pixels = height * width
    breakdown: Dict[str, int] = {}

    if config.use_awcc:
        breakdown['awcc'] = AWCC_FLOPS_PER_PIXEL * pixels

    backbone = 0
    last = len(config.channel_plan) - 1
    for i, (cin, cout) in enumerate(config.channel_plan):
        if mode is Mode.TRAIN:
            mid = cout * config.rep_scale
            for kind in BRANCH_ORDER:
                taps = kind.kernel[0] * kind.kernel[1]
                backbone += 2 * cin * taps * mid * pixels + 2 * mid * pixels
            backbone += (len(BRANCH_ORDER) - 1) * mid * pixels
            backbone += _conv_flops(mid, cout, 1, pixels)
        else:
            backbone += _conv_flops(cin, cout, KERNEL_GRID * KERNEL_GRID, pixels)
        if i < last and config.activation != 'none':
            backbone += cout * pixels
    breakdown['backbone'] = backbone
    if config.channel_plan and config.residual:
        breakdown['residual'] = 3 * pixels
    breakdown['clamp'] = 3 * pixels

    if config.use_sgca:
        mlp = 2 * (STAT_COUNT * config.sgca_hidden + config.sgca_hidden * RAW_OUTPUTS)
        breakdown['sgca'] = (SGCA_STATS_FLOPS_PER_PIXEL + SGCA_APPLY_FLOPS_PER_PIXEL) * pixels + mlp

    return FlopReport(height=height, width=width, mode=mode, breakdown=breakdown)


@dataclass
class EfficiencyReport:
    """Parameters, FLOPs and (optionally) measured throughput of one model."""

    params: ParamCount
    flops: FlopReport
    fps: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = {'params': self.params.to_dict(), 'flops': self.flops.to_dict(), 'fps': self.fps}
        data.update(self.extra)
        return data


def efficiency_report(weights: ModelWeights, height: int = 256, width: int = 256,
                      fps: Optional[float] = None) -> EfficiencyReport:
    return EfficiencyReport(
        params=count_params(weights),
        flops=count_flops(weights.config, height, width, Mode.INFERENCE),
        fps=fps,
    )


def rep_scale_sweep(config: ModelConfig, scales: Sequence[int] = (4, 8),
                    height: int = 256, width: int = 256) -> List[Dict[str, Any]]:
    """Parameter and FLOP counts of both forms for several Rep-scale values."""
    rows = []
    for scale in scales:
        scaled = replace(config, rep_scale=int(scale))
        params = params_for_config(scaled)
        rows.append({
            'rep_scale': int(scale),
            'train_params': params.train,
            'inference_params': params.inference,
            'train_gflops': round(count_flops(scaled, height, width, Mode.TRAIN).gflops, 4),
            'inference_gflops': round(count_flops(scaled, height, width, Mode.INFERENCE).gflops, 4),
        })
    return rows


def build_weights(config: Optional[ModelConfig] = None, preset: str = 'passthrough',
                  seed: int = 0) -> ModelWeights:
    """
    Create training-form weights without training.

    Args:
        config: Layout (default: ModelConfig.default())
        preset: 'passthrough' (zero backbone, zero SGCA, alpha 0, residual forced on)
                or 'random' (seeded uniform weights)
        seed: Seed of the random preset

    Returns:
        Train-mode ModelWeights
    """
    config = config or ModelConfig.default()
    sgca_kwargs = dict(lambda_t=config.lambda_t, lambda_s=config.lambda_s, stat_mask=config.stat_mask)

    if preset == 'passthrough':
        config = replace(config, residual=True)
        backbone = tuple(
            init_train_weights(cin, cout, config.rep_scale, epsilon=config.bn_eps, zero=True)
            for cin, cout in config.channel_plan
        )
        return ModelWeights(Mode.TRAIN, config, AwccParams(0.0, 0.0), backbone,
                            SgcaParams.zeros(config.sgca_hidden, **sgca_kwargs))

    if preset == 'random':
        rng = np.random.default_rng(seed)
        alpha_r, alpha_b = rng.uniform(0.5, 1.5, 2)
        backbone = tuple(
            init_train_weights(cin, cout, config.rep_scale, rng=rng, weight_range=0.1,
                               var_range=(0.5, 1.5), epsilon=config.bn_eps)
            for cin, cout in config.channel_plan
        )
        sgca = SgcaParams.random(rng, config.sgca_hidden, scale=0.3, **sgca_kwargs)
        return ModelWeights(Mode.TRAIN, config, AwccParams(float(alpha_r), float(alpha_b)), backbone, sgca)

    raise ConfigurationError(f"unknown weight preset {preset!r}; choose 'passthrough' or 'random'")
