"""
UIEW weight file format.

Layout (all integers little-endian):

    bytes 0-3     ASCII magic "UIEW"
    bytes 4-7     version, uint32 (currently 1)
    bytes 8-15    manifest length L, uint64
    bytes 16..16+L  UTF-8 JSON manifest:
                  {"mode": "train" | "inference",
                   "config": {...ModelConfig fields...},
                   "tensors": [{"name", "shape", "byte_offset"}, ...]}
    remainder     float32 little-endian payloads; byte_offset is relative
                  to the first payload byte

Tensor names:

    awcc.alpha_r, awcc.alpha_b                         shape [1]
    backbone.{i}.{s3|s2|s1|v|h}.conv.weight            train form
    backbone.{i}.{s3|s2|s1|v|h}.bn.weight / .bn.bias / .bn.running_mean / .bn.running_var
    backbone.{i}.fusion.weight, backbone.{i}.fusion.bias
    backbone.{i}.conv.weight, backbone.{i}.conv.bias   inference form (5x5)
    sgca.mlp.0.weight, sgca.mlp.0.bias, sgca.mlp.2.weight, sgca.mlp.2.bias
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from awcc import AwccParams
from errors import (
    BadMagicError,
    ConfigurationError,
    FileAccessError,
    ManifestError,
    TensorShapeError,
    TruncatedFileError,
    VersionMismatchError,
)
from mrdconv import (
    BRANCH_ORDER,
    KERNEL_GRID,
    BranchWeights,
    MrdConvInferWeights,
    MrdConvTrainWeights,
)
from pipeline import Mode, ModelConfig, ModelWeights
from sgca import RAW_OUTPUTS, STAT_COUNT, SgcaParams
from tensor_core import BatchNormParams, Conv2dParams

logger = logging.getLogger(__name__)

MAGIC = b"UIEW"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
PAYLOAD_DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


def expected_tensors(config: ModelConfig, mode: Mode) -> List[Tuple[str, Tuple[int, ...]]]:
    """(name, shape) of every tensor a file of this layout holds, in declaration order."""
    specs = [('awcc.alpha_r', (1,)), ('awcc.alpha_b', (1,))]
    for i, (cin, cout) in enumerate(config.channel_plan):
        prefix = f"backbone.{i}"
        if mode is Mode.TRAIN:
            mid = cout * config.rep_scale
            for kind in BRANCH_ORDER:
                specs.append((f"{prefix}.{kind.key}.conv.weight", (mid, cin) + kind.kernel))
                for stat in ('weight', 'bias', 'running_mean', 'running_var'):
                    specs.append((f"{prefix}.{kind.key}.bn.{stat}", (mid,)))
            specs.append((f"{prefix}.fusion.weight", (cout, mid, 1, 1)))
            specs.append((f"{prefix}.fusion.bias", (cout,)))
        else:
            specs.append((f"{prefix}.conv.weight", (cout, cin, KERNEL_GRID, KERNEL_GRID)))
            specs.append((f"{prefix}.conv.bias", (cout,)))
    hidden = config.sgca_hidden
    specs += [
        ('sgca.mlp.0.weight', (hidden, STAT_COUNT)),
        ('sgca.mlp.0.bias', (hidden,)),
        ('sgca.mlp.2.weight', (RAW_OUTPUTS, hidden)),
        ('sgca.mlp.2.bias', (RAW_OUTPUTS,)),
    ]
    return specs


def _flatten(weights: ModelWeights) -> Dict[str, np.ndarray]:
    tensors = {
        'awcc.alpha_r': np.array([weights.awcc.alpha_r]),
        'awcc.alpha_b': np.array([weights.awcc.alpha_b]),
    }
    for i, layer in enumerate(weights.backbone):
        prefix = f"backbone.{i}"
        if weights.mode is Mode.TRAIN:
            for kind in BRANCH_ORDER:
                branch = layer.branches[kind]
                tensors[f"{prefix}.{kind.key}.conv.weight"] = branch.conv.weight
                tensors[f"{prefix}.{kind.key}.bn.weight"] = branch.bn.gamma
                tensors[f"{prefix}.{kind.key}.bn.bias"] = branch.bn.beta
                tensors[f"{prefix}.{kind.key}.bn.running_mean"] = branch.bn.running_mean
                tensors[f"{prefix}.{kind.key}.bn.running_var"] = branch.bn.running_var
            tensors[f"{prefix}.fusion.weight"] = layer.fusion.weight
            tensors[f"{prefix}.fusion.bias"] = layer.fusion.bias
        else:
            tensors[f"{prefix}.conv.weight"] = layer.conv.weight
            tensors[f"{prefix}.conv.bias"] = layer.conv.bias
    tensors['sgca.mlp.0.weight'] = weights.sgca.w1
    tensors['sgca.mlp.0.bias'] = weights.sgca.b1
    tensors['sgca.mlp.2.weight'] = weights.sgca.w2
    tensors['sgca.mlp.2.bias'] = weights.sgca.b2
    return tensors


def to_bytes(weights: ModelWeights) -> bytes:
    tensors = _flatten(weights)
    entries = []
    chunks = []
    offset = 0
    for name, shape in expected_tensors(weights.config, weights.mode):
        data = np.ascontiguousarray(tensors[name], dtype=PAYLOAD_DTYPE).reshape(shape)
        entries.append({'name': name, 'shape': list(shape), 'byte_offset': offset})
        chunks.append(data.tobytes())
        offset += data.nbytes

    manifest = {'mode': weights.mode.value, 'config': weights.config.to_dict(), 'tensors': entries}
    manifest_bytes = json.dumps(manifest, separators=(',', ':')).encode('utf-8')
    return HEADER.pack(MAGIC, VERSION, len(manifest_bytes)) + manifest_bytes + b''.join(chunks)


def save_weights(weights: ModelWeights, path: PathLike) -> Path:
    """
    Write weights as a UIEW file.

    Args:
        weights: Model weights in either form
        path: Destination file

    Returns:
        Path written
    """
    path = Path(path)
    blob = to_bytes(weights)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as e:
        raise FileAccessError(path, f"cannot write weight file ({e.strerror})")
    logger.info("Saved %s weights to %s (%d bytes)", weights.mode.value, path, len(blob))
    return path


def _parse_manifest(blob: bytes) -> Tuple[dict, int]:
    if len(blob) < HEADER.size:
        if len(blob) >= 4 and blob[:4] != MAGIC:
            raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
        raise TruncatedFileError(f"file is {len(blob)} bytes, shorter than the {HEADER.size}-byte header")
    magic, version, length = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported UIEW version {version}, expected {VERSION}")
    end = HEADER.size + length
    if end > len(blob):
        raise TruncatedFileError(f"manifest declares {length} bytes but only {len(blob) - HEADER.size} follow the header")
    try:
        manifest = json.loads(blob[HEADER.size:end].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"manifest is not valid UTF-8 JSON: {e}")
    if not isinstance(manifest, dict) or not {'mode', 'config', 'tensors'} <= set(manifest):
        raise ManifestError("manifest must hold 'mode', 'config' and 'tensors'")
    return manifest, end


def from_bytes(blob: bytes) -> ModelWeights:
    manifest, payload_start = _parse_manifest(blob)
    if not isinstance(manifest['config'], dict) or not isinstance(manifest['tensors'], list):
        raise ManifestError("manifest 'config' must be an object and 'tensors' a list")
    try:
        mode = Mode(manifest['mode'])
    except (TypeError, ValueError):
        raise ManifestError(f"unknown mode {manifest['mode']!r}")
    try:
        config = ModelConfig.from_dict(manifest['config'])
    except (ConfigurationError, TypeError, ValueError) as e:
        raise ManifestError(f"invalid config in manifest: {e}")

    declared = {}
    for entry in manifest['tensors']:
        try:
            declared[entry['name']] = (tuple(int(s) for s in entry['shape']), int(entry['byte_offset']))
        except (KeyError, TypeError, ValueError):
            raise ManifestError(f"malformed tensor entry {entry!r}")

    payload = memoryview(blob)[payload_start:]
    tensors = {}
    used = 0
    expected = expected_tensors(config, mode)
    for name, shape in expected:
        if name not in declared:
            raise TensorShapeError(name, "missing from manifest")
        declared_shape, offset = declared.pop(name)
        if declared_shape != shape:
            raise TensorShapeError(name, f"manifest declares shape {list(declared_shape)}, layout needs {list(shape)}")
        count = int(np.prod(shape))
        nbytes = count * PAYLOAD_DTYPE.itemsize
        if offset != used:
            raise ManifestError(f"tensor '{name}' declared at byte {offset}, expected {used}")
        if offset + nbytes > len(payload):
            raise TruncatedFileError(f"tensor '{name}' payload ends past the end of the file")
        tensors[name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=offset) \
            .astype(np.float32).reshape(shape)
        used += nbytes
    if declared:
        raise TensorShapeError(sorted(declared)[0], "not part of this model layout")
    if used != len(payload):
        raise ManifestError(f"payload is {len(payload)} bytes, tensors account for {used}")

    return _assemble(config, mode, tensors)


def _assemble(config: ModelConfig, mode: Mode, t: Dict[str, np.ndarray]) -> ModelWeights:
    awcc = AwccParams(float(t['awcc.alpha_r'][0]), float(t['awcc.alpha_b'][0]))
    backbone = []
    for i in range(len(config.channel_plan)):
        prefix = f"backbone.{i}"
        if mode is Mode.TRAIN:
            branches = {}
            for kind in BRANCH_ORDER:
                conv = Conv2dParams(t[f"{prefix}.{kind.key}.conv.weight"], None, kind.dilation, kind.padding)
                bn = BatchNormParams(
                    gamma=t[f"{prefix}.{kind.key}.bn.weight"],
                    beta=t[f"{prefix}.{kind.key}.bn.bias"],
                    running_mean=t[f"{prefix}.{kind.key}.bn.running_mean"],
                    running_var=t[f"{prefix}.{kind.key}.bn.running_var"],
                    epsilon=config.bn_eps,
                )
                branches[kind] = BranchWeights(conv, bn)
            fusion = Conv2dParams(t[f"{prefix}.fusion.weight"], t[f"{prefix}.fusion.bias"])
            backbone.append(MrdConvTrainWeights(branches, fusion))
        else:
            backbone.append(MrdConvInferWeights(
                Conv2dParams(t[f"{prefix}.conv.weight"], t[f"{prefix}.conv.bias"], (1, 1), (2, 2))
            ))
    sgca = SgcaParams(
        t['sgca.mlp.0.weight'], t['sgca.mlp.0.bias'], t['sgca.mlp.2.weight'], t['sgca.mlp.2.bias'],
        lambda_t=config.lambda_t, lambda_s=config.lambda_s, stat_mask=config.stat_mask,
    )
    return ModelWeights(mode, config, awcc, tuple(backbone), sgca)


def load_weights(path: PathLike) -> ModelWeights:
    """
    Read a UIEW file.

    Raises:
        FileAccessError: File missing or unreadable
        WeightFormatError: Bad magic, version, truncation or manifest/shape mismatch
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise FileAccessError(path, f"cannot read weight file ({e.strerror or e})")
    weights = from_bytes(blob)
    weights.awcc.warn_if_out_of_range()
    logger.info("Loaded %s weights from %s (%d backbone layers)", weights.mode.value, path, len(weights.backbone))
    return weights
