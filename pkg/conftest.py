"""
Shared pytest fixtures: seeded generators, images on disk and demo weights.
"""

import numpy as np
import pytest

from image_io import encode_ppm
from pipeline import ModelConfig, build_weights


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_image(rng):
    """Factory for 1x3xHxW float32 images in [0, 1]."""
    def make(height=16, width=16):
        return rng.random((1, 3, height, width), dtype=np.float32)
    return make


@pytest.fixture
def naive_conv():
    """Direct sliding-window cross-correlation (stride 1, zero padding) in float64."""
    def conv(x, weight, bias=None, dilation=(1, 1), padding=(0, 0)):
        x = np.asarray(x, dtype=np.float64)
        weight = np.asarray(weight, dtype=np.float64)
        n, _, height, width = x.shape
        out_c, _, kh, kw = weight.shape
        dh, dw = dilation
        ph, pw = padding
        padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        out_h = height + 2 * ph - dh * (kh - 1)
        out_w = width + 2 * pw - dw * (kw - 1)
        out = np.zeros((n, out_c, out_h, out_w))
        for b in range(n):
            for o in range(out_c):
                for y in range(out_h):
                    for xx in range(out_w):
                        window = padded[b, :, y:y + dh * (kh - 1) + 1:dh, xx:xx + dw * (kw - 1) + 1:dw]
                        out[b, o, y, xx] = np.sum(window * weight[o])
                if bias is not None:
                    out[b, o] += bias[o]
        return out
    return conv


@pytest.fixture
def write_ppm(tmp_path):
    """Write (H, W, 3) uint8 pixels as a binary PPM under tmp_path."""
    def write(name, pixels):
        path = tmp_path / name
        path.write_bytes(encode_ppm(pixels))
        return path
    return write


@pytest.fixture
def passthrough_weights():
    return build_weights(ModelConfig.default(), preset='passthrough')


@pytest.fixture
def random_weights():
    return build_weights(ModelConfig.default(), preset='random', seed=7)
