import numpy as np
import pytest

from benchmark import compare_forms, run_benchmark, summarize
from enhancer import UnderwaterEnhancer, enhance_image
from errors import ConfigurationError, StateError
from image_io import read_image, to_tensor
from pipeline import ModelConfig, build_weights, convert_to_inference
from weight_format import save_weights


def test_summarize():
    summary = summarize([2.0, 4.0, 6.0])
    assert summary['mean_ms'] == 4.0
    assert summary['median_ms'] == 4.0
    assert summary['fps'] == 250.0


def test_run_benchmark_with_sweep(random_weights):
    report = run_benchmark(convert_to_inference(random_weights), width=12, height=10, iters=2,
                           warmup=0, rep_scales=[4, 8])
    assert len(report['latency_ms']) == 2
    assert report['fps'] == pytest.approx(1000.0 / report['mean_ms'], rel=0.01)
    assert [row['rep_scale'] for row in report['rep_scale_sweep']] == [4, 8]


def test_run_benchmark_validation(random_weights):
    with pytest.raises(StateError):
        run_benchmark(random_weights, iters=1)
    with pytest.raises(ConfigurationError):
        run_benchmark(convert_to_inference(random_weights), iters=0)


def test_compare_forms(capsys):
    weights = build_weights(ModelConfig.compact(), preset='random', seed=2)
    results = compare_forms(weights, width=16, height=16, iters=1)
    assert results['max_abs_diff'] < 1e-4
    assert set(results) >= {'train', 'inference', 'speedup'}
    assert "Speedup" in capsys.readouterr().out


def test_enhance_image_helper(tmp_path, write_ppm, rng):
    weights = save_weights(build_weights(ModelConfig.compact()), tmp_path / "w.uiew")
    source = write_ppm("in.ppm", rng.integers(0, 256, (7, 9, 3), dtype=np.uint8))
    info = enhance_image(source, tmp_path / "out.png", weights)
    assert (info['width'], info['height'], info['mode']) == (9, 7, 'inference')
    assert read_image(tmp_path / "out.png").shape == (7, 9, 3)


def test_enhancer_mode_checks(tmp_path, random_weights):
    path = save_weights(random_weights, tmp_path / "train.uiew")
    assert UnderwaterEnhancer(path, mode='train').weights.mode.value == 'train'
    with pytest.raises(StateError):
        UnderwaterEnhancer(path, mode='inference')
    with pytest.raises(ConfigurationError):
        UnderwaterEnhancer(path, mode='fast')


def test_enhance_pixels_matches_tensor_path(rng):
    model = UnderwaterEnhancer(build_weights(ModelConfig.compact(), preset='random', seed=1))
    pixels = rng.integers(0, 256, (6, 7, 3), dtype=np.uint8)
    out = model.enhance_pixels(pixels)
    assert out.shape == (1, 3, 6, 7)
    np.testing.assert_array_equal(out, model.enhance(to_tensor(pixels)))
