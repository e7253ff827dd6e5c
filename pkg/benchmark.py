#!/usr/bin/env python3
"""
Throughput Benchmark
Times enhance calls on a fixed random image and compares the training form
against the collapsed inference form.
"""

import logging
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from errors import ConfigurationError, StateError
from pipeline import (
    Mode,
    ModelWeights,
    convert_to_inference,
    count_flops,
    count_params,
    enhance,
    rep_scale_sweep,
)

logger = logging.getLogger(__name__)


def _bench_image(width: int, height: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((1, 3, height, width), dtype=np.float32)


def time_enhance(weights: ModelWeights, image: np.ndarray, iters: int, warmup: int = 0) -> List[float]:
    """Latency samples in milliseconds."""
    for _ in range(warmup):
        enhance(image, weights)
    samples = []
    for _ in range(iters):
        start_time = time.perf_counter()
        enhance(image, weights)
        samples.append((time.perf_counter() - start_time) * 1000.0)
    return samples


def summarize(samples_ms: Sequence[float]) -> Dict[str, float]:
    samples = np.asarray(samples_ms, dtype=np.float64)
    mean = float(samples.mean())
    return {
        'mean_ms': round(mean, 3),
        'median_ms': round(float(np.median(samples)), 3),
        'p95_ms': round(float(np.percentile(samples, 95)), 3),
        'fps': round(1000.0 / mean, 2) if mean > 0 else None,
    }


def run_benchmark(weights: ModelWeights, width: int = 640, height: int = 480, iters: int = 20,
                  warmup: int = 2, seed: int = 0,
                  rep_scales: Optional[Sequence[int]] = None) -> Dict[str, Any]:
    """
    Benchmark the deployed (inference-form) model.

    Args:
        weights: Inference-mode weights
        width: Image width
        height: Image height
        iters: Timed enhance calls
        warmup: Untimed calls before timing
        seed: Seed of the random input image
        rep_scales: Optional Rep-scale values for a parameter/FLOP comparison

    Returns:
        Report dictionary (latencies, FPS, params, FLOPs)
    """
    if weights.mode is not Mode.INFERENCE:
        raise StateError("benchmark needs inference-mode weights; run 'rep' first")
    if iters < 1 or warmup < 0 or width < 1 or height < 1:
        raise ConfigurationError("iters must be >= 1, warmup >= 0 and the image size positive")

    image = _bench_image(width, height, seed)
    samples = time_enhance(weights, image, iters, warmup)
    flops = count_flops(weights.config, height, width)

    report = {
        'width': width,
        'height': height,
        'iters': iters,
        'warmup': warmup,
        'seed': seed,
        'latency_ms': [round(s, 3) for s in samples],
        **summarize(samples),
        'params': count_params(weights).to_dict(),
        'flops': flops.total,
        'gflops': round(flops.gflops, 4),
    }
    if rep_scales:
        report['rep_scale_sweep'] = rep_scale_sweep(weights.config, rep_scales, height, width)
    logger.info("Benchmark %dx%d: %.3f ms mean, %s FPS", width, height, report['mean_ms'], report['fps'])
    return report


def compare_forms(train_weights: ModelWeights, width: int = 256, height: int = 256,
                  iters: int = 5, seed: int = 0) -> Dict[str, Any]:
    """
    Time the training form against its collapsed inference form.

    Returns:
        Dictionary with both summaries, the speedup and the max output difference
    """
    if train_weights.mode is not Mode.TRAIN:
        raise StateError("compare_forms needs training-form weights")
    infer_weights = convert_to_inference(train_weights)
    image = _bench_image(width, height, seed)

    results = {'width': width, 'height': height}
    for label, weights in (('train', train_weights), ('inference', infer_weights)):
        print(f"\nTesting {label} form...")
        summary = summarize(time_enhance(weights, image, iters, warmup=1))
        results[label] = summary
        print(f"  Mean: {summary['mean_ms']:.2f}ms ({summary['fps']} FPS)")

    diff = np.abs(enhance(image, train_weights) - enhance(image, infer_weights)).max()
    results['max_abs_diff'] = float(diff)
    results['speedup'] = round(results['train']['mean_ms'] / results['inference']['mean_ms'], 2)
    print(f"\nSpeedup: {results['speedup']}x, max output difference {diff:.2e}")
    return results


if __name__ == "__main__":
    import json
    import sys

    import settings
    from weight_format import load_weights

    settings.configure_logging()
    if len(sys.argv) < 2:
        print("Usage: python benchmark.py <train_weights.uiew> [width] [height]")
        sys.exit(1)

    loaded = load_weights(sys.argv[1])
    w = int(sys.argv[2]) if len(sys.argv) > 2 else 256
    h = int(sys.argv[3]) if len(sys.argv) > 3 else 256
    print(json.dumps(compare_forms(loaded, w, h), indent=2))
