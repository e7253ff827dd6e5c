#!/usr/bin/env python3
"""
Underwater enhancement command-line tool.

Usage: python uwe_cli.py <command> [options]

Commands:
    enhance     enhance an image (or every image of a directory)
    rep         convert training weights into the collapsed inference form
    metrics     full-reference report (PSNR, SSIM, CIEDE2000, UIQM, UCIQE, losses)
    nr-metrics  no-reference report (UIQM, UCIQE)
    loss        loss breakdown between two images
    bench       throughput benchmark of inference weights
    init-demo   write demo training weights

Exit codes: 0 ok, 2 I/O, 3 mode, 4 shape/config, 5 file format.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import settings
from benchmark import run_benchmark
from enhancer import RUN_MODES, UnderwaterEnhancer
from errors import StateError, UweError
from image_io import load_tensor
from loss_eval import total_loss
from pipeline import Mode, ModelConfig, build_weights, convert_to_inference, count_flops, count_params
from quality_metrics import full_reference_report, no_reference_report
from report_markdown import report_to_markdown
from weight_format import load_weights, save_weights

logger = logging.getLogger(__name__)


def _emit(report: Dict[str, Any], fmt: str, title: str) -> None:
    if fmt == 'markdown':
        print(report_to_markdown(report, title))
    else:
        print(json.dumps(report, indent=2))


def cmd_enhance(args: argparse.Namespace) -> int:
    enhancer = UnderwaterEnhancer(args.weights, mode=args.mode)
    source = Path(args.input)
    if source.is_dir():
        results = enhancer.enhance_directory(source, args.output, workers=args.workers)
        print(f"[SUCCESS] Enhanced {len(results)} images into {args.output}")
        return 0

    info = enhancer.enhance_file(source, args.output)
    print(f"[SUCCESS] Enhanced {info['width']}x{info['height']} image ({info['mode']} form) "
          f"in {info['total_time']}s -> {args.output}")
    return 0


def cmd_rep(args: argparse.Namespace) -> int:
    weights = load_weights(args.weights)
    if weights.mode is not Mode.TRAIN:
        raise StateError(f"{args.weights} already holds inference weights")
    converted = convert_to_inference(weights)
    save_weights(converted, args.output)

    params = count_params(converted)
    flops = count_flops(converted.config, args.height, args.width)
    report = {
        'input': str(args.weights),
        'output': str(args.output),
        'train_params': params.train,
        'inference_params': params.inference,
        'gflops': round(flops.gflops, 4),
        'flops_size': f"{args.width}x{args.height}",
    }
    if args.format == 'markdown':
        _emit(report, 'markdown', "Re-parameterization")
    else:
        print(f"Params (K): train {params.train / 1000:.2f} -> inference {params.inference / 1000:.2f} "
              f"(train {params.train}, inference {params.inference}); "
              f"FLOPs ({args.width}x{args.height}): {flops.gflops:.3f}G")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    report = full_reference_report(load_tensor(args.ref), load_tensor(args.test))
    _emit(report.to_dict(), args.format, "Quality Metrics")
    return 0


def cmd_nr_metrics(args: argparse.Namespace) -> int:
    report = no_reference_report(load_tensor(args.input))
    _emit(report.to_dict(), args.format, "No-Reference Metrics")
    return 0


def cmd_loss(args: argparse.Namespace) -> int:
    breakdown = total_loss(load_tensor(args.test), load_tensor(args.ref))
    _emit(breakdown.to_dict(), args.format, "Loss Breakdown")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    weights = load_weights(args.weights)
    report = run_benchmark(weights, width=args.width, height=args.height, iters=args.iters,
                           warmup=args.warmup, seed=args.seed, rep_scales=args.rep_scales)
    _emit(report, args.format, "Benchmark")
    return 0


def cmd_init_demo(args: argparse.Namespace) -> int:
    config = ModelConfig.preset(args.config)
    weights = build_weights(config, preset=args.preset, seed=args.seed)
    save_weights(weights, args.output)
    params = count_params(weights)
    print(f"[SUCCESS] Wrote {args.preset} {args.config} training weights to {args.output} "
          f"(train {params.train}, inference {params.inference} parameters)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='uwe_cli.py',
        description="Lightweight underwater image enhancement and quality metrics",
    )
    parser.add_argument('--log-level', default=None, help="DEBUG, INFO, WARNING or ERROR (default: UWE_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('enhance', help="enhance an image or a directory of images")
    p.add_argument('--weights', required=True)
    p.add_argument('--input', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--mode', choices=RUN_MODES, default='auto')
    p.add_argument('--workers', type=int, default=None, help="directory mode only (default: UWE_THREADS)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser('rep', help="re-parameterize training weights")
    p.add_argument('--weights', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--width', type=int, default=256)
    p.add_argument('--height', type=int, default=256)
    p.add_argument('--format', choices=('text', 'markdown'), default='text')
    p.set_defaults(func=cmd_rep)

    for name, func, title in (('metrics', cmd_metrics, "full-reference metrics"),
                              ('loss', cmd_loss, "loss breakdown")):
        p = sub.add_parser(name, help=title)
        p.add_argument('--ref', required=True)
        p.add_argument('--test', required=True)
        p.add_argument('--format', choices=('json', 'markdown'), default='json')
        p.set_defaults(func=func)

    p = sub.add_parser('nr-metrics', help="no-reference metrics")
    p.add_argument('--input', required=True)
    p.add_argument('--format', choices=('json', 'markdown'), default='json')
    p.set_defaults(func=cmd_nr_metrics)

    p = sub.add_parser('bench', help="benchmark inference weights")
    p.add_argument('--weights', required=True)
    p.add_argument('--width', type=int, default=640)
    p.add_argument('--height', type=int, default=480)
    p.add_argument('--iters', type=int, default=20)
    p.add_argument('--warmup', type=int, default=2)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--rep-scales', type=int, nargs='+', default=None)
    p.add_argument('--format', choices=('json', 'markdown'), default='json')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('init-demo', help="write demo training weights")
    p.add_argument('--output', required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--preset', choices=('passthrough', 'random'), default='passthrough')
    p.add_argument('--config', choices=('default', 'compact'), default='default')
    p.set_defaults(func=cmd_init_demo)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings.configure_logging(args.log_level)
        return args.func(args)
    except UweError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
