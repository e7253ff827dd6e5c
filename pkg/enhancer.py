"""
Underwater Enhancer
Loads a UIEW weight file once and enhances images, files and directories.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

import settings
from errors import ConfigurationError, FileAccessError, StateError
from image_io import is_image_file, load_tensor, read_image, save_tensor, to_tensor
from pipeline import Mode, ModelWeights, convert_to_inference, enhance
from weight_format import load_weights

logger = logging.getLogger(__name__)

RUN_MODES = ('auto', 'train', 'inference')

PathLike = Union[str, Path]


class UnderwaterEnhancer:
    """Enhance underwater images with a loaded model."""

    def __init__(self, weights: Union[PathLike, ModelWeights], mode: str = 'auto'):
        """
        Initialize the enhancer.

        Args:
            weights: UIEW file path or already-loaded ModelWeights
            mode: 'train' or 'inference' require weights of that form;
                  'auto' converts training weights to the inference form
        """
        if mode not in RUN_MODES:
            raise ConfigurationError(f"mode must be one of {RUN_MODES}, got {mode!r}")

        start_time = time.time()
        loaded = weights if isinstance(weights, ModelWeights) else load_weights(weights)
        self.source = None if isinstance(weights, ModelWeights) else str(weights)
        self.file_mode = loaded.mode

        if mode != 'auto' and Mode(mode) is not loaded.mode:
            raise StateError(f"--mode {mode} requested but the weight file holds {loaded.mode.value} weights")
        if mode == 'auto' and loaded.mode is Mode.TRAIN:
            loaded = convert_to_inference(loaded)

        self.weights = loaded
        self.mode = mode
        self.load_time = time.time() - start_time
        self.enhance_time = 0.0

    @property
    def config(self):
        return self.weights.config

    def enhance(self, image: np.ndarray) -> np.ndarray:
        """Enhance a (N, 3, H, W) tensor in [0, 1]."""
        start_time = time.time()
        result = enhance(image, self.weights)
        self.enhance_time = time.time() - start_time
        return result

    def enhance_pixels(self, pixels: np.ndarray) -> np.ndarray:
        """Enhance an (H, W, 3) uint8 image and return the enhanced tensor."""
        return self.enhance(to_tensor(pixels))

    def enhance_file(self, input_path: PathLike, output_path: PathLike) -> Dict[str, Any]:
        """
        Enhance one image file.

        Args:
            input_path: PNG or PPM source
            output_path: Destination (format from the suffix)

        Returns:
            Metadata with sizes and timings
        """
        start_time = time.time()
        image = load_tensor(input_path)
        result = self.enhance(image)
        save_tensor(output_path, result)
        total = time.time() - start_time
        return {
            'input': str(input_path),
            'output': str(output_path),
            'width': int(image.shape[3]),
            'height': int(image.shape[2]),
            'mode': self.weights.mode.value,
            'enhance_time': round(self.enhance_time, 4),
            'total_time': round(total, 4),
        }

    def enhance_directory(self, input_dir: PathLike, output_dir: PathLike,
                          workers: Optional[int] = None) -> List[Dict[str, Any]]:
        """
        Enhance every image in a directory, in parallel across files.

        Output files keep their names. Results come back in sorted file order.
        """
        input_dir = Path(input_dir)
        output_dir = Path(output_dir)
        if not input_dir.is_dir():
            raise FileAccessError(input_dir, "input directory not found")
        output_dir.mkdir(parents=True, exist_ok=True)

        sources = sorted(p for p in input_dir.iterdir() if p.is_file() and is_image_file(p))
        if not sources:
            logger.warning("No images found in %s", input_dir)
            return []

        workers = min(workers or settings.threads(), len(sources))
        logger.info("Enhancing %d images from %s with %d workers", len(sources), input_dir, workers)

        def run(source: Path) -> Dict[str, Any]:
            start_time = time.time()
            image = to_tensor(read_image(source))
            result = enhance(image, self.weights)
            target = output_dir / source.name
            save_tensor(target, result)
            return {'input': str(source), 'output': str(target), 'total_time': round(time.time() - start_time, 4)}

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, sources))
        logger.info("Wrote %d images to %s", len(results), output_dir)
        return results


def enhance_image(input_path: PathLike, output_path: PathLike, weights_path: PathLike,
                  mode: str = 'auto') -> Dict[str, Any]:
    """
    Convenience function to enhance one file.

    Args:
        input_path: Source image
        output_path: Destination image
        weights_path: UIEW weight file
        mode: 'auto', 'train' or 'inference'

    Returns:
        Metadata dictionary
    """
    enhancer = UnderwaterEnhancer(weights_path, mode=mode)
    metadata = enhancer.enhance_file(input_path, output_path)
    metadata['load_time'] = round(enhancer.load_time, 4)
    return metadata


if __name__ == "__main__":
    import sys

    settings.configure_logging()
    if len(sys.argv) < 4:
        print("Usage: python enhancer.py <weights.uiew> <input_image> <output_image>")
        sys.exit(1)

    weights_file, source, target = sys.argv[1:4]
    if not os.path.exists(source):
        print(f"Error: File not found: {source}")
        sys.exit(2)

    info = enhance_image(source, target, weights_file)
    print(f"[SUCCESS] Enhanced {info['width']}x{info['height']} image in {info['total_time']}s -> {target}")
