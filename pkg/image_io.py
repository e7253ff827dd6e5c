"""
Image reading and writing.

Binary PPM (P6, maxval 255) is handled directly; PNG and the other formats
go through Pillow. Images are exchanged as (H, W, 3) uint8 arrays and
converted to 1x3xHxW float tensors in [0, 1].
"""

import io
import logging
import re
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from errors import FileAccessError, ImageFormatError, ShapeError
from tensor_core import DTYPE, as_tensor

logger = logging.getLogger(__name__)

PPM_SUFFIXES = {'.ppm', '.pnm'}
IMAGE_SUFFIXES = {'.png', '.ppm', '.pnm', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff'}

PathLike = Union[str, Path]

_TOKEN = re.compile(rb'\s*(?:#[^\n]*\n\s*)*(\S+)')


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 PPM with maxval 255 into an (H, W, 3) uint8 array."""
    fields = []
    pos = 0
    for _ in range(4):
        match = _TOKEN.match(data, pos)
        if not match:
            raise ImageFormatError("PPM header is incomplete")
        fields.append(match.group(1))
        pos = match.end()

    if fields[0] != b'P6':
        raise ImageFormatError(f"not a binary PPM: magic {fields[0][:8]!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ImageFormatError(f"PPM header fields are not integers: {fields[1:]}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"PPM size {width}x{height} is empty")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("PPM header must end with a single whitespace byte")
    pos += 1

    expected = width * height * 3
    raster = data[pos:pos + expected]
    if len(raster) < expected:
        raise ImageFormatError(f"PPM raster truncated: {len(raster)} of {expected} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"PPM needs an (H, W, 3) array, got {pixels.shape}")
    height, width = pixels.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode('ascii') + pixels.tobytes()


def read_image(path: PathLike) -> np.ndarray:
    """
    Read an 8-bit RGB image.

    Args:
        path: PNG, PPM or any Pillow-readable file

    Returns:
        (H, W, 3) uint8 array
    """
    path = Path(path)
    if not path.is_file():
        raise FileAccessError(path, "image not found")

    try:
        data = path.read_bytes()
    except OSError as e:
        raise FileAccessError(path, f"cannot read image ({e.strerror})")
    return decode_image(data, path.name)


def decode_image(data: bytes, name: str = "image") -> np.ndarray:
    """
    Decode image bytes into an (H, W, 3) uint8 array.

    Names ending in .ppm/.pnm use the PPM codec; everything else goes
    through Pillow. Undecodable data raises ImageFormatError.
    """
    if Path(name).suffix.lower() in PPM_SUFFIXES:
        return decode_ppm(data)
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert('RGB'), dtype=np.uint8).copy()
    except UnidentifiedImageError:
        raise ImageFormatError(f"unrecognized image format: {name}")
    except (OSError, EOFError, ValueError, SyntaxError) as e:
        raise ImageFormatError(f"cannot decode {name}: {e}")


def write_image(path: PathLike, pixels: np.ndarray) -> Path:
    """Write an (H, W, 3) uint8 array; the suffix picks the format."""
    path = Path(path)
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    try:
        if path.suffix.lower() in PPM_SUFFIXES:
            path.write_bytes(encode_ppm(pixels))
        else:
            Image.fromarray(pixels).save(path)
    except (OSError, ValueError) as e:
        raise FileAccessError(path, f"cannot write image ({e})")
    return path


def to_tensor(pixels: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (1, 3, H, W) float32 in [0, 1]."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got {pixels.shape}")
    return (pixels.astype(DTYPE) / DTYPE(255.0)).transpose(2, 0, 1)[None].copy()


def to_image(tensor: np.ndarray, index: int = 0) -> np.ndarray:
    """(N, 3, H, W) float -> (H, W, 3) uint8 via round(clamp01(x) * 255)."""
    tensor = as_tensor(tensor)
    single = np.clip(tensor[index].astype(np.float64), 0.0, 1.0).transpose(1, 2, 0)
    return np.round(single * 255.0).astype(np.uint8)


def load_tensor(path: PathLike) -> np.ndarray:
    return to_tensor(read_image(path))


def save_tensor(path: PathLike, tensor: np.ndarray) -> Path:
    return write_image(path, to_image(tensor))


def is_image_file(path: PathLike) -> bool:
    return Path(path).suffix.lower() in IMAGE_SUFFIXES
