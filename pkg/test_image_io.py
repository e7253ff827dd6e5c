import numpy as np
import pytest
from PIL import Image

from errors import FileAccessError, ImageFormatError, ShapeError
from image_io import decode_image, decode_ppm, encode_ppm, is_image_file, read_image, to_image, to_tensor, write_image


def test_decode_ppm_with_comments():
    data = b"P6\n# made by hand\n2 1\n# max\n255\n" + bytes([10, 20, 30, 200, 210, 220])
    pixels = decode_ppm(data)
    assert pixels.shape == (1, 2, 3)
    np.testing.assert_array_equal(pixels[0, 1], [200, 210, 220])


@pytest.mark.parametrize("data", [
    b"P3\n1 1\n255\n0 0 0\n",
    b"P6\n1 1\n65535\n" + bytes(6),
    b"P6\n0 4\n255\n",
    b"P6\n2 x\n255\n" + bytes(12),
    b"P6\n2 2\n",
])
def test_decode_ppm_rejects_unsupported(data):
    with pytest.raises(ImageFormatError):
        decode_ppm(data)


def test_decode_ppm_truncated_raster():
    with pytest.raises(ImageFormatError, match="truncated"):
        decode_ppm(b"P6\n2 2\n255\n" + bytes(11))


def test_encode_decode_keeps_pixels(rng):
    pixels = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(decode_ppm(encode_ppm(pixels)), pixels)
    with pytest.raises(ShapeError):
        encode_ppm(pixels[..., :2])


def test_png_goes_through_pillow(tmp_path, rng):
    pixels = rng.integers(0, 256, (6, 4, 3), dtype=np.uint8)
    path = write_image(tmp_path / "img.png", pixels)
    with Image.open(path) as img:
        assert img.format == 'PNG' and img.size == (4, 6)
    np.testing.assert_array_equal(read_image(path), pixels)


def test_grayscale_png_becomes_rgb(tmp_path):
    Image.fromarray(np.full((3, 3), 77, dtype=np.uint8)).save(tmp_path / "gray.png")
    pixels = read_image(tmp_path / "gray.png")
    assert pixels.shape == (3, 3, 3)
    assert (pixels == 77).all()


def test_tensor_conversion():
    pixels = np.array([[[0, 128, 255]]], dtype=np.uint8)
    tensor = to_tensor(pixels)
    assert tensor.shape == (1, 3, 1, 1) and tensor.dtype == np.float32
    np.testing.assert_allclose(tensor[0, :, 0, 0], [0.0, 128 / 255, 1.0], atol=1e-7)
    np.testing.assert_array_equal(to_image(tensor), pixels)


def test_to_image_rounds_and_clamps():
    tensor = np.array([-0.2, 0.4 / 255, 1.4 / 255, 1.7], dtype=np.float32).reshape(1, 1, 2, 2)
    tensor = np.repeat(tensor, 3, axis=1)
    pixels = to_image(tensor)
    np.testing.assert_array_equal(pixels[..., 0], [[0, 0], [1, 255]])


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(FileAccessError) as info:
        read_image(tmp_path / "absent.png")
    assert "absent.png" in str(info.value)


def test_unrecognized_file(tmp_path):
    path = tmp_path / "notes.png"
    path.write_text("definitely not an image")
    with pytest.raises(ImageFormatError):
        read_image(path)


def test_is_image_file():
    assert is_image_file("a/b/photo.PNG")
    assert is_image_file("scene.ppm")
    assert not is_image_file("weights.uiew")


def test_truncated_png_is_a_format_error(tmp_path, rng):
    path = write_image(tmp_path / "full.png", rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    data = path.read_bytes()
    cut = tmp_path / "cut.png"
    cut.write_bytes(data[:len(data) // 2])
    with pytest.raises(ImageFormatError) as info:
        read_image(cut)
    assert info.value.exit_code == 5


def test_decode_image_picks_codec_by_name(rng):
    pixels = rng.integers(0, 256, (3, 5, 3), dtype=np.uint8)
    np.testing.assert_array_equal(decode_image(encode_ppm(pixels), "upload.PPM"), pixels)
    with pytest.raises(ImageFormatError):
        decode_image(b"\x89PNG garbage", "upload.png")
