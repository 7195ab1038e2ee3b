import numpy as np
import pytest

from lightfuse.tensor_core import (
    PpmParseError,
    decode_ppm,
    denormalize,
    encode_ppm,
    normalize,
    require_finite,
)


def test_decode_minimal_black_pixel():
    img = decode_ppm(b"P6\n1 1\n255\n" + bytes([0, 0, 0]))
    assert img.shape == (1, 1, 3)
    assert img.dtype == np.uint8
    assert (img == 0).all()


def test_decode_two_pixels_red_green():
    img = decode_ppm(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
    assert img.shape == (1, 2, 3)
    assert tuple(img[0, 0]) == (255, 0, 0)
    assert tuple(img[0, 1]) == (0, 255, 0)


def test_decode_wrong_magic():
    with pytest.raises(PpmParseError, match="magic"):
        decode_ppm(b"P5\n1 1\n255\n" + bytes(3))


def test_decode_bad_maxval():
    with pytest.raises(PpmParseError, match="maxval"):
        decode_ppm(b"P6\n1 1\n65535\n" + bytes(3))


def test_decode_truncated_payload():
    with pytest.raises(PpmParseError, match="payload"):
        decode_ppm(b"P6\n2 2\n255\n" + bytes(5))


def test_decode_trailing_bytes():
    with pytest.raises(PpmParseError, match="payload"):
        decode_ppm(b"P6\n1 1\n255\n" + bytes(4))


def test_decode_non_numeric_width():
    with pytest.raises(PpmParseError, match="width"):
        decode_ppm(b"P6\nxy 1\n255\n" + bytes(3))


def test_encode_minimal_black_pixel():
    img = np.zeros((1, 1, 3), dtype=np.uint8)
    assert encode_ppm(img) == b"P6\n1 1\n255\n" + bytes([0, 0, 0])


def test_canonical_bytes_round_trip():
    data = b"P6\n2 2\n255\n" + bytes(range(12))
    assert encode_ppm(decode_ppm(data)) == data


def test_noncanonical_header_reencodes_canonically():
    loose = b"P6 2 2 255\n" + bytes(range(12))
    assert encode_ppm(decode_ppm(loose)) == b"P6\n2 2\n255\n" + bytes(range(12))


def test_gradient_image_round_trips_exactly():
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    assert (decode_ppm(encode_ppm(img)) == img).all()


def test_random_images_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(30):
        h, w = rng.integers(1, 40, size=2)
        img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        again = decode_ppm(encode_ppm(img))
        assert (again == img).all()


def test_normalize_endpoints():
    img = np.array([[[0, 255, 128]]], dtype=np.uint8)
    t = normalize(img)
    assert t.dtype == np.float32
    assert t[0, 0, 0] == -1.0
    assert t[0, 0, 1] == 1.0
    assert abs(t[0, 0, 2] - (128 / 127.5 - 1)) < 1e-7


def test_normalize_range_is_closed_unit_interval():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(9, 5, 3), dtype=np.uint8)
    t = normalize(img)
    assert t.min() >= -1.0 and t.max() <= 1.0


def test_denormalize_endpoints_and_midpoint():
    t = np.array([[[-1.0, 1.0, 0.0]]], dtype=np.float32)
    img = denormalize(t)
    # 0.0 maps to 127.5, which rounds away from zero to 128
    assert tuple(img[0, 0]) == (0, 255, 128)


def test_denormalize_clamps_out_of_range():
    t = np.array([[[2.0, -3.5, 0.5]]], dtype=np.float32)
    img = denormalize(t)
    assert img[0, 0, 0] == 255
    assert img[0, 0, 1] == 0


def test_denormalize_rejects_wrong_channel_count():
    with pytest.raises(ValueError):
        denormalize(np.zeros((2, 2, 4), dtype=np.float32))


def test_normalize_denormalize_identity_on_all_levels():
    img = np.arange(256, dtype=np.uint8).repeat(3).reshape(16, 16, 3)
    assert (denormalize(normalize(img)) == img).all()


def test_require_finite_raises_on_nan():
    bad = np.array([1.0, np.nan], dtype=np.float32)
    with pytest.raises(ValueError, match="non-finite"):
        require_finite(bad, "x")
