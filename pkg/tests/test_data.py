import logging

import numpy as np
import pytest

from asmagan.data import (
    DatasetError, ImageError, center_crop, decode_ppm, encode_ppm, fit_image, ingest, random_crop, read_image,
    sample_batch, to_float, to_uint8, write_image,
)
from asmagan.toydata import make_toy_corpus


@pytest.mark.parametrize("ext", [".ppm", ".png"])
def test_image_round_trip_within_quantization(tmp_path, rng, ext):
    img = rng.uniform(-1, 1, (3, 13, 21))
    write_image(tmp_path / f"a{ext}", img)
    back = read_image(tmp_path / f"a{ext}")
    assert back.shape == img.shape and back.dtype == np.float32
    assert np.abs(back - img).max() <= 1 / 255 + 1e-6


@pytest.mark.parametrize("ext", [".ppm", ".png"])
def test_uint8_images_are_lossless(tmp_path, rng, ext):
    rgb = rng.integers(0, 256, (9, 7, 3), dtype=np.uint8)
    write_image(tmp_path / f"a{ext}", to_float(rgb))
    assert np.array_equal(to_uint8(read_image(tmp_path / f"a{ext}")), rgb)


def test_ppm_header_comments_and_errors(rng):
    rgb = rng.integers(0, 256, (2, 3, 3), dtype=np.uint8)
    buf = encode_ppm(rgb)
    assert np.array_equal(decode_ppm(buf), rgb)
    assert np.array_equal(decode_ppm(b"P6\n# made by hand\n3 2\n255\n" + rgb.tobytes()), rgb)
    for bad in (b"P3\n3 2\n255\n", buf[:-1], b"P6\n3 2\n65535\n" + bytes(36), b"P6\nx 2\n255\n"):
        with pytest.raises(ImageError):
            decode_ppm(bad)


def test_read_image_errors(tmp_path):
    (tmp_path / "x.jpg").write_bytes(b"")
    (tmp_path / "y.png").write_bytes(b"not a png")
    for name in ("x.jpg", "y.png"):
        with pytest.raises(ImageError):
            read_image(tmp_path / name)


def test_ingest_layout(toy_root):
    ds = ingest(toy_root)
    assert ds.artists == ["dots", "stripes"]
    assert [len(v) for v in ds.styles.values()] == [8, 8] and len(ds.content) == 16
    for img in ds.content + ds.styles["dots"]:
        assert img.shape == (3, 96, 96) and img.min() >= -1 and img.max() <= 1
    assert ds.label_of("stripes") == 1
    with pytest.raises(DatasetError, match="dots, stripes"):
        ds.label_of("monet")


def test_corrupt_file_skipped_with_warning(tmp_path, caplog):
    root = make_toy_corpus(tmp_path / "c", n_paintings=2, n_photos=2, size=32)
    bad = root / "styles" / "dots" / "zz_broken.ppm"
    bad.write_bytes(b"P6\n32 32\n255\n" + bytes(10))
    with caplog.at_level(logging.WARNING, logger="asmagan.data"):
        ds = ingest(root)
    assert ds.skipped == [str(bad)] and len(ds.styles["dots"]) == 2
    assert "zz_broken" in caplog.text


def test_ingest_errors(tmp_path):
    with pytest.raises(DatasetError):
        ingest(tmp_path)
    root = make_toy_corpus(tmp_path / "c", n_paintings=1, n_photos=1, size=32)
    for f in (root / "styles" / "dots").iterdir():
        f.unlink()
    with pytest.raises(DatasetError, match="dots"):
        ingest(root)


def test_crops_and_batches(rng):
    img = rng.uniform(-1, 1, (3, 20, 30))
    assert fit_image(img, 16) is img
    big = fit_image(img, 48)
    assert big.shape == (3, 60, 90) and np.array_equal(big[:, ::3, ::3], img)
    assert random_crop(img, 16, rng).shape == (3, 16, 16)
    np.testing.assert_array_equal(center_crop(img, 10), img[:, 5:15, 10:20])
    b = sample_batch([img, img * 0.5], 4, 16, np.random.default_rng(1))
    assert b.shape == (4, 3, 16, 16) and b.dtype == np.float32
    assert np.array_equal(b, sample_batch([img, img * 0.5], 4, 16, np.random.default_rng(1)))
