"""Image I/O, dataset ingestion and batch sampling.

Images are held as float arrays of shape (3, H, W) in [-1, 1]. PPM (P6) is
read and written directly; PNG goes through Pillow.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm")


class ImageError(ValueError):
    """Unreadable or unsupported image file."""


class DatasetError(ValueError):
    """Dataset layout problems (missing artists, empty portfolios)."""


# -- pixel conversion ----------------------------------------------------------


def to_float(rgb: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [-1, 1]."""
    return (rgb.astype(np.float32).transpose(2, 0, 1) / 127.5) - 1.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    """(3, H, W) float in [-1, 1] -> (H, W, 3) uint8."""
    a = np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0, 255)
    return np.rint(a).astype(np.uint8).transpose(1, 2, 0)


# -- PPM -----------------------------------------------------------------------


def _ppm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError("truncated PPM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # single whitespace after maxval


def decode_ppm(buf: bytes) -> np.ndarray:
    tokens, pos = _ppm_tokens(buf, 4)
    if tokens[0] != b"P6":
        raise ImageError(f"unsupported PPM magic {tokens[0]!r} (only P6)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageError("malformed PPM header") from exc
    if maxval != 255:
        raise ImageError("only 8-bit PPM (maxval 255) is supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=pos) if len(buf) >= pos + w * h * 3 else None
    if data is None:
        raise ImageError("truncated PPM pixel data")
    return data.reshape(h, w, 3)


def encode_ppm(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


# -- generic -------------------------------------------------------------------


def read_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or PPM file to a (3, H, W) float32 array in [-1, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".ppm":
            rgb = decode_ppm(path.read_bytes())
        elif suffix == ".png":
            from PIL import Image

            with Image.open(path) as im:
                rgb = np.asarray(im.convert("RGB"))
        else:
            raise ImageError(f"{path}: unsupported image format {suffix!r}")
    except ImageError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types
        raise ImageError(f"{path}: {exc}") from exc
    return to_float(rgb)


def write_image(path: str | Path, img: np.ndarray) -> None:
    path = Path(path)
    rgb = to_uint8(img)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        path.write_bytes(encode_ppm(rgb))
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    else:
        raise ImageError(f"{path}: unsupported output format {suffix!r}")


def _image_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


# -- dataset -------------------------------------------------------------------


@dataclass
class ArtistDataset:
    styles: dict[str, list[np.ndarray]]
    content: list[np.ndarray]
    skipped: list[str] = field(default_factory=list)

    @property
    def artists(self) -> list[str]:
        return list(self.styles)

    def label_of(self, artist: str) -> int:
        try:
            return self.artists.index(artist)
        except ValueError:
            raise DatasetError(f"unknown artist {artist!r}; available: {', '.join(self.artists)}") from None

    def validate(self) -> None:
        if not self.styles:
            raise DatasetError("no artist portfolios found")
        for name, imgs in self.styles.items():
            if not imgs:
                raise DatasetError(f"artist {name!r} has no readable paintings")
        if not self.content:
            raise DatasetError("no content photographs found")


def ingest(root: str | Path) -> ArtistDataset:
    """Load ``root/styles/<artist>/*`` and ``root/content/*``.

    Corrupt files are skipped with a warning and listed in ``skipped``.
    """
    root = Path(root)
    styles_dir, content_dir = root / "styles", root / "content"
    if not styles_dir.is_dir() or not content_dir.is_dir():
        raise DatasetError(f"{root}: expected styles/<artist>/ and content/ subdirectories")
    skipped: list[str] = []

    def load_all(directory: Path) -> list[np.ndarray]:
        out = []
        for p in _image_files(directory):
            try:
                out.append(read_image(p))
            except ImageError as exc:
                log.warning("skipping unreadable image %s: %s", p, exc)
                skipped.append(str(p))
        return out

    styles = {d.name: load_all(d) for d in sorted(styles_dir.iterdir()) if d.is_dir()}
    ds = ArtistDataset(styles, load_all(content_dir), skipped)
    ds.validate()
    return ds


def fit_image(img: np.ndarray, size: int) -> np.ndarray:
    """Nearest-upscale by an integer factor so both sides are >= size."""
    h, w = img.shape[1:]
    if min(h, w) >= size:
        return img
    f = -(-size // min(h, w))
    return np.repeat(np.repeat(img, f, axis=1), f, axis=2)


def random_crop(img: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    img = fit_image(img, size)
    h, w = img.shape[1:]
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return img[:, y : y + size, x : x + size]


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    img = fit_image(img, size)
    h, w = img.shape[1:]
    y, x = (h - size) // 2, (w - size) // 2
    return img[:, y : y + size, x : x + size]


def sample_batch(images: list[np.ndarray], n: int, size: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """n random crops (with replacement) stacked to (n, 3, size, size)."""
    idx = rng.integers(0, len(images), size=n)
    return np.stack([random_crop(images[i], size, rng) for i in idx]).astype(dtype)
