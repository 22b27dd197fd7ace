"""Procedural stand-in corpus: synthetic "photographs" and two painters.

Paintings reuse the photo scene generator, then quantize to the painter's
palette and overlay the painter's stroke texture, so each artist is a
learnable, visually distinct mapping from photos.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import write_image

PALETTES = {
    "stripes": np.array([[0.85, 0.25, 0.10], [0.95, 0.65, 0.15], [0.55, 0.10, 0.10], [0.98, 0.90, 0.60]]),
    "dots": np.array([[0.10, 0.25, 0.70], [0.15, 0.60, 0.55], [0.05, 0.10, 0.30], [0.70, 0.85, 0.95]]),
}


def scene(rng: np.random.Generator, size: int = 96) -> np.ndarray:
    """Smooth sky/ground layout with a few solid shapes; (H, W, 3) in [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    horizon = rng.uniform(0.35, 0.65)
    sky_top, sky_bot = rng.uniform(0.4, 0.9, 3), rng.uniform(0.5, 1.0, 3)
    ground = rng.uniform(0.15, 0.6, 3)
    t = np.clip(yy / horizon, 0, 1)[..., None]
    img = sky_top * (1 - t) + sky_bot * t
    below = (yy > horizon)[..., None]
    img = np.where(below, ground * (0.8 + 0.4 * (yy - horizon))[..., None], img)
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0.0, 1.0, 3)
        cy, cx = rng.uniform(0.2, 0.9), rng.uniform(0.1, 0.9)
        ry, rx = rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        img = np.where(mask[..., None], color, img)
    img = img + rng.normal(0, 0.02, img.shape)
    return np.clip(img, 0, 1)


def paint(photo: np.ndarray, artist: str, rng: np.random.Generator) -> np.ndarray:
    palette = PALETTES[artist]
    size = photo.shape[0]
    lum = photo.mean(axis=2)
    order = np.argsort(palette.mean(axis=1))
    bins = np.clip((lum * len(palette)).astype(int), 0, len(palette) - 1)
    img = palette[order][bins]
    yy, xx = np.mgrid[0:size, 0:size]
    phase = rng.uniform(0, 2 * np.pi)
    if artist == "stripes":
        tex = np.sin((xx + yy) * (2 * np.pi / 6.0) + phase)
    else:
        tex = np.sin(xx * (2 * np.pi / 8.0) + phase) * np.sin(yy * (2 * np.pi / 8.0) + phase)
    img = img * (1.0 + 0.25 * tex[..., None])
    return np.clip(img, 0, 1)


def make_toy_corpus(root: str | Path, n_paintings: int = 8, n_photos: int = 16, size: int = 96, seed: int = 0,
                    artists: tuple[str, ...] = ("dots", "stripes"), ext: str = ".ppm") -> Path:
    """Write ``styles/<artist>/*`` and ``content/*`` under ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for artist in artists:
        d = root / "styles" / artist
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_paintings):
            img = paint(scene(rng, size), artist, rng)
            write_image(d / f"{artist}_{i:03d}{ext}", (img * 2 - 1).transpose(2, 0, 1))
    c = root / "content"
    c.mkdir(parents=True, exist_ok=True)
    for i in range(n_photos):
        write_image(c / f"photo_{i:03d}{ext}", (scene(rng, size) * 2 - 1).transpose(2, 0, 1))
    return root
