"""Evaluation metrics: Semantic Retention Ratio and stylization accuracy."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import DiscConfig
from .data import ArtistDataset, sample_batch
from .discriminator import Discriminator
from .engine import Tensor, cross_entropy, no_grad, precision

log = logging.getLogger(__name__)


def _as_chw(image) -> np.ndarray:
    a = image.data if isinstance(image, Tensor) else np.asarray(image)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError("detail_map takes a single image")
        a = a[0]
    if a.ndim == 2:
        a = a[None]
    return a.astype(np.float64)


def gradient_magnitude(image) -> np.ndarray:
    """Per-pixel |∇| of the channel-mean grayscale (central differences)."""
    gray = _as_chw(image).mean(axis=0)
    if min(gray.shape) < 2:
        return np.zeros_like(gray)
    gy, gx = np.gradient(gray)
    return np.sqrt(gx * gx + gy * gy)


@dataclass
class DetailGrid:
    values: np.ndarray  # (n, n), row i, column j

    @property
    def n(self) -> int:
        return self.values.shape[0]


def detail_map(image, n: int = 8, statistic: Callable[[np.ndarray], np.ndarray] = gradient_magnitude) -> DetailGrid:
    """Mean of ``statistic`` over each cell of an n x n patch grid.

    Trailing rows/columns that do not fill a whole patch are cropped first.
    """
    a = _as_chw(image)
    h, w = a.shape[1:]
    if h < n or w < n:
        raise ValueError(f"image {h}x{w} smaller than the {n}x{n} grid")
    ph, pw = h // n, w // n
    stat = statistic(a[:, : ph * n, : pw * n])
    grid = stat.reshape(n, ph, n, pw).mean(axis=(1, 3))
    return DetailGrid(grid)


def _normalize_grid(d: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns normalized grid and a validity mask of the same shape."""
    if mode == "column":
        s = d.sum(axis=0, keepdims=True)
    elif mode == "row":
        s = d.sum(axis=1, keepdims=True)
    elif mode == "global":
        s = np.full((1, 1), d.sum())
    else:
        raise ValueError(f"unknown SRR normalization {mode!r}")
    ok = np.broadcast_to(s > 0, d.shape)
    return np.where(ok, d / np.where(s > 0, s, 1.0), 0.0), ok


def srr_grids(d_o: np.ndarray, d_c: np.ndarray, mode: str = "column") -> float:
    n = d_o.shape[0]
    p_o, ok_o = _normalize_grid(d_o, mode)
    p_c, ok_c = _normalize_grid(d_c, mode)
    ok = ok_o & ok_c
    if not ok.all():
        log.info("SRR: %d grid cells skipped (zero-sum slice)", int((~ok).sum()))
    return float(np.abs(p_o - p_c)[ok].sum() / (n * n))


def srr(x_o, x_c, n: int = 8, mode: str = "column") -> float:
    """Semantic Retention Ratio for one (stylized, content) pair.

    Detail grids are normalized per column (sum over the row index) by
    default; lower means the stylized image keeps the photo's detail layout.
    Lies in [0, 2/n].
    """
    a, b = _as_chw(x_o), _as_chw(x_c)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"SRR needs equal image sizes, got {a.shape[1:]} and {b.shape[1:]}")
    return srr_grids(detail_map(a, n).values, detail_map(b, n).values, mode)


def srr_dataset(pairs: Sequence[tuple], n: int = 8, mode: str = "column") -> tuple[list[float], float]:
    """Per-pair SRR values (input order) and their mean."""
    vals = [srr(o, c, n, mode) for o, c in pairs]
    return vals, float(np.mean(vals)) if vals else float("nan")


# -- stylization accuracy ---------------------------------------------------


class ClassifierNotTrained(RuntimeError):
    pass


class StyleClassifier:
    """Artist classifier sharing the discriminator's backbone layout."""

    def __init__(self, config: DiscConfig, seed: int = 0, patch: int = 32, dtype=np.float32):
        self.config = config
        self.patch = patch
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        with precision(self.dtype):
            self.net = Discriminator(config, self.rng, heads="classifier")
        self.trained = False
        self.history: list[float] = []

    def fit(self, dataset: ArtistDataset, steps: int = 300, batch: int = 8, lr: float = 5e-4) -> "StyleClassifier":
        from .trainer import Adam

        opt = Adam(self.net.named_parameters(), lr, (0.9, 0.999))
        k = len(dataset.artists)
        for _ in range(steps):
            labels = self.rng.integers(0, k, size=batch)
            x = np.concatenate([
                sample_batch(dataset.styles[dataset.artists[c]], 1, self.patch, self.rng, self.dtype) for c in labels
            ])
            weights = self.net.spectral_weights(update=True)
            loss = cross_entropy(self.net.logits(Tensor(x), weights), labels)
            self.net.zero_grad()
            loss.backward()
            opt.step()
            self.history.append(float(loss.data))
        self.trained = True
        return self

    def predict(self, patches: np.ndarray, chunk: int = 64) -> np.ndarray:
        with no_grad():
            weights = self.net.spectral_weights(update=False)
            out = [
                self.net.logits(Tensor(patches[i : i + chunk].astype(self.dtype)), weights).data.argmax(axis=1)
                for i in range(0, len(patches), chunk)
            ]
        return np.concatenate(out) if out else np.zeros(0, dtype=int)


def grid_patches(images: Sequence[np.ndarray], patch: int) -> np.ndarray:
    """Non-overlapping patch x patch tiles of (3, H, W) images."""
    tiles = []
    for img in images:
        img = np.asarray(img)
        h, w = img.shape[1:]
        for y in range(0, h - patch + 1, patch):
            for x in range(0, w - patch + 1, patch):
                tiles.append(img[:, y : y + patch, x : x + patch])
    return np.stack(tiles) if tiles else np.zeros((0, 3, patch, patch))


@dataclass
class StyleAccuracy:
    per_artist: list[float]
    mean: float
    confusion: np.ndarray  # rows: target artist, columns: predicted
    counts: list[int]


def style_accuracy(results: Sequence[Sequence[np.ndarray]], classifier: StyleClassifier,
                   require_trained: bool = True) -> StyleAccuracy:
    """Fraction of stylized patches that the classifier assigns to their target artist.

    ``results[k]`` holds the images stylized toward artist k.
    """
    if require_trained and not classifier.trained:
        raise ClassifierNotTrained("style classifier has no trained weights; call fit() on real artwork patches first")
    k = len(results)
    confusion = np.zeros((k, k), dtype=int)
    for target, images in enumerate(results):
        patches = grid_patches(images, classifier.patch)
        if len(patches):
            pred = classifier.predict(patches)
            np.add.at(confusion[target], pred, 1)
    counts = confusion.sum(axis=1).tolist()
    per = [float(confusion[i, i] / c) if c else float("nan") for i, c in enumerate(counts)]
    return StyleAccuracy(per, float(np.nanmean(per)), confusion, counts)
