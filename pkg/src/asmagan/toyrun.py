"""The desk-scale two-artist experiment: train, then measure.

Used by the acceptance suite and for regenerating its committed fixture.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .config import toy_config
from .data import ingest
from .engine import StyleLabel, Tensor, no_grad, precision
from .metrics import StyleClassifier, style_accuracy
from .toydata import make_toy_corpus
from .trainer import Trainer

TRAIN_CORPUS_SEED = 0
HELDOUT_CORPUS_SEED = 1


def discrimination(trainer: Trainer, dataset) -> dict:
    """Score held-out paintings (should be > 0) and photos (should be < 0) under their own labels."""
    D, k = trainer.D, len(dataset.artists)
    D.eval()
    real_ok, photo_ok, losses = [], [], []
    with no_grad(), precision(trainer.dtype):
        w = D.spectral_weights(update=False)
        for i, artist in enumerate(dataset.artists):
            lab = StyleLabel(i, k)
            real = D.project_score(Tensor(np.stack(dataset.styles[artist]).astype(trainer.dtype)), lab, w).data
            photo = D.project_score(Tensor(np.stack(dataset.content).astype(trainer.dtype)), lab, w).data
            real_ok.extend(real > 0)
            photo_ok.extend(photo < 0)
            losses.append(np.maximum(0, 1 - real).mean() + np.maximum(0, 1 + photo).mean())
    D.train()
    acc = float(np.mean(np.concatenate([real_ok, photo_ok])))
    return {"accuracy": acc, "real_photo_hinge": float(np.mean(losses))}


def stylize_all(trainer: Trainer, images, label: StyleLabel) -> list[np.ndarray]:
    with no_grad(), precision(trainer.dtype):
        return [trainer.G.generate(Tensor(img[None].astype(trainer.dtype)), label).data[0] for img in images]


def run_toy_experiment(work_dir: str | Path, seed: int = 0, schedule=None, classifier_steps: int = 300) -> dict:
    work = Path(work_dir)
    train_root = make_toy_corpus(work / "train", seed=TRAIN_CORPUS_SEED)
    held_root = make_toy_corpus(work / "heldout", seed=HELDOUT_CORPUS_SEED)
    train_set, held_set = ingest(train_root), ingest(held_root)
    overrides = {"seed": seed}
    if schedule is not None:
        overrides["resolution_schedule"] = schedule
    config = toy_config(**overrides)
    t0 = time.perf_counter()
    trainer = Trainer(config, train_set, work / "run").run_schedule()
    train_seconds = time.perf_counter() - t0
    hist = trainer.history
    k = len(train_set.artists)

    probe = held_set.content[0]
    outs = [stylize_all(trainer, [probe], StyleLabel(i, k))[0] for i in range(k)]
    label_swap = float(np.abs(outs[0] - outs[1]).mean())

    clf = StyleClassifier(config.discriminator, seed=seed).fit(train_set, steps=classifier_steps)
    results = [stylize_all(trainer, held_set.content, StyleLabel(i, k)) for i in range(k)]
    acc = style_accuracy(results, clf)
    train_acc = style_accuracy([train_set.styles[a] for a in train_set.artists], clf)

    return {
        "seed": seed,
        "schedule": [list(p) for p in config.resolution_schedule],
        "train_seconds": train_seconds,
        "steps": len(hist),
        "l_c_step50": hist[50].l_c,
        "l_c_final": hist[-1].l_c,
        "l_c_ratio": hist[-1].l_c / hist[50].l_c,
        "heldout": discrimination(trainer, held_set),
        "label_swap_mad": label_swap,
        "style_accuracy": acc.mean,
        "style_accuracy_per_artist": acc.per_artist,
        "style_patches": acc.counts,
        "classifier_train_accuracy": train_acc.mean,
        "all_losses_finite": bool(all(np.isfinite([r.d_loss, r.g_adv, r.l_c, r.l_t]).all() for r in hist)),
        "checkpoint": str(work / "run" / "final.asma"),
    }


if __name__ == "__main__":
    import sys

    print(json.dumps(run_toy_experiment(sys.argv[1] if len(sys.argv) > 1 else "toy_work"), indent=2))
