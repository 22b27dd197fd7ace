"""Alternating GAN optimization with progressive resolution.

One logged *step* is ``d_steps_per_g`` discriminator updates followed by
one generator update. Every random draw after initialization comes from a
single ``numpy.random.Generator`` whose state is checkpointed, so a resumed
run continues bit-identically.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import checkpoint as ckpt
from .config import TrainConfig, build_config
from .data import ArtistDataset, DatasetError, sample_batch
from .discriminator import Discriminator
from .engine import StyleLabel, Tensor, no_grad, precision
from .generator import Generator
from .losses import content_loss, d_loss, g_loss, total_g_objective, transform_loss

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "resolution", "d_updates", "g_updates", "d_loss", "g_adv", "l_c", "l_t")


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; a diagnostic dump was written."""


class Adam:
    """Adam over named parameters.

    Parameters listed in ``sparse_rows`` are updated lazily: rows whose
    gradient is exactly zero keep their value and moments untouched.
    """

    def __init__(self, named_params: Iterable[tuple[str, Tensor]], lr: float, betas=(0.5, 0.999), eps: float = 1e-8,
                 sparse_rows: Iterable[str] = ()):
        self.params = OrderedDict(named_params)
        self.lr, self.eps = float(lr), float(eps)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.sparse_rows = set(sparse_rows)
        self.t = 0
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            if name in self.sparse_rows:
                rows = np.any(g.reshape(g.shape[0], -1) != 0, axis=1)
                if not rows.any():
                    continue
                m[rows] = b1 * m[rows] + (1 - b1) * g[rows]
                v[rows] = b2 * v[rows] + (1 - b2) * g[rows] * g[rows]
                p.data[rows] -= (self.lr * (m[rows] / c1) / (np.sqrt(v[rows] / c2) + self.eps)).astype(p.dtype)
                continue
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state(self, prefix: str) -> dict:
        out = {}
        for n in self.params:
            out[f"{prefix}.m/{n}"] = self.m[n]
            out[f"{prefix}.v/{n}"] = self.v[n]
        return out

    def load_state(self, records: dict, prefix: str, t: int) -> None:
        self.t = t
        for n, p in self.params.items():
            self.m[n] = records[f"{prefix}.m/{n}"].astype(p.dtype)
            self.v[n] = records[f"{prefix}.v/{n}"].astype(p.dtype)


@dataclass
class StepRecord:
    step: int
    resolution: int
    d_updates: int
    g_updates: int
    d_loss: float
    g_adv: float
    l_c: float
    l_t: float

    def row(self) -> list[str]:
        return [str(self.step), str(self.resolution), str(self.d_updates), str(self.g_updates),
                repr(self.d_loss), repr(self.g_adv), repr(self.l_c), repr(self.l_t)]


def _finite(*xs: float) -> bool:
    return all(math.isfinite(x) for x in xs)


class Trainer:
    def __init__(self, config: TrainConfig, dataset: ArtistDataset, out_dir: str | Path | None = None,
                 dtype=np.float32):
        n_art = len(dataset.styles)
        if n_art != config.generator.num_styles:
            raise DatasetError(f"dataset has {n_art} artists but config expects {config.generator.num_styles}")
        dataset.validate()
        self.config = config
        self.dataset = dataset
        self.artists = dataset.artists
        self.dtype = np.dtype(dtype)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        init_seq, data_seq = np.random.SeedSequence(config.seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        with precision(self.dtype):
            self.G = Generator(config.generator, init_rng)
            self.D = Discriminator(config.discriminator, init_rng)
        self.rng = np.random.default_rng(data_seq)
        betas = (config.adam_beta1, config.adam_beta2)
        cin_names = [n for n, _ in self.G.named_parameters() if n.startswith("cres.gammas") or n.startswith("cres.betas")]
        self.opt_g = Adam(self.G.named_parameters(), config.lr, betas, config.adam_eps, sparse_rows=cin_names)
        self.opt_d = Adam(self.D.named_parameters(), config.lr, betas, config.adam_eps)
        self.step = 0
        self.d_updates = 0
        self.g_updates = 0
        self.history: list[StepRecord] = []
        self._last_finite: StepRecord | None = None

    # -- schedule -------------------------------------------------------------

    @property
    def total_steps(self) -> int:
        return sum(s for _, s in self.config.resolution_schedule)

    def resolution_at(self, step: int) -> int:
        acc = 0
        for res, steps in self.config.resolution_schedule:
            acc += steps
            if step < acc:
                return res
        return self.config.resolution_schedule[-1][0]

    def _label(self) -> StyleLabel:
        return StyleLabel(int(self.rng.integers(0, len(self.artists))), len(self.artists))

    # -- single updates -------------------------------------------------------

    def train_step_d(self, content: np.ndarray, style: np.ndarray, label: StyleLabel) -> float:
        """One discriminator update on (painting, photo, frozen-G fake) triples."""
        with no_grad():
            fake = self.G.generate(Tensor(content), label).data
        self.D.train()
        weights = self.D.spectral_weights(update=True)
        n = len(style)
        scores = self.D.project_score(Tensor(np.concatenate([style, content, fake])), label, weights)
        loss = d_loss(scores[:n], scores[n : 2 * n], scores[2 * n :])
        value = float(loss.data)
        if not _finite(value):
            self._diverged("d_loss", value)
        self.D.zero_grad()
        loss.backward()
        self.opt_d.step()
        self.d_updates += 1
        return value

    def train_step_g(self, content: np.ndarray, label: StyleLabel) -> tuple[float, float, float]:
        """One generator (+ASM, +CIN) update against the frozen discriminator."""
        weights = self.D.spectral_weights(update=False, frozen=True)
        xc = Tensor(content)
        x_o, feats = self.G.generate_with_features(xc, label)
        h_o = self.G.encode(x_o).h
        l_c = content_loss(xc, x_o, h_c=feats.h, h_o=h_o)
        l_t = transform_loss(xc, x_o, self.config.losses.transform_pool)
        g_adv = g_loss(self.D.project_score(x_o, label, weights))
        total = total_g_objective(g_adv, l_c, l_t, self.config.losses)
        vals = (float(g_adv.data), float(l_c.data), float(l_t.data))
        if not _finite(*vals, float(total.data)):
            self._diverged("generator objective", float(total.data))
        self.G.zero_grad()
        total.backward()
        self.opt_g.step()
        self.g_updates += 1
        return vals

    def train_iteration(self) -> StepRecord:
        cfg = self.config
        res = self.resolution_at(self.step)
        if self.step > 0 and res != self.resolution_at(self.step - 1) and cfg.reset_moments_on_resolution_change:
            self.opt_g.reset()
            self.opt_d.reset()
        styles = self.dataset.styles
        d_vals = []
        for _ in range(cfg.d_steps_per_g):
            label = self._label()
            style = sample_batch(styles[self.artists[label.index]], cfg.batch_size, res, self.rng, self.dtype)
            content = sample_batch(self.dataset.content, cfg.batch_size, res, self.rng, self.dtype)
            d_vals.append(self.train_step_d(content, style, label))
        label = self._label()
        content = sample_batch(self.dataset.content, cfg.batch_size, res, self.rng, self.dtype)
        g_adv, l_c, l_t = self.train_step_g(content, label)
        rec = StepRecord(self.step, res, self.d_updates, self.g_updates, float(np.mean(d_vals)), g_adv, l_c, l_t)
        self.step += 1
        self.history.append(rec)
        self._last_finite = rec
        return rec

    def run_schedule(self, max_steps: int | None = None, log_path: str | Path | None = None,
                     checkpoint_every: int | None = None) -> "Trainer":
        """Run phases in order from the current step; parameters carry across resolutions."""
        every = checkpoint_every if checkpoint_every is not None else self.config.checkpoint_every
        log_path = Path(log_path) if log_path else (self.out_dir / "train_log.csv" if self.out_dir else None)
        writer = fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if log_path is not None:
            new = not log_path.exists() or self.step == 0
            fh = open(log_path, "w" if new else "a", newline="")
            writer = csv.writer(fh)
            if new:
                writer.writerow(LOG_FIELDS)
        try:
            end = self.total_steps if max_steps is None else min(self.total_steps, self.step + max_steps)
            while self.step < end:
                rec = self.train_iteration()
                if writer is not None:
                    writer.writerow(rec.row())
                    fh.flush()
                if self.out_dir is not None and every and self.step % every == 0:
                    self.save(self.out_dir / "last.asma")
            if self.out_dir is not None:
                self.save(self.out_dir / ("final.asma" if self.step >= self.total_steps else "last.asma"))
        finally:
            if fh is not None:
                fh.close()
        return self

    def _diverged(self, what: str, value: float) -> None:
        msg = f"{what} became {value} at step {self.step}"
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            info = {"error": msg, "last_finite": self._last_finite.__dict__ if self._last_finite else None}
            (self.out_dir / "nan_dump.json").write_text(json.dumps(info, indent=2))
            self.save(self.out_dir / "nan_dump.asma")
        raise TrainingDiverged(msg)

    # -- persistence ----------------------------------------------------------

    def records(self) -> dict:
        meta = {
            "format": "asmagan-checkpoint",
            "step": self.step,
            "d_updates": self.d_updates,
            "g_updates": self.g_updates,
            "opt_g_t": self.opt_g.t,
            "opt_d_t": self.opt_d.t,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "artists": self.artists,
            "rng_state": self.rng.bit_generator.state,
            "dtype": self.dtype.name,
        }
        rec: dict = {"meta": meta}
        rec.update({f"g/{n}": p.data for n, p in self.G.named_parameters()})
        rec.update({f"d/{n}": p.data for n, p in self.D.named_parameters()})
        rec.update({f"d.u/{n}": u for n, u in self.D.u_state.items()})
        rec.update(self.opt_g.state("opt_g"))
        rec.update(self.opt_d.state("opt_d"))
        return rec

    def save(self, path: str | Path) -> Path:
        ckpt.save(path, self.records())
        return Path(path)

    @classmethod
    def load(cls, path: str | Path, dataset: ArtistDataset, out_dir: str | Path | None = None) -> "Trainer":
        rec = ckpt.load(path)
        meta = rec["meta"]
        config = build_config(meta["config"])
        if config.config_hash() != meta["config_hash"]:
            raise ckpt.CheckpointError("config hash mismatch")
        if list(dataset.artists) != list(meta["artists"]):
            raise DatasetError(f"checkpoint artists {meta['artists']} != dataset artists {dataset.artists}")
        tr = cls(config, dataset, out_dir, dtype=meta["dtype"])
        tr.load_records(rec)
        return tr

    def load_records(self, rec: dict) -> None:
        meta = rec["meta"]
        self.G.load_state_dict({n[2:]: v for n, v in rec.items() if n.startswith("g/")})
        self.D.load_state_dict({n[2:]: v for n, v in rec.items() if n.startswith("d/")})
        self.D.u_state = {n[4:]: v.astype(self.dtype) for n, v in rec.items() if n.startswith("d.u/")}
        self.opt_g.load_state(rec, "opt_g", meta["opt_g_t"])
        self.opt_d.load_state(rec, "opt_d", meta["opt_d_t"])
        self.step, self.d_updates, self.g_updates = meta["step"], meta["d_updates"], meta["g_updates"]
        self.rng.bit_generator.state = meta["rng_state"]


def load_generator(path: str | Path) -> tuple[Generator, list[str], TrainConfig]:
    """Generator parameters and artist names from a checkpoint, for inference."""
    rec = ckpt.load(path)
    meta = rec["meta"]
    config = build_config(meta["config"])
    with precision(meta.get("dtype", "float32")):
        G = Generator(config.generator, np.random.default_rng(0))
    G.load_state_dict({n[2:]: v for n, v in rec.items() if n.startswith("g/")})
    return G, list(meta["artists"]), config
