"""Command-line entry point: ``asma train|stylize|eval-srr|style-acc|grad-check|toy-data``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .config import ConfigurationError, build_config
from .data import IMAGE_SUFFIXES, DatasetError, ImageError, ingest, read_image, write_image
from .engine import StyleLabel, Tensor, no_grad, precision

EXIT_FAIL = 1
EXIT_USAGE = 2

TOY_PRESET = {"base_channels": 8, "channel_cap": 64, "channels": [8, 16, 32, 64, 64, 64]}


def _raw_config(path: str | None, preset: str) -> dict:
    raw = dict(TOY_PRESET) if preset == "toy" else {}
    if path:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: config must be a key-value mapping")
        raw.update(loaded)
    return raw


def _pad16(img: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = img.shape[1:]
    ph, pw = (-h) % 16, (-w) % 16
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect" if min(h, w) > max(ph, pw) else "edge")
    return img, (h, w)


def stylize_array(G, img: np.ndarray, label: StyleLabel, dtype) -> np.ndarray:
    """Stylize one (3, H, W) image; sizes not divisible by 16 are padded then cropped back."""
    padded, (h, w) = _pad16(img)
    with no_grad(), precision(dtype):
        out = G.generate(Tensor(padded[None].astype(dtype)), label).data[0]
    return out[:, :h, :w]


# -- commands -------------------------------------------------------------------


def cmd_train(args) -> int:
    from .trainer import Trainer

    dataset = ingest(args.data)
    raw = _raw_config(args.config, args.preset)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = build_config(raw, num_styles=len(dataset.styles))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        trainer = Trainer.load(args.resume, dataset, out)
    else:
        trainer = Trainer(config, dataset, out)
    (out / "config.yaml").write_text(yaml.safe_dump(trainer.config.to_dict(), sort_keys=True))
    trainer.run_schedule(max_steps=args.max_steps)
    last = trainer.history[-1] if trainer.history else None
    if last is not None:
        print(f"step {trainer.step}/{trainer.total_steps}  d_loss {last.d_loss:.4f}  "
              f"g_adv {last.g_adv:.4f}  l_c {last.l_c:.4f}  l_t {last.l_t:.4f}")
    print(f"checkpoint: {out / ('final.asma' if trainer.step >= trainer.total_steps else 'last.asma')}")
    return 0


def _resolve_artist(artists: list[str], name: str) -> int | None:
    if name in artists:
        return artists.index(name)
    print(f"unknown artist {name!r}; available artists: {', '.join(artists)}", file=sys.stderr)
    return None


def cmd_stylize(args) -> int:
    from .trainer import load_generator

    G, artists, _ = load_generator(args.model)
    idx = _resolve_artist(artists, args.artist)
    if idx is None:
        return EXIT_USAGE
    img = read_image(args.inp)
    dtype = G.parameters()[0].dtype
    out = stylize_array(G, img, StyleLabel(idx, len(artists)), dtype)
    write_image(args.out, out)
    print(f"wrote {args.out} ({out.shape[2]}x{out.shape[1]}, artist {args.artist})")
    return 0


def _image_list(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [path]


def cmd_eval_srr(args) -> int:
    from .metrics import srr

    content = _image_list(Path(args.content))
    stylized = _image_list(Path(args.stylized))
    if Path(args.content).is_dir() and Path(args.stylized).is_dir():
        by_name = {p.stem: p for p in stylized}
        missing = [p.name for p in content if p.stem not in by_name]
        if missing:
            raise DatasetError(f"no stylized counterpart for: {', '.join(missing)}")
        pairs = [(c, by_name[c.stem]) for c in content]
    elif len(content) == len(stylized):
        pairs = list(zip(content, stylized))
    else:
        raise DatasetError("eval-srr needs one stylized image per content image")
    sep = args.delimiter
    print(sep.join(("content", "stylized", "srr")))
    vals = []
    for c, s in pairs:
        v = srr(read_image(s), read_image(c), n=args.grid, mode=args.norm)
        vals.append(v)
        print(sep.join((str(c), str(s), f"{v:.6f}")))
    print(sep.join(("mean", f"{len(vals)} images", f"{float(np.mean(vals)):.6f}")))
    return 0


def cmd_style_acc(args) -> int:
    from .metrics import StyleClassifier, style_accuracy
    from .trainer import load_generator

    G, artists, config = load_generator(args.model)
    dataset = ingest(args.data)
    if list(dataset.artists) != artists:
        raise DatasetError(f"dataset artists {dataset.artists} != model artists {artists}")
    seed = args.seed if args.seed is not None else config.seed
    clf = StyleClassifier(config.discriminator, seed=seed, patch=args.patch).fit(dataset, steps=args.classifier_steps)
    dtype = G.parameters()[0].dtype
    k = len(artists)
    results = [[stylize_array(G, img, StyleLabel(i, k), dtype) for img in dataset.content] for i in range(k)]
    acc = style_accuracy(results, clf)
    sep = args.delimiter
    print(sep.join(["artist", "accuracy", "patches"] + [f"pred:{a}" for a in artists]))
    for i, a in enumerate(artists):
        print(sep.join([a, f"{acc.per_artist[i]:.6f}", str(acc.counts[i])] + [str(x) for x in acc.confusion[i]]))
    print(sep.join(["mean", f"{acc.mean:.6f}", str(sum(acc.counts))]))
    return 0


def cmd_grad_check(args) -> int:
    from .gradsuite import run_suite

    results = run_suite(seeds=args.seeds, verbose=print)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAIL if failed else 0


def cmd_toy_data(args) -> int:
    from .toydata import make_toy_corpus

    root = make_toy_corpus(args.out_dir, seed=args.seed if args.seed is not None else 0)
    print(f"toy corpus written to {root}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asma", description="Multi-artist style transfer GAN (numpy, CPU).")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs/asma"):
        sp.add_argument("--config", help="YAML file of config keys")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", default=out_default)
        sp.add_argument("--threads", type=int, default=1, help="BLAS threads (1 for bitwise determinism)")

    sp = sub.add_parser("train", help="train on styles/<artist>/* and content/*")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset root")
    sp.add_argument("--preset", choices=("desk", "toy"), default="desk", help="width preset under --config")
    sp.add_argument("--max-steps", type=int, help="stop after this many steps (resumable)")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("stylize", help="stylize one image toward an artist")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--artist", required=True)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_stylize)

    sp = sub.add_parser("eval-srr", help="Semantic Retention Ratio per image and mean")
    common(sp)
    sp.add_argument("content", help="content image or directory")
    sp.add_argument("stylized", help="stylized image or directory (matched by file stem)")
    sp.add_argument("--grid", type=int, default=8)
    sp.add_argument("--norm", choices=("column", "row", "global"), default="column")
    sp.add_argument("--delimiter", default=",")
    sp.set_defaults(func=cmd_eval_srr)

    sp = sub.add_parser("style-acc", help="toy stylization accuracy of a trained model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--patch", type=int, default=32)
    sp.add_argument("--classifier-steps", type=int, default=300)
    sp.add_argument("--delimiter", default=",")
    sp.set_defaults(func=cmd_style_acc)

    sp = sub.add_parser("grad-check", help="finite-difference suite; nonzero exit on failure")
    common(sp)
    sp.add_argument("--seeds", type=int, default=10)
    sp.set_defaults(func=cmd_grad_check)

    sp = sub.add_parser("toy-data", help="write the procedural two-artist corpus")
    common(sp, out_default="toy_corpus")
    sp.set_defaults(func=cmd_toy_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (ImageError, DatasetError, ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
