"""Command-line front end.

Exit codes: 0 success, 1 a requested check failed, 2 usage error,
3 I/O or file-format error, 4 numerical failure, 5 shape mismatch.

Run settings come from built-in defaults, overridden by a key=value config
file (``--config``), overridden in turn by explicit CLI flags.  Unknown
config keys and unknown flags are rejected, never ignored.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import data as data_mod
from . import model as model_mod
from . import report as report_mod
from . import store
from . import training as training_mod
from .errors import DataFormatError, NumericalError, ShapeError
from .grid import Direction
from .model import ModelConfig, Variant
from .numerics import make_rng
from .training import TrainConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_SHAPE = 5

_VARIANT_NAMES = [v.value for v in Variant]
_DIRECTION_NAMES = [d.value for d in Direction]


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        h, w = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"dims must look like 16x16, got {text!r}") from None
    if h < 1 or w < 1:
        raise ValueError(f"dims must be positive, got {text!r}")
    return h, w


def _parse_clip(text: str):
    return None if text.lower() == "none" else float(text)


# every run-config key with its parser; also the documented key set
_CONFIG_KEYS = {
    "variant": str,
    "directions": str,
    "hidden": int,
    "channels": int,
    "classes": int,
    "epochs": int,
    "lr_rnn": float,
    "lr_embed": float,
    "decay_rate": float,
    "decay_start_epoch": int,
    "batch_size": int,
    "seed": int,
    "clip_threshold": _parse_clip,
    "val_fraction": float,
}

_DEFAULT_SETTINGS = {
    "variant": "dense-attention",
    "directions": "se,sw,ne,nw",
    "hidden": 32,
    "channels": None,   # inferred from the dataset unless given
    "classes": None,    # inferred from the dataset unless given
    "epochs": 30,
    "lr_rnn": 1e-2,
    "lr_embed": 1e-4,
    "decay_rate": 0.9,
    "decay_start_epoch": 10,
    "batch_size": 1,
    "seed": 0,
    "clip_threshold": None,
    "val_fraction": 0.2,
}


def parse_run_config(path) -> dict:
    """Read a key=value file, rejecting unknown keys."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value.strip())
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return values


def _resolve_settings(args) -> dict:
    settings = dict(_DEFAULT_SETTINGS)
    if getattr(args, "config", None):
        settings.update(parse_run_config(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _directions_from(text: str) -> tuple[Direction, ...]:
    return tuple(Direction(t.strip()) for t in text.split(","))


def _format_settings(settings: dict) -> str:
    lines = []
    for key in _CONFIG_KEYS:
        value = settings[key]
        lines.append(f"{key}={'none' if value is None else value}\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    variants = list(Variant) if args.variant == "all" else [Variant(args.variant)]
    directions = list(Direction) if args.direction == "all" else [Direction(args.direction)]
    dims = _parse_dims(args.dims)
    all_passed = True
    for variant in variants:
        for direction in directions:
            config = ModelConfig(
                c_in=args.channels,
                hidden=args.hidden,
                n_classes=args.classes,
                variant=variant,
                directions=(direction,),
            )
            rep = training_mod.gradient_check(config, seed=args.seed, eps=args.eps, tol=args.tol, dims=dims)
            status = "PASS" if rep.passed else "FAIL"
            print(
                f"{variant.value:<16} {direction.value:<3} "
                f"max_rel_err={rep.max_rel_err:.3e} worst={rep.worst_coordinate} {status}"
            )
            all_passed &= rep.passed
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def cmd_gen_data(args) -> int:
    dims = _parse_dims(args.dims)
    if args.task == "marker":
        spec = data_mod.MarkerSpec(
            dims=dims,
            n_samples=args.samples,
            seed=args.seed,
            noise_sigma=args.noise_sigma,
            marker_extent=args.marker_extent,
        )
        samples = data_mod.gen_marker_task(spec)
    elif args.task == "blob":
        samples = data_mod.gen_blob_task(dims, args.classes, args.samples, args.seed,
                                         noise_sigma=args.noise_sigma)
    else:
        samples = data_mod.gen_chain_task(args.length, args.samples, args.seed,
                                          n_classes=args.classes)
    data_mod.save_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def _infer_classes(dataset) -> int:
    top = 0
    for sample in dataset:
        valid = sample.labels[sample.labels != data_mod.IGNORE_LABEL]
        if valid.size:
            top = max(top, int(valid.max()))
    return max(2, top + 1)


def cmd_train(args) -> int:
    settings = _resolve_settings(args)
    dataset = data_mod.load_dataset(args.data)
    channels = dataset[0].features.shape[2]
    if settings["channels"] is not None and settings["channels"] != channels:
        raise ShapeError(f"config says {settings['channels']} channels, dataset has {channels}")
    settings["channels"] = channels
    if settings["classes"] is None:
        settings["classes"] = _infer_classes(dataset)

    config = ModelConfig(
        c_in=channels,
        hidden=settings["hidden"],
        n_classes=settings["classes"],
        variant=Variant(settings["variant"]),
        directions=_directions_from(settings["directions"]),
    )
    tcfg = TrainConfig(
        epochs=settings["epochs"],
        lr_rnn=settings["lr_rnn"],
        lr_embed=settings["lr_embed"],
        decay_rate=settings["decay_rate"],
        decay_start_epoch=settings["decay_start_epoch"],
        batch_size=settings["batch_size"],
        seed=settings["seed"],
        clip_threshold=settings["clip_threshold"],
    )

    n = len(dataset)
    n_val = min(n - 1, int(round(settings["val_fraction"] * n)))
    perm = make_rng(tcfg.seed).permutation(n)
    train_set = [dataset[i] for i in perm[: n - n_val]]
    val_set = [dataset[i] for i in perm[n - n_val :]]

    dims = dataset[0].features.shape[:2]
    params = model_mod.init_params(config, make_rng(tcfg.seed), dims)
    history, params = training_mod.train(config, params, train_set, val_set, tcfg)

    out = Path(args.out)
    store.save_model(out, config, params)
    (out / "run_config.txt").write_text(_format_settings(settings), encoding="ascii")
    report_mod.write_history(out / "history.txt", history)
    if history.epochs:
        report_mod.plot_history(history, out / "training_curves.png")
        last = history.epochs[-1]
        print(f"epoch {last.epoch}: loss={last.loss:.4f} gpa={last.gpa:.4f} "
              f"aca={last.aca:.4f} miou={last.mean_iou:.4f}")
    print(f"model written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config, params = store.load_model(args.model)
    dataset = data_mod.load_dataset(args.data)
    channels = dataset[0].features.shape[2]
    if channels != config.c_in:
        raise ShapeError(f"model expects {config.c_in} channels, dataset has {channels}")
    if _infer_classes(dataset) > config.n_classes:
        raise ShapeError("dataset labels exceed the model's class count")
    report = training_mod.evaluate(config, params, dataset)
    print(report_mod.format_metrics(report), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    config, params = store.load_model(args.model)
    features = data_mod.load_tensor(args.input)
    if features.ndim != 3 or features.shape[2] != config.c_in:
        raise ShapeError(
            f"expected (H, W, {config.c_in}) features, got shape {features.shape}"
        )
    trace = model_mod.model_forward(features, config, params)
    labels = model_mod.predict_labels(trace.prob_field())
    data_mod.export_label_map(labels, args.out)
    if args.color:
        data_mod.export_color_map(labels, args.color)
    print(f"labels written to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = [_parse_dims(t) for t in args.sizes.split(",")]
    variants = [Variant(t.strip()) for t in args.variant.split(",")]
    rows = bench_mod.run_bench(
        sizes, variants, reps=args.reps, hidden=args.hidden,
        channels=args.channels, classes=args.classes, seed=args.seed,
    )
    print(report_mod.format_bench(rows), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_mod.write_bench(out / "bench.tsv", rows)
        report_mod.plot_bench(rows, out / "bench.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridrnn",
        description="Dense recurrent networks over 2D grids: data generation, "
                    "training, evaluation, prediction, gradient checks, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gradcheck", formatter_class=fmt,
                       help="compare analytic gradients against central differences")
    p.add_argument("--variant", choices=_VARIANT_NAMES + ["all"], default="all")
    p.add_argument("--direction", choices=_DIRECTION_NAMES + ["all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--dims", default="3x4", help="grid size HxW (chains use 1x(H*W))")
    p.add_argument("--hidden", type=int, default=6)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--classes", type=int, default=4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", formatter_class=fmt, help="write a synthetic dataset")
    p.add_argument("--task", choices=["marker", "blob", "chain"], required=True)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default="16x16", help="grid size HxW (marker, blob)")
    p.add_argument("--noise-sigma", type=float, default=0.5, help="channel noise (marker, blob)")
    p.add_argument("--marker-extent", type=int, default=2, help="marker patch side (marker)")
    p.add_argument("--classes", type=int, default=4, help="class count (blob, chain)")
    p.add_argument("--length", type=int, default=16, help="sequence length (chain)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", formatter_class=fmt, help="train a model on a dataset")
    p.add_argument("--config", help="key=value run-config file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--variant", choices=_VARIANT_NAMES)
    p.add_argument("--directions", help="comma list from {se,sw,ne,nw}")
    p.add_argument("--hidden", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-rnn", type=float, dest="lr_rnn")
    p.add_argument("--lr-embed", type=float, dest="lr_embed")
    p.add_argument("--decay-rate", type=float, dest="decay_rate")
    p.add_argument("--decay-start-epoch", type=int, dest="decay_start_epoch")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--clip-threshold", type=_parse_clip, dest="clip_threshold")
    p.add_argument("--val-fraction", type=float, dest="val_fraction")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate a model on a dataset")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", formatter_class=fmt, help="label one feature tensor")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--input", required=True, help="features .ddrt file")
    p.add_argument("--out", required=True, help="output label map (binary PGM)")
    p.add_argument("--color", help="optional palette rendering (binary PPM)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", formatter_class=fmt, help="time forward passes")
    p.add_argument("--sizes", default="8x8,16x16", help="comma list of HxW sizes")
    p.add_argument("--variant", default="plain-dag,dense-attention",
                   help="comma list of variants")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional directory for bench.tsv and bench.png")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
