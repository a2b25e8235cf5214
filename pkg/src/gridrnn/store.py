"""Model directory persistence: one DDRT file per parameter plus manifests.

Layout of a model directory:

    config.txt      key=value description (variant, directions, sizes)
    manifest.txt    one "<param-name>\t<file>" line per tensor
    *.ddrt          the parameter tensors, float32

Reload is bit exact, which the determinism tests rely on.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import load_tensor, save_tensor
from .errors import DataFormatError
from .grid import Direction
from .model import DirectionParams, ModelConfig, ModelParams, Variant, param_items


def _config_lines(config: ModelConfig) -> str:
    return (
        f"variant={config.variant.value}\n"
        f"directions={','.join(d.value for d in config.directions)}\n"
        f"hidden={config.hidden}\n"
        f"channels={config.c_in}\n"
        f"classes={config.n_classes}\n"
    )


def save_model(root, config: ModelConfig, params: ModelParams) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.txt").write_text(_config_lines(config), encoding="ascii")
    lines = []
    for name, array in param_items(params, config.directions):
        fname = name.replace(".", "_") + ".ddrt"
        save_tensor(root / fname, np.asarray(array, dtype=np.float32))
        lines.append(f"{name}\t{fname}\n")
    (root / "manifest.txt").write_text("".join(lines), encoding="ascii")


def _parse_config(path: Path) -> ModelConfig:
    values = {}
    for line in path.read_text(encoding="ascii").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    try:
        return ModelConfig(
            c_in=int(values["channels"]),
            hidden=int(values["hidden"]),
            n_classes=int(values["classes"]),
            variant=Variant(values["variant"]),
            directions=tuple(Direction(v) for v in values["directions"].split(",")),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad model config ({exc})") from None


def load_model(root) -> tuple[ModelConfig, ModelParams]:
    root = Path(root)
    config_path = root / "config.txt"
    manifest_path = root / "manifest.txt"
    if not config_path.is_file() or not manifest_path.is_file():
        raise DataFormatError(f"{root}: not a model directory")
    config = _parse_config(config_path)
    tensors = {}
    for line in manifest_path.read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        name, _, fname = line.partition("\t")
        tensors[name] = load_tensor(root / fname.strip())
    try:
        params = ModelParams(
            embed=tensors["embed"],
            embed_bias=tensors["embed_bias"],
            c=tensors["c"],
            dirs={
                d: DirectionParams(
                    U=tensors[f"{d.value}.U"],
                    W=tensors[f"{d.value}.W"],
                    V=tensors[f"{d.value}.V"],
                    b=tensors[f"{d.value}.b"],
                    z=tensors[f"{d.value}.z"],
                )
                for d in config.directions
            },
        )
    except KeyError as exc:
        raise DataFormatError(f"{root}: manifest is missing tensor {exc}") from None
    d, k, c_in = config.hidden, config.n_classes, config.c_in
    expected = {
        "embed": (d, c_in), "embed_bias": (d,), "c": (k,),
        **{f"{dd.value}.{nm}": shp for dd in config.directions
           for nm, shp in (("U", (d, d)), ("W", (d, d)), ("V", (k, d)), ("b", (d,)), ("z", (d,)))},
    }
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise DataFormatError(f"{root}: tensor {name} has shape {tensors[name].shape}, expected {shape}")
    return config, params
