"""Densely connected recurrent networks over 2D grids.

A library plus CLI for recurrences over directional grid DAGs: plain
adjacent-predecessor sweeps, dense dominance-set sums, and attention-mixed
dense connections, with exact manual backpropagation validated against a
finite-difference oracle, an SGD training loop, labeling metrics, and
synthetic long-range-dependency tasks.
"""

from .data import (
    IGNORE_LABEL,
    MarkerSpec,
    Sample,
    gen_blob_task,
    gen_chain_task,
    gen_marker_task,
    load_dataset,
    load_tensor,
    save_dataset,
    save_tensor,
)
from .errors import DataFormatError, NumericalError, ShapeError
from .grid import DenseDag, Direction, PlainDag, build_dense_dag, build_plain_dag, wavefronts
from .model import (
    ModelConfig,
    ModelParams,
    Variant,
    init_params,
    model_backward,
    model_forward,
    predict_labels,
)
from .numerics import finite_difference_grad, make_rng
from .store import load_model, save_model
from .training import (
    MetricsReport,
    TrainConfig,
    TrainHistory,
    evaluate,
    gradient_check,
    lr_schedule,
    sgd_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "DenseDag",
    "Direction",
    "IGNORE_LABEL",
    "MarkerSpec",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "NumericalError",
    "PlainDag",
    "Sample",
    "ShapeError",
    "TrainConfig",
    "TrainHistory",
    "Variant",
    "build_dense_dag",
    "build_plain_dag",
    "evaluate",
    "finite_difference_grad",
    "gen_blob_task",
    "gen_chain_task",
    "gen_marker_task",
    "gradient_check",
    "init_params",
    "load_dataset",
    "load_model",
    "load_tensor",
    "lr_schedule",
    "make_rng",
    "model_backward",
    "model_forward",
    "predict_labels",
    "save_dataset",
    "save_model",
    "save_tensor",
    "sgd_step",
    "train",
    "wavefronts",
]
