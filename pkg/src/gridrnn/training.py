"""SGD training loop, evaluation metrics, and the gradient-check harness."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .errors import NumericalError, ShapeError
from .grid import Direction
from .numerics import EXTENDED_DTYPE, STANDARD_DTYPE, finite_difference_grad, make_rng

EVAL_WORKERS_ENV = "GRIDRNN_EVAL_WORKERS"


@dataclass
class TrainConfig:
    """Optimizer settings.

    Learning rates follow the split between the recurrence/head group
    (lr_rnn) and the input embedding (lr_embed); both decay exponentially
    by `decay_rate` once per epoch starting after `decay_start_epoch`.
    """

    epochs: int = 30
    lr_rnn: float = 1e-2
    lr_embed: float = 1e-4
    decay_rate: float = 0.9
    decay_start_epoch: int = 10
    batch_size: int = 1
    seed: int = 0
    clip_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.lr_rnn <= 0 or self.lr_embed <= 0:
            raise ValueError("learning rates must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def lr_schedule(epoch: int, cfg: TrainConfig) -> tuple[float, float]:
    """(lr_rnn, lr_embed) for a 1-based epoch; flat until decay_start_epoch."""
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    factor = cfg.decay_rate ** max(0, epoch - cfg.decay_start_epoch)
    return cfg.lr_rnn * factor, cfg.lr_embed * factor


_EMBED_GROUP = ("embed", "embed_bias")


def grad_norm(grads: M.ModelParams, directions: tuple[Direction, ...]) -> float:
    """Global L2 norm over every parameter gradient."""
    total = 0.0
    for _, g in M.param_items(grads, directions):
        total += float(np.square(g, dtype=np.float64).sum())
    return float(np.sqrt(total))


def sgd_step(
    params: M.ModelParams,
    grads: M.ModelParams,
    rates: tuple[float, float],
    directions: tuple[Direction, ...],
    clip_threshold: float | None = None,
) -> None:
    """In-place p <- p - lr * g, with optional global-norm clipping first."""
    lr_rnn, lr_embed = rates
    scale = 1.0
    if clip_threshold is not None:
        norm = grad_norm(grads, directions)
        if norm > clip_threshold and norm > 0:
            scale = clip_threshold / norm
    pitems = M.param_items(params, directions)
    gitems = M.param_items(grads, directions)
    for (name, p), (gname, g) in zip(pitems, gitems):
        if p.shape != g.shape or name != gname:
            raise ShapeError(f"gradient for {name} does not match parameter shape")
        lr = lr_embed if name in _EMBED_GROUP else lr_rnn
        p -= (p.dtype.type(lr * scale) * g).astype(p.dtype)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    gpa: float
    aca: float
    per_class_iou: dict[int, float]
    mean_iou: float
    confusion: np.ndarray  # (K, K) counts, rows = ground truth


def confusion_matrix(gt: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Count matrix over non-ignored units; rows are ground-truth classes."""
    gt = np.asarray(gt).reshape(-1)
    pred = np.asarray(pred).reshape(-1)
    if gt.shape != pred.shape:
        raise ShapeError("ground truth and prediction sizes differ")
    valid = gt != M.IGNORE_LABEL
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (gt[valid].astype(np.int64), pred[valid].astype(np.int64)), 1)
    return conf


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    """GPA, ACA and IoU from an accumulated confusion matrix.

    ACA averages recall over classes present in the ground truth; mean IoU
    averages over classes present in ground truth or prediction, which
    avoids 0/0 terms for absent classes.
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    total = int(confusion.sum())
    if total == 0:
        raise ValueError("no labeled units to evaluate")
    diag = np.diag(confusion).astype(np.float64)
    gt_counts = confusion.sum(axis=1).astype(np.float64)
    pred_counts = confusion.sum(axis=0).astype(np.float64)
    gpa = float(diag.sum() / total)

    present_gt = gt_counts > 0
    aca = float((diag[present_gt] / gt_counts[present_gt]).mean())

    support = present_gt | (pred_counts > 0)
    union = gt_counts + pred_counts - diag
    per_class = {
        int(c): float(diag[c] / union[c]) if union[c] > 0 else 0.0
        for c in np.nonzero(support)[0]
    }
    mean_iou = float(np.mean(list(per_class.values())))
    return MetricsReport(gpa=gpa, aca=aca, per_class_iou=per_class, mean_iou=mean_iou, confusion=confusion)


def _eval_worker_count() -> int:
    raw = os.environ.get(EVAL_WORKERS_ENV)
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{EVAL_WORKERS_ENV} must be >= 1")
    return n


def evaluate(config: M.ModelConfig, params: M.ModelParams, dataset: list) -> MetricsReport:
    """Confusion-based metrics over a dataset.

    Per-sample forwards are pure, so they may run on a thread pool
    (controlled by the GRIDRNN_EVAL_WORKERS environment variable); the
    integer confusion counts make the result independent of worker count.
    """
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")

    def one(sample) -> np.ndarray:
        trace = M.model_forward(sample.features, config, params, dtype=STANDARD_DTYPE)
        pred = M.predict_labels(trace.probs)
        return confusion_matrix(sample.labels, pred, config.n_classes)

    workers = _eval_worker_count()
    if workers == 1:
        parts = [one(s) for s in dataset]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, dataset))
    confusion = np.zeros((config.n_classes, config.n_classes), dtype=np.int64)
    for part in parts:
        confusion += part
    return metrics_from_confusion(confusion)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    loss: float
    lr_rnn: float
    lr_embed: float
    gpa: float
    aca: float
    mean_iou: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)


def train(
    config: M.ModelConfig,
    params: M.ModelParams,
    train_set: list,
    val_set: list,
    cfg: TrainConfig,
) -> tuple[TrainHistory, M.ModelParams]:
    """Plain SGD over single samples, deterministic for a fixed seed.

    Shuffling uses one seeded generator across all epochs; evaluation on
    the validation split happens once per epoch.  A non-finite loss aborts
    immediately with the offending epoch and sample in the message.
    """
    history = TrainHistory()
    rng = make_rng(cfg.seed)
    for epoch in range(1, cfg.epochs + 1):
        rates = lr_schedule(epoch, cfg)
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            acc = None
            chunk_loss = 0.0
            for i in chunk:
                sample = train_set[i]
                trace = M.model_forward(sample.features, config, params, dtype=STANDARD_DTYPE)
                grads, loss = M.model_backward(trace, sample.labels, config, params)
                if not np.isfinite(loss):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, sample {int(i)}")
                chunk_loss += loss
                if acc is None:
                    acc = grads
                else:
                    for (_, a), (_, g) in zip(M.param_items(acc, config.directions),
                                              M.param_items(grads, config.directions)):
                        a += g
            inv = 1.0 / len(chunk)
            for _, a in M.param_items(acc, config.directions):
                a *= a.dtype.type(inv)
            loss_sum += chunk_loss
            sgd_step(params, acc, rates, config.directions, cfg.clip_threshold)
        if val_set:
            report = evaluate(config, params, val_set)
            gpa, aca, miou = report.gpa, report.aca, report.mean_iou
        else:
            gpa = aca = miou = float("nan")
        history.epochs.append(EpochStats(
            epoch=epoch,
            loss=loss_sum / max(1, len(order)),
            lr_rnn=rates[0],
            lr_embed=rates[1],
            gpa=gpa,
            aca=aca,
            mean_iou=miou,
        ))
    return history, params


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    variant: M.Variant
    directions: tuple[Direction, ...]
    dims: tuple[int, int]
    max_rel_err: float
    worst_coordinate: str
    n_params: int
    tol: float
    passed: bool


def compare_grads(
    analytic: np.ndarray,
    numeric: np.ndarray,
    names: list[str],
    tol: float,
    floor: float = 1e-8,
) -> tuple[float, str, bool]:
    """Elementwise relative error |a - n| / (|a| + |n|), ignoring coordinates
    where both magnitudes sit below `floor`."""
    a = np.asarray(analytic, dtype=EXTENDED_DTYPE)
    n = np.asarray(numeric, dtype=EXTENDED_DTYPE)
    if a.shape != n.shape:
        raise ShapeError("gradient vectors differ in length")
    denom = np.abs(a) + np.abs(n)
    err = np.where(denom > floor, np.abs(a - n) / np.maximum(denom, floor), 0.0)
    worst = int(np.argmax(err))
    return float(err[worst]), names[worst], bool(err[worst] <= tol)


def _relu_margin(trace: M.ForwardTrace, config: M.ModelConfig, params: M.ModelParams) -> float:
    """Smallest |pre-activation| over every relu input in the trace.

    Central differences misbehave when a relu input sits within eps of its
    kink, so the check instance is resampled until all margins are clear.
    """
    margin = np.inf
    wp = params.astype(trace.dtype)
    for direction in config.directions:
        p = wp.dirs[direction]
        dt = trace.dir_traces[direction]
        ub = trace.x @ p.U.T + p.b
        if config.variant is M.Variant.DENSE_ATTENTION:
            hh, ww = trace.dims
            dag = M.build_dense_dag((hh, ww), direction)
            for v in dag.topo():
                fv = dag.flat(v)
                idx = dag.pred_flat(v)
                a = ub[fv] + dt.hidden[idx] @ p.W.T if idx.size else ub[fv][None, :]
                margin = min(margin, float(np.abs(a).min()))
        elif config.variant is M.Variant.CHAIN:
            # psum is not traced for chains; reconstruct from the scan
            h = dt.hidden
            zero_row = np.zeros_like(h[:1])
            first = int(M.build_plain_dag(trace.dims, direction).topo_flat()[0])
            prev = np.vstack([zero_row, h[:-1]]) if first == 0 else np.vstack([h[1:], zero_row])
            a = ub + prev @ p.W.T
            margin = min(margin, float(np.abs(a).min()))
        else:
            a = ub + dt.psum @ p.W.T
            margin = min(margin, float(np.abs(a).min()))
    return margin


def gradient_check(
    config: M.ModelConfig,
    seed: int = 0,
    eps: float = 1e-5,
    tol: float = 1e-4,
    dims: tuple[int, int] = (3, 4),
) -> GradCheckReport:
    """Compare model_backward to the finite-difference oracle on a random
    small instance, in extended precision.

    Chains only exist on 1 x N grids, so a (H, W) request becomes
    (1, H * W) for that variant.  Instances whose relu pre-activations sit
    too close to the kink are deterministically resampled.
    """
    if config.variant is M.Variant.CHAIN and dims[0] != 1:
        dims = (1, dims[0] * dims[1])
    hh, ww = dims
    rng = make_rng(seed)
    best = None
    for _ in range(20):
        params = M.init_params(config, rng, dims).astype(EXTENDED_DTYPE)
        features = rng.uniform(-1.0, 1.0, size=(hh, ww, config.c_in))
        labels = rng.integers(0, config.n_classes, size=(hh, ww)).astype(np.int64)
        labels[0, ww - 1] = M.IGNORE_LABEL  # exercise the ignore path
        trace = M.model_forward(features, config, params, dtype=EXTENDED_DTYPE)
        margin = _relu_margin(trace, config, params)
        if best is None or margin > best[0]:
            best = (margin, params, features, labels, trace)
        if margin > 1e-3:
            break
    _, params, features, labels, trace = best

    analytic_params, _ = M.model_backward(trace, labels, config, params)
    analytic = M.params_to_vector(analytic_params, config.directions)

    def f(vec: np.ndarray) -> float:
        candidate = M.vector_to_params(vec, config)
        t = M.model_forward(features, config, candidate, dtype=EXTENDED_DTYPE)
        return M.trace_loss(t, labels)

    vec0 = M.params_to_vector(params, config.directions)
    numeric = finite_difference_grad(f, vec0, eps)
    names = M.coordinate_names(config)
    max_err, worst, passed = compare_grads(analytic, numeric, names, tol)
    return GradCheckReport(
        variant=config.variant,
        directions=config.directions,
        dims=dims,
        max_rel_err=max_err,
        worst_coordinate=worst,
        n_params=vec0.size,
        tol=tol,
        passed=passed,
    )
