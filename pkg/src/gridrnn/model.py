"""Grid recurrences: forward and backward passes for every variant.

Four recurrence variants share one head:

* ``CHAIN``            step-by-step scan over a 1 x N sequence;
* ``PLAIN_DAG``        each vertex sums the hidden states of its adjacent
                       predecessors before the affine map;
* ``DENSE_SUM``        same, but over the full dominance set;
* ``DENSE_ATTENTION``  one pairwise activation per dense predecessor, mixed
                       by a softmax over learned relevance scores.

Per direction the parameters are U, W (both D x D), V (K x D), b and the
score vector z; the embedding (D x C_in) and the output bias c are shared.
The per-unit output is softmax(sum_l V^l h^l + c).

Every forward caches what its backward needs in a :class:`ForwardTrace`;
backward walks each direction's canonical order in reverse and is validated
coordinate-by-coordinate against the central-difference oracle in
:mod:`gridrnn.numerics`.  Accumulation order is fixed (canonical predecessor
order, one shared kernel per variant), so repeated runs and wavefront-order
runs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import IGNORE_LABEL
from .errors import ShapeError
from .grid import DenseDag, Direction, PlainDag, build_dense_dag, build_plain_dag, wavefronts
from .numerics import EXTENDED_DTYPE, STANDARD_DTYPE, softmax

ALL_DIRECTIONS = (Direction.SE, Direction.SW, Direction.NE, Direction.NW)


class Variant(Enum):
    CHAIN = "chain"
    PLAIN_DAG = "plain-dag"
    DENSE_SUM = "dense-sum"
    DENSE_ATTENTION = "dense-attention"


@dataclass
class ModelConfig:
    """Architecture description: sizes, recurrence variant, sweep directions."""

    c_in: int
    hidden: int
    n_classes: int
    variant: Variant
    directions: tuple[Direction, ...] = ALL_DIRECTIONS

    def __post_init__(self) -> None:
        if self.hidden < 1:
            raise ValueError("hidden dimension must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if not self.directions:
            raise ValueError("need at least one direction")
        if len(set(self.directions)) != len(self.directions):
            raise ValueError("duplicate directions")


@dataclass
class DirectionParams:
    U: np.ndarray  # (D, D) input transform
    W: np.ndarray  # (D, D) recurrence transform
    V: np.ndarray  # (K, D) output head contribution
    b: np.ndarray  # (D,)
    z: np.ndarray  # (D,)  attention score vector

    def astype(self, dtype) -> "DirectionParams":
        return DirectionParams(*(np.asarray(a, dtype=dtype) for a in (self.U, self.W, self.V, self.b, self.z)))


@dataclass
class ModelParams:
    embed: np.ndarray       # (D, C_in)
    embed_bias: np.ndarray  # (D,)
    c: np.ndarray           # (K,) shared output bias
    dirs: dict[Direction, DirectionParams]

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            embed=np.asarray(self.embed, dtype=dtype),
            embed_bias=np.asarray(self.embed_bias, dtype=dtype),
            c=np.asarray(self.c, dtype=dtype),
            dirs={d: p.astype(dtype) for d, p in self.dirs.items()},
        )


def _uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, scale: float = 1.0) -> np.ndarray:
    s = scale * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _mean_indegree(variant: Variant, dims: tuple[int, int]) -> float:
    h, w = dims
    n = h * w
    if variant is Variant.PLAIN_DAG:
        edges = 3 * (h - 1) * (w - 1) + (h - 1) + (w - 1)
        return edges / n
    if variant is Variant.DENSE_SUM:
        edges = (h * (h + 1) // 2) * (w * (w + 1) // 2) - n
        return edges / n
    return 1.0


def init_params(config: ModelConfig, rng: np.random.Generator, dims: tuple[int, int]) -> ModelParams:
    """Fan-scaled uniform init, biases zero.

    The recurrence matrix W of the summing variants is additionally scaled
    by the reciprocal mean in-degree of the DAG at `dims`: an unscaled W
    turns the predecessor sums into a geometric blow-up across wavefronts
    and overflows float32 on grids as small as 16 x 16.  The attention
    variant mixes convexly and needs no such damping.
    """
    d, c_in, k = config.hidden, config.c_in, config.n_classes
    rec_scale = 1.0 / max(1.0, _mean_indegree(config.variant, dims))
    params = ModelParams(
        embed=_uniform(rng, c_in, d, (d, c_in)),
        embed_bias=np.zeros(d),
        c=np.zeros(k),
        dirs={},
    )
    for direction in config.directions:
        params.dirs[direction] = DirectionParams(
            U=_uniform(rng, d, d, (d, d)),
            W=_uniform(rng, d, d, (d, d), scale=rec_scale),
            V=_uniform(rng, d, k, (k, d)),
            b=np.zeros(d),
            z=_uniform(rng, d, 1, (d,)),
        )
    return params.astype(STANDARD_DTYPE)


@dataclass
class DirectionTrace:
    """Per-direction intermediates kept for the backward pass."""

    hidden: np.ndarray                       # (N, D)
    mask: np.ndarray | None = None           # (N, D) relu mask (sum variants)
    psum: np.ndarray | None = None           # (N, D) predecessor sums (sum variants)
    pair_act: list[np.ndarray] | None = None   # per topo position: (m, D)
    pair_mask: list[np.ndarray] | None = None  # per topo position: (m, D) bool
    pair_w: list[np.ndarray] | None = None     # per topo position: (m,)


@dataclass
class ForwardTrace:
    dims: tuple[int, int]
    dtype: np.dtype
    raw: np.ndarray                 # (N, C_in) input channels
    x: np.ndarray                   # (N, D) embedded features
    dir_traces: dict[Direction, DirectionTrace] = field(default_factory=dict)
    logits: np.ndarray | None = None   # (N, K)
    probs: np.ndarray | None = None    # (N, K)

    def prob_field(self) -> np.ndarray:
        """Probabilities reshaped to (H, W, K)."""
        h, w = self.dims
        return self.probs.reshape(h, w, -1)


# ---------------------------------------------------------------------------
# spec-level single-shot operations
# ---------------------------------------------------------------------------

def embed_features(raw: np.ndarray, params: ModelParams) -> np.ndarray:
    """Per-unit affine embedding of the raw channels; no nonlinearity."""
    raw = np.asarray(raw)
    e, eb = params.embed, params.embed_bias
    if raw.shape[-1] != e.shape[1]:
        raise ShapeError(f"feature channels {raw.shape[-1]} != embed input {e.shape[1]}")
    return raw @ e.T + eb


def attention_pairwise(x_v: np.ndarray, h_u: np.ndarray, p: DirectionParams) -> np.ndarray:
    """Dependency activation of a unit on one predecessor: relu(U x + W h + b)."""
    return np.maximum(p.U @ x_v + p.W @ h_u + p.b, 0.0)


def attention_weights(pairwise: list[np.ndarray], z: np.ndarray) -> np.ndarray:
    """Softmax over the relevance scores z . h of each pairwise activation."""
    if not len(pairwise):
        raise ValueError("attention needs at least one pairwise activation")
    scores = np.array([z @ h for h in pairwise])
    return softmax(scores)


def attention_combine(pairwise: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """Convex combination of the pairwise activations, canonical order."""
    if len(pairwise) != len(weights):
        raise ShapeError(f"{len(pairwise)} activations vs {len(weights)} weights")
    out = np.zeros_like(pairwise[0])
    for w, h in zip(weights, pairwise):
        out = out + w * h
    return out


def aggregate_logits(
    hiddens: list[np.ndarray],
    dir_params: list[DirectionParams],
    c: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Head shared by all variants: logits = sum_l V^l h^l + c, then softmax."""
    if len(hiddens) != len(dir_params):
        raise ShapeError("one hidden field per direction required")
    logits = np.zeros((hiddens[0].shape[0], c.shape[0]), dtype=hiddens[0].dtype)
    for h, p in zip(hiddens, dir_params):
        if h.shape != hiddens[0].shape:
            raise ShapeError("hidden fields disagree in shape")
        logits += h @ p.V.T
    logits += c
    return logits, softmax(logits)


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Per-unit argmax over the class axis; ties go to the lowest index."""
    return np.argmax(probs, axis=-1)


# ---------------------------------------------------------------------------
# recurrence kernels
# ---------------------------------------------------------------------------

def chain_forward(x: np.ndarray, p: DirectionParams, reverse: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Sequential scan h_t = relu(U x_t + W h_{t-1} + b), zero initial state.

    Kept as a genuinely separate kernel so the DAG variants can be checked
    against it rather than trivially reusing it.
    """
    n, d = x.shape
    ub = x @ p.U.T + p.b
    h = np.zeros_like(x)
    mask = np.zeros((n, d), dtype=bool)
    prev = np.zeros(d, dtype=x.dtype)
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        a = ub[t] + p.W @ prev
        mask[t] = a > 0
        prev = np.where(mask[t], a, x.dtype.type(0))
        h[t] = prev
    return h, mask


def _chain_backward(x, h, mask, p, g, reverse: bool, grads: DirectionParams, dx: np.ndarray) -> None:
    n, d = x.shape
    order = range(n) if reverse else range(n - 1, -1, -1)
    carry = np.zeros(d, dtype=x.dtype)
    dA = np.zeros_like(x)
    first = (n - 1) if reverse else 0
    step = 1 if reverse else -1
    for t in order:
        da = np.where(mask[t], g[t] + carry, x.dtype.type(0))
        dA[t] = da
        prev_t = t + step  # index of h_{t-1} in scan order
        if prev_t != first + step:
            grads.W += np.outer(da, h[prev_t])
        carry = p.W.T @ da
    grads.U += dA.T @ x
    grads.b += dA.sum(axis=0)
    dx += dA @ p.U


def _sum_forward(x, dag, p, vertex_order) -> DirectionTrace:
    """Shared kernel for PLAIN_DAG and DENSE_SUM (they differ only in `dag`)."""
    n, d = x.shape
    ub = x @ p.U.T + p.b
    h = np.zeros_like(x)
    mask = np.zeros((n, d), dtype=bool)
    psum = np.zeros_like(x)
    for v in vertex_order:
        fv = dag.flat(v)
        idx = dag.pred_flat(v)
        s = h[idx].sum(axis=0) if idx.size else psum[fv]
        a = ub[fv] + p.W @ s
        mask[fv] = a > 0
        h[fv] = np.where(mask[fv], a, x.dtype.type(0))
        psum[fv] = s
    return DirectionTrace(hidden=h, mask=mask, psum=psum)


def _sum_backward(trace: DirectionTrace, dag, p, x, g, grads: DirectionParams, dx: np.ndarray) -> None:
    dA = np.zeros_like(x)
    for v in reversed(dag.topo()):
        fv = dag.flat(v)
        da = np.where(trace.mask[fv], g[fv], x.dtype.type(0))
        dA[fv] = da
        idx = dag.pred_flat(v)
        if idx.size:
            # indices within one vertex are unique, so fancy += is exact
            g[idx] += da @ p.W
    grads.U += dA.T @ x
    grads.W += dA.T @ trace.psum
    grads.b += dA.sum(axis=0)
    dx += dA @ p.U


def _attention_forward(x, dag: DenseDag, p, vertex_order, topo_pos) -> DirectionTrace:
    n, d = x.shape
    ub = x @ p.U.T + p.b
    h = np.zeros_like(x)
    pair_act: list[np.ndarray | None] = [None] * n
    pair_mask: list[np.ndarray | None] = [None] * n
    pair_w: list[np.ndarray | None] = [None] * n
    zero = x.dtype.type(0)
    for v in vertex_order:
        fv = dag.flat(v)
        idx = dag.pred_flat(v)
        if idx.size:
            a = ub[fv] + h[idx] @ p.W.T
        else:
            # virtual zero-state predecessor keeps the unit's own input alive
            a = ub[fv][None, :]
        m = a > 0
        hp = np.where(m, a, zero)
        w = softmax(hp @ p.z)
        pos = topo_pos[fv]
        pair_act[pos] = hp
        pair_mask[pos] = m
        pair_w[pos] = w
        h[fv] = w @ hp
    return DirectionTrace(hidden=h, pair_act=pair_act, pair_mask=pair_mask, pair_w=pair_w)


def _attention_backward(trace: DirectionTrace, dag: DenseDag, p, x, g, grads: DirectionParams,
                        dx: np.ndarray, topo_pos) -> None:
    h = trace.hidden
    sum_dA = np.zeros_like(x)
    zero = x.dtype.type(0)
    for v in reversed(dag.topo()):
        fv = dag.flat(v)
        pos = topo_pos[fv]
        hp, m, w = trace.pair_act[pos], trace.pair_mask[pos], trace.pair_w[pos]
        gv = g[fv]
        # h_v = sum_u w_u hp_u: direct path plus the softmax score path
        dw = hp @ gv
        ds = w * (dw - w @ dw)
        grads.z += hp.T @ ds
        dhp = w[:, None] * gv[None, :] + ds[:, None] * p.z[None, :]
        da = np.where(m, dhp, zero)
        sum_dA[fv] = da.sum(axis=0)
        idx = dag.pred_flat(v)
        if idx.size:
            grads.W += da.T @ h[idx]
            g[idx] += da @ p.W
        # virtual predecessor: zero state, nothing to propagate
    grads.U += sum_dA.T @ x
    grads.b += sum_dA.sum(axis=0)
    dx += sum_dA @ p.U


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

def _dag_for(variant: Variant, dims, direction):
    if variant in (Variant.PLAIN_DAG, Variant.CHAIN):
        return build_plain_dag(dims, direction)
    return build_dense_dag(dims, direction)


def _vertex_order(dag, order: str):
    if order == "topo":
        return dag.topo()
    if order == "wavefront":
        return [v for level in wavefronts(dag) for v in level]
    raise ValueError(f"unknown execution order {order!r}")


def _check_consistency(features: np.ndarray, config: ModelConfig, params: ModelParams) -> None:
    if features.ndim != 3:
        raise ShapeError(f"features must be (H, W, C), got shape {features.shape}")
    if features.shape[2] != config.c_in:
        raise ShapeError(f"feature channels {features.shape[2]} != config.c_in {config.c_in}")
    d, k = config.hidden, config.n_classes
    if params.embed.shape != (d, config.c_in) or params.c.shape != (k,):
        raise ShapeError("params disagree with config sizes")
    for direction in config.directions:
        if direction not in params.dirs:
            raise ShapeError(f"params missing direction {direction.value}")
        p = params.dirs[direction]
        if p.U.shape != (d, d) or p.W.shape != (d, d) or p.V.shape != (k, d):
            raise ShapeError("direction params disagree with config sizes")
    if config.variant is Variant.CHAIN and features.shape[0] != 1:
        raise ShapeError("chain variant is only valid on 1 x N grids")


def model_forward(
    features: np.ndarray,
    config: ModelConfig,
    params: ModelParams,
    dtype=STANDARD_DTYPE,
    order: str = "topo",
) -> ForwardTrace:
    """Embed, run every direction's recurrence, aggregate the head.

    `order` selects sequential canonical execution ("topo") or the
    anti-diagonal schedule ("wavefront"); both produce bitwise identical
    traces because each vertex's own computation is unchanged.
    """
    features = np.asarray(features)
    _check_consistency(features, config, params)
    hh, ww = features.shape[:2]
    wp = params.astype(dtype)
    raw = features.reshape(-1, config.c_in).astype(dtype)
    x = embed_features(raw, wp)
    trace = ForwardTrace(dims=(hh, ww), dtype=np.dtype(dtype), raw=raw, x=x)
    for direction in config.directions:
        p = wp.dirs[direction]
        dag = _dag_for(config.variant, (hh, ww), direction)
        if config.variant is Variant.CHAIN:
            reverse = dag.topo_flat()[0] != 0
            hid, mask = chain_forward(x, p, reverse=bool(reverse))
            trace.dir_traces[direction] = DirectionTrace(hidden=hid, mask=mask)
        elif config.variant in (Variant.PLAIN_DAG, Variant.DENSE_SUM):
            trace.dir_traces[direction] = _sum_forward(x, dag, p, _vertex_order(dag, order))
        else:
            topo_pos = np.empty(hh * ww, dtype=np.int64)
            topo_pos[dag.topo_flat()] = np.arange(hh * ww)
            trace.dir_traces[direction] = _attention_forward(x, dag, p, _vertex_order(dag, order), topo_pos)
    trace.logits, trace.probs = aggregate_logits(
        [trace.dir_traces[d].hidden for d in config.directions],
        [wp.dirs[d] for d in config.directions],
        wp.c,
    )
    return trace


def trace_loss(trace: ForwardTrace, labels: np.ndarray) -> float:
    """Mean pixel-wise cross-entropy over the non-ignored units."""
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != trace.logits.shape[0]:
        raise ShapeError("label map does not match trace dims")
    valid = labels != IGNORE_LABEL
    if not valid.any():
        raise ValueError("sample has no labeled units")
    logits = trace.logits.astype(EXTENDED_DTYPE)
    m = logits.max(axis=1, keepdims=True)
    lse = (m[:, 0] + np.log(np.exp(logits - m).sum(axis=1)))
    picked = logits[np.arange(labels.shape[0]), np.where(valid, labels, 0)]
    return float((lse - picked)[valid].sum() / valid.sum())


def zero_grads(config: ModelConfig, dtype) -> ModelParams:
    d, c_in, k = config.hidden, config.c_in, config.n_classes
    return ModelParams(
        embed=np.zeros((d, c_in), dtype=dtype),
        embed_bias=np.zeros(d, dtype=dtype),
        c=np.zeros(k, dtype=dtype),
        dirs={
            direction: DirectionParams(
                U=np.zeros((d, d), dtype=dtype),
                W=np.zeros((d, d), dtype=dtype),
                V=np.zeros((k, d), dtype=dtype),
                b=np.zeros(d, dtype=dtype),
                z=np.zeros(d, dtype=dtype),
            )
            for direction in config.directions
        },
    )


def model_backward(
    trace: ForwardTrace,
    labels: np.ndarray,
    config: ModelConfig,
    params: ModelParams,
) -> tuple[ModelParams, float]:
    """Reverse pass over every direction; returns (gradients, loss).

    Gradients cover every parameter, including the attention-score paths:
    a predecessor's hidden state influences successors both through the
    pairwise activations and through the softmax weights.
    """
    labels = np.asarray(labels)
    hh, ww = trace.dims
    if labels.shape != (hh, ww):
        raise ShapeError(f"label map {labels.shape} does not match trace dims {(hh, ww)}")
    dtype = trace.dtype
    wp = params.astype(dtype)
    flat = labels.reshape(-1)
    loss = trace_loss(trace, flat)
    valid = flat != IGNORE_LABEL
    n_valid = int(valid.sum())

    dlogits = trace.probs.copy()
    rows = np.arange(flat.shape[0])
    dlogits[rows[valid], flat[valid].astype(np.int64)] -= dtype.type(1)
    dlogits[~valid] = 0
    dlogits /= dtype.type(n_valid)

    grads = zero_grads(config, dtype)
    grads.c += dlogits.sum(axis=0)
    dx = np.zeros_like(trace.x)
    for direction in config.directions:
        p = wp.dirs[direction]
        gdir = grads.dirs[direction]
        dir_trace = trace.dir_traces[direction]
        gdir.V += dlogits.T @ dir_trace.hidden
        g = dlogits @ p.V
        dag = _dag_for(config.variant, (hh, ww), direction)
        if config.variant is Variant.CHAIN:
            reverse = bool(dag.topo_flat()[0] != 0)
            _chain_backward(trace.x, dir_trace.hidden, dir_trace.mask, p, g, reverse, gdir, dx)
        elif config.variant in (Variant.PLAIN_DAG, Variant.DENSE_SUM):
            _sum_backward(dir_trace, dag, p, trace.x, g, gdir, dx)
        else:
            topo_pos = np.empty(hh * ww, dtype=np.int64)
            topo_pos[dag.topo_flat()] = np.arange(hh * ww)
            _attention_backward(dir_trace, dag, p, trace.x, g, gdir, dx, topo_pos)
    grads.embed += dx.T @ trace.raw
    grads.embed_bias += dx.sum(axis=0)
    return grads, loss


# ---------------------------------------------------------------------------
# parameter flattening (gradient checks, SGD bookkeeping)
# ---------------------------------------------------------------------------

def param_items(params: ModelParams, directions: tuple[Direction, ...]) -> list[tuple[str, np.ndarray]]:
    """Fixed (name, array) traversal order shared by flatten/unflatten."""
    items = [("embed", params.embed), ("embed_bias", params.embed_bias), ("c", params.c)]
    for direction in directions:
        p = params.dirs[direction]
        tag = direction.value
        items += [(f"{tag}.U", p.U), (f"{tag}.W", p.W), (f"{tag}.V", p.V), (f"{tag}.b", p.b), (f"{tag}.z", p.z)]
    return items


def params_to_vector(params: ModelParams, directions: tuple[Direction, ...]) -> np.ndarray:
    return np.concatenate([a.reshape(-1) for _, a in param_items(params, directions)])


def vector_to_params(vec: np.ndarray, config: ModelConfig) -> ModelParams:
    template = zero_grads(config, vec.dtype)
    offset = 0
    for _, a in param_items(template, config.directions):
        a[...] = vec[offset : offset + a.size].reshape(a.shape)
        offset += a.size
    if offset != vec.size:
        raise ShapeError(f"parameter vector has {vec.size} entries, expected {offset}")
    return template


def coordinate_names(config: ModelConfig) -> list[str]:
    """One human-readable name per flattened parameter coordinate."""
    names = []
    for name, a in param_items(zero_grads(config, STANDARD_DTYPE), config.directions):
        if a.ndim == 1:
            names += [f"{name}[{i}]" for i in range(a.shape[0])]
        else:
            names += [f"{name}[{i},{j}]" for i in range(a.shape[0]) for j in range(a.shape[1])]
    return names
