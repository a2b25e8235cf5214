"""Small numeric kernels, seeded randomness and the finite-difference oracle.

Everything here is a thin, contract-checked layer over numpy.  Two working
precisions exist: "standard" (float32) is what training runs in, "extended"
(float64) is what every gradient check runs in.  All functions are pure and
keep a fixed accumulation order for a given input, so repeated calls are
bitwise reproducible.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericalError, ShapeError

STANDARD_DTYPE = np.float32
EXTENDED_DTYPE = np.float64

_DTYPE_BY_NAME = {"standard": STANDARD_DTYPE, "extended": EXTENDED_DTYPE}


def resolve_dtype(precision: str) -> np.dtype:
    """Map a precision name ("standard" or "extended") to a numpy dtype."""
    try:
        return _DTYPE_BY_NAME[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}") from None


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator with a fixed algorithm (PCG64).

    PCG64 produces identical streams for identical seeds on every platform
    numpy supports, which the reproducibility tests rely on.
    """
    return np.random.Generator(np.random.PCG64(seed))


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    m = np.asarray(m)
    v = np.asarray(v)
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError(f"matvec expects (2-d, 1-d), got {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec dimension mismatch: {m.shape} x {v.shape}")
    return m @ v


def relu(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise max(0, x) plus the x > 0 mask needed by the backward pass."""
    v = np.asarray(v)
    mask = v > 0
    return np.where(mask, v, v.dtype.type(0)), mask


def softmax(v: np.ndarray) -> np.ndarray:
    """Stabilized softmax over the last axis.

    The running maximum is subtracted before exponentiation, so adding a
    constant to every entry leaves the result unchanged (up to the rounding
    of the addition itself) and no overflow can occur.
    """
    v = np.asarray(v)
    if v.shape[-1] < 1:
        raise ShapeError("softmax needs at least one entry")
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of `label` plus the gradient w.r.t. the logits.

    `probs` must already be a distribution (e.g. a softmax output); the
    logit gradient is then probs - onehot(label).
    """
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    loss = float(-np.log(probs[label]))
    grad = probs.copy()
    grad[label] -= probs.dtype.type(1)
    return loss, grad


def log_softmax_loss(logits: np.ndarray, label: int) -> float:
    """Cross-entropy straight from logits: logsumexp(logits) - logits[label].

    Numerically safer than -log(softmax(...)[label]) when a probability
    underflows to zero.
    """
    logits = np.asarray(logits, dtype=EXTENDED_DTYPE)
    m = logits.max()
    return float(m + np.log(np.exp(logits - m).sum()) - logits[label])


def finite_difference_grad(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: float,
) -> np.ndarray:
    """Central-difference gradient of a scalar function, in extended precision.

    This is the independent oracle every analytic gradient in the package is
    validated against; it deliberately shares no code with the backward
    passes.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=EXTENDED_DTYPE).copy()
    grad = np.empty_like(x)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + eps
        f_plus = f(x)
        x[k] = orig - eps
        f_minus = f(x)
        x[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite function value at coordinate {k}")
        grad[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad
