"""Forward-pass wall-time measurements across grid sizes and variants.

The interesting numbers are scaling ratios: plain recurrences do O(N) work
in the unit count while the dense ones do O(N^2), so doubling the grid side
should roughly quadruple plain times and multiply dense times by an order
of magnitude.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import model as M
from .numerics import STANDARD_DTYPE, make_rng


@dataclass
class BenchRow:
    dims: tuple[int, int]
    variant: M.Variant
    median_s: float
    reps: int


def _median(values: list[float]) -> float:
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def run_bench(
    sizes: list[tuple[int, int]],
    variants: list[M.Variant],
    reps: int = 5,
    hidden: int = 64,
    channels: int = 3,
    classes: int = 4,
    seed: int = 0,
) -> list[BenchRow]:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rows = []
    for dims in sizes:
        rng = make_rng(seed)
        features = rng.uniform(-1.0, 1.0, size=(*dims, channels)).astype(STANDARD_DTYPE)
        for variant in variants:
            bench_dims = (1, dims[0] * dims[1]) if variant is M.Variant.CHAIN else dims
            bench_features = features.reshape(1, -1, channels) if variant is M.Variant.CHAIN else features
            config = M.ModelConfig(c_in=channels, hidden=hidden, n_classes=classes, variant=variant)
            params = M.init_params(config, make_rng(seed), bench_dims)
            M.model_forward(bench_features, config, params)  # warm-up
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                M.model_forward(bench_features, config, params)
                times.append(time.perf_counter() - t0)
            rows.append(BenchRow(dims=dims, variant=variant, median_s=_median(times), reps=reps))
    return rows


def scaling_ratios(rows: list[BenchRow]) -> dict[M.Variant, list[tuple[tuple, tuple, float]]]:
    """Per variant: (smaller dims, larger dims, time ratio) for consecutive sizes."""
    by_variant: dict[M.Variant, list[BenchRow]] = {}
    for row in rows:
        by_variant.setdefault(row.variant, []).append(row)
    out = {}
    for variant, vrows in by_variant.items():
        vrows = sorted(vrows, key=lambda r: r.dims[0] * r.dims[1])
        out[variant] = [
            (a.dims, b.dims, b.median_s / a.median_s)
            for a, b in zip(vrows, vrows[1:])
        ]
    return out


def plain_dense_ratios(rows: list[BenchRow]) -> list[tuple[tuple, float]]:
    """(dims, dense/plain time ratio) wherever both variants were measured."""
    plain = {r.dims: r.median_s for r in rows if r.variant is M.Variant.PLAIN_DAG}
    out = []
    for row in rows:
        if row.variant in (M.Variant.DENSE_SUM, M.Variant.DENSE_ATTENTION) and row.dims in plain:
            out.append((row.dims, row.median_s / plain[row.dims]))
    return out
