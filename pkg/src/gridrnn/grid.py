"""Directional DAGs over an H x W grid.

Each of the four sweep directions (SE, SW, NE, NW) orders the grid by a
coordinate reflection: SE is the identity, SW mirrors columns, NE mirrors
rows, NW mirrors both.  In reflected coordinates every direction looks like
the south-east sweep, so all structure is defined once for SE and reflected.

Two graphs exist per direction:

* the plain DAG, where a vertex depends on its (up to) three adjacent
  predecessors: up, left, and up-left in reflected coordinates;
* the dense DAG, where a vertex depends on every vertex in the rectangle
  it dominates, i.e. the transitive closure of the plain DAG.

Dense predecessor sets are rectangles, so they are never stored: each query
rebuilds the index list on demand in canonical (reflected row-major) order.
Both DAG types are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

Vertex = tuple[int, int]


class Direction(Enum):
    SE = "se"
    SW = "sw"
    NE = "ne"
    NW = "nw"

    @property
    def flips(self) -> tuple[bool, bool]:
        """(flip_rows, flip_cols) taking original to reflected coordinates."""
        return {
            Direction.SE: (False, False),
            Direction.SW: (False, True),
            Direction.NE: (True, False),
            Direction.NW: (True, True),
        }[self]


def _check_dims(dims: tuple[int, int]) -> tuple[int, int]:
    h, w = dims
    if h < 1 or w < 1:
        raise ValueError(f"grid dims must be positive, got {dims}")
    return int(h), int(w)


@dataclass(frozen=True)
class _DirectionalGrid:
    """Shared reflection machinery for both DAG flavours."""

    height: int
    width: int
    direction: Direction

    @property
    def dims(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_vertices(self) -> int:
        return self.height * self.width

    def reflect(self, v: Vertex) -> Vertex:
        i, j = v
        fr, fc = self.direction.flips
        return (self.height - 1 - i if fr else i, self.width - 1 - j if fc else j)

    # reflection is an involution, so unreflect == reflect
    unreflect = reflect

    def flat(self, v: Vertex) -> int:
        """Row-major storage index in original coordinates."""
        return v[0] * self.width + v[1]

    def topo(self) -> list[Vertex]:
        """Canonical topological order: reflected row-major."""
        order = []
        for ir in range(self.height):
            for jr in range(self.width):
                order.append(self.unreflect((ir, jr)))
        return order

    def topo_flat(self) -> np.ndarray:
        """Canonical topological order as flat storage indices."""
        rows = np.arange(self.height)
        cols = np.arange(self.width)
        fr, fc = self.direction.flips
        if fr:
            rows = rows[::-1]
        if fc:
            cols = cols[::-1]
        return (rows[:, None] * self.width + cols[None, :]).reshape(-1)


@dataclass(frozen=True)
class PlainDag(_DirectionalGrid):
    """Adjacent-predecessor DAG: up to three neighbours feed each vertex."""

    def preds(self, v: Vertex) -> list[Vertex]:
        ir, jr = self.reflect(v)
        out = []
        # canonical order: reflected row-major over the candidate trio
        for pi, pj in ((ir - 1, jr - 1), (ir - 1, jr), (ir, jr - 1)):
            if pi >= 0 and pj >= 0:
                out.append(self.unreflect((pi, pj)))
        return out

    def pred_flat(self, v: Vertex) -> np.ndarray:
        return np.array([self.flat(p) for p in self.preds(v)], dtype=np.int64)


@dataclass(frozen=True)
class DenseDag(_DirectionalGrid):
    """Dominance DAG: every vertex in the dominated rectangle is a predecessor.

    Equals the transitive closure of the plain DAG for the same direction.
    """

    def pred_count(self, v: Vertex) -> int:
        ir, jr = self.reflect(v)
        return (ir + 1) * (jr + 1) - 1

    def preds(self, v: Vertex) -> list[Vertex]:
        ir, jr = self.reflect(v)
        out = []
        for pi in range(ir + 1):
            for pj in range(jr + 1):
                if (pi, pj) != (ir, jr):
                    out.append(self.unreflect((pi, pj)))
        return out

    def pred_flat(self, v: Vertex) -> np.ndarray:
        """Flat indices of the dense predecessors, canonical order.

        The dominated rectangle in reflected row-major order always ends
        with the vertex itself, so the predecessor list is simply the
        rectangle minus its last element.
        """
        ir, jr = self.reflect(v)
        fr, fc = self.direction.flips
        rows = np.arange(ir + 1)
        cols = np.arange(jr + 1)
        rows_orig = (self.height - 1 - rows) if fr else rows
        cols_orig = (self.width - 1 - cols) if fc else cols
        rect = (rows_orig[:, None] * self.width + cols_orig[None, :]).reshape(-1)
        return rect[:-1]


def build_plain_dag(dims: tuple[int, int], direction: Direction) -> PlainDag:
    h, w = _check_dims(dims)
    return PlainDag(h, w, direction)


def build_dense_dag(dims: tuple[int, int], direction: Direction) -> DenseDag:
    h, w = _check_dims(dims)
    return DenseDag(h, w, direction)


def wavefronts(dag: _DirectionalGrid) -> list[list[Vertex]]:
    """Anti-diagonal schedule: level k holds the vertices with reflected
    i + j == k, ordered row-major within the level.

    All predecessors of a vertex (plain or dense) have a strictly smaller
    reflected coordinate sum, so levels may execute in parallel.
    """
    levels: list[list[Vertex]] = [[] for _ in range(dag.height + dag.width - 1)]
    for v in dag.topo():
        ir, jr = dag.reflect(v)
        levels[ir + jr].append(v)
    return levels
