"""Synthetic labeling tasks and the binary file formats.

Tasks
-----
* marker: a small corner patch of type A or B determines the label of a
  large, locally ambiguous far region.  Local statistics of that region are
  identical in both cases, so only a model that carries information across
  the grid can label it.  Four classes: 0 background, 1 marker patch,
  2 far region in an A sample, 3 far region in a B sample.
* blob: seeded Voronoi regions with class-conditional mean features;
  solvable locally, used as a training sanity task.
* chain: 1 x N sequences where cell 0's channels encode the class and every
  cell carries that class as its label (a pure long-range copy).

Formats
-------
* ``.ddrt`` tensors: magic "DDRT", u32 version 1, u8 dtype code
  (0 float32, 1 float64, 2 uint8), u32 rank, u32 dims, row-major
  little-endian payload.  Round trips are bit exact.
* binary PGM (P5) label maps and PPM (P6) palette renderings.
* dataset directories: ``sample_%05d.features.ddrt`` +
  ``sample_%05d.labels.ddrt`` + ``manifest.txt`` with one id per line.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ShapeError
from .numerics import make_rng

IGNORE_LABEL = 255


@dataclass
class Sample:
    features: np.ndarray  # (H, W, C) float32
    labels: np.ndarray    # (H, W) uint8, 255 = ignore

    def __post_init__(self) -> None:
        if self.features.shape[:2] != self.labels.shape:
            raise ShapeError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )


# ---------------------------------------------------------------------------
# marker task
# ---------------------------------------------------------------------------

_BG_BASE = np.array([0.2, 0.2, 0.2], dtype=np.float64)
_FAR_BASE = np.array([0.8, 0.8, 0.8], dtype=np.float64)
_MARKER_BASE = {
    0: np.array([1.0, 0.0, 0.5], dtype=np.float64),  # type A
    1: np.array([0.0, 1.0, 0.5], dtype=np.float64),  # type B
}

MARKER_CLASS_BACKGROUND = 0
MARKER_CLASS_PATCH = 1
MARKER_CLASS_CONTEXT_A = 2
MARKER_CLASS_CONTEXT_B = 3


@dataclass
class MarkerSpec:
    dims: tuple[int, int] = (16, 16)
    n_samples: int = 64
    seed: int = 0
    noise_sigma: float = 0.5
    marker_extent: int = 2

    n_classes = 4
    n_channels = 3

    def __post_init__(self) -> None:
        h, w = self.dims
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.marker_extent < 1:
            raise ValueError("marker_extent must be >= 1")
        if self.marker_extent * 2 > min(h, w):
            raise ValueError("marker patch too large for the grid")
        if max(h, w) - self.marker_extent < max(h, w) / 2:
            raise ValueError("infeasible geometry: no cell is far enough from the marker")


def _marker_patch_bounds(dims: tuple[int, int], corner: int, extent: int):
    h, w = dims
    r0 = 0 if corner in (0, 1) else h - extent
    c0 = 0 if corner in (0, 2) else w - extent
    return r0, r0 + extent, c0, c0 + extent


def _chebyshev_from_patch(dims, bounds) -> np.ndarray:
    h, w = dims
    r0, r1, c0, c1 = bounds
    rows = np.arange(h)
    cols = np.arange(w)
    row_d = np.maximum(np.maximum(r0 - rows, rows - (r1 - 1)), 0)
    col_d = np.maximum(np.maximum(c0 - cols, cols - (c1 - 1)), 0)
    return np.maximum(row_d[:, None], col_d[None, :])


def gen_marker_task(spec: MarkerSpec) -> list[Sample]:
    """Long-range context task; see the module docstring for the layout.

    The far region is the set of cells at Chebyshev distance at least
    max(H, W) / 2 from the marker patch, so no local window can reach the
    patch.  Marker placement cycles through the four corners so that no
    single sweep direction sees every marker as a predecessor.
    """
    h, w = spec.dims
    rng = make_rng(spec.seed)
    need = max(h, w) / 2
    samples = []
    for k in range(spec.n_samples):
        corner = k % 4
        mtype = int(rng.integers(0, 2))
        noise = rng.normal(0.0, 1.0, size=(h, w, spec.n_channels))
        bounds = _marker_patch_bounds(spec.dims, corner, spec.marker_extent)
        far = _chebyshev_from_patch(spec.dims, bounds) >= need
        r0, r1, c0, c1 = bounds

        features = np.empty((h, w, spec.n_channels), dtype=np.float64)
        features[:, :] = _BG_BASE
        features[far] = _FAR_BASE
        features[r0:r1, c0:c1] = _MARKER_BASE[mtype]
        features += spec.noise_sigma * noise

        labels = np.full((h, w), MARKER_CLASS_BACKGROUND, dtype=np.uint8)
        labels[far] = MARKER_CLASS_CONTEXT_A if mtype == 0 else MARKER_CLASS_CONTEXT_B
        labels[r0:r1, c0:c1] = MARKER_CLASS_PATCH
        samples.append(Sample(features.astype(np.float32), labels))
    return samples


def marker_far_mask(spec: MarkerSpec, sample_index: int) -> np.ndarray:
    """Boolean mask of the ambiguous far region for sample `sample_index`."""
    bounds = _marker_patch_bounds(spec.dims, sample_index % 4, spec.marker_extent)
    return _chebyshev_from_patch(spec.dims, bounds) >= max(spec.dims) / 2


# ---------------------------------------------------------------------------
# blob task
# ---------------------------------------------------------------------------

def _blob_means(n_classes: int) -> np.ndarray:
    if n_classes > 8:
        raise ValueError("blob task supports at most 8 classes")
    corners = np.array(
        [[(c >> 0) & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(n_classes)],
        dtype=np.float64,
    )
    return corners * 0.8 + 0.1


def gen_blob_task(
    dims: tuple[int, int],
    n_classes: int,
    n_samples: int,
    seed: int,
    noise_sigma: float = 0.1,
) -> list[Sample]:
    """Voronoi-partitioned grids with class-conditional means plus noise."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    h, w = dims
    rng = make_rng(seed)
    means = _blob_means(n_classes)
    rows, cols = np.mgrid[0:h, 0:w]
    samples = []
    for _ in range(n_samples):
        centers = rng.uniform(0.0, 1.0, size=(n_classes, 2)) * np.array([h, w])
        d2 = (rows[..., None] - centers[:, 0]) ** 2 + (cols[..., None] - centers[:, 1]) ** 2
        labels = np.argmin(d2, axis=-1).astype(np.uint8)  # ties: lowest class
        features = means[labels] + noise_sigma * rng.normal(0.0, 1.0, size=(h, w, 3))
        samples.append(Sample(features.astype(np.float32), labels))
    return samples


# ---------------------------------------------------------------------------
# chain task
# ---------------------------------------------------------------------------

def gen_chain_task(n: int, n_samples: int, seed: int, n_classes: int = 4) -> list[Sample]:
    """1 x N copy task: cell 0 encodes the class, every label equals it.

    Cells 1..N-1 draw their channels from one class-independent
    distribution, so they carry no information about the label.
    """
    if n < 2:
        raise ValueError("chain length must be >= 2")
    rng = make_rng(seed)
    samples = []
    for _ in range(n_samples):
        cls = int(rng.integers(0, n_classes))
        features = np.zeros((1, n, n_classes), dtype=np.float64)
        features[0, 0, cls] = 1.0
        features[0, 1:] = rng.uniform(0.0, 0.5, size=(n - 1, n_classes))
        labels = np.full((1, n), cls, dtype=np.uint8)
        samples.append(Sample(features.astype(np.float32), labels))
    return samples


# ---------------------------------------------------------------------------
# DDRT tensor files
# ---------------------------------------------------------------------------

_MAGIC = b"DDRT"
_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("u1"): 2}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_MAX_RANK = 8


def save_tensor(path, array: np.ndarray) -> None:
    """Write one array; dtype must be float32, float64 or uint8."""
    array = np.ascontiguousarray(array)
    key = array.dtype.newbyteorder("<")
    if key not in _DTYPE_CODES:
        raise DataFormatError(f"unsupported dtype {array.dtype}")
    header = _MAGIC + struct.pack("<IBI", _VERSION, _DTYPE_CODES[key], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.astype(key, copy=False).tobytes())


def load_tensor(path) -> np.ndarray:
    """Read one array back, validating every header field and the length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13 or blob[:4] != _MAGIC:
        raise DataFormatError(f"{path}: not a DDRT tensor file")
    version, code, rank = struct.unpack_from("<IBI", blob, 4)
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise DataFormatError(f"{path}: unknown dtype code {code}")
    if rank > _MAX_RANK:
        raise DataFormatError(f"{path}: implausible rank {rank}")
    offset = 13
    if len(blob) < offset + 4 * rank:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise DataFormatError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {expected}"
        )
    flat = np.frombuffer(blob, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)), offset=offset)
    return flat.reshape(dims).astype(dtype.newbyteorder("="), copy=True)


# ---------------------------------------------------------------------------
# PGM / PPM exports
# ---------------------------------------------------------------------------

def export_label_map(labels: np.ndarray, path) -> None:
    """Raw label map as binary PGM (P5, maxval 255, one byte per unit)."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError("label map must be 2-d")
    if labels.max(initial=0) > 255 or labels.min(initial=0) < 0:
        raise ValueError("labels must fit in one byte")
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(labels.astype(np.uint8).tobytes())


def load_label_map(path) -> np.ndarray:
    """Inverse of export_label_map (used by tests and tooling)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise DataFormatError(f"{path}: not a binary PGM written by this package")
    w, h = (int(t) for t in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w)
    return pixels.reshape(h, w).copy()


def default_palette() -> np.ndarray:
    """Fixed 256-entry RGB palette; golden-ratio hues, entry 255 is black."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for i in range(255):
        hue = (i * 0.6180339887498949) % 1.0
        palette[i] = _hsv_to_rgb(hue, 0.65, 0.95)
    return palette


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    k = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][k]
    return tuple(int(round(c * 255)) for c in rgb)


def export_color_map(labels: np.ndarray, path, palette: np.ndarray | None = None) -> None:
    """Palette rendering of a label map as binary PPM (P6)."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError("label map must be 2-d")
    pal = default_palette() if palette is None else np.asarray(palette, dtype=np.uint8)
    if pal.shape != (256, 3):
        raise ShapeError("palette must be 256 x 3")
    h, w = labels.shape
    rgb = pal[labels.astype(np.int64)]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# dataset directories
# ---------------------------------------------------------------------------

def save_dataset(root, samples: list[Sample]) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for i, sample in enumerate(samples):
        sid = f"{i:05d}"
        save_tensor(root / f"sample_{sid}.features.ddrt", sample.features.astype(np.float32))
        save_tensor(root / f"sample_{sid}.labels.ddrt", sample.labels.astype(np.uint8))
        ids.append(sid)
    (root / "manifest.txt").write_text("".join(s + "\n" for s in ids), encoding="ascii")


def load_dataset(root) -> list[Sample]:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.is_file():
        raise DataFormatError(f"{root}: missing manifest.txt")
    samples = []
    for line in manifest.read_text(encoding="ascii").splitlines():
        sid = line.strip()
        if not sid:
            continue
        features = load_tensor(root / f"sample_{sid}.features.ddrt")
        labels = load_tensor(root / f"sample_{sid}.labels.ddrt")
        if features.ndim != 3 or labels.ndim != 2:
            raise DataFormatError(f"{root}: sample {sid} has wrong tensor ranks")
        samples.append(Sample(features, labels))
    if not samples:
        raise DataFormatError(f"{root}: manifest lists no samples")
    return samples
