"""HOG descriptors, precomputed embedding ingestion and linear saliency maps."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, IngestionError, SchemaError


@dataclass(frozen=True)
class HogParams:
    """Dalal-Triggs style settings; unsigned orientation bins over [0, 180)."""

    cell_px: int = 8
    block_cells: int = 2
    n_bins: int = 9
    clip: float = 0.2
    epsilon: float = 1e-6
    image_size: int = 224

    def __post_init__(self):
        if self.cell_px < 1 or self.image_size % self.cell_px:
            raise ConfigError(f"cell_px={self.cell_px} must divide image size {self.image_size}")
        if self.n_bins < 2:
            raise ConfigError(f"n_bins must be >= 2, got {self.n_bins}")
        if not 0.0 < self.clip <= 1.0:
            raise ConfigError(f"clip must lie in (0, 1], got {self.clip}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 1 <= self.block_cells <= self.n_cells:
            raise ConfigError(f"block_cells must lie in [1, {self.n_cells}], got {self.block_cells}")

    @property
    def n_cells(self) -> int:
        return self.image_size // self.cell_px

    @property
    def n_blocks(self) -> int:
        return self.n_cells - self.block_cells + 1

    @property
    def dim(self) -> int:
        return self.n_blocks ** 2 * self.block_cells ** 2 * self.n_bins

    def to_dict(self) -> dict:
        return asdict(self)


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences ``[-1, 0, 1]`` with replicate padding."""
    p = np.pad(img, 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return gx, gy


def cell_histograms(img: np.ndarray, p: HogParams) -> np.ndarray:
    """Orientation histograms, shape (n_cells, n_cells, n_bins).

    Each pixel votes its gradient magnitude into the two nearest bin centres
    (centres at ``k * 180 / n_bins``), spatially into its own cell only.
    """
    gx, gy = gradients(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    pos = ang * (p.n_bins / 180.0)
    lo = np.floor(pos)
    frac = pos - lo
    b0 = lo.astype(np.intp) % p.n_bins
    b1 = (b0 + 1) % p.n_bins

    n = p.n_cells
    rows = np.arange(img.shape[0]) // p.cell_px
    cols = np.arange(img.shape[1]) // p.cell_px
    cell = (rows[:, None] * n + cols[None, :]).ravel()
    flat0 = cell * p.n_bins + b0.ravel()
    flat1 = cell * p.n_bins + b1.ravel()
    size = n * n * p.n_bins
    hist = np.bincount(flat0, weights=(mag * (1.0 - frac)).ravel(), minlength=size)
    hist += np.bincount(flat1, weights=(mag * frac).ravel(), minlength=size)
    return hist.reshape(n, n, p.n_bins)


def hog(img: np.ndarray, p: HogParams = HogParams()) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (p.image_size, p.image_size):
        raise ContractError(f"hog expects a {p.image_size}x{p.image_size} image, got {img.shape}")
    hist = cell_histograms(img, p)
    b = p.block_cells
    # (nb, nb, n_bins, b, b) -> (nb, nb, b, b, n_bins): cell-major inside each block
    win = sliding_window_view(hist, (b, b), axis=(0, 1)).transpose(0, 1, 3, 4, 2)
    blocks = win.reshape(p.n_blocks, p.n_blocks, -1)
    eps2 = p.epsilon ** 2
    v = blocks / np.sqrt(np.sum(blocks ** 2, axis=-1, keepdims=True) + eps2)
    v = np.minimum(v, p.clip)
    v = v / np.sqrt(np.sum(v ** 2, axis=-1, keepdims=True) + eps2)
    return v.ravel()


def component_cells(p: HogParams) -> tuple[np.ndarray, np.ndarray]:
    """Row/col of the cell each descriptor component reads from."""
    nb, b = p.n_blocks, p.block_cells
    by, bx, cy, cx, _ = np.meshgrid(np.arange(nb), np.arange(nb), np.arange(b), np.arange(b),
                                    np.arange(p.n_bins), indexing="ij")
    return (by + cy).ravel(), (bx + cx).ravel()


# -- embeddings ---------------------------------------------------------------

_DIM_RE = re.compile(r"^#\s*dim\s*=\s*(\d+)\s*$")


def load_embeddings(path, manifest) -> dict[str, np.ndarray]:
    """Read an ``id,v1,...,vd`` CSV whose first line is ``# dim=d``.

    An optional ``id,...`` column header may follow. Ids absent from the
    manifest are ignored; every manifest id must appear exactly once.
    """
    with open(path, newline="") as fh:
        first = fh.readline()
        m = _DIM_RE.match(first.strip())
        if not m:
            raise SchemaError(f"{path}:1: expected '# dim=<d>' header, got {first.strip()!r}")
        d = int(m.group(1))
        if d < 1:
            raise SchemaError(f"{path}:1: dimension must be positive")
        wanted = set(manifest.ids)
        found: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 2 and row[0].strip().lower() == "id":
                continue
            if len(row) != d + 1:
                raise SchemaError(f"{path}:{lineno}: expected {d} values, got {len(row) - 1}")
            sid = row[0].strip()
            if sid not in wanted:
                continue
            if sid in found:
                raise SchemaError(f"{path}:{lineno}: duplicate id {sid!r}")
            try:
                vec = np.array([float(c) for c in row[1:]])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise SchemaError(f"{path}:{lineno}: non-finite value")
            found[sid] = vec
    missing = [sid for sid in manifest.ids if sid not in found]
    if missing:
        raise IngestionError(f"{path}: missing embeddings for ids: {', '.join(missing)}")
    return {sid: found[sid] for sid in manifest.ids}


def write_embeddings(path, vectors: dict[str, np.ndarray]) -> None:
    dims = {len(v) for v in vectors.values()}
    if len(dims) != 1:
        raise SchemaError("all embedding vectors must share one dimension")
    (d,) = dims
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={d}\n")
        w = csv.writer(fh, lineterminator="\n")
        for sid, v in vectors.items():
            w.writerow([sid] + [repr(float(x)) for x in v])


# -- saliency -----------------------------------------------------------------

@dataclass(frozen=True)
class Heatmap:
    cells: np.ndarray       # (n_cells, n_cells) signed contributions
    rendering: np.ndarray   # (image_size, image_size) in [0, 1]

    @property
    def total(self) -> float:
        return float(self.cells.sum())


def render_cells(cells: np.ndarray, cell_px: int) -> np.ndarray:
    """Nearest-neighbour upsampling + min-max scaling; a flat grid renders as zeros."""
    lo, hi = float(cells.min()), float(cells.max())
    scaled = np.zeros_like(cells) if hi == lo else (cells - lo) / (hi - lo)
    return np.kron(scaled, np.ones((cell_px, cell_px)))


def saliency_map(model, img: np.ndarray, p: HogParams | None = None) -> Heatmap:
    """Per-cell sum of the linear contributions ``w_i * z_i`` of HOG components.

    ``z`` is the model's standardized feature vector, so the cell scores add
    up to ``model.decision(x) - model.bias``.
    """
    if p is None:
        if model.hog_params is None:
            raise ContractError("model carries no HOG parameters; pass them explicitly")
        p = HogParams(**model.hog_params)
    if model.dim != p.dim:
        raise ContractError(f"model dim {model.dim} does not match HOG dim {p.dim}")
    x = hog(img, p)
    contrib = model.weights * model.standardize(x)
    rows, cols = component_cells(p)
    n = p.n_cells
    cells = np.bincount(rows * n + cols, weights=contrib, minlength=n * n).reshape(n, n)
    return Heatmap(cells, render_cells(cells, p.cell_px))
