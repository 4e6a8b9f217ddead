"""Density-guided dynamic queries.

Ground-truth density from object centres, a small density head, the
MSE + occupancy-BCE loss, count estimation, the four-tier query budget,
density-proportional query sampling and density-biased CBAM refinement.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ShapeError
from .numerics import functional as F
from .numerics.layers import Conv1x1, Conv3x3, Linear, Module
from .numerics.tensor import Parameter, Tensor, as_tensor

TIERS = ((10, 900), (100, 1200), (500, 1500))
TOP_TIER = 2000
CANONICAL_FIXED_QUERIES = 900


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass
class DensityMap:
    grid: object  # np.ndarray or Tensor of shape [rows, cols]
    cell_size: float = 1.0

    @property
    def values(self):
        return self.grid.data if isinstance(self.grid, Tensor) else np.asarray(self.grid)

    @property
    def shape(self):
        return self.values.shape

    def total(self):
        return float(self.values.sum())


def gaussian_kernel_raw(sigma=1.5):
    """Unnormalised 3x3 weights ``exp(-|d|^2 / (2 sigma^2))`` at integer offsets."""
    off = np.arange(-1, 2, dtype=np.float64)
    d2 = off[:, None] ** 2 + off[None, :] ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def gt_density(centers, grid_shape, cell_size=1.0, sigma=1.5):
    """Sum of unit-mass 3x3 Gaussian deposits, one per object centre.

    ``centers`` are (x, y) in pixels; the grid cell of a centre is
    ``floor(coord / cell_size)``. Kernels clipped at the border are
    renormalised, so every object contributes exactly unit mass.
    """
    hd, wd = grid_shape
    grid = np.zeros((hd, wd))
    kernel = gaussian_kernel_raw(sigma)
    width, height = wd * cell_size, hd * cell_size
    for x, y in centers:
        if not (0.0 <= x <= width and 0.0 <= y <= height) or not (np.isfinite(x) and np.isfinite(y)):
            raise ValueError(f"object center ({x}, {y}) lies outside the {width}x{height} image")
        col = min(int(x // cell_size), wd - 1)
        row = min(int(y // cell_size), hd - 1)
        r0, r1 = max(row - 1, 0), min(row + 2, hd)
        c0, c1 = max(col - 1, 0), min(col + 2, wd)
        patch = kernel[r0 - row + 1:r1 - row + 1, c0 - col + 1:c1 - col + 1]
        grid[r0:r1, c0:c1] += patch / patch.sum()
    return DensityMap(grid, cell_size)


class DensityHead(Module):
    """(conv3x3 -> ReLU) x depth -> conv1x1 -> ReLU, giving a non-negative [H, W] map."""

    def __init__(self, channels, rng=None, zero=False, out_bias=0.0, depth=2):
        self.convs = [Conv3x3(channels, channels, rng, zero=zero) for _ in range(depth)]
        self.out = Conv1x1(channels, 1, rng, zero=zero)
        self.out.bias.data[...] = out_bias

    def __call__(self, fmap):
        y = fmap
        for conv in self.convs:
            y = F.relu(conv(y))
        y = self.out(y)
        c, h, w = y.shape
        return F.relu(F.reshape(y, (h, w)))


def predict_density(final_map, head, cell_size=1.0):
    return DensityMap(head(final_map), cell_size)


def occupancy_logits(pred, threshold=0.05, temperature=0.02):
    """Logits of the soft occupancy ``sigmoid((d - threshold) / temperature)``."""
    return F.mul(F.sub(pred, threshold), 1.0 / temperature)


def density_loss(pred, gt, occupancy_weight=0.1, threshold=0.05, temperature=0.02):
    """``sum (pred - gt)^2 + occupancy_weight * mean BCE(occupancy)``.

    Target occupancy is 1 on cells where the ground truth carries mass.
    """
    p = pred.grid if isinstance(pred, DensityMap) else pred
    p = as_tensor(p)
    g = gt.values if isinstance(gt, DensityMap) else np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"density_loss: prediction {p.shape} vs ground truth {g.shape}")
    mse = F.sum(F.square(F.sub(p, g)))
    occupied = (g > 0).astype(np.float64)
    bce = F.mean(F.bce_with_logits(occupancy_logits(p, threshold, temperature), occupied))
    return F.add(mse, F.mul(bce, occupancy_weight))


def estimate_count(density):
    values = density.values if isinstance(density, DensityMap) else np.asarray(
        density.data if isinstance(density, Tensor) else density)
    return round_half_up(float(values.sum()))


def select_tier(n, scale=1.0):
    """Query budget for an estimated count ``n`` (four tiers, optionally scaled)."""
    if n < 0:
        raise ValueError(f"count must be non-negative, got {n}")
    queries = TOP_TIER
    for bound, tier in TIERS:
        if n <= bound:
            queries = tier
            break
    return queries if scale == 1.0 else max(1, round_half_up(queries * scale))


def fixed_budget(scale=1.0):
    return CANONICAL_FIXED_QUERIES if scale == 1.0 else max(1, round_half_up(CANONICAL_FIXED_QUERIES * scale))


@dataclass
class QueryBudget:
    estimated_count: int
    num_queries: int


def query_budget(density, scale=1.0):
    n = estimate_count(density)
    return QueryBudget(n, select_tier(n, scale))


def sinusoidal_encoding(xy, d):
    """Encode normalised (x, y) rows into ``d`` features (d divisible by 4)."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    quarter = d // 4
    freqs = 2.0 * np.pi * (2.0 ** np.arange(quarter))
    parts = []
    for axis in range(2):
        ang = xy[:, axis:axis + 1] * freqs[None, :]
        parts += [np.sin(ang), np.cos(ang)]
    enc = np.concatenate(parts, axis=1)
    if enc.shape[1] < d:
        enc = np.pad(enc, ((0, 0), (0, d - enc.shape[1])))
    return enc


@dataclass
class QuerySet:
    positions: np.ndarray  # [N, 2] (x, y) in feature-grid coordinates
    cells: np.ndarray  # [N, 2] (row, col)
    contents: Tensor  # [N, D]
    grid_shape: tuple

    def __len__(self):
        return len(self.positions)

    def normalized(self):
        h, w = self.grid_shape
        return self.positions / np.array([w, h], dtype=np.float64)


def sample_cells(density, num_queries, rng):
    """Draw cells i.i.d. with probability proportional to mass (uniform if empty)."""
    values = density.values if isinstance(density, DensityMap) else np.asarray(density, dtype=np.float64)
    if np.any(values < 0):
        raise InvariantViolation("density map has negative cells")
    flat = values.reshape(-1)
    total = flat.sum()
    if total > 0:
        idx = rng.choice(flat.size, size=num_queries, replace=True, p=flat / total)
    else:
        idx = rng.integers(0, flat.size, size=num_queries)
    rows, cols = np.divmod(idx, values.shape[1])
    return np.stack([rows, cols], axis=1)


def sample_queries(density, num_queries, rng, content=None, d_model=None, jitter=True):
    """Density-weighted query initialisation.

    Positions are sampled cells plus a uniform sub-cell offset; contents are
    a shared learned embedding plus a sinusoidal code of the position.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    values = density.values if isinstance(density, DensityMap) else np.asarray(density, dtype=np.float64)
    h, w = values.shape
    cells = sample_cells(values, num_queries, rng)
    offsets = rng.uniform(0.0, 1.0, size=(num_queries, 2)) if jitter else np.full((num_queries, 2), 0.5)
    positions = np.stack([cells[:, 1] + offsets[:, 0], cells[:, 0] + offsets[:, 1]], axis=1)
    if content is None and d_model is None:
        raise ValueError("need a content embedding or d_model")
    d = content.shape[-1] if content is not None else d_model
    enc = sinusoidal_encoding(positions / np.array([w, h]), d)
    contents = Tensor(enc) if content is None else F.add(content, enc)
    return QuerySet(positions, cells, contents, (h, w))


class CBAMRefine(Module):
    """Channel attention then density-biased spatial attention."""

    def __init__(self, channels, reduction=4, rng=None, zero=False):
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, zero=zero)
        self.fc2 = Linear(hidden, channels, rng, zero=zero)
        self.spatial = Conv3x3(2, 1, rng, zero=zero)
        self.density_gain = Parameter(np.ones(()), "density_gain")

    def attention_maps(self, fmap, density):
        ch = F.sigmoid(self.fc2(F.relu(self.fc1(F.gap(fmap)))))
        x = F.mul(fmap, F.reshape(ch, (-1, 1, 1)))
        pooled = F.stack([F.mean(x, axis=0), F.max(x, axis=0)], axis=0)
        c, h, w = fmap.shape
        logits = F.reshape(self.spatial(pooled), (h, w))
        d = density.grid if isinstance(density, DensityMap) else density
        sp = F.sigmoid(F.add(logits, F.mul(as_tensor(d), self.density_gain)))
        return ch, sp

    def __call__(self, fmap, density):
        ch, sp = self.attention_maps(fmap, density)
        x = F.mul(fmap, F.reshape(ch, (-1, 1, 1)))
        return F.mul(x, F.reshape(sp, (1,) + sp.shape))


def cbam_refine(fmap, density, refine):
    return refine(fmap, density)


def save_density_text(density, path):
    """Plain-text grid: header ``H W cell_size`` then row-major values."""
    values = density.values
    with open(path, "w") as fh:
        fh.write(f"{values.shape[0]} {values.shape[1]} {density.cell_size!r}\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_density_text(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad density header")
        h, w, cell = int(header[0]), int(header[1]), float(header[2])
        rows = [list(map(float, line.split())) for line in fh if line.strip()]
    grid = np.array(rows, dtype=np.float64)
    if grid.shape != (h, w):
        raise ValueError(f"{path}: expected {h}x{w} values, got {grid.shape}")
    return DensityMap(grid, cell)
