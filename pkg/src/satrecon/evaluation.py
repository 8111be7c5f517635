"""Height-map benchmark harness.

Reconstructed meshes are scored against lidar-style ground truth by sampling
surface points, rasterizing them into a geo-anchored grid of maximum heights
per cell, optionally filling small holes and refining the registration, and
reporting completeness (percentage of ground-truth cells with height error
below a threshold) and the median absolute height error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AlignmentError, EvaluationError

DEFAULT_CELL = 0.5
DEFAULT_COMPLETENESS_THRESHOLD = 1.0
DEFAULT_SEARCH_CELLS = 10
DEFAULT_POISSON_RADIUS = 0.25

_REJECTIONS_PER_ACTIVE = 30
_CANDIDATE_BATCH = 4096

_NEIGHBOR_OFFSETS = tuple(
    (dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
)


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh with geo-anchored vertices in meters."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3).copy()
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3).copy()
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face indices out of range")
            degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degenerate.any():
                raise ValueError("faces must not repeat a vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a height grid: origin corner, cell size, cell counts."""

    origin_e: float
    origin_n: float
    cell: float
    nx: int
    ny: int
    zone: Optional[int] = None
    hemisphere: Optional[str] = None

    def __post_init__(self):
        if not self.cell > 0:
            raise ValueError(f"cell size must be positive, got {self.cell}")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must have at least one cell per axis")


class HeightGrid:
    """Geo-anchored grid of maximum surface heights; NaN marks empty cells.

    Row ``j`` covers northing ``[origin_n + j*cell, origin_n + (j+1)*cell)``
    and column ``i`` the analogous easting interval (half-open cells).
    """

    __slots__ = ("spec", "heights")

    def __init__(self, spec: GridSpec, heights):
        h = np.asarray(heights, dtype=np.float32).copy()
        if h.shape != (spec.ny, spec.nx):
            raise ValueError(f"heights must be (ny={spec.ny}, nx={spec.nx}), got {h.shape}")
        h.setflags(write=False)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "heights", h)

    def __setattr__(self, name, value):
        raise AttributeError("HeightGrid is immutable")

    @classmethod
    def empty(cls, spec: GridSpec) -> "HeightGrid":
        return cls(spec, np.full((spec.ny, spec.nx), np.nan, dtype=np.float32))

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.heights)

    def valid_count(self) -> int:
        return int(self.valid_mask().sum())


@dataclass(frozen=True)
class EvalReport:
    """Outcome of one height-grid comparison."""

    completeness: float
    median_error: float
    offset: tuple[int, int, float]
    evaluated_cells: int
    gt_cells: int

    def __post_init__(self):
        if not 0.0 <= self.completeness <= 100.0:
            raise ValueError("completeness must be a percentage")
        if not self.median_error >= 0.0:
            raise ValueError("median error must be non-negative")

    def to_dict(self) -> dict:
        return {
            "completeness": self.completeness,
            "median_error": self.median_error,
            "offset_dx": self.offset[0],
            "offset_dy": self.offset[1],
            "offset_dz": self.offset[2],
            "evaluated_cells": self.evaluated_cells,
            "gt_cells": self.gt_cells,
        }


# ---------------------------------------------------------------------------
# Surface sampling
# ---------------------------------------------------------------------------


def vertex_sample(mesh: TriangleMesh) -> np.ndarray:
    """The mesh vertices, verbatim, as an (N, 3) array."""
    return mesh.vertices.copy()


def poisson_disk_sample(mesh: TriangleMesh, radius: float, seed: int = 0) -> np.ndarray:
    """Random surface points with every pairwise distance greater than ``radius``.

    Dart throwing over area-weighted random triangles with a uniform spatial
    hash for neighbor rejection; a run of ``30 * max(1, accepted)``
    consecutive rejections ends the sampling, which keeps the result close to
    maximal. Deterministic for a fixed seed. An empty mesh yields an empty
    array.

    Returns an (N, 3) float64 array of points lying on the mesh faces.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if mesh.face_count == 0:
        return np.empty((0, 3), dtype=np.float64)
    areas = mesh.face_areas()
    total_area = float(areas.sum())
    if total_area <= 0.0:
        return np.empty((0, 3), dtype=np.float64)

    va = mesh.vertices[mesh.faces[:, 0]]
    vb = mesh.vertices[mesh.faces[:, 1]]
    vc = mesh.vertices[mesh.faces[:, 2]]
    cum_areas = np.cumsum(areas)

    rng = np.random.default_rng(seed)
    r_sq = radius * radius
    inv_cell = 1.0 / radius
    # cell coordinates pack into one int; aliasing of absurdly distant cells
    # only adds distance checks, never skips one
    mask = (1 << 21) - 1

    xs: list[float] = []
    ys: list[float] = []
    zs: list[float] = []
    # Each accepted point is registered in its cell and the 26 surrounding
    # ones, so a candidate only inspects a single cell bucket.
    grid: dict[int, list[int]] = {}

    batch_x: list[float] = []
    batch_y: list[float] = []
    batch_z: list[float] = []
    batch_cell: list[list] = []
    batch_key: list[int] = []
    cursor = 0
    consecutive = 0
    while consecutive < _REJECTIONS_PER_ACTIVE * max(1, len(xs)):
        if cursor >= len(batch_x):
            picks = np.searchsorted(cum_areas, rng.random(_CANDIDATE_BATCH) * total_area, side="right")
            picks = np.minimum(picks, len(cum_areas) - 1)
            s = np.sqrt(rng.random(_CANDIDATE_BATCH))[:, np.newaxis]
            t = rng.random(_CANDIDATE_BATCH)[:, np.newaxis]
            pts = va[picks] * (1.0 - s) + vb[picks] * (s * (1.0 - t)) + vc[picks] * (s * t)
            batch_x = pts[:, 0].tolist()
            batch_y = pts[:, 1].tolist()
            batch_z = pts[:, 2].tolist()
            cells = np.floor(pts * inv_cell).astype(np.int64)
            keys = (
                ((cells[:, 0] & mask) << 42)
                | ((cells[:, 1] & mask) << 21)
                | (cells[:, 2] & mask)
            )
            batch_cell = cells.tolist()
            batch_key = keys.tolist()
            cursor = 0
        x = batch_x[cursor]
        y = batch_y[cursor]
        z = batch_z[cursor]
        key = batch_key[cursor]

        ok = True
        bucket = grid.get(key)
        if bucket is not None:
            for i in bucket:
                dx = xs[i] - x
                dy = ys[i] - y
                dz = zs[i] - z
                if dx * dx + dy * dy + dz * dz <= r_sq:
                    ok = False
                    break
        if ok:
            idx = len(xs)
            xs.append(x)
            ys.append(y)
            zs.append(z)
            cx, cy, cz = batch_cell[cursor]
            for ox, oy, oz in _NEIGHBOR_OFFSETS:
                nkey = (((cx + ox) & mask) << 42) | (((cy + oy) & mask) << 21) | ((cz + oz) & mask)
                grid.setdefault(nkey, []).append(idx)
            consecutive = 0
        else:
            consecutive += 1
        cursor += 1

    return np.column_stack([xs, ys, zs]) if xs else np.empty((0, 3), dtype=np.float64)


# ---------------------------------------------------------------------------
# Rasterization and hole filling
# ---------------------------------------------------------------------------


def rasterize_height(points, spec: GridSpec) -> HeightGrid:
    """Maximum height per half-open grid cell; cells with no points stay NaN.

    A point exactly on a shared cell edge belongs to the higher-index cell.
    Points outside the grid extent are ignored.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    heights = np.full(spec.ny * spec.nx, np.nan, dtype=np.float64)
    if pts.size:
        ix = np.floor((pts[:, 0] - spec.origin_e) / spec.cell).astype(np.int64)
        iy = np.floor((pts[:, 1] - spec.origin_n) / spec.cell).astype(np.int64)
        keep = (ix >= 0) & (ix < spec.nx) & (iy >= 0) & (iy < spec.ny) & np.isfinite(pts[:, 2])
        if keep.any():
            flat = iy[keep] * spec.nx + ix[keep]
            z = pts[keep, 2]
            order = np.argsort(flat, kind="stable")
            flat = flat[order]
            z = z[order]
            starts = np.flatnonzero(np.concatenate(([True], flat[1:] != flat[:-1])))
            maxima = np.maximum.reduceat(z, starts)
            heights[flat[starts]] = maxima
    return HeightGrid(spec, heights.reshape(spec.ny, spec.nx))


def fill_holes(grid: HeightGrid) -> HeightGrid:
    """Fill small holes with the median of their neighbors, in a single pass.

    An empty cell is filled when at least 5 of its 8 neighbors are valid in
    the input grid; the fill value is the median of those valid neighbors
    (midpoint for even counts). Valid cells are never modified and fills do
    not cascade within the pass.
    """
    h = grid.heights.astype(np.float64)
    padded = np.pad(h, 1, constant_values=np.nan)
    stacks = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            stacks.append(padded[1 + dy : 1 + dy + h.shape[0], 1 + dx : 1 + dx + h.shape[1]])
    neighbors = np.stack(stacks)
    valid_neighbors = np.sum(~np.isnan(neighbors), axis=0)
    fillable = np.isnan(h) & (valid_neighbors >= 5)
    if fillable.any():
        h[fillable] = np.nanmedian(neighbors[:, fillable], axis=0)
    return HeightGrid(grid.spec, h)


# ---------------------------------------------------------------------------
# Alignment and metrics
# ---------------------------------------------------------------------------


def _base_shift(recon: HeightGrid, gt: HeightGrid) -> tuple[int, int]:
    """Integer cell shift aligning the recon origin onto the gt index space."""
    cell = gt.spec.cell
    if abs(recon.spec.cell - cell) > 1e-9:
        raise ValueError(
            f"grids must share the cell size (recon {recon.spec.cell}, gt {cell})"
        )
    de = (recon.spec.origin_e - gt.spec.origin_e) / cell
    dn = (recon.spec.origin_n - gt.spec.origin_n) / cell
    if abs(de - round(de)) > 1e-6 or abs(dn - round(dn)) > 1e-6:
        raise ValueError("grid origins must differ by an integer number of cells")
    return int(round(de)), int(round(dn))


def _overlay(recon: HeightGrid, gt: HeightGrid, dx: int, dy: int):
    """Co-indexed views of gt and recon shifted by (dx, dy) cells.

    Cell (i, j) of the shifted recon holds ``recon[i - dx, j - dy]`` mapped
    into gt index space.
    """
    base_x, base_y = _base_shift(recon, gt)
    off_x = base_x + dx
    off_y = base_y + dy
    gx0 = max(0, off_x)
    gy0 = max(0, off_y)
    gx1 = min(gt.spec.nx, recon.spec.nx + off_x)
    gy1 = min(gt.spec.ny, recon.spec.ny + off_y)
    if gx0 >= gx1 or gy0 >= gy1:
        return None, None
    gt_sub = gt.heights[gy0:gy1, gx0:gx1]
    recon_sub = recon.heights[gy0 - off_y : gy1 - off_y, gx0 - off_x : gx1 - off_x]
    return gt_sub, recon_sub


def _median(values: np.ndarray) -> float:
    """Median with midpoint convention for even counts."""
    return float(np.median(values))


def refine_alignment(
    recon: HeightGrid,
    gt: HeightGrid,
    search_cells: int = DEFAULT_SEARCH_CELLS,
    completeness_threshold: float = DEFAULT_COMPLETENESS_THRESHOLD,
) -> tuple[int, int, float]:
    """Exhaustive integer-translation registration refinement.

    For every translation ``(dx, dy)`` within the search window the height
    offset ``dz`` is the median of ``gt - recon`` over co-valid cells; the
    translation maximizing completeness wins, with ties broken by lower
    median error, then by smaller ``|dx| + |dy|``, then lexicographically.
    Returns ``(dx, dy, dz)`` such that shifting recon by (dx, dy) cells and
    adding dz aligns it to gt. Raises :class:`AlignmentError` when no
    translation yields a co-valid cell.
    """
    gt_valid_total = gt.valid_count()
    if gt_valid_total == 0:
        raise EvaluationError("ground-truth grid has no valid cells")
    best = None
    for dy in range(-search_cells, search_cells + 1):
        for dx in range(-search_cells, search_cells + 1):
            gt_sub, recon_sub = _overlay(recon, gt, dx, dy)
            if gt_sub is None:
                continue
            both = ~np.isnan(gt_sub) & ~np.isnan(recon_sub)
            if not both.any():
                continue
            diff = gt_sub[both].astype(np.float64) - recon_sub[both].astype(np.float64)
            dz = _median(diff)
            abs_err = np.abs(diff - dz)
            complete = int((abs_err < completeness_threshold).sum())
            cp = 100.0 * complete / gt_valid_total
            me = _median(abs_err)
            key = (-cp, me, abs(dx) + abs(dy), dx, dy)
            if best is None or key < best[0]:
                best = (key, (dx, dy, dz))
    if best is None:
        raise AlignmentError("no translation in the search window has co-valid cells")
    return best[1]


def compute_metrics(
    recon: HeightGrid,
    gt: HeightGrid,
    completeness_threshold: float = DEFAULT_COMPLETENESS_THRESHOLD,
    align: bool = False,
    search_cells: int = DEFAULT_SEARCH_CELLS,
) -> EvalReport:
    """Completeness and median error of recon against ground truth.

    Over ground-truth valid cells: a cell is complete when recon (shifted by
    the alignment offset) is valid there and ``|recon + dz - gt|`` is
    strictly below the threshold; completeness is the complete share of all
    gt-valid cells in percent. The median error is taken over co-valid cells
    only (missing recon cells count as incomplete but contribute no error),
    with the midpoint convention for even counts.
    """
    gt_valid_total = gt.valid_count()
    if gt_valid_total == 0:
        raise EvaluationError("ground-truth grid has no valid cells")
    if align:
        dx, dy, dz = refine_alignment(
            recon, gt, search_cells=search_cells, completeness_threshold=completeness_threshold
        )
    else:
        dx, dy, dz = 0, 0, 0.0
    gt_sub, recon_sub = _overlay(recon, gt, dx, dy)
    if gt_sub is None:
        raise AlignmentError("grids do not overlap at the chosen offset")
    both = ~np.isnan(gt_sub) & ~np.isnan(recon_sub)
    evaluated = int(both.sum())
    if evaluated == 0:
        raise AlignmentError("no co-valid cells to evaluate")
    err = recon_sub[both].astype(np.float64) + dz - gt_sub[both].astype(np.float64)
    abs_err = np.abs(err)
    complete = int((abs_err < completeness_threshold).sum())
    return EvalReport(
        completeness=100.0 * complete / gt_valid_total,
        median_error=_median(abs_err),
        offset=(dx, dy, float(dz)),
        evaluated_cells=evaluated,
        gt_cells=gt_valid_total,
    )


def error_grid(recon: HeightGrid, gt: HeightGrid, offset: tuple[int, int, float]) -> HeightGrid:
    """Signed per-cell error ``recon + dz - gt`` in gt index space, NaN elsewhere."""
    dx, dy, dz = offset
    out = np.full((gt.spec.ny, gt.spec.nx), np.nan, dtype=np.float64)
    gt_sub, recon_sub = _overlay(recon, gt, int(dx), int(dy))
    if gt_sub is not None:
        both = ~np.isnan(gt_sub) & ~np.isnan(recon_sub)
        base_x, base_y = _base_shift(recon, gt)
        gx0 = max(0, base_x + int(dx))
        gy0 = max(0, base_y + int(dy))
        window = out[gy0 : gy0 + gt_sub.shape[0], gx0 : gx0 + gt_sub.shape[1]]
        window[both] = recon_sub[both].astype(np.float64) + dz - gt_sub[both].astype(np.float64)
    return HeightGrid(gt.spec, out)
