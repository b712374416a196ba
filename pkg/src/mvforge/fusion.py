"""Multi-view map fusion on the ground plane.

The pipeline mirrors a detector's late-fusion stage: per-pixel softmax
weighting across views, projection of each weighted view map onto a common
ground grid, then an elementwise maximum across views.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .annotate import GridMap, MapKind
from .errors import ShapeMismatch
from .geometry import Camera, GroundGrid, project_many

_BEHIND_EPS = 1e-12


@dataclass
class ViewMapStack:
    """Per-view maps of identical shape with their cameras."""

    maps: list[GridMap]
    cameras: list[Camera]

    def __post_init__(self):
        if not self.maps:
            raise ShapeMismatch("stack needs at least one view")
        if len(self.maps) != len(self.cameras):
            raise ShapeMismatch(
                f"{len(self.maps)} maps but {len(self.cameras)} cameras"
            )
        shape = self.maps[0].values.shape
        for m in self.maps[1:]:
            if m.values.shape != shape:
                raise ShapeMismatch(f"map shapes differ: {m.values.shape} vs {shape}")

    def as_array(self) -> np.ndarray:
        """(views, rows, cols) float64 view of the stack."""
        return np.stack([m.values.astype(np.float64) for m in self.maps])


def softmax_weights(attention: np.ndarray) -> np.ndarray:
    """Per-pixel softmax across the leading (view) axis, numerically stable."""
    a = np.asarray(attention, dtype=np.float64)
    a = a - a.max(axis=0, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=0, keepdims=True)


def spatial_select(
    stack: ViewMapStack, attention: Union[ViewMapStack, np.ndarray]
) -> ViewMapStack:
    """Reweight each view map by its per-pixel softmax attention share.

    ``attention`` is a stack (or raw (views, rows, cols) array) of scores;
    equal scores reduce to a uniform 1/views weighting.
    """
    values = stack.as_array()
    att = attention.as_array() if isinstance(attention, ViewMapStack) else np.asarray(attention, dtype=np.float64)
    if att.shape != values.shape:
        raise ShapeMismatch(
            f"attention shape {att.shape} does not match stack {values.shape}"
        )
    weighted = values * softmax_weights(att)
    return ViewMapStack(
        maps=[
            GridMap(values=weighted[i], kind=m.kind, view_id=m.view_id, grid=m.grid)
            for i, m in enumerate(stack.maps)
        ],
        cameras=list(stack.cameras),
    )


def project_to_ground(
    gmap: GridMap, camera: Camera, grid: GroundGrid, height: float = 1.75
) -> GridMap:
    """Sample an image-space map at the projections of ground-cell centres.

    Each cell centre is lifted to ``height`` metres, projected into the view
    and sampled bilinearly with zero padding; cells that land outside the
    image or behind the camera read as zero. The operation is linear in the
    map values.
    """
    rows, cols = grid.rows, grid.cols
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pts = np.empty((rows * cols, 3), dtype=np.float64)
    pts[:, 0] = grid.origin_x + (cc.ravel() + 0.5) * grid.cell_size
    pts[:, 1] = grid.origin_y + (rr.ravel() + 0.5) * grid.cell_size
    pts[:, 2] = height

    u, v, s = project_many(camera, pts)
    valid = np.isfinite(u) & np.isfinite(v) & (s > _BEHIND_EPS)
    u = np.where(valid, u, -10.0)
    v = np.where(valid, v, -10.0)

    img = gmap.values.astype(np.float64)
    h, w = img.shape
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = u - x0
    fy = v - y0

    out = np.zeros(rows * cols, dtype=np.float64)
    corners = (
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    for cx, cy, weight in corners:
        inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        idx = np.nonzero(inside & valid)[0]
        if idx.size:
            out[idx] += weight[idx] * img[cy[idx], cx[idx]]

    return GridMap(values=out.reshape(rows, cols), kind=MapKind.GROUND_DENSITY, grid=grid)


def fuse_max(maps: Sequence[GridMap]) -> GridMap:
    """Elementwise maximum of same-shaped maps (idempotent, order-free)."""
    if not maps:
        raise ShapeMismatch("fuse_max needs at least one map")
    shape = maps[0].values.shape
    for m in maps[1:]:
        if m.values.shape != shape:
            raise ShapeMismatch(f"map shapes differ: {m.values.shape} vs {shape}")
    fused = maps[0].values.copy()
    for m in maps[1:]:
        np.maximum(fused, m.values, out=fused)
    first = maps[0]
    return GridMap(values=fused, kind=first.kind, view_id=None, grid=first.grid)


def ground_pipeline(
    stack: ViewMapStack,
    attention: Union[ViewMapStack, np.ndarray],
    grid: GroundGrid,
    height: float = 1.75,
) -> GridMap:
    """Attention-select, project every view to the ground grid, fuse by max."""
    selected = spatial_select(stack, attention)
    projected = [
        project_to_ground(m, cam, grid, height=height)
        for m, cam in zip(selected.maps, selected.cameras)
    ]
    return fuse_max(projected)
