"""Grid-of-cells corridors: wall extraction, ray casting and collision tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# unit steps for headings east, north, west, south
DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
COLORS = ("none", "green", "red")


def turn_dir(d: int, turn: str) -> int:
    if turn == "left":
        return (d + 1) % 4
    if turn == "right":
        return (d - 1) % 4
    return d


@dataclass
class Layout:
    """Free cells on a square grid plus the wall segments bounding them.

    Cell ``(i, j)`` covers ``[i*c - c/2, i*c + c/2] x [j*c - c/2, j*c + c/2]``
    with ``c = 2 * half_width``.
    """

    half_width: float
    cells: set[tuple[int, int]]
    wall_colors: dict[tuple[tuple[int, int], int], str] = field(default_factory=dict)
    spawns: list[tuple[tuple[int, int], int]] = field(default_factory=list)
    zones: dict[tuple[int, int], tuple[str, bool]] = field(default_factory=dict)

    def __post_init__(self):
        self._build_walls()

    @property
    def cell_size(self) -> float:
        return 2.0 * self.half_width

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        c = self.cell_size
        return (int(np.floor(x / c + 0.5)), int(np.floor(y / c + 0.5)))

    def center(self, cell: tuple[int, int]) -> np.ndarray:
        return np.array(cell, dtype=np.float64) * self.cell_size

    def _build_walls(self) -> None:
        h = self.half_width
        # collect unit edges keyed by the line they lie on, then merge runs
        runs: dict[tuple, list[tuple[float, float, str]]] = {}
        for cell in self.cells:
            cx, cy = self.center(cell)
            for d, (dx, dy) in enumerate(DIRS):
                if (cell[0] + dx, cell[1] + dy) in self.cells:
                    continue
                color = self.wall_colors.get((cell, d), "none")
                if dx:
                    x = cx + dx * h
                    runs.setdefault(("v", round(x, 9)), []).append((cy - h, cy + h, color))
                else:
                    y = cy + dy * h
                    runs.setdefault(("h", round(y, 9)), []).append((cx - h, cx + h, color))
        a, b, cols = [], [], []
        for (orient, coord), pieces in sorted(runs.items()):
            pieces.sort()
            start, end, color = pieces[0]
            for lo, hi, col in pieces[1:] + [(None, None, None)]:
                if lo is not None and abs(lo - end) < 1e-9 and col == color:
                    end = hi
                    continue
                if orient == "v":
                    a.append((coord, start))
                    b.append((coord, end))
                else:
                    a.append((start, coord))
                    b.append((end, coord))
                cols.append(COLORS.index(color))
                if lo is not None:
                    start, end, color = lo, hi, col
        self.wall_a = np.array(a, dtype=np.float64)
        self.wall_b = np.array(b, dtype=np.float64)
        self.wall_color = np.array(cols, dtype=np.int64)

    def inside(self, x: float, y: float) -> bool:
        """Point lies in a free cell (closed boundaries count as inside)."""
        return self.cell_of(x, y) in self.cells


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def cast_rays(layout: Layout, pos: np.ndarray, angles: np.ndarray, max_range: float
              ) -> tuple[np.ndarray, np.ndarray]:
    """Distance (clipped to ``max_range``) and wall color index of the first hit per ray."""
    ux, uy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    ex = (layout.wall_b[:, 0] - layout.wall_a[:, 0])[None, :]
    ey = (layout.wall_b[:, 1] - layout.wall_a[:, 1])[None, :]
    wx = (layout.wall_a[:, 0] - pos[0])[None, :]
    wy = (layout.wall_a[:, 1] - pos[1])[None, :]
    denom = _cross(ux, uy, ex, ey)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(wx, wy, ex, ey) / denom
        s = _cross(wx, wy, ux, uy) / denom
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
    t = np.where(hit, t, np.inf)
    j = np.argmin(t, axis=1)
    dist = t[np.arange(len(angles)), j]
    color = np.where(np.isfinite(dist), layout.wall_color[j], 0)
    return np.minimum(dist, max_range), color


def point_wall_distance(layout: Layout, p: np.ndarray) -> float:
    a, b = layout.wall_a, layout.wall_b
    e = b - a
    t = np.clip(((p - a) * e).sum(axis=1) / (e * e).sum(axis=1), 0.0, 1.0)
    closest = a + t[:, None] * e
    return float(np.sqrt(((closest - p) ** 2).sum(axis=1)).min())


def crosses_wall(layout: Layout, p: np.ndarray, q: np.ndarray) -> bool:
    """Whether the segment p->q intersects any wall segment."""
    a, b = layout.wall_a, layout.wall_b
    r = q - p
    e = b - a
    denom = _cross(r[0], r[1], e[:, 0], e[:, 1])
    w = a - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(w[:, 0], w[:, 1], e[:, 0], e[:, 1]) / denom
        s = _cross(w[:, 0], w[:, 1], r[0], r[1]) / denom
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)
    return bool(hit.any())
