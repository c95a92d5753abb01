"""8-connected grid A* with an octile heuristic, and pixel-path -> trajectory mask."""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoPath, OccupiedEndpoint, OutOfBounds
from .scene import OccupancyGrid

SQRT2 = math.sqrt(2.0)

Cell = tuple[int, int]

_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass(frozen=True)
class PixelPath:
    cells: tuple[Cell, ...]

    @property
    def move_counts(self) -> tuple[int, int]:
        """(straight moves, diagonal moves)."""
        straight = diag = 0
        for (r0, c0), (r1, c1) in zip(self.cells, self.cells[1:]):
            if r0 != r1 and c0 != c1:
                diag += 1
            else:
                straight += 1
        return straight, diag

    @property
    def cost(self) -> float:
        s, d = self.move_counts
        return s + d * SQRT2

    def __len__(self) -> int:
        return len(self.cells)


def neighbors(cells: np.ndarray, cell: Cell):
    """Free 8-neighbours of ``cell`` with step cost.

    A diagonal step is refused only when both orthogonal cells it squeezes
    between are occupied.
    """
    h, w = cells.shape
    r, c = cell
    for dr, dc in _MOVES:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < h and 0 <= nc < w) or cells[nr, nc]:
            continue
        if dr and dc:
            if cells[r + dr, c] and cells[r, c + dc]:
                continue
            yield (nr, nc), SQRT2
        else:
            yield (nr, nc), 1.0


def octile(a: Cell, b: Cell) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (SQRT2 - 1.0) * min(dr, dc) + max(dr, dc)


def _check_endpoint(grid: OccupancyGrid, cell: Cell, what: str):
    if not grid.in_bounds(cell):
        raise OutOfBounds(f"{what} cell {cell} outside {grid.shape} grid")
    if grid.cells[cell]:
        raise OccupiedEndpoint(f"{what} cell {cell} is occupied")


def plan(grid: OccupancyGrid, start: Cell, goal: Cell,
         on_expand: Callable[[Cell, float], None] | None = None) -> PixelPath:
    """Minimum-cost 8-connected path from ``start`` to ``goal``.

    Ties on f are broken toward larger g, then by insertion order, so the
    result is deterministic. ``on_expand(cell, f)`` is called as each cell is
    closed.
    """
    start, goal = tuple(map(int, start)), tuple(map(int, goal))
    _check_endpoint(grid, start, "start")
    _check_endpoint(grid, goal, "goal")
    cells = grid.cells
    counter = itertools.count()
    g = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    heap = [(octile(start, goal), -0.0, next(counter), start)]
    while heap:
        f, neg_g, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        if on_expand is not None:
            on_expand(cur, f)
        if cur == goal:
            out = [cur]
            while cur in parent:
                cur = parent[cur]
                out.append(cur)
            return PixelPath(tuple(reversed(out)))
        gc = -neg_g
        for nxt, step in neighbors(cells, cur):
            if nxt in closed:
                continue
            ng = gc + step
            if ng < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = ng
                parent[nxt] = cur
                heapq.heappush(heap, (ng + octile(nxt, goal), -ng, next(counter), nxt))
    raise NoPath(f"goal {goal} unreachable from {start}")


def reachable(grid: OccupancyGrid, start: Cell) -> np.ndarray:
    """Boolean mask of cells reachable from ``start`` under the A* move rules."""
    seen = np.zeros(grid.shape, dtype=bool)
    if not grid.is_free(start):
        return seen
    seen[start] = True
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt, _ in neighbors(grid.cells, cur):
            if not seen[nxt]:
                seen[nxt] = True
                queue.append(nxt)
    return seen


def path_to_mask(path: PixelPath, dims: tuple[int, int], kernel: int = 1) -> np.ndarray:
    """3 x H x W float mask: start one-hot, goal one-hot, path cells dilated by
    a square ``kernel`` x ``kernel`` window (odd width; 1 leaves the track thin)."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("kernel must be a positive odd pixel width")
    h, w = dims
    dilation = kernel // 2
    if len(path.cells) == 0:
        raise OutOfBounds("empty path")
    arr = np.asarray(path.cells, dtype=int)
    if arr.min() < 0 or (arr[:, 0] >= h).any() or (arr[:, 1] >= w).any():
        raise OutOfBounds(f"path leaves the {h}x{w} mask")
    mask = np.zeros((3, h, w), dtype=float)
    mask[(0,) + tuple(arr[0])] = 1.0
    mask[(1,) + tuple(arr[-1])] = 1.0
    track = np.zeros((h, w), dtype=bool)
    track[arr[:, 0], arr[:, 1]] = True
    if dilation > 0:
        grown = track.copy()
        for dr in range(-dilation, dilation + 1):
            for dc in range(-dilation, dilation + 1):
                src = track[max(-dr, 0):h - max(dr, 0), max(-dc, 0):w - max(dc, 0)]
                grown[max(dr, 0):h - max(-dr, 0), max(dc, 0):w - max(-dc, 0)] |= src
        track = grown
    mask[2] = track
    return mask
