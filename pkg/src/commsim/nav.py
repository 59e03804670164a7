"""Incremental mapping and grid path planning for one agent.

Ray returns are rasterised into a sparse 0.1 m store, downsampled to a 0.5 m
occupancy grid on demand, and searched with 8-connected A*. The
:class:`Navigator` strings this together with a coarse road route so long
trips only ever plan inside a small window around the agent.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import closest_point_on_polyline, dist, point_at_arc, polyline_length, wrap_angle
from .simcore import Action, Observation

FINE = 0.1
COARSE = 0.5
RATIO = 5  # fine cells per coarse cell along an axis
SQRT2 = math.sqrt(2.0)

UNKNOWN, FREE, OCCUPIED = -1, 0, 1
UNKNOWN_PENALTY = 1.5
TURN_TOLERANCE = math.radians(5.0)


class Unreachable(RuntimeError):
    pass


TILE = 250  # fine cells per tile side (25 m, a whole number of coarse cells)
_T_UNKNOWN, _T_FREE, _T_OCC = 0, 1, 2


@dataclass
class SensedStore:
    """Sparse 0.1 m store made of lazily allocated dense tiles.

    Each tile is a ``TILE x TILE`` uint8 array holding 0 (unobserved), 1
    (observed free) or 2 (occupied). Values only ever increase, so a cell is
    never both free and occupied and nothing is forgotten.
    """

    tiles: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    _coarse: dict[tuple[int, int], np.ndarray] = field(default_factory=dict, repr=False)

    def _tile(self, key) -> np.ndarray:
        t = self.tiles.get(key)
        if t is None:
            t = self.tiles[key] = np.zeros((TILE, TILE), dtype=np.uint8)
        return t

    def state(self, c: tuple[int, int]) -> int:
        t = self.tiles.get((c[0] // TILE, c[1] // TILE))
        return 0 if t is None else int(t[c[0] % TILE, c[1] % TILE])

    def is_occupied(self, c) -> bool:
        return self.state(c) == _T_OCC

    def is_free(self, c) -> bool:
        return self.state(c) == _T_FREE

    def counts(self) -> tuple[int, int]:
        """(occupied, free) fine-cell counts."""
        occ = sum(int(np.count_nonzero(t == _T_OCC)) for t in self.tiles.values())
        free = sum(int(np.count_nonzero(t == _T_FREE)) for t in self.tiles.values())
        return occ, free

    def cells(self, value: int) -> set[tuple[int, int]]:
        out = set()
        for (tx, ty), t in self.tiles.items():
            xs, ys = np.nonzero(t == value)
            out.update(zip((xs + tx * TILE).tolist(), (ys + ty * TILE).tolist()))
        return out

    def _mark(self, ix: np.ndarray, iy: np.ndarray, value: int) -> None:
        if len(ix) == 0:
            return
        tx, ty = ix // TILE, iy // TILE
        lx, ly = ix - tx * TILE, iy - ty * TILE
        tk = tx * 1_000_003 + ty
        for k in np.unique(tk).tolist():
            m = tk == k
            key = (int(tx[m][0]), int(ty[m][0]))
            t = self._tile(key)
            t[lx[m], ly[m]] = np.maximum(t[lx[m], ly[m]], value)
            self._coarse.pop(key, None)

    def mark_occupied(self, cells: Iterable[tuple[int, int]]) -> None:
        arr = np.array(list(cells), dtype=np.int64).reshape(-1, 2)
        self._mark(arr[:, 0], arr[:, 1], _T_OCC)

    def mark_free(self, cells: Iterable[tuple[int, int]]) -> None:
        arr = np.array(list(cells), dtype=np.int64).reshape(-1, 2)
        self._mark(arr[:, 0], arr[:, 1], _T_FREE)

    def coarse_tile(self, key) -> np.ndarray:
        """Tile downsampled to 0.5 m with occupied > free > unknown."""
        c = self._coarse.get(key)
        if c is None:
            n = TILE // RATIO
            c = self.tiles[key].reshape(n, RATIO, n, RATIO).max(axis=(1, 3))
            self._coarse[key] = c
        return c


def fine_cell(x: float, y: float) -> tuple[int, int]:
    return (int(math.floor(x / FINE)), int(math.floor(y / FINE)))


def _ray_arrays(origin: Sequence[float], angle: float, length: float) -> tuple[np.ndarray, np.ndarray]:
    x0, y0 = float(origin[0]) / FINE, float(origin[1]) / FINE
    L = length / FINE
    dx, dy = math.cos(angle), math.sin(angle)
    ts = [np.array([0.0, L])]
    if abs(dx) > 1e-12:
        lo, hi = sorted((x0, x0 + dx * L))
        ts.append((np.arange(math.floor(lo) + 1, math.ceil(hi)) - x0) / dx)
    if abs(dy) > 1e-12:
        lo, hi = sorted((y0, y0 + dy * L))
        ts.append((np.arange(math.floor(lo) + 1, math.ceil(hi)) - y0) / dy)
    t = np.sort(np.concatenate(ts))
    t = t[(t >= 0) & (t <= L)]
    keep = np.diff(t) > 0.0
    if not keep.any():
        return np.array([int(math.floor(x0))]), np.array([int(math.floor(y0))])
    mid = ((t[:-1] + t[1:]) / 2)[keep]
    ix = np.floor(x0 + dx * mid).astype(np.int64)
    iy = np.floor(y0 + dy * mid).astype(np.int64)
    change = np.ones(len(ix), bool)
    change[1:] = (ix[1:] != ix[:-1]) | (iy[1:] != iy[:-1])
    return ix[change], iy[change]


def ray_cells(origin: Sequence[float], angle: float, length: float) -> list[tuple[int, int]]:
    """0.1 m cells crossed by the segment from ``origin`` along ``angle``, in order.

    Exact grid traversal: crossing parameters for every vertical and
    horizontal grid line are merged and each interval's midpoint gives the
    cell.
    """
    ix, iy = _ray_arrays(origin, angle, length)
    return list(zip(ix.tolist(), iy.tolist()))


def integrate_sensing(store: SensedStore, pose: Sequence[float], rays, max_range: float = 30.0) -> SensedStore:
    """Mark hit endpoints occupied and the cells a ray traversed before them free.

    ``rays`` holds ``(angle, hit distance or None)`` pairs with absolute world angles.
    """
    origin = (pose[0], pose[1])
    xs, ys, hits = [], [], []
    for angle, hit in rays:
        ix, iy = _ray_arrays(origin, angle, max_range if hit is None else hit)
        if hit is not None:
            end = fine_cell(origin[0] + hit * math.cos(angle), origin[1] + hit * math.sin(angle))
            hits.append(end)
            keep = (ix != end[0]) | (iy != end[1])
            ix, iy = ix[keep], iy[keep]
        xs.append(ix)
        ys.append(iy)
    if xs:
        store._mark(np.concatenate(xs), np.concatenate(ys), _T_FREE)
        if hits:
            store.mark_occupied(hits)
    return store


@dataclass
class OccupancyGrid:
    origin: tuple[float, float]  # world position of cell (0, 0)'s lower-left corner
    cells: np.ndarray  # int8 [nx, ny], indexed [ix, iy]
    cell_size: float = COARSE

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def cell_of(self, p: Sequence[float]) -> tuple[int, int]:
        return (int(math.floor((p[0] - self.origin[0]) / self.cell_size)), int(math.floor((p[1] - self.origin[1]) / self.cell_size)))

    def center(self, c: tuple[int, int]) -> tuple[float, float]:
        return (self.origin[0] + (c[0] + 0.5) * self.cell_size, self.origin[1] + (c[1] + 0.5) * self.cell_size)

    def inside(self, c) -> bool:
        return 0 <= c[0] < self.cells.shape[0] and 0 <= c[1] < self.cells.shape[1]

    def inflated(self, cells: int = 1) -> "OccupancyGrid":
        """Occupied cells grown by ``cells`` in the 8-neighbourhood."""
        if cells <= 0:
            return OccupancyGrid(self.origin, self.cells.copy(), self.cell_size)
        from scipy.ndimage import binary_dilation

        occ = binary_dilation(self.cells == OCCUPIED, structure=np.ones((3, 3), bool), iterations=cells)
        out = self.cells.copy()
        out[occ] = OCCUPIED
        return OccupancyGrid(self.origin, out, self.cell_size)


def to_occupancy(store: SensedStore, bounds: Sequence[float]) -> OccupancyGrid:
    """0.5 m grid over ``bounds`` (x0, y0, x1, y1); occupied dominates free, else unknown."""
    x0, y0, x1, y1 = bounds
    i0, j0 = int(math.floor(x0 / COARSE)), int(math.floor(y0 / COARSE))
    i1, j1 = int(math.ceil(x1 / COARSE)), int(math.ceil(y1 / COARSE))
    nx, ny = max(1, i1 - i0), max(1, j1 - j0)
    raw = np.zeros((nx, ny), dtype=np.uint8)
    n = TILE // RATIO
    for tx in range(i0 // n, (i0 + nx - 1) // n + 1):
        for ty in range(j0 // n, (j0 + ny - 1) // n + 1):
            if (tx, ty) not in store.tiles:
                continue
            c = store.coarse_tile((tx, ty))
            # overlap of tile [tx*n, tx*n+n) with window [i0, i0+nx)
            a0, a1 = max(i0, tx * n), min(i0 + nx, tx * n + n)
            b0, b1 = max(j0, ty * n), min(j0 + ny, ty * n + n)
            raw[a0 - i0 : a1 - i0, b0 - j0 : b1 - j0] = c[a0 - tx * n : a1 - tx * n, b0 - ty * n : b1 - ty * n]
    cells = np.array([UNKNOWN, FREE, OCCUPIED], dtype=np.int8)[raw]
    return OccupancyGrid((i0 * COARSE, j0 * COARSE), cells)


_NEIGH = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


@dataclass
class PathResult:
    cells: list[tuple[int, int]]
    cost: float
    straight: int = 0
    diagonal: int = 0
    straight_unknown: int = 0
    diagonal_unknown: int = 0


def _box_octile(c, box) -> float:
    dx = max(box[0] - c[0], 0, c[0] - box[2])
    dy = max(box[1] - c[1], 0, c[1] - box[3])
    lo, hi = min(dx, dy), max(dx, dy)
    return (hi - lo) + SQRT2 * lo


def plan_path(grid: OccupancyGrid | np.ndarray, start: tuple[int, int], goal: Iterable[tuple[int, int]], unknown_penalty: float = UNKNOWN_PENALTY) -> PathResult:
    """8-connected A* from ``start`` to any cell of ``goal``.

    Straight moves cost 1, diagonal moves sqrt(2), moves into unknown cells
    cost ``unknown_penalty`` times more. Diagonals may not squeeze between two
    occupied cells sharing the corner. Ties break on lower f, then higher g,
    then cell order. The reported cost is recomputed from move counts so it
    does not depend on summation order.
    """
    cells = grid.cells if isinstance(grid, OccupancyGrid) else np.asarray(grid)
    nx, ny = cells.shape
    start = (int(start[0]), int(start[1]))
    goals = {(int(a), int(b)) for a, b in goal}
    goals = {g for g in goals if 0 <= g[0] < nx and 0 <= g[1] < ny and cells[g] != OCCUPIED}
    if not goals:
        raise Unreachable("unreachable")
    if not (0 <= start[0] < nx and 0 <= start[1] < ny):
        raise ValueError("start outside grid")
    if start in goals:
        return PathResult([start], 0.0)
    box = (min(g[0] for g in goals), min(g[1] for g in goals), max(g[0] for g in goals), max(g[1] for g in goals))
    occ = cells == OCCUPIED
    unk = cells == UNKNOWN
    g_cost = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(_box_octile(start, box), -0.0, start)]
    closed = set()
    found = None
    while heap:
        f, ng, c = heapq.heappop(heap)
        if c in closed:
            continue
        closed.add(c)
        if c in goals:
            found = c
            break
        gc = -ng
        cx, cy = c
        for dx, dy in _NEIGH:
            nxc, nyc = cx + dx, cy + dy
            if not (0 <= nxc < nx and 0 <= nyc < ny) or occ[nxc, nyc]:
                continue
            diag = dx != 0 and dy != 0
            if diag and (occ[cx + dx, cy] or occ[cx, cy + dy]):
                continue
            n = (nxc, nyc)
            if n in closed:
                continue
            step = SQRT2 if diag else 1.0
            if unk[nxc, nyc]:
                step *= unknown_penalty
            ngc = gc + step
            if ngc < g_cost.get(n, math.inf) - 1e-12:
                g_cost[n] = ngc
                parent[n] = c
                heapq.heappush(heap, (ngc + _box_octile(n, box), -ngc, n))
    if found is None:
        raise Unreachable("unreachable")
    path = [found]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    res = PathResult(path, 0.0)
    for a, b in zip(path, path[1:]):
        diag = a[0] != b[0] and a[1] != b[1]
        u = bool(unk[b])
        if diag:
            if u:
                res.diagonal_unknown += 1
            else:
                res.diagonal += 1
        elif u:
            res.straight_unknown += 1
        else:
            res.straight += 1
    res.cost = (res.straight + unknown_penalty * res.straight_unknown) + SQRT2 * (res.diagonal + unknown_penalty * res.diagonal_unknown)
    return res


def next_action(path: Sequence[Sequence[float]], pose: Sequence[float], max_step: float = 2.0) -> Action:
    """One motion primitive toward the first waypoint of ``path`` that is not underfoot."""
    x, y, h = pose
    target = None
    for p in path:
        if dist((x, y), p) > 1e-6:
            target = p
            break
    if target is None:
        return Action.wait()
    bearing = math.atan2(target[1] - y, target[0] - x)
    delta = wrap_angle(bearing - h)
    if abs(delta) > TURN_TOLERANCE:
        return Action.turn(delta)
    return Action.move_forward(min(max_step, dist((x, y), target)))


def to_pgm(grid: OccupancyGrid) -> str:
    """Plain PGM (P2): white free, grey unknown, black occupied; top row is max y."""
    nx, ny = grid.shape
    lut = {UNKNOWN: 128, FREE: 255, OCCUPIED: 0}
    rows = []
    for iy in range(ny - 1, -1, -1):
        rows.append(" ".join(str(lut[int(grid.cells[ix, iy])]) for ix in range(nx)))
    return f"P2\n{nx} {ny}\n255\n" + "\n".join(rows) + "\n"


# --------------------------------------------------------------------------
# hierarchical navigation


class Navigator:
    """Road-route guided, locally replanned navigation for a single agent.

    A coarse route comes from the public road graph; every tick a window
    around the agent and a look-ahead point on that route is rasterised from
    the agent's own sensing and searched with A*.
    """

    def __init__(self, world, lookahead: float = 20.0, margin: float = 6.0, inflate: int = 1, max_range: float = 30.0):
        self.world = world
        self.store = SensedStore()
        self.lookahead = lookahead
        self.margin = margin
        self.inflate = inflate
        self.max_range = max_range
        self._goal: tuple[float, float] | None = None
        self._route: list[tuple[float, float]] = []
        self.last_path: list[tuple[float, float]] = []
        self.failures = 0

    def observe(self, obs: Observation) -> None:
        if obs.rays:
            integrate_sensing(self.store, obs.pose, obs.rays, self.max_range)

    def _plan_route(self, pos, goal):
        route = [tuple(pos)]
        if dist(pos, goal) > self.lookahead:
            try:
                route += self.world.roads.path(pos, goal)
            except Exception:
                pass
        route.append(tuple(goal))
        self._route = route
        self._goal = tuple(goal)

    def _carrot(self, pos) -> tuple[float, float]:
        """Point ``lookahead`` metres past the agent's projection onto the route."""
        route = self._route
        if len(route) == 1:
            return route[0]
        _, _, s = closest_point_on_polyline(pos, route)
        total = polyline_length(route)
        p, _ = point_at_arc(route, min(s + self.lookahead, total))
        return (float(p[0]), float(p[1]))

    def step_toward(self, obs: Observation, goal: Sequence[float], radius: float = 1.0, max_step: float = 2.0) -> Action | None:
        """Next primitive toward ``goal``; ``None`` once within ``radius``."""
        x, y, _ = obs.pose
        pos = (x, y)
        goal = (float(goal[0]), float(goal[1]))
        if dist(pos, goal) <= radius:
            return None
        self.observe(obs)
        if self._goal != goal or not self._route or closest_point_on_polyline(pos, self._route)[1] > self.lookahead:
            self._plan_route(pos, goal)
        carrot = self._carrot(pos)
        final = dist(carrot, goal) < 1e-9
        tol = radius if final else 1.5
        res = None
        # widen the window when the obstacle in the way is larger than it
        for m in (self.margin, 3 * self.margin, self.max_range):
            bounds = (min(x, carrot[0]) - m, min(y, carrot[1]) - m, max(x, carrot[0]) + m, max(y, carrot[1]) + m)
            raw = to_occupancy(self.store, bounds)
            grid = raw.inflated(self.inflate)
            start = grid.cell_of(pos)
            # inflation must not seal the agent in when it stands close to a wall
            r = self.inflate
            sl = (slice(max(start[0] - r, 0), start[0] + r + 1), slice(max(start[1] - r, 0), start[1] + r + 1))
            grid.cells[sl] = raw.cells[sl]
            goal_cells = _disc_cells(grid, carrot, max(tol, COARSE))
            try:
                res = plan_path(grid, start, goal_cells)
                break
            except Unreachable:
                continue
        if res is None:
            self.failures += 1
            # forget the coarse route and head straight for the goal next tick
            self._route = []
            return next_action([carrot], obs.pose, max_step)
        self.failures = 0
        pts = [grid.center(c) for c in res.cells[1:]]
        if final and pts:
            pts[-1] = goal if dist(pts[-1], goal) <= tol else pts[-1]
        self.last_path = pts
        if not pts:
            return next_action([goal], obs.pose, min(max_step, dist(pos, goal)))
        wp = pts[0]
        for k in range(min(len(pts), 12) - 1, 0, -1):
            if _clear_segment(grid, pos, pts[k]):
                wp = pts[k]
                break
        return next_action([wp], obs.pose, max_step)


def _clear_segment(grid: OccupancyGrid, a, b) -> bool:
    """True when the straight segment a-b touches no occupied grid cell."""
    n = int(math.ceil(dist(a, b) / (grid.cell_size / 4))) + 1
    for k in range(n + 1):
        t = k / n
        c = grid.cell_of((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        if grid.inside(c) and grid.cells[c] == OCCUPIED:
            return False
    return True


def _disc_cells(grid: OccupancyGrid, p, r) -> list[tuple[int, int]]:
    c0 = grid.cell_of((p[0] - r, p[1] - r))
    c1 = grid.cell_of((p[0] + r, p[1] + r))
    out = []
    for i in range(c0[0], c1[0] + 1):
        for j in range(c0[1], c1[1] + 1):
            if grid.inside((i, j)) and dist(grid.center((i, j)), p) <= r:
                out.append((i, j))
    if not out:
        c = grid.cell_of(p)
        if grid.inside(c):
            out.append(c)
    return out
