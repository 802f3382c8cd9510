"""Domains, particle distributions, bounded Voronoi cells, neighbor queries.

Geometry is restricted to axis-aligned boxes in one or two dimensions, so the
extended domain is again a box and clipped Voronoi cells are exact convex
polygons (or intervals).  Everything is immutable after construction; the
bucket grid is built once per particle system and then only read.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-axis bounds."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned computational domain with a fixed extension width.

    The extended domain inflates every axis by ``extension`` on both sides;
    particles live in (the closure of) the extended box while operators are
    evaluated inside the core box.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    extension: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("lower/upper dimension mismatch")
        if len(lo) not in (1, 2):
            raise ValueError(f"geometry supports d in {{1, 2}}, got d={len(lo)}")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper per axis, got {lo} vs {hi}")
        if not self.extension > 0:
            raise ValueError(f"extension width must be positive, got {self.extension}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))


def extend_domain(domain: RectDomain) -> Box:
    """The extension-inflated box around the core domain."""
    h = domain.extension
    return Box(
        lower=tuple(v - h for v in domain.lower),
        upper=tuple(v + h for v in domain.upper),
    )


class BucketGrid:
    """Uniform bucket grid over a box with cells at least ``cell_size`` wide.

    Particles are stored sorted by row-major cell id, so all points of a
    contiguous run of cells form one slice; kernels exploit this for fixed
    deterministic traversal order.
    """

    def __init__(self, points: np.ndarray, lower, upper, cell_size: float):
        points = np.ascontiguousarray(points, dtype=float)
        self.dim = points.shape[1]
        self.lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        extent = upper - self.lower
        if cell_size <= 0:
            raise ValueError("cell size must be positive")
        self.ncells = np.maximum(1, np.floor(extent / cell_size)).astype(np.int64)
        self.cell_sizes = extent / self.ncells
        cidx = np.floor((points - self.lower) / self.cell_sizes).astype(np.int64)
        np.clip(cidx, 0, self.ncells - 1, out=cidx)
        if self.dim == 2:
            flat = cidx[:, 0] * self.ncells[1] + cidx[:, 1]
        else:
            flat = cidx[:, 0]
        order = np.argsort(flat, kind="stable")
        self.order = np.ascontiguousarray(order, dtype=np.int64)
        self.points_sorted = np.ascontiguousarray(points[order])
        counts = np.bincount(flat, minlength=int(np.prod(self.ncells)))
        self.cell_start = np.concatenate(
            ([0], np.cumsum(counts))).astype(np.int64)

    def sorted_view(self, values: np.ndarray) -> np.ndarray:
        """Per-particle array reordered into grid storage order."""
        return np.ascontiguousarray(np.asarray(values)[self.order])

    def query_candidates(self, x, r: float) -> np.ndarray:
        """Original indices of all particles in cells overlapping the r-ball."""
        x = np.asarray(x, dtype=float)
        lo = np.floor((x - r - self.lower) / self.cell_sizes).astype(np.int64)
        hi = np.floor((x + r - self.lower) / self.cell_sizes).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, self.ncells - 1)
        if np.any(hi < lo):
            return np.empty(0, dtype=np.int64)
        if self.dim == 1:
            s = self.cell_start[lo[0]]
            e = self.cell_start[hi[0] + 1]
            return self.order[s:e]
        segs = []
        for a in range(int(lo[0]), int(hi[0]) + 1):
            base = a * int(self.ncells[1])
            s = self.cell_start[base + int(lo[1])]
            e = self.cell_start[base + int(hi[1]) + 1]
            if e > s:
                segs.append(self.order[s:e])
        if not segs:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(segs)


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """Particle positions, volumes and influence radius over a domain.

    Invariants: points are pairwise distinct (exact comparison) and lie in
    the closure of the extended box; volumes are positive and sum to the
    extended box volume; 0 < h < extension width.
    """

    domain: RectDomain
    points: np.ndarray
    volumes: np.ndarray
    h: float

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        vols = np.ascontiguousarray(self.volumes, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "volumes", vols)
        box = extend_domain(self.domain)
        n, d = pts.shape
        if n < 1:
            raise ValueError("need at least one particle")
        if d != self.domain.dim:
            raise ValueError(f"points are {d}-dimensional, domain is {self.domain.dim}")
        if vols.shape != (n,):
            raise ValueError("volumes length must match point count")
        if np.unique(pts, axis=0).shape[0] != n:
            raise ValueError("particle positions must be pairwise distinct")
        lo, hi = box.lower_array(), box.upper_array()
        if np.any(pts < lo) or np.any(pts > hi):
            raise ValueError("particles must lie in the closure of the extended box")
        if not np.all(vols > 0):
            raise ValueError("particle volumes must be positive")
        total = float(np.sum(vols))
        if abs(total - box.volume) > 1e-12 * box.volume:
            raise ValueError(
                f"volumes sum to {total!r}, expected extended box volume {box.volume!r}")
        if not 0 < self.h < self.domain.extension:
            raise ValueError(
                f"influence radius must satisfy 0 < h < {self.domain.extension}, got {self.h}")
        pts.setflags(write=False)
        vols.setflags(write=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def extended_box(self) -> Box:
        return extend_domain(self.domain)

    @cached_property
    def grid(self) -> BucketGrid:
        box = self.extended_box
        return BucketGrid(self.points, box.lower_array(), box.upper_array(), self.h)

    @cached_property
    def _point_lookup(self) -> dict[bytes, int]:
        return {row.tobytes(): i for i, row in enumerate(self.points)}

    def index_of_point(self, x) -> int | None:
        """Index of the particle exactly at x, if any (bitwise comparison)."""
        key = np.ascontiguousarray(x, dtype=float).tobytes()
        return self._point_lookup.get(key)


def neighbors(ps: ParticleSystem, x, r: float,
              exclude_center: bool = False) -> np.ndarray:
    """Indices of particles with |x - x_i| < r, ascending.

    With ``exclude_center`` the strict lower bound 0 < |x - x_i| applies, so
    a particle coinciding with x is dropped.
    """
    if r <= 0:
        raise ValueError(f"query radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    cand = ps.grid.query_candidates(x, r)
    if cand.size == 0:
        return cand
    d2 = np.sum((ps.points[cand] - x) ** 2, axis=1)
    mask = d2 < r * r
    if exclude_center:
        mask &= d2 > 0.0
    return np.sort(cand[mask])


def perturbed_lattice(dx: float, noise_bound: float, seed: int,
                      domain: RectDomain) -> np.ndarray:
    """Jittered square lattice filling the extended box.

    Sites are (i + eta) * dx for every lattice index whose unperturbed
    position lies inside the open extended box, with eta uniform on
    (-noise_bound, noise_bound) per coordinate from a counter-based
    generator (deterministic per seed).  Keeping the index set fixed makes
    the particle count a function of dx alone; jittered edge sites are
    clipped back into the closed box.
    """
    if dx <= 0:
        raise ValueError(f"lattice spacing must be positive, got {dx}")
    if not 0 <= noise_bound < 0.5:
        raise ValueError(f"noise bound must lie in [0, 1/2), got {noise_bound}")
    box = extend_domain(domain)
    axes = []
    for k in range(domain.dim):
        imin = math.floor(box.lower[k] / dx) + 1
        imax = math.ceil(box.upper[k] / dx) - 1
        if imax < imin:
            raise ValueError("extended box holds no lattice site at this spacing")
        axes.append(np.arange(imin, imax + 1, dtype=float))
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    idx = idx.reshape(-1, domain.dim)
    if noise_bound > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        eta = rng.uniform(-noise_bound, noise_bound, size=idx.shape)
        pts = (idx + eta) * dx
    else:
        pts = idx * dx
    np.clip(pts, box.lower_array(), box.upper_array(), out=pts)
    return pts


def uniform_volumes(n: int, domain: RectDomain) -> np.ndarray:
    """Equal particle volumes filling the extended box."""
    if n < 1:
        raise ValueError(f"need at least one particle, got {n}")
    return np.full(n, extend_domain(domain).volume / n)


# ---------------------------------------------------------------------------
# Voronoi decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VoronoiDiagram:
    """Voronoi cells of the extended box, packed.

    Cell i owns vertices[vert_offsets[i]:vert_offsets[i+1]] (CCW polygon for
    d=2, interval endpoints for d=1) and neighbor indices
    adjacency[adj_offsets[i]:adj_offsets[i+1]].
    """

    dim: int
    box: Box
    vert_offsets: np.ndarray
    vertices: np.ndarray
    volumes: np.ndarray
    adj_offsets: np.ndarray
    adjacency: np.ndarray

    def __len__(self) -> int:
        return self.volumes.shape[0]

    def cell_vertices(self, i: int) -> np.ndarray:
        return self.vertices[self.vert_offsets[i]:self.vert_offsets[i + 1]]

    def cell_neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[self.adj_offsets[i]:self.adj_offsets[i + 1]]


def _voronoi_1d(xs: np.ndarray, box: Box) -> VoronoiDiagram:
    n = xs.shape[0]
    order = np.argsort(xs)
    lo, hi = box.lower[0], box.upper[0]
    left = np.empty(n)
    right = np.empty(n)
    srt = xs[order]
    mids = 0.5 * (srt[:-1] + srt[1:])
    left[order] = np.concatenate(([lo], mids))
    right[order] = np.concatenate((mids, [hi]))
    verts = np.empty((2 * n, 1))
    verts[0::2, 0] = left
    verts[1::2, 0] = right
    vert_offsets = np.arange(0, 2 * n + 2, 2, dtype=np.int64)
    adj = []
    adj_offsets = [0]
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    for i in range(n):
        k = pos[i]
        nb = []
        if k > 0:
            nb.append(order[k - 1])
        if k < n - 1:
            nb.append(order[k + 1])
        adj.extend(sorted(nb))
        adj_offsets.append(len(adj))
    return VoronoiDiagram(
        dim=1, box=box,
        vert_offsets=vert_offsets, vertices=verts,
        volumes=right - left,
        adj_offsets=np.asarray(adj_offsets, dtype=np.int64),
        adjacency=np.asarray(adj, dtype=np.int64),
    )


def voronoi_decompose(ps: ParticleSystem, domain: RectDomain | None = None,
                      chunk_size: int = 65536) -> VoronoiDiagram:
    """Voronoi cells of all particles, clipped to the extended box.

    Cells are built by half-plane clipping against candidate neighbors found
    within an adaptive search radius (doubled until every site that could
    still cut the cell has been considered), which is exact for convex boxes.
    Equidistant ties follow the clipping order; they are measure-zero and do
    not affect volumes.
    """
    domain = domain if domain is not None else ps.domain
    box = extend_domain(domain)
    if ps.dim == 1:
        return _voronoi_1d(ps.points[:, 0], box)

    sites = ps.points
    n = ps.n
    spacing = math.sqrt(box.volume / n)
    grid = BucketGrid(sites, box.lower_array(), box.upper_array(), spacing)
    r_init = 3.0 * spacing

    all_verts: list[np.ndarray] = []
    all_labels: list[np.ndarray] = []
    nverts = np.empty(n, dtype=np.int64)
    volumes = np.empty(n)

    def run_chunk(start: int, count: int, max_verts: int):
        verts_buf = np.empty((count, max_verts, 2))
        labels_buf = np.empty((count, max_verts), dtype=np.int64)
        nv_buf = np.empty(count, dtype=np.int64)
        vol_buf = np.empty(count)
        ok_buf = np.empty(count, dtype=np.bool_)
        _kernels.voronoi_cells_2d(
            sites, start, count, grid.points_sorted, grid.order,
            grid.cell_start, int(grid.ncells[0]), int(grid.ncells[1]),
            grid.lower[0], grid.lower[1],
            grid.cell_sizes[0], grid.cell_sizes[1],
            box.lower[0], box.lower[1], box.upper[0], box.upper[1],
            r_init, verts_buf, labels_buf, nv_buf, vol_buf, ok_buf)
        return verts_buf, labels_buf, nv_buf, vol_buf, ok_buf

    for start in range(0, n, chunk_size):
        count = min(chunk_size, n - start)
        verts_buf, labels_buf, nv_buf, vol_buf, ok_buf = run_chunk(start, count, 24)
        oversized: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
        for local in np.nonzero(~ok_buf)[0]:
            # rare: a cell with more vertices than the default buffer
            local = int(local)
            for retry in (96, 384):
                vb, lb, nb, vv, ob = run_chunk(start + local, 1, retry)
                if ob[0]:
                    k = int(nb[0])
                    oversized[local] = (vb[0, :k].copy(), lb[0, :k].copy(), float(vv[0]))
                    break
            else:
                raise RuntimeError(f"voronoi cell {start + local} exceeds vertex budget")
        for local in range(count):
            if local in oversized:
                vv, ll, vol = oversized[local]
                nverts[start + local] = vv.shape[0]
                volumes[start + local] = vol
                all_verts.append(vv)
                all_labels.append(ll)
                continue
            nv = int(nv_buf[local])
            nverts[start + local] = nv
            volumes[start + local] = vol_buf[local]
            all_verts.append(verts_buf[local, :nv].copy())
            all_labels.append(labels_buf[local, :nv].copy())

    vert_offsets = np.concatenate(([0], np.cumsum(nverts))).astype(np.int64)
    vertices = np.concatenate(all_verts, axis=0) if all_verts else np.empty((0, 2))
    adj = []
    adj_offsets = np.empty(n + 1, dtype=np.int64)
    adj_offsets[0] = 0
    for i, labels in enumerate(all_labels):
        nb = np.unique(labels[labels >= 0])
        adj.append(nb)
        adj_offsets[i + 1] = adj_offsets[i] + nb.size
    adjacency = (np.concatenate(adj) if adj else np.empty(0)).astype(np.int64)
    return VoronoiDiagram(
        dim=2, box=box,
        vert_offsets=vert_offsets, vertices=vertices, volumes=volumes,
        adj_offsets=adj_offsets, adjacency=adjacency,
    )


def covering_radius(diagram: VoronoiDiagram, ps: ParticleSystem) -> float:
    """Largest distance from a particle to a vertex of its own cell.

    The supremum of |x_i - x| over a convex cell is attained at a vertex, so
    scanning cell vertices is exact.
    """
    counts = np.diff(diagram.vert_offsets)
    rep = np.repeat(ps.points, counts, axis=0)
    d2 = np.sum((diagram.vertices - rep) ** 2, axis=1)
    return float(np.sqrt(np.max(d2)))


# ---------------------------------------------------------------------------
# Convex polygon helpers (shared by tests and diagnostics)
# ---------------------------------------------------------------------------

def polygon_area(verts: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as (k, 2) vertices."""
    v = np.asarray(verts, dtype=float)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex_polygon(verts: np.ndarray, mid: np.ndarray,
                        normal: np.ndarray) -> np.ndarray:
    """Clip a convex polygon to the half-plane (v - mid) . normal <= 0."""
    v = np.asarray(verts, dtype=float)
    out = []
    m = v.shape[0]
    g = (v - mid) @ normal
    for k in range(m):
        k1 = (k + 1) % m
        if g[k] <= 0:
            out.append(v[k])
            if g[k1] > 0:
                t = g[k] / (g[k] - g[k1])
                out.append(v[k] + t * (v[k1] - v[k]))
        elif g[k1] <= 0:
            t = g[k] / (g[k] - g[k1])
            out.append(v[k] + t * (v[k1] - v[k]))
    return np.asarray(out) if out else np.empty((0, 2))


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    poly = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = b.shape[0]
    for k in range(m):
        p, q = b[k], b[(k + 1) % m]
        edge = q - p
        normal = np.array([edge[1], -edge[0]])  # outward for CCW
        poly = clip_convex_polygon(poly, p, normal)
        if poly.shape[0] == 0:
            return 0.0
    return polygon_area(poly)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def save_particles(path, ps: ParticleSystem) -> None:
    """Write particles as CSV rows id,x[,y],volume with round-trip floats."""
    path = Path(path)
    cols = ["id", "x", "y", "volume"] if ps.dim == 2 else ["id", "x", "volume"]
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for i in range(ps.n):
            row = [i] + [repr(float(v)) for v in ps.points[i]]
            row.append(repr(float(ps.volumes[i])))
            wr.writerow(row)


def load_particles(path, domain: RectDomain, h: float) -> ParticleSystem:
    """Read a particle CSV written by :func:`save_particles`."""
    path = Path(path)
    pts, vols = [], []
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        ncoord = len(header) - 2
        for row in rd:
            pts.append([float(v) for v in row[1:1 + ncoord]])
            vols.append(float(row[-1]))
    return ParticleSystem(domain=domain, points=np.asarray(pts),
                          volumes=np.asarray(vols), h=h)


def save_diagram(path, diagram: VoronoiDiagram) -> None:
    """Write cell outlines as CSV rows id,vertex_index,vx[,vy] for plotting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", "vertex_index", "vx", "vy"][: 2 + diagram.dim])
        for i in range(len(diagram)):
            for k, v in enumerate(diagram.cell_vertices(i)):
                wr.writerow([i, k] + [repr(float(c)) for c in v])
