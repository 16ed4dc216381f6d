"""Triangulation of the truncated water domain and its text file format."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import triangle
from scipy.spatial import cKDTree
from shapely.geometry import Polygon, box
from shapely.ops import unary_union

from .errors import ConfigError, MeshQuality
from .geometry import Decomposition


class Tag(IntEnum):
    FREE_SURFACE = 0
    WETTED = 1
    BOTTOM = 2
    TRUNC_LEFT = 3
    TRUNC_RIGHT = 4


@dataclass(frozen=True)
class MeshConfig:
    """Mesh controls.

    ``h_mesh`` is the target edge length, ``refinement`` the factor by which
    edges may shrink at body corners (lengths stay in
    ``[h_mesh / refinement, h_mesh]``), ``grading`` the growth rate of the edge
    length with distance from the nearest corner. ``x_trunc=None`` places the
    truncation lines at ``a + 2 h``.
    """

    h_mesh: float = 0.1
    x_trunc: float | None = None
    refinement: float = 4.0
    grading: float = 0.25
    min_angle: float = 30.0

    def __post_init__(self):
        if not self.h_mesh > 0 or not self.refinement >= 1 or not self.grading > 0:
            raise ConfigError("mesh controls must be positive (refinement >= 1)")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Linear triangulation with tagged boundary edges.

    ``mirror[i]`` is the node at the reflection of node ``i`` in x = 0 when
    the mesh is mirror-symmetric, otherwise ``None``. ``wetted_segment``
    maps each boundary edge to the index of the body segment it lies on
    (-1 for other tags or when unknown).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    tags: np.ndarray
    depth: float
    x_trunc: float
    mirror: np.ndarray | None = None
    wetted_segment: np.ndarray | None = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    def edges_with(self, tag):
        return self.boundary_edges[self.tags == tag]

    def triangle_areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self):
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        ang = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = (a * b).sum(1) / (np.hypot(*a.T) * np.hypot(*b.T))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(ang))

    def edge_lengths(self):
        e = unique_edges(self.triangles)
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


def unique_edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _boundary_edges(triangles):
    """Edges used by exactly one triangle, oriented as in that triangle."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return e[counts[inv.ravel()] == 1]


class _SizeField:
    def __init__(self, corners, config):
        self.corners = np.asarray(corners, dtype=float).reshape(-1, 2)
        self.h = config.h_mesh
        # quality refinement can shorten edges to ~0.6 of the local target
        self.hmin = min(config.h_mesh, 1.8 * config.h_mesh / config.refinement)
        self.grading = config.grading
        self.tree = cKDTree(self.corners) if len(self.corners) else None

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        if self.tree is None:
            return np.full(len(pts), self.h)
        d, _ = self.tree.query(pts)
        return np.minimum(self.h, self.hmin + self.grading * d)


def _subdivide(a, b, size, n_samples=400):
    """Points on segment [a, b] (a included, b excluded) spaced by the size field."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    t = np.linspace(0.0, 1.0, n_samples)
    pts = a + t[:, None] * (b - a)
    L = float(np.hypot(*(b - a)))
    dens = L / size(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    n = max(1, int(math.ceil(cum[-1] - 1e-9)))
    ts = np.interp(np.linspace(0, cum[-1], n + 1)[:-1], cum, t)
    return a + ts[:, None] * (b - a)


def _pslg(poly, size):
    verts, segs = [], []
    rings = [poly.exterior] + list(poly.interiors)
    for ring in rings:
        coords = np.asarray(ring.coords)[:-1]
        start = len(verts)
        for i in range(len(coords)):
            verts.extend(_subdivide(coords[i], coords[(i + 1) % len(coords)], size))
        n = len(verts) - start
        segs.extend([start + i, start + (i + 1) % n] for i in range(n))
    holes = [Polygon(r).representative_point().coords[0] for r in poly.interiors]
    return np.array(verts), np.array(segs, dtype=int), holes


def _triangulate(poly, size, config):
    verts, segs, holes = _pslg(poly, size)
    data = {"vertices": verts, "segments": segs}
    if holes:
        data["holes"] = np.array(holes)
    q = f"pq{config.min_angle:g}"
    area = config.h_mesh ** 2 * math.sqrt(3) / 4
    t = triangle.triangulate(data, f"{q}a{area:.17g}")
    for _ in range(8):
        p = t["vertices"][t["triangles"]]
        centroid = p.mean(axis=1)
        target = size(centroid)
        longest = np.max(np.stack([
            np.hypot(*(p[:, 1] - p[:, 0]).T),
            np.hypot(*(p[:, 2] - p[:, 1]).T),
            np.hypot(*(p[:, 0] - p[:, 2]).T),
        ]), axis=0)
        too_big = longest > target
        if not too_big.any():
            break
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        cur = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        max_area = np.where(too_big, 0.8 * np.minimum(cur, target ** 2 * math.sqrt(3) / 4), -1.0)
        t["triangle_max_area"] = max_area
        t = triangle.triangulate(t, f"r{q}a")
    return t["vertices"], t["triangles"]


def _structured(x_trunc, depth, h_mesh):
    nx = 2 * max(1, int(round(x_trunc / h_mesh)))
    ny = max(1, int(round(depth / h_mesh)))
    xs = np.linspace(-x_trunc, x_trunc, nx + 1)
    xs[nx // 2] = 0.0
    ys = np.linspace(-depth, 0.0, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = lambda i, j: i * (ny + 1) + j
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if i < nx // 2:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return nodes, np.array(tris, dtype=int)


def find_mirror(nodes, tol):
    """Permutation mapping each node to its reflection, or None."""
    tree = cKDTree(nodes)
    d, j = tree.query(nodes * [-1.0, 1.0])
    if np.all(d <= tol):
        return j.astype(int)
    return None


def generate_mesh(dec: Decomposition | None, depth, config: MeshConfig = MeshConfig(), symmetric=False):
    """Triangulate the water domain inside |x| < x_T, -depth < y < 0.

    With ``symmetric=True`` the right half is meshed and reflected, so the
    mesh is exactly mirror-symmetric and ``Mesh.mirror`` is set.
    """
    if math.isinf(depth):
        raise ConfigError("mesh needs a finite (possibly artificial) depth")
    a = dec.extent if dec is not None else 0.0
    if dec is not None and depth <= dec.draft:
        raise ConfigError(f"depth {depth:g} does not exceed the draft {dec.draft:g}")
    x_T = config.x_trunc if config.x_trunc is not None else a + 2 * depth
    if x_T < a + 2 * depth - 1e-12 * max(1.0, x_T):
        raise ConfigError(f"x_trunc = {x_T:g} is below a + 2h = {a + 2 * depth:g}")

    if dec is None:
        nodes, tris = _structured(x_T, depth, config.h_mesh)
    else:
        corners = np.concatenate(dec.wetted)
        size = _SizeField(corners, config)
        water = box(-x_T, -depth, x_T, 0.0).difference(unary_union([Polygon(p) for p in dec.immersed_parts]))
        if symmetric:
            water = water.intersection(box(0.0, -depth, x_T, 0.0))
        if water.geom_type != "Polygon":
            raise MeshQuality("water domain is not connected")
        nodes, tris = _triangulate(water, size, config)
        if symmetric:
            nodes, tris = _reflect(nodes, tris)

    tol = 1e-9 * max(x_T, depth)
    nodes = nodes.copy()
    nodes[np.abs(nodes[:, 1]) <= tol, 1] = 0.0
    nodes[np.abs(nodes[:, 1] + depth) <= tol, 1] = -depth
    nodes[np.abs(nodes[:, 0] - x_T) <= tol, 0] = x_T
    nodes[np.abs(nodes[:, 0] + x_T) <= tol, 0] = -x_T
    tris = _orient(nodes, tris)
    mirror = find_mirror(nodes, tol) if (symmetric or dec is None) else None
    mesh = _finish(nodes, tris, depth, x_T, dec, mirror)
    if mesh.min_angle() < 10.0:
        raise MeshQuality(f"minimum angle {mesh.min_angle():.2f} deg below 10 deg")
    return mesh


def _reflect(nodes, tris):
    on_axis = np.abs(nodes[:, 0]) <= 1e-12
    nodes = nodes.copy()
    nodes[on_axis, 0] = 0.0
    off = np.flatnonzero(~on_axis)
    new_index = np.arange(len(nodes))
    new_index[off] = len(nodes) + np.arange(len(off))
    mirrored = nodes[off] * [-1.0, 1.0]
    all_nodes = np.vstack([nodes, mirrored])
    return all_nodes, np.vstack([tris, new_index[tris][:, ::-1]])


def _orient(nodes, tris):
    p = nodes[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, ::-1]
    return tris


def _finish(nodes, tris, depth, x_T, dec, mirror):
    bedges = _boundary_edges(tris)
    pa, pb = nodes[bedges[:, 0]], nodes[bedges[:, 1]]
    mid = 0.5 * (pa + pb)
    tags = np.full(len(bedges), Tag.WETTED, dtype=int)
    tags[(pa[:, 1] == 0.0) & (pb[:, 1] == 0.0)] = Tag.FREE_SURFACE
    tags[(pa[:, 1] == -depth) & (pb[:, 1] == -depth)] = Tag.BOTTOM
    tags[(pa[:, 0] == -x_T) & (pb[:, 0] == -x_T)] = Tag.TRUNC_LEFT
    tags[(pa[:, 0] == x_T) & (pb[:, 0] == x_T)] = Tag.TRUNC_RIGHT
    seg_index = np.full(len(bedges), -1, dtype=int)
    wet = tags == Tag.WETTED
    if wet.any():
        if dec is None:
            raise MeshQuality("untagged boundary edges in a mesh without body")
        seg = dec.wetted_segments()
        dist, which = _nearest_segment(mid[wet], seg)
        scale = max(x_T, depth)
        if dist.max() > 1e-7 * scale:
            raise MeshQuality("boundary edge not on any known boundary")
        seg_index[wet] = which
    return Mesh(nodes, tris, bedges, tags, float(depth), float(x_T), mirror, seg_index)


def _nearest_segment(pts, seg):
    a, b = seg[:, 0], seg[:, 1]
    d = b - a
    L2 = (d ** 2).sum(1)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel * d[None]).sum(-1) / L2[None], 0, 1)
    proj = a[None] + t[..., None] * d[None]
    dist = np.hypot(*(pts[:, None, :] - proj).transpose(2, 0, 1))
    which = dist.argmin(1)
    return dist[np.arange(len(pts)), which], which


def write_mesh(mesh: Mesh, path):
    """Write the NODES / TRIS / BEDGES text format (1-based ids)."""
    lines = [f"NODES {mesh.n_nodes}"]
    lines += [f"{i + 1} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines.append(f"TRIS {len(mesh.triangles)}")
    lines += [f"{i + 1} {a + 1} {b + 1} {c + 1}" for i, (a, b, c) in enumerate(mesh.triangles.tolist())]
    lines.append(f"BEDGES {len(mesh.boundary_edges)}")
    lines += [
        f"{a + 1} {b + 1} {Tag(t).name}"
        for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.tags.tolist())
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_mesh(path, dec: Decomposition | None = None):
    """Read a mesh file; depth and x_T are taken from the node extents."""
    with open(path) as f:
        rows = [ln.split() for ln in f if ln.strip()]
    pos = 0

    def section(name):
        nonlocal pos
        head = rows[pos]
        if head[0] != name:
            raise ConfigError(f"{path}: expected {name} at record {pos + 1}, got {head[0]}")
        n = int(head[1])
        body = rows[pos + 1:pos + 1 + n]
        pos += n + 1
        return body

    try:
        nodes = np.array([[float(r[1]), float(r[2])] for r in section("NODES")])
        tris = np.array([[int(r[1]) - 1, int(r[2]) - 1, int(r[3]) - 1] for r in section("TRIS")], dtype=int)
        be = section("BEDGES")
        bedges = np.array([[int(r[0]) - 1, int(r[1]) - 1] for r in be], dtype=int)
        tags = np.array([Tag[r[2]] for r in be], dtype=int)
    except (IndexError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: malformed mesh file ({exc})") from exc
    depth = float(-nodes[:, 1].min())
    x_T = float(nodes[:, 0].max())
    tol = 1e-9 * max(x_T, depth)
    seg_index = np.full(len(bedges), -1, dtype=int)
    if dec is not None and (tags == Tag.WETTED).any():
        mid = nodes[bedges[tags == Tag.WETTED]].mean(axis=1)
        seg_index[tags == Tag.WETTED] = _nearest_segment(mid, dec.wetted_segments())[1]
    return Mesh(nodes, tris, bedges, tags, depth, x_T, find_mirror(nodes, tol), seg_index)


def vertical_trace(mesh: Mesh, values, x, edges=None):
    """Piecewise-linear trace of a nodal field on the vertical line at ``x``.

    Returns ``(y, v)`` sorted by increasing y. The line must not pass
    through the body. ``edges`` may pass a cached ``unique_edges`` array.
    """
    values = np.asarray(values)
    e = unique_edges(mesh.triangles) if edges is None else edges
    xa, xb = mesh.nodes[e[:, 0], 0], mesh.nodes[e[:, 1], 0]
    lo, hi = np.minimum(xa, xb), np.maximum(xa, xb)
    cross = (lo <= x) & (x <= hi) & (xa != xb)
    e = e[cross]
    xa, xb = xa[cross], xb[cross]
    t = (x - xa) / (xb - xa)
    ya, yb = mesh.nodes[e[:, 0], 1], mesh.nodes[e[:, 1], 1]
    y = ya + t * (yb - ya)
    v = values[e[:, 0]] + t * (values[e[:, 1]] - values[e[:, 0]])
    order = np.argsort(y, kind="stable")
    y, v = y[order], v[order]
    keep = np.concatenate([[True], np.diff(y) > 1e-12 * max(mesh.depth, 1.0)])
    return y[keep], v[keep]
