"""Cross-section geometry: body polygons, the waterline split and normals.

All contours are polygons. The water occupies ``y < 0``; the body pierces the
plane ``y = 0``. Normals ``n`` on the wetted contour point out of the water,
i.e. into the body.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import MultiPolygon, Polygon, box
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from .errors import (
    ConfigError,
    DegenerateImmersedPart,
    InvalidGeometry,
    NotSurfacePiercing,
)

GEOM_RTOL = 1e-9


def polygon_moments(poly):
    """Exact area moments of a simple polygon given as an (n, 2) array.

    Returns ``(A, Sx, Sy, Sxx, Syy, Sxy)`` where ``Sx = int x dA`` etc. The
    sign follows the orientation (positive for counterclockwise input).
    """
    p = np.asarray(poly, dtype=float)
    x0, y0 = p[:, 0], p[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    c = x0 * y1 - x1 * y0
    A = c.sum() / 2
    Sx = ((x0 + x1) * c).sum() / 6
    Sy = ((y0 + y1) * c).sum() / 6
    Sxx = ((x0 * x0 + x0 * x1 + x1 * x1) * c).sum() / 12
    Syy = ((y0 * y0 + y0 * y1 + y1 * y1) * c).sum() / 12
    Sxy = ((x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0) * c).sum() / 24
    return A, Sx, Sy, Sxx, Syy, Sxy


def _ring(coords):
    """Drop the closing vertex shapely repeats and return an (n, 2) array."""
    a = np.asarray(coords, dtype=float)
    if len(a) > 1 and np.array_equal(a[0], a[-1]):
        a = a[:-1]
    return a


def _as_polygons(geom):
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon) and g.area > 0]


@dataclass(frozen=True)
class WaterConfig:
    """Water depth (``math.inf`` for deep water) and gravity."""

    depth: float = math.inf
    gravity: float = 9.81

    def __post_init__(self):
        if not self.depth > 0:
            raise ConfigError(f"depth must be positive, got {self.depth}")
        if not self.gravity > 0:
            raise ConfigError(f"gravity must be positive, got {self.gravity}")

    @property
    def is_infinite(self):
        return math.isinf(self.depth)


@dataclass(frozen=True, eq=False)
class BodySection:
    """Closed polygonal cross-section with piecewise-constant density.

    Parameters
    ----------
    outer_contour : array_like, shape (n, 2)
        Vertices of the outer polygon. Clockwise input is reoriented.
    density_regions : sequence of (polygon, rho)
        Regions with relative density ``rho / rho0 >= 0``. They must lie
        inside the outer contour and must not overlap.
    water_density : float
        ``rho0``; densities are interpreted relative to it.
    """

    outer_contour: np.ndarray
    density_regions: tuple = ()
    water_density: float = 1.0

    def __post_init__(self):
        contour = _ring(self.outer_contour)
        if contour.ndim != 2 or contour.shape[1] != 2 or len(contour) < 3:
            raise InvalidGeometry("contour needs at least three 2-D points")
        poly = Polygon(contour)
        if not poly.is_valid or not poly.exterior.is_simple:
            raise InvalidGeometry("outer contour is self-intersecting")
        if poly.area <= 0:
            raise InvalidGeometry("outer contour has zero area")
        if polygon_moments(contour)[0] < 0:
            contour = contour[::-1].copy()
        contour.setflags(write=False)
        object.__setattr__(self, "outer_contour", contour)

        if self.water_density <= 0:
            raise InvalidGeometry("water density must be positive")
        tol_area = self.tol * self.diameter
        regions = []
        for polygon, rho in self.density_regions:
            r = _ring(polygon)
            rpoly = Polygon(r)
            if not rpoly.is_valid or rpoly.area <= 0:
                raise InvalidGeometry("density region is not a simple polygon")
            if rho < 0:
                raise InvalidGeometry("negative density")
            if rpoly.difference(poly).area > tol_area:
                raise InvalidGeometry("density region extends outside the contour")
            if polygon_moments(r)[0] < 0:
                r = r[::-1].copy()
            r.setflags(write=False)
            regions.append((r, float(rho)))
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                overlap = Polygon(regions[i][0]).intersection(Polygon(regions[j][0])).area
                if overlap > tol_area:
                    raise InvalidGeometry(f"density regions {i} and {j} overlap")
        if not regions:
            raise InvalidGeometry("at least one density region is required")
        object.__setattr__(self, "density_regions", tuple(regions))

        if poly.intersection(box(*_wide_bounds(poly, above=True))).area <= tol_area:
            raise NotSurfacePiercing("no part of the body lies above y = 0")

    @classmethod
    def uniform(cls, contour, rho, water_density=1.0):
        """Body with a single density region covering the whole contour."""
        return cls(contour, ((contour, rho),), water_density)

    @property
    def polygon(self):
        return Polygon(self.outer_contour)

    @property
    def diameter(self):
        p = self.outer_contour
        d = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def tol(self):
        """Geometric tolerance: 1e-9 times the body diameter."""
        return GEOM_RTOL * self.diameter

    @property
    def area(self):
        return polygon_moments(self.outer_contour)[0]

    def mass_moments(self):
        """Return (mass, centre of mass) with densities relative to rho0."""
        m = sx = sy = 0.0
        for poly, rho in self.density_regions:
            A, Sx, Sy, *_ = polygon_moments(poly)
            m += rho * A
            sx += rho * Sx
            sy += rho * Sy
        if m <= 0:
            raise InvalidGeometry("body has zero mass")
        return m, (sx / m, sy / m)

    def translated(self, dx, dy=0.0):
        shift = np.array([dx, dy])
        return BodySection(
            self.outer_contour + shift,
            tuple((p + shift, rho) for p, rho in self.density_regions),
            self.water_density,
        )

    def mirrored(self):
        """Reflection x -> -x (orientation is restored by the constructor)."""
        flip = np.array([-1.0, 1.0])
        return BodySection(
            self.outer_contour * flip,
            tuple((p * flip, rho) for p, rho in self.density_regions),
            self.water_density,
        )


def _wide_bounds(poly, above):
    xmin, ymin, xmax, ymax = poly.bounds
    pad = max(xmax - xmin, ymax - ymin) + 1.0
    if above:
        return xmin - pad, 0.0, xmax + pad, ymax + pad
    return xmin - pad, ymin - pad, xmax + pad, 0.0


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Waterline split of a body.

    ``immersed_parts[i]`` is a counterclockwise polygon, ``waterplane[i]`` its
    interval ``(left, right)`` on ``y = 0`` and ``wetted[i]`` the open
    polyline running from the left waterline point down and around to the
    right one. ``free_surface`` lists the intervals of ``F`` in increasing x;
    the first and last are rays to -inf / +inf.
    """

    immersed_parts: tuple
    waterplane: tuple
    wetted: tuple
    free_surface: tuple
    centre_of_mass: tuple
    body_area_above: float
    tol: float = 0.0

    @property
    def n_parts(self):
        return len(self.immersed_parts)

    @property
    def immersed_area(self):
        return sum(polygon_moments(p)[0] for p in self.immersed_parts)

    @property
    def draft(self):
        """b0: the largest submergence depth of the body."""
        return float(max(-p[:, 1].min() for p in self.immersed_parts))

    @property
    def extent(self):
        """a: the largest |x| reached by the immersed parts."""
        return float(max(np.abs(p[:, 0]).max() for p in self.immersed_parts))

    def wetted_segments(self):
        """All wetted-contour segments as an (m, 2, 2) array."""
        segs = [np.stack([w[:-1], w[1:]], axis=1) for w in self.wetted]
        return np.concatenate(segs, axis=0)

    def normals(self, points_per_segment=4):
        """Gauss samples of the generalized normal N = (N1, N2, N3) on S.

        Returns ``(points, weights, N)`` with ``weights`` the arc-length
        quadrature weights, so ``sum(w * f(points))`` integrates over S.
        """
        return sample_normals(self.wetted_segments(), self.centre_of_mass, points_per_segment)

    def translated(self, dx, dy=0.0):
        s = np.array([dx, dy])
        return Decomposition(
            tuple(p + s for p in self.immersed_parts),
            tuple((a + dx, b + dx) for a, b in self.waterplane),
            tuple(w + s for w in self.wetted),
            tuple((a + dx, b + dx) for a, b in self.free_surface),
            (self.centre_of_mass[0] + dx, self.centre_of_mass[1] + dy),
            self.body_area_above,
            self.tol,
        )


def sample_normals(segments, centre, points_per_segment=4):
    """Gauss-Legendre samples of N on a set of directed segments.

    ``n`` is the left-hand normal of each segment's direction, which points
    into the body for wetted segments oriented counterclockwise around it.
    """
    segments = np.asarray(segments, dtype=float)
    t, w = np.polynomial.legendre.leggauss(points_per_segment)
    t = (t + 1) / 2
    w = w / 2
    a, b = segments[:, 0], segments[:, 1]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    n = np.stack([-d[:, 1], d[:, 0]], axis=1) / length[:, None]
    pts = a[:, None, :] + t[None, :, None] * d[:, None, :]
    weights = length[:, None] * w[None, :]
    n_rep = np.broadcast_to(n[:, None, :], pts.shape)
    x0, y0 = centre
    N3 = (pts[..., 0] - x0) * n_rep[..., 1] - (pts[..., 1] - y0) * n_rep[..., 0]
    N = np.stack([n_rep[..., 0], n_rep[..., 1], N3], axis=-1)
    return pts.reshape(-1, 2), weights.reshape(-1), N.reshape(-1, 3)


def split_at_waterline(body: BodySection) -> Decomposition:
    """Clip the body against ``y < 0`` and describe the wetted geometry."""
    poly = body.polygon
    tol = body.tol
    tol_area = tol * body.diameter
    below = poly.intersection(box(*_wide_bounds(poly, above=False)))
    above = poly.intersection(box(*_wide_bounds(poly, above=True)))
    if below.area <= tol_area:
        raise NotSurfacePiercing("body does not reach below the waterline")
    if above.area <= tol_area:
        raise NotSurfacePiercing("body is entirely submerged")

    parts = []
    for p in _as_polygons(below):
        if p.area <= tol_area:
            raise DegenerateImmersedPart(f"immersed part with area {p.area:g}")
        if len(p.interiors):
            raise InvalidGeometry("immersed part with a hole")
        ring = _ring(orient(p, 1.0).exterior.coords)
        ring[np.abs(ring[:, 1]) <= tol, 1] = 0.0
        parts.append(ring)
    parts.sort(key=lambda r: r[:, 0].min())

    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if Polygon(parts[i]).distance(Polygon(parts[j])) <= tol:
                raise DegenerateImmersedPart("immersed parts touch")

    waterplane, wetted = [], []
    for ring in parts:
        lid = _lid_edges(ring)
        if not lid:
            raise DegenerateImmersedPart("immersed part touches the waterline at a point")
        if len(lid) > 1:
            raise InvalidGeometry("immersed part meets the waterline in more than one interval")
        i_start, i_end = lid[0]
        # lid runs right -> left on a ccw ring; S starts at its left end
        n = len(ring)
        left = ring[i_end % n]
        right = ring[i_start]
        waterplane.append((float(left[0]), float(right[0])))
        idx = [(i_end + s) % n for s in range((i_start - i_end) % n + 1)]
        wetted.append(ring[idx].copy())

    free = [(-math.inf, waterplane[0][0])]
    for (_, r), (l, _) in zip(waterplane[:-1], waterplane[1:]):
        free.append((r, l))
    free.append((waterplane[-1][1], math.inf))

    _, centre = body.mass_moments()
    for arr in parts + wetted:
        arr.setflags(write=False)
    return Decomposition(
        tuple(parts), tuple(waterplane), tuple(wetted), tuple(free),
        (float(centre[0]), float(centre[1])), float(above.area), tol,
    )


def _lid_edges(ring):
    """Maximal runs of consecutive ring edges on y = 0 as (first, last) vertex indices."""
    n = len(ring)
    on = (ring[:, 1] == 0.0) & (np.roll(ring[:, 1], -1) == 0.0)
    if on.all():
        raise DegenerateImmersedPart("immersed part has no depth")
    k = int(np.argmin(on))  # an edge off the waterline
    runs = []
    i = 1
    while i <= n:
        if on[(k + i) % n]:
            start = (k + i) % n
            while on[(k + i) % n]:
                i += 1
            runs.append((start, (k + i) % n))
        else:
            i += 1
    return runs


def check_john_condition(dec: Decomposition, tol=None):
    """John's condition per immersed part and overall.

    A part passes when its x-extent lies inside the closure of its
    waterplane interval.
    """
    tol = dec.tol if tol is None else tol
    per_part = []
    for part, (left, right) in zip(dec.immersed_parts, dec.waterplane):
        per_part.append(bool(part[:, 0].min() >= left - tol and part[:, 0].max() <= right + tol))
    return per_part, all(per_part)


def check_symmetry(body: BodySection, tol=None) -> bool:
    """True when contour and density are invariant under x -> -x."""
    tol = body.tol if tol is None else tol
    tol_area = tol * body.diameter
    poly = body.polygon
    mirror = Polygon(body.outer_contour * [-1.0, 1.0])
    if poly.symmetric_difference(mirror).area > tol_area:
        return False
    by_rho = {}
    for p, rho in body.density_regions:
        if rho > 0:
            by_rho.setdefault(rho, []).append(Polygon(p))
    for rho, polys in by_rho.items():
        u = unary_union(polys)
        m = unary_union([Polygon(np.asarray(p.exterior.coords) * [-1.0, 1.0]) for p in polys])
        if u.symmetric_difference(m).area > tol_area:
            return False
    return True


def half_spacing(dec: Decomposition):
    """(a, b) for a two-part body symmetric about x = 0.

    ``2b`` is the gap between the inner waterline points and ``2a`` the
    outer waterline span.
    """
    if dec.n_parts != 2:
        raise InvalidGeometry("half spacing needs exactly two immersed parts")
    (l1, r1), (l2, r2) = dec.waterplane
    return 0.5 * (r2 - l1), 0.5 * (l2 - r1)


def body_from_dict(doc):
    """Build ``(BodySection, WaterConfig)`` from the JSON body document."""
    try:
        contour = np.asarray(doc["contour"], dtype=float)
        regions = tuple(
            (np.asarray(r["polygon"], dtype=float), float(r["rho"]))
            for r in doc.get("density_regions", [])
        )
        depth = doc.get("depth", "infinite")
        if depth == "infinite":
            h = math.inf
        elif isinstance(depth, dict) and "finite" in depth:
            h = float(depth["finite"])
        else:
            raise ConfigError(f"bad depth entry {depth!r}")
        g = float(doc.get("gravity", 9.81))
        rho0 = float(doc.get("water_density", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed body document: {exc}") from exc
    body = BodySection(contour, regions, rho0)
    return body, WaterConfig(h, g)


def body_to_dict(body: BodySection, water: WaterConfig):
    return {
        "contour": body.outer_contour.tolist(),
        "density_regions": [
            {"polygon": p.tolist(), "rho": rho} for p, rho in body.density_regions
        ],
        "depth": "infinite" if water.is_infinite else {"finite": water.depth},
        "gravity": water.gravity,
        "water_density": body.water_density,
    }


def load_body(path):
    """Read a body JSON file. Parse errors become ConfigError with line/column."""
    with open(path) as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return body_from_dict(doc)


def rectangle(x0, x1, y0, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def catamaran(a=2.0, b=1.0, draft=1.0, freeboard=1.0, deck=0.5, rho=None):
    """Two rectangular hulls on [-a,-b] and [b,a] joined by a deck.

    With ``rho=None`` the uniform density is chosen so that the body floats
    in equilibrium (displaced area equals mass).
    """
    contour = np.array([
        [-a, -draft], [-b, -draft], [-b, freeboard - deck], [b, freeboard - deck],
        [b, -draft], [a, -draft], [a, freeboard], [-a, freeboard],
    ])
    if rho is None:
        rho = 2 * (a - b) * draft / Polygon(contour).area
    return BodySection.uniform(contour, rho)
