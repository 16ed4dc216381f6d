"""P1 finite elements for (laplace - k^2) phi = 0 with modal radiation closures.

The bilinear form is

    a(phi, psi) = int_W grad phi . grad psi + k^2 phi psi
                  - nu int_F phi psi
                  - sum_{lines} sum_n beta_n <phi, f_n> <psi, f_n>

with ``beta_n`` the d/d|x| factor of vertical mode ``f_n`` on each truncation
line. It is bilinear (no conjugation), so the matrix is complex symmetric.
Neumann data are given as the derivative along the normal pointing out of
the water.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dispersion import VerticalModes, WaveParameters
from .errors import ConfigError, SingularSystem
from .mesh import Mesh, Tag, vertical_trace

_GAUSS3 = np.polynomial.legendre.leggauss(3)
_GAUSS4 = np.polynomial.legendre.leggauss(4)
RESIDUAL_TOL = 1e-10


def _edge_rule(rule):
    t, w = rule
    return (t + 1) / 2, w / 2


def outward_normals(mesh: Mesh, edges=None):
    """Unit normals pointing out of the water for oriented boundary edges."""
    e = mesh.boundary_edges if edges is None else edges
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    # triangles are counterclockwise, so the water lies to the left
    return np.stack([d[:, 1], -d[:, 0]], axis=1) / L[:, None], L


def stiffness_and_mass(mesh: Mesh):
    """Global P1 stiffness and consistent mass matrices (real, csr)."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.triangle_areas()
    # gradients of the barycentric coordinates
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    K = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4 * area)[:, None, None]
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    M = area[:, None, None] * local_mass[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    S = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    Mm = sp.coo_matrix((M.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return S, Mm


def free_surface_mass(mesh: Mesh, lumped=True):
    e = mesh.edges_with(Tag.FREE_SURFACE)
    n = mesh.n_nodes
    L = np.abs(mesh.nodes[e[:, 1], 0] - mesh.nodes[e[:, 0], 0])
    if lumped:
        diag = np.zeros(n)
        np.add.at(diag, e[:, 0], L / 2)
        np.add.at(diag, e[:, 1], L / 2)
        return sp.diags(diag).tocsr()
    vals = np.stack([L / 3, L / 6, L / 6, L / 3], axis=1).ravel()
    rows = np.stack([e[:, 0], e[:, 0], e[:, 1], e[:, 1]], axis=1).ravel()
    cols = np.stack([e[:, 0], e[:, 1], e[:, 0], e[:, 1]], axis=1).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def boundary_load(mesh: Mesh, tag, data, rule=_GAUSS3):
    """Vector of int_edges psi_i g ds over edges with ``tag``.

    ``data(points, normals)`` returns g at quadrature points; it may return
    an (m, q) array for q right-hand sides at once.
    """
    e = mesh.edges_with(tag)
    n = mesh.n_nodes
    if len(e) == 0:
        probe = np.asarray(data(np.zeros((1, 2)), np.array([[0.0, 1.0]])))
        shape = (n,) if probe.ndim == 1 else (n, probe.shape[1])
        return np.zeros(shape, dtype=complex)
    t, w = _edge_rule(rule)
    a, b = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    normal, L = outward_normals(mesh, e)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    nq = len(t)
    g = np.asarray(data(pts.reshape(-1, 2), np.repeat(normal, nq, axis=0)))
    multi = g.ndim == 2
    g = g.reshape(len(e), nq, -1)
    wl = (L[:, None] * w[None, :])[..., None]
    out = np.zeros((n, g.shape[2]), dtype=complex)
    np.add.at(out, e[:, 0], ((1 - t)[None, :, None] * g * wl).sum(1))
    np.add.at(out, e[:, 1], (t[None, :, None] * g * wl).sum(1))
    return out if multi else out[:, 0]


def trunc_projections(mesh: Mesh, modes: VerticalModes, tag, rule=_GAUSS4):
    """(M + 1, n) matrix P with P[m, i] = int_line hat_i f_m dy."""
    e = mesh.edges_with(tag)
    t, w = _edge_rule(rule)
    ya, yb = mesh.nodes[e[:, 0], 1], mesh.nodes[e[:, 1], 1]
    y = ya[:, None] + t[None, :] * (yb - ya)[:, None]
    wl = np.abs(yb - ya)[:, None] * w[None, :]
    f = modes(y.ravel()).reshape(len(modes), len(e), len(t))
    P = np.zeros((len(modes), mesh.n_nodes))
    for j, (col, wt) in enumerate(((e[:, 0], 1 - t), (e[:, 1], t))):
        np.add.at(P.T, col, (f * (wt * wl)[None]).sum(2).T)
    return P


def match_depth(mesh: Mesh, params: WaveParameters, modes=None) -> WaveParameters:
    """Parameters on the mesh depth; infinite depth becomes a deep truncation."""
    M = params.n_modes if modes is None else modes
    if params.finite and not params.deep:
        if abs(params.depth - mesh.depth) > 1e-9 * mesh.depth:
            raise ConfigError(f"mesh depth {mesh.depth:g} differs from water depth {params.depth:g}")
        if M != params.n_modes:
            return params.with_depth(params.depth, modes=M, deep=False)
        return params
    if params.finite and params.depth == mesh.depth and M == params.n_modes:
        return params
    return params.with_depth(mesh.depth, modes=M, deep=True)


@dataclass(eq=False)
class LinearSystem:
    """Assembled system ``matrix @ phi = rhs`` and the pieces it was built from.

    ``rhs_wetted`` is the part of the load coming from the wetted contour;
    ``projections`` maps TRUNC_LEFT/TRUNC_RIGHT to their modal projection
    matrices (present even when the closure is switched off).
    """

    mesh: Mesh
    params: WaveParameters
    matrix: sp.csc_matrix
    rhs: np.ndarray
    rhs_wetted: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    fs_mass: sp.csr_matrix = field(repr=False)
    modes: VerticalModes | None = field(repr=False, default=None)
    projections: dict = field(default_factory=dict, repr=False)
    dtn: frozenset = frozenset({Tag.TRUNC_LEFT, Tag.TRUNC_RIGHT})

    def with_rhs(self, rhs_wetted, rhs_other=None):
        rhs = np.asarray(rhs_wetted, dtype=complex)
        if rhs_other is not None:
            rhs = rhs + rhs_other
        return LinearSystem(
            self.mesh, self.params, self.matrix, rhs, np.asarray(rhs_wetted, dtype=complex),
            self.stiffness, self.mass, self.fs_mass, self.modes, self.projections, self.dtn,
        )


def assemble(mesh: Mesh, params: WaveParameters, neumann=None, dtn=True, modes=None) -> LinearSystem:
    """Assemble the field system.

    ``neumann`` maps a ``Tag`` to ``data(points, normals)``; a bare callable
    is taken as the data on the wetted contour. ``dtn`` is True (closure on
    both truncation lines), False, or a collection of the TRUNC tags that
    get the closure; the other lines take Neumann data.
    """
    if dtn is True:
        closed = {Tag.TRUNC_LEFT, Tag.TRUNC_RIGHT}
    elif dtn is False:
        closed = set()
    else:
        closed = {Tag(t) for t in dtn}
    params = match_depth(mesh, params, modes)
    if neumann is None:
        neumann = {}
    elif callable(neumann):
        neumann = {Tag.WETTED: neumann}
    S, M = stiffness_and_mass(mesh)
    MF = free_surface_mass(mesh, lumped=True)
    A = (S + params.k ** 2 * M - params.nu * MF).astype(complex)
    vm = VerticalModes(params)
    proj = {tag: trunc_projections(mesh, vm, tag) for tag in (Tag.TRUNC_LEFT, Tag.TRUNC_RIGHT)}
    for tag, P in proj.items():
        if tag in closed:
            cols = np.flatnonzero(np.abs(P).sum(0))
            Pc = P[:, cols]
            block = -(Pc.T * vm.beta[None, :]) @ Pc
            r, c = np.meshgrid(cols, cols, indexing="ij")
            A = A + sp.coo_matrix((block.ravel(), (r.ravel(), c.ravel())), shape=A.shape)
    n = mesh.n_nodes
    rhs_w = np.zeros(n, dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    for tag, data in neumann.items():
        tag = Tag(tag)
        if tag in closed:
            raise ConfigError(f"{tag.name} carries the modal closure and cannot take Neumann data")
        load = boundary_load(mesh, tag, data)
        rhs += load
        if tag == Tag.WETTED:
            rhs_w += load
    # summation order differs between (i, j) and (j, i); averaging makes the symmetry exact
    A = ((A + A.T) * 0.5).tocsc()
    A.sum_duplicates()
    return LinearSystem(mesh, params, A, rhs, rhs_w, S, M, MF, vm, proj, frozenset(closed))


class Parity:
    """Exact even/odd constraint on a mirror-symmetric mesh.

    ``basis`` is the sparse (n, r) matrix whose columns are the symmetric
    (``even``) or antisymmetric (``odd``) node pairs; odd fields vanish on
    the axis.
    """

    def __init__(self, mesh: Mesh, parity):
        if parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', not {parity!r}")
        if mesh.mirror is None:
            raise ConfigError("parity restriction needs a mirror-symmetric mesh")
        self.parity = parity
        m = mesh.mirror
        idx = np.arange(mesh.n_nodes)
        axis = idx[m == idx]
        first = idx[idx < m]
        sign = 1.0 if parity == "even" else -1.0
        rows, cols, vals = [first, m[first]], [np.arange(len(first))] * 2, [np.ones(len(first)), np.full(len(first), sign)]
        if parity == "even":
            rows.append(axis)
            cols.append(len(first) + np.arange(len(axis)))
            vals.append(np.ones(len(axis)))
        r = len(first) + (len(axis) if parity == "even" else 0)
        self.basis = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(mesh.n_nodes, r)
        ).tocsc()

    def restrict(self, A):
        return (self.basis.T @ A @ self.basis).tocsc()

    def project(self, v):
        return self.basis.T @ v

    def expand(self, x):
        return self.basis @ x


class Factorization:
    """Sparse LU of the (optionally parity-restricted) field matrix."""

    def __init__(self, system: LinearSystem, parity=None):
        self.system = system
        self.parity = Parity(system.mesh, parity) if parity in ("even", "odd") else None
        A = system.matrix if self.parity is None else self.parity.restrict(system.matrix)
        self.matrix = A
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularSystem(f"field matrix is singular ({exc})", smallest_pivot=0.0) from exc
        self.smallest_pivot = float(np.abs(self.lu.U.diagonal()).min())

    def solve(self, rhs):
        """Solve for one or several right-hand sides given on all nodes."""
        rhs = np.asarray(rhs, dtype=complex)
        b = rhs if self.parity is None else self.parity.project(rhs)
        x = self.lu.solve(b)
        for _ in range(2):
            r = b - self.matrix @ x
            if _relres(r, b) <= RESIDUAL_TOL:
                break
            x = x + self.lu.solve(r)
        res = _relres(b - self.matrix @ x, b)
        if res > RESIDUAL_TOL:
            raise SingularSystem(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}", self.smallest_pivot)
        phi = x if self.parity is None else self.parity.expand(x)
        return phi, res

    def smallest_singular_value(self, iters=30, seed=0):
        """sigma_min of the restricted matrix by inverse iteration on A^H A."""
        rng = np.random.default_rng(seed)
        n = self.matrix.shape[0]
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x /= np.linalg.norm(x)
        sigma = prev = math.inf
        for _ in range(iters):
            y = self.lu.solve(self.lu.solve(x, trans="H"))
            ny = np.linalg.norm(y)
            if ny == 0 or not np.isfinite(ny):
                return 0.0, x
            x = y / ny
            sigma = float(np.linalg.norm(self.matrix @ x))
            if abs(prev - sigma) <= 1e-6 * sigma:
                break
            prev = sigma
        vec = x if self.parity is None else self.parity.expand(x)
        return sigma, vec

    def norm1(self):
        return float(spla.norm(self.matrix, 1))


def _relres(r, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


@dataclass(eq=False)
class FieldSolution:
    """Nodal potential with its far-field modal content.

    ``coefficients[tag]`` holds the projections <phi, f_n> on each
    truncation line; ``A_plus``/``A_minus`` are the propagating-mode entries
    on the right/left line. ``incident`` is the mode-0 coefficient at x = 0
    of a wave exp(i ell0 x) coming from the left that is part of ``phi``
    (zero for radiation problems).
    """

    phi: np.ndarray
    system: LinearSystem
    residual: float = 0.0
    coefficients: dict = field(default_factory=dict, repr=False)
    incident: complex = 0j

    def __post_init__(self):
        if not self.coefficients:
            self.coefficients = {tag: P @ self.phi for tag, P in self.system.projections.items()}

    @property
    def mesh(self):
        return self.system.mesh

    @property
    def params(self):
        return self.system.params

    @property
    def A_plus(self):
        return complex(self.coefficients[Tag.TRUNC_RIGHT][0])

    @property
    def A_minus(self):
        return complex(self.coefficients[Tag.TRUNC_LEFT][0])

    def _incoming(self, x):
        return self.incident * np.exp(1j * self.params.ell0 * x)

    def radiated_flux(self):
        """ell0 (|A+|^2 + |A-|^2) of the outgoing part on the truncation lines."""
        x_T = self.mesh.x_trunc
        left = self.A_minus - self._incoming(-x_T)
        return self.params.ell0 * (abs(self.A_plus) ** 2 + abs(left) ** 2)

    def incoming_flux(self):
        return self.params.ell0 * abs(self.incident) ** 2

    def truncation_term(self):
        """sum over truncation lines of int conj(phi) d phi / d(outward) dy."""
        beta = self.system.modes.beta
        x_T = self.mesh.x_trunc
        total = 0j
        for tag, c in self.coefficients.items():
            inc = self._incoming(-x_T) if tag == Tag.TRUNC_LEFT else 0j
            out = c.copy()
            out[0] -= inc
            # the incoming wave moves towards -outward on the left line
            total += np.sum(np.conj(c) * beta * out) - np.conj(c[0]) * beta[0] * inc
        return complex(total)

    def kinetic_energy(self):
        p = self.phi
        s = self.system
        return float(np.real(np.conj(p) @ (s.stiffness @ p + self.params.k ** 2 * (s.mass @ p))))

    def potential_energy(self, lumped=False):
        """nu int_F |phi|^2, by default with the consistent surface mass."""
        MF = self.system.fs_mass if lumped else free_surface_mass(self.mesh, lumped=False)
        return float(self.params.nu * np.real(np.conj(self.phi) @ (MF @ self.phi)))

    def wetted_work(self):
        """int_S conj(phi) d_n phi ds with the prescribed Neumann data."""
        return complex(np.conj(self.phi) @ self.system.rhs_wetted)

    def station_coefficients(self, x):
        """Modal projections of the vertical trace at abscissa ``x``."""
        y, v = vertical_trace(self.mesh, self.phi, x)
        return project_trace(y, v, self.system.modes)

    def station_flux(self, x):
        """Outgoing flux carried by the propagating mode across the line at ``x``.

        Away from the body the field is the incident wave plus an outgoing
        wave, so only the mode-0 projection is needed.
        """
        c0 = self.station_coefficients(x)[0]
        if x < 0:
            c0 = c0 - self._incoming(x)
        return self.params.ell0 * abs(c0) ** 2


def project_trace(y, v, modes: VerticalModes, rule=_GAUSS4):
    """int f_n(y) v(y) dy for a piecewise-linear trace (exact in v)."""
    t, w = _edge_rule(rule)
    ya, yb = y[:-1], y[1:]
    yq = ya[:, None] + t[None, :] * (yb - ya)[:, None]
    vq = v[:-1, None] + t[None, :] * (v[1:] - v[:-1])[:, None]
    wq = (yb - ya)[:, None] * w[None, :]
    f = modes(yq.ravel()).reshape(len(modes), *yq.shape)
    return (f * (vq * wq)[None]).sum(axis=(1, 2))


def solve(system: LinearSystem, parity=None) -> FieldSolution:
    """Direct sparse solve; raises SingularSystem if the residual exceeds 1e-10."""
    fac = Factorization(system, parity)
    phi, res = fac.solve(system.rhs)
    return FieldSolution(phi, system, res)


def l2_error(mesh: Mesh, phi, exact):
    """L2 norm of (P1 interpolant of phi) - exact, by a degree-4 triangle rule."""
    # Dunavant degree-4 rule (6 points)
    a1, b1, w1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
    a2, b2, w2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
    bary = np.array([
        [a1, a1, b1], [a1, b1, a1], [b1, a1, a1],
        [a2, a2, b2], [a2, b2, a2], [b2, a2, a2],
    ])
    w = np.array([w1] * 3 + [w2] * 3)
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qk,tkd->tqd", bary, p)
    vals = np.einsum("qk,tk->tq", bary, np.asarray(phi)[mesh.triangles])
    err = np.abs(vals - exact(pts[..., 0], pts[..., 1])) ** 2
    area = mesh.triangle_areas()
    return float(np.sqrt((err * w[None, :]).sum(1) @ area))
