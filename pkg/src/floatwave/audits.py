"""Energy-identity residuals, the John-transform diagnostic and uniqueness certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dispersion import WaveParameters, band_classifier
from .errors import NotDeepEnough
from .field import _GAUSS4, _edge_rule, FieldSolution
from .geometry import check_john_condition, half_spacing
from .hydrostatics import HydrostaticModel, lambda0
from .mesh import Tag, unique_edges, vertical_trace

EPS = 1e-14
STATEMENTS = ("Corollary1", "Prop2", "Prop3", "Prop4", "Prop5", "Prop6", "Prop7", "Prop8", "none")


def relative_residual(lhs, rhs):
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), EPS)


@dataclass
class AuditReport:
    """Relative residuals of the energy identities.

    ``absolute`` keeps |lhs - rhs| per identity; identities that do not
    apply to the solution (body-side ones for uncoupled solves) are None.
    """

    energy_flux_residual: float
    transposed_identity_residual: float | None
    combined_identity_residual: float | None
    equipartition_residual: float
    ineq_margin: float
    john_transform_residual: float | None = None
    absolute: dict = field(default_factory=dict)
    sides: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "energy_flux_residual": self.energy_flux_residual,
            "transposed_identity_residual": self.transposed_identity_residual,
            "combined_identity_residual": self.combined_identity_residual,
            "equipartition_residual": self.equipartition_residual,
            "ineq_margin": self.ineq_margin,
            "john_transform_residual": self.john_transform_residual,
            "absolute": dict(self.absolute),
            "sides": {k: [float(v[0]), float(v[1])] for k, v in self.sides.items()},
        }


def _quadratic(z, M):
    return float(np.real(np.conj(z) @ M @ z))


def body_extent(sol: FieldSolution):
    """Largest |x| on the wetted contour (0 without a body)."""
    e = sol.mesh.edges_with(Tag.WETTED)
    if len(e) == 0:
        return 0.0
    return float(np.abs(sol.mesh.nodes[e.ravel(), 0]).max())


def stations(sol: FieldSolution):
    """Flux stations midway between the body and the truncation lines."""
    x = 0.5 * (body_extent(sol) + sol.mesh.x_trunc)
    return -x, x


def equipartition_sides(sol: FieldSolution, model: HydrostaticModel | None = None, z=None):
    """Kinetic and potential sides of the energy balance in the truncated box.

    Coupled: KE + omega^2 z*Ez versus PE + g z*Kz + Re(truncation term).
    Uncoupled: KE versus PE + Re(int_S conj(phi) d_n phi) + Re(truncation term).
    The truncation term vanishes for finite-energy (trapped) solutions.
    """
    ke = sol.kinetic_energy()
    pe = sol.potential_energy()
    tt = sol.truncation_term().real
    if z is None or model is None:
        return ke, pe + sol.wetted_work().real + tt
    p = sol.params
    return ke + p.omega ** 2 * _quadratic(z, model.E), pe + p.g * _quadratic(z, model.K) + tt


def audit_solution(sol, model: HydrostaticModel | None = None, params: WaveParameters | None = None, john=False):
    """Evaluate the flux, transposed, combined and equipartition identities.

    ``sol`` is a FieldSolution (radiation or fixed-body problem) or a
    CoupledSolution. Flux sides are measured on interior stations, not on
    the truncation lines, where the discrete balance holds exactly.
    """
    z = getattr(sol, "z", None)
    field_sol = sol.phi if z is not None else sol
    if model is None:
        model = getattr(sol, "model", None)
    coupled = z is not None and model is not None
    p = field_sol.params if params is None else params
    if not np.any(field_sol.phi) and (z is None or not np.any(z)):
        zero = AuditReport(0.0, 0.0 if coupled else None, 0.0 if coupled else None, 0.0, 0.0)
        return zero
    xl, xr = stations(field_sol)
    flux_out = field_sol.station_flux(xr) + field_sol.station_flux(xl)
    flux_in = field_sol.incoming_flux()
    W = field_sol.wetted_work()
    sides = {"energy_flux": (flux_out, flux_in - W.imag)}
    if coupled:
        body = p.omega ** 2 * _quadratic(z, model.E) - p.g * _quadratic(z, model.K)
        body_c = p.omega ** 2 * complex(np.conj(z) @ model.E @ z) - p.g * complex(np.conj(z) @ model.K @ z)
        sides["transposed"] = (body, -W.real)
        sides["combined"] = (flux_out, flux_in + body_c.imag)
    sides["equipartition"] = equipartition_sides(field_sol, model, z if coupled else None)
    absolute = {k: abs(a - b) for k, (a, b) in sides.items()}
    if coupled:
        # the transposed identity also has an imaginary part: Im W = -Im(body side) = 0
        absolute["transposed"] = abs(body_c + W)
    rel = {k: relative_residual(*v) for k, v in sides.items()}
    if coupled:
        rel["transposed"] = absolute["transposed"] / max(abs(body), abs(W), EPS)
    jt = john_transform_residual(field_sol, p)["residual"] if john else None
    return AuditReport(
        rel["energy_flux"], rel.get("transposed"), rel.get("combined"), rel["equipartition"],
        field_sol.potential_energy() - field_sol.kinetic_energy(), jt, absolute, sides,
    )


def _surface_intervals(mesh):
    e = mesh.edges_with(Tag.FREE_SURFACE)
    xs = np.sort(mesh.nodes[e, 0], axis=1)
    xs = xs[np.argsort(xs[:, 0])]
    runs = [[xs[0, 0], xs[0, 1]]]
    for a, b in xs[1:]:
        if a <= runs[-1][1] + 1e-12:
            runs[-1][1] = max(runs[-1][1], b)
        else:
            runs.append([a, b])
    return [tuple(r) for r in runs], float(np.median(xs[:, 1] - xs[:, 0]))


def _exp_moment(y, v, nu, rule=_GAUSS4):
    """int v(y) e^{nu y} dy for a piecewise-linear trace."""
    t, w = _edge_rule(rule)
    ya, yb = y[:-1], y[1:]
    yq = ya[:, None] + t[None, :] * (yb - ya)[:, None]
    vq = v[:-1, None] + t[None, :] * (v[1:] - v[:-1])[:, None]
    return complex(((yb - ya)[:, None] * w[None, :] * vq * np.exp(nu * yq)).sum())


def john_transform_residual(sol: FieldSolution, params: WaveParameters | None = None, spacing=None):
    """Residual of a'' + ell^2 a = 0 for a(x) = int phi e^{nu y} dy over F.

    Columns are placed on free-surface stretches at step ``spacing``
    (default eight surface edges) and skipped where the vertical line meets
    the body. The second difference uses the stencil
    (a(x+d) - 2 cos(ell d) a(x) + a(x-d)) / d^2, which vanishes on every
    solution of the equation and is O(d^2)-close to a'' + ell^2 a.
    Returns a dict with ``x``, ``a``, the pointwise ``values`` and
    ``residual`` = max values / max |a|.
    """
    p = sol.params if params is None else params
    mesh = sol.mesh
    if p.nu * mesh.depth < 10:
        raise NotDeepEnough(f"nu * depth = {p.nu * mesh.depth:.3g} < 10")
    runs, h_fs = _surface_intervals(mesh)
    step = 8 * h_fs if spacing is None else spacing
    wet = mesh.edges_with(Tag.WETTED)
    wx = np.sort(mesh.nodes[wet, 0], axis=1) if len(wet) else np.zeros((0, 2))
    edges = unique_edges(mesh.triangles)
    xs, res, amp = [], [], []
    for lo, hi in runs:
        lo = max(lo, -mesh.x_trunc)
        hi = min(hi, mesh.x_trunc)
        n = int(math.floor((hi - lo) / step))
        if n < 3:
            continue
        # centre the grid in the stretch, keeping off its ends
        pts = lo + (hi - lo - n * step) / 2 + step * np.arange(n + 1)
        pts = pts[1:-1] if n >= 4 else pts
        vals = []
        for x in pts:
            if len(wx) and np.any((wx[:, 0] < x) & (x < wx[:, 1])):
                vals.append(np.nan)
                continue
            y, v = vertical_trace(mesh, sol.phi, x, edges)
            vals.append(_exp_moment(y, v, p.nu))
        vals = np.array(vals, dtype=complex)
        for j in range(1, len(pts) - 1):
            a0, am, ap = vals[j], vals[j - 1], vals[j + 1]
            if np.isnan(a0) or np.isnan(am) or np.isnan(ap):
                continue
            xs.append(pts[j])
            res.append(abs((ap - 2 * math.cos(p.ell * step) * a0 + am) / step ** 2))
            amp.append(abs(a0))
    if not xs:
        return {"x": np.array([]), "a": np.array([]), "values": np.array([]), "residual": math.nan}
    res, amp = np.array(res), np.array(amp)
    return {
        "x": np.array(xs), "a": amp, "values": res,
        "residual": float(res.max() / max(amp.max(), EPS)),
    }


@dataclass(frozen=True)
class UniquenessCertificate:
    applicable_statement: str
    conditions: tuple
    notes: tuple = ()
    Omega: bool = False
    Omega_minus: bool = False
    Omega_plus: bool = False
    m: int = -1
    ell_b: float = math.nan

    @property
    def covered(self):
        return self.applicable_statement != "none"

    def as_dict(self):
        return {
            "applicable_statement": self.applicable_statement,
            "conditions": [[name, ok] for name, ok in self.conditions],
            "notes": list(self.notes),
            "Omega": self.Omega,
            "Omega_minus": self.Omega_minus,
            "Omega_plus": self.Omega_plus,
            "m": self.m,
            "ell_b": self.ell_b,
        }


# (motion, parity) -> (statement, band, extra inequality)
_TWO_PART_TABLE = {
    ("sway", "odd"): ("Prop3", "Omega_minus", None),
    ("sway", "even"): ("Prop4", "Omega_plus", None),
    ("heave", "odd"): ("Prop5", "Omega_minus", None),
    ("heave", "even"): ("Prop6", "Omega_plus", "heave_inequality"),
    ("roll", "even"): ("Prop7", "Omega_plus", None),
    ("roll", "odd"): ("Prop8", "Omega_minus", "roll_inequality"),
}


def certify(fb, params: WaveParameters, motion="full", parity="any") -> UniquenessCertificate:
    """Which uniqueness statement covers (body, omega, k, restriction), if any.

    ``fb`` is a FloatingBody (or a BodySection, checked without raising).
    """
    from .coupled import FloatingBody

    if not isinstance(fb, FloatingBody):
        fb = FloatingBody.from_section(fb, force=True)
    model, dec = fb.model, fb.dec
    g, w2 = params.g, params.omega ** 2
    conds = [("equilibrium", fb.equilibrium.stable)]
    per_part, john = check_john_condition(dec)
    conds.append(("john_condition", john))
    try:
        lam = lambda0(model, g)
        omega_ok = w2 >= lam
    except Exception:
        omega_ok = False
    conds.append(("Omega", omega_ok))
    notes = []
    if params.finite and not params.deep:
        notes.append("finite-depth analogue")
    statement = "none"
    band = (False, False, -1, math.nan)

    if dec.n_parts == 1:
        conds.append(("single_part", True))
        if fb.equilibrium.stable and john and omega_ok:
            statement = "Corollary1"
    else:
        conds.append(("single_part", False))
        two = dec.n_parts == 2
        conds.append(("two_parts", two))
        conds.append(("symmetry", fb.symmetric))
        if two:
            _, b = half_spacing(dec)
            info = band_classifier(params, b)
            band = (info.omega_minus, info.omega_plus, info.m, info.ell_b)
            conds.append(("Omega_minus", info.omega_minus))
            conds.append(("Omega_plus", info.omega_plus))
        entry = _TWO_PART_TABLE.get((motion, parity))
        conds.append((f"restriction {motion}/{parity}", entry is not None))
        if entry is not None and two:
            name, band_name, extra = entry
            band_ok = band[0] if band_name == "Omega_minus" else band[1]
            extra_ok = True
            if extra == "heave_inequality":
                extra_ok = w2 >= model.heave_threshold(g)
                conds.append((extra, extra_ok))
            elif extra == "roll_inequality":
                extra_ok = w2 >= model.roll_threshold(g)
                conds.append((extra, extra_ok))
            if fb.equilibrium.stable and john and fb.symmetric and band_ok and extra_ok:
                statement = name
    if statement == "none" and dec.n_parts == 2 and (motion, parity) not in _TWO_PART_TABLE:
        notes.append("uncovered: no statement for this restriction")
    return UniquenessCertificate(statement, tuple(conds), tuple(notes), bool(omega_ok), *map(_clean, band))


def _clean(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)
