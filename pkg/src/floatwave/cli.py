"""Command-line entry point: ``floatwave <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 a trapped-mode
flag inside a certified row.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audits import audit_solution, certify, john_transform_residual
from .coupled import MOTIONS, PARITIES, FloatingBody, ScanRow, build_mesh, radiation_set, solve_scattering, trapped_mode_scan
from .dispersion import band_classifier, make_wave_parameters
from .errors import ConfigError, CutOff, FloatwaveError, InvalidGeometry, ObliqueAngleTooLarge, Unstable
from .geometry import WaterConfig, check_john_condition, half_spacing, load_body
from .hydrostatics import lambda0
from .mesh import MeshConfig, read_mesh, write_mesh

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CONTRADICTION = 0, 2, 3, 4
WORKERS_ENV = "FLOATWAVE_WORKERS"


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


class Output:
    """Writes result files carrying the version and config hash."""

    def __init__(self, args, command):
        self.dir = Path(args.out) if args.out else None
        self.command = command
        self.hash = config_hash(args)

    def header(self):
        return [f"# floatwave {__version__}", f"# command {self.command}", f"# config_sha256 {self.hash}"]

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write("\n".join(self.header()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
        return self._emit(name, buf.getvalue())

    def json(self, name, doc):
        doc = {"floatwave_version": __version__, "command": self.command, "config_sha256": self.hash, **doc}
        return self._emit(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")

    def _emit(self, name, text):
        if self.dir is None:
            sys.stdout.write(text)
            return None
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        with open(path, "w", newline="") as f:
            f.write(text)
        return path


def config_hash(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")}
    for key in ("body", "mesh"):
        if cfg.get(key):
            with open(cfg[key], "rb") as f:
                cfg[key + "_sha256"] = hashlib.sha256(f.read()).hexdigest()
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _depth_arg(text):
    if text.lower() in ("inf", "infinite"):
        return math.inf
    h = float(text)
    if not h > 0:
        raise argparse.ArgumentTypeError("depth must be positive or 'inf'")
    return h


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="floatwave", description="Oblique waves and trapped modes for a floating cylinder.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, waves=True, grid=False):
        sp.add_argument("--body", required=True, help="body JSON file")
        sp.add_argument("--depth", type=_depth_arg, help="override water depth (number or 'inf')")
        sp.add_argument("--gravity", type=_positive, help="override g")
        sp.add_argument("--out", help="output directory (default: stdout)")
        sp.add_argument("--force", action="store_true", help="run even if the equilibrium checks fail")
        if waves:
            sp.add_argument("--k", type=float, default=0.0, help="axial wavenumber")
            sp.add_argument("--hmesh", type=_positive, default=0.1)
            sp.add_argument("--xt", type=_positive, help="truncation abscissa (default a + 2h)")
            sp.add_argument("--modes", type=int, default=12, help="evanescent modes in the closure")
            sp.add_argument("--refinement", type=_positive, default=4.0)
        if grid:
            sp.add_argument("--omega", type=_positive, help="single frequency")
            sp.add_argument("--omega-min", type=_positive)
            sp.add_argument("--omega-max", type=_positive)
            sp.add_argument("--n-omega", type=int, default=1)

    common(sub.add_parser("check-geometry", help="waterline split, John's condition, symmetry"), waves=False)
    common(sub.add_parser("hydrostatics", help="E, K, lambda0 and equilibrium report"), waves=False)
    sp = sub.add_parser("bands", help="Omega / Omega-minus / Omega-plus over a frequency grid")
    common(sp, waves=False, grid=True)
    sp.add_argument("--k", type=float, default=0.0)

    sp = sub.add_parser("solve", help="radiation potential for one motion")
    common(sp, grid=False)
    sp.add_argument("--omega", type=_positive, required=True)
    sp.add_argument("--mesh", help="read the mesh from this file instead of meshing")
    sp.add_argument("--write-mesh", help="also write the mesh used to this file")
    sp.add_argument("--restriction", choices=["sway", "heave", "roll"], default="heave")
    sp.add_argument("--parity", choices=PARITIES, default="any")

    sp = sub.add_parser("scan", help="trapped-mode sweep with certificates")
    common(sp, grid=True)
    sp.add_argument("--restriction", choices=list(MOTIONS), default="full")
    sp.add_argument("--parity", choices=PARITIES, default="any")

    sp = sub.add_parser("scatter", help="reflection and transmission of an oblique incident wave")
    common(sp, grid=True)
    sp.add_argument("--fixed", action="store_true", help="hold the body fixed")

    sp = sub.add_parser("audit", help="energy identities and certificate for one solve")
    common(sp, grid=False)
    sp.add_argument("--omega", type=_positive, required=True)
    sp.add_argument("--restriction", choices=list(MOTIONS), default="full",
                    help="sway/heave/roll: radiation solve; full: freely floating scattering")
    sp.add_argument("--parity", choices=PARITIES, default="any")
    sp.add_argument("--john", action="store_true", help="add the John-transform residual (deep water)")
    return p


def _load(args, need_equilibrium=True):
    body, water = load_body(args.body)
    depth = water.depth if args.depth is None else args.depth
    g = water.gravity if args.gravity is None else args.gravity
    water = WaterConfig(depth, g)
    fb = FloatingBody.from_section(body, force=args.force or not need_equilibrium)
    return fb, water


def _grid(args):
    if args.omega is not None:
        return np.array([args.omega])
    if args.omega_min is None or args.omega_max is None:
        raise ConfigError("give --omega or both --omega-min and --omega-max")
    if args.n_omega < 1:
        raise ConfigError("--n-omega must be at least 1")
    if args.omega_max < args.omega_min:
        raise ConfigError("--omega-max is below --omega-min")
    return np.linspace(args.omega_min, args.omega_max, args.n_omega)


def _mesh_config(args):
    if args.modes < 0:
        raise ConfigError("--modes must be non-negative")
    if args.k < 0:
        raise ConfigError("--k must be non-negative")
    return MeshConfig(h_mesh=args.hmesh, x_trunc=args.xt, refinement=args.refinement)


def _check_grid(omegas, k, water):
    for w in omegas:
        make_wave_parameters(float(w), k, water.gravity, water.depth, modes=0)


def cmd_check_geometry(args):
    fb, water = _load(args, need_equilibrium=False)
    dec = fb.dec
    per_part, john = check_john_condition(dec)
    doc = {
        "n_parts": dec.n_parts,
        "immersed_parts": [p.tolist() for p in dec.immersed_parts],
        "waterplane": [list(i) for i in dec.waterplane],
        "free_surface": [list(i) for i in dec.free_surface],
        "centre_of_mass": list(dec.centre_of_mass),
        "draft": dec.draft,
        "extent": dec.extent,
        "john_condition": {"per_part": per_part, "all": john},
        "symmetric": fb.symmetric,
        "area_check": {
            "body": fb.body.area,
            "above": dec.body_area_above,
            "immersed": dec.immersed_area,
        },
        "depth": water.depth,
    }
    if dec.n_parts == 2 and fb.symmetric:
        doc["a"], doc["b"] = half_spacing(dec)
    Output(args, "check-geometry").json("geometry.json", doc)
    return EXIT_OK


def cmd_hydrostatics(args):
    fb, water = _load(args, need_equilibrium=False)
    m = fb.model
    report = fb.equilibrium
    doc = {
        "I_M": m.I_M, "I_M2": m.I_M2, "I_D": m.I_D, "I_Dx": m.I_Dx, "I_Dxx": m.I_Dxx, "I_By": m.I_By,
        "E": m.E, "K": m.K, "equilibrium": report.as_dict(), "gravity": water.gravity,
    }
    try:
        doc["lambda0"] = lambda0(m, water.gravity)
    except FloatwaveError as exc:
        doc["lambda0"] = None
        doc["lambda0_error"] = str(exc)
    out = Output(args, "hydrostatics")
    if out.dir is not None:
        out.json("hydrostatics.json", doc)
    else:
        rows = [("I_M", m.I_M), ("I_M2", m.I_M2), ("I_D", m.I_D), ("I_Dx", m.I_Dx),
                ("I_Dxx", m.I_Dxx), ("I_By", m.I_By), ("lambda0", doc["lambda0"]), ("stable", report.stable)]
        for name, v in rows:
            print(f"{name:>8}  {fmt(v) if v is not None else '-'}")
        out.json("hydrostatics.json", doc)
    return EXIT_OK


def cmd_bands(args):
    fb, water = _load(args, need_equilibrium=False)
    omegas = _grid(args)
    _check_grid(omegas, args.k, water)
    g = water.gravity
    try:
        lam = lambda0(fb.model, g)
    except FloatwaveError:
        lam = math.inf
    b = half_spacing(fb.dec)[1] if fb.dec.n_parts == 2 else None
    rows = []
    for w in omegas:
        p = make_wave_parameters(float(w), args.k, g, water.depth)
        if b is not None:
            info = band_classifier(p, b)
            band = (info.omega_minus, info.omega_plus, info.m)
        else:
            band = ("", "", "")
        rows.append((p.omega, p.nu, p.ell, p.ell0, p.omega ** 2 >= lam, *band))
    Output(args, "bands").csv("bands.csv", BAND_COLUMNS, rows)
    return EXIT_OK


BAND_COLUMNS = ("omega", "nu", "ell", "ell0", "Omega", "Omega_minus", "Omega_plus", "m")
SCATTER_COLUMNS = (
    "omega", "k", "nu", "ell0", "R_re", "R_im", "T_re", "T_im", "energy_defect",
    "z1_re", "z1_im", "z2_re", "z2_im", "z3_re", "z3_im", "haskind_defect", "error",
)
SOLUTION_COLUMNS = ("node", "x", "y", "re_phi", "im_phi")


def _workers():
    try:
        n = int(os.environ.get(WORKERS_ENV, "1"))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
    return max(1, n)


def cmd_scan(args):
    fb, water = _load(args)
    omegas = _grid(args)
    cfg = _mesh_config(args)
    _check_grid(omegas, args.k, water)
    n = _workers()
    kwargs = dict(depth=water.depth, motion=args.restriction, parity=args.parity, mesh_config=cfg, modes=args.modes)
    if n > 1 and len(omegas) > 1:
        with ProcessPoolExecutor(n) as ex:
            rows = trapped_mode_scan(fb, omegas, args.k, water.gravity, executor=ex, **kwargs)
    else:
        rows = trapped_mode_scan(fb, omegas, args.k, water.gravity, **kwargs)
    out = Output(args, "scan")
    out.csv("scan.csv", ScanRow.COLUMNS, [r.values() for r in rows])
    contradictions = [r.omega for r in rows if r.flag and r.covered]
    errors = [r.omega for r in rows if r.error]
    summary = {
        "rows": len(rows),
        "flags": sum(r.flag for r in rows),
        "covered_rows": sum(r.covered for r in rows),
        "contradictions": contradictions,
        "errors": errors,
    }
    if out.dir is not None:
        out.json("scan_summary.json", summary)
    if contradictions:
        print(f"certified rows with trapped-mode flags at omega = {contradictions}", file=sys.stderr)
        return EXIT_CONTRADICTION
    if errors:
        print(f"solver errors at omega = {errors}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_scatter(args):
    fb, water = _load(args)
    omegas = _grid(args)
    cfg = _mesh_config(args)
    _check_grid(omegas, args.k, water)
    g = water.gravity
    mesh = build_mesh(fb, water.depth, float(omegas.min()) ** 2 / g, cfg, symmetric=False)
    rows = []
    failed = False
    for w in omegas:
        p = make_wave_parameters(float(w), args.k, g, water.depth, modes=args.modes)
        try:
            s = solve_scattering(fb, p, mesh=mesh, fixed=args.fixed, modes=args.modes)
        except FloatwaveError as exc:
            failed = True
            rows.append((p.omega, p.k, p.nu, p.ell0) + ("",) * 12 + (f"{type(exc).__name__}: {exc}",))
            continue
        defect = abs(s.reflection) ** 2 + abs(s.transmission) ** 2 - 1
        hk = float(np.linalg.norm(s.exciting_force - s.haskind_force) / max(np.linalg.norm(s.exciting_force), 1e-300))
        z = s.z
        rows.append((
            p.omega, p.k, p.nu, s.phi.params.ell0, s.reflection.real, s.reflection.imag,
            s.transmission.real, s.transmission.imag, defect,
            z[0].real, z[0].imag, z[1].real, z[1].imag, z[2].real, z[2].imag, hk, "",
        ))
    Output(args, "scatter").csv("scatter.csv", SCATTER_COLUMNS, rows)
    return EXIT_SOLVER if failed else EXIT_OK


def _mesh_for(args, fb, water, nu, symmetric):
    if getattr(args, "mesh", None):
        mesh = read_mesh(args.mesh, fb.dec)
    else:
        mesh = build_mesh(fb, water.depth, nu, _mesh_config(args), symmetric=symmetric)
    if getattr(args, "write_mesh", None):
        Path(args.write_mesh).parent.mkdir(parents=True, exist_ok=True)
        write_mesh(mesh, args.write_mesh)
    return mesh


def cmd_solve(args):
    fb, water = _load(args)
    _mesh_config(args)
    g = water.gravity
    p = make_wave_parameters(args.omega, args.k, g, water.depth, modes=args.modes)
    if args.parity != "any" and not fb.symmetric:
        raise ConfigError("parity restriction needs a body symmetric about x = 0")
    mesh = _mesh_for(args, fb, water, p.nu, symmetric=fb.symmetric)
    rs = radiation_set(mesh, p, fb.dec, args.parity, args.modes)
    j = MOTIONS[args.restriction][0]
    sol = rs.solution(j)
    out = Output(args, "solve")
    rows = [(i + 1, x, y, v.real, v.imag) for i, ((x, y), v) in enumerate(zip(mesh.nodes.tolist(), sol.phi))]
    out.csv("solution.csv", SOLUTION_COLUMNS, rows)
    report = audit_solution(sol)
    summary = {
        "motion": args.restriction,
        "parity": args.parity,
        "omega": p.omega, "k": p.k, "nu": p.nu, "ell": p.ell, "ell0": rs.params.ell0,
        "depth_used": mesh.depth, "deep_truncation": rs.params.deep,
        "n_nodes": mesh.n_nodes, "n_triangles": len(mesh.triangles),
        "A_plus": sol.A_plus, "A_minus": sol.A_minus,
        "kinetic_energy": sol.kinetic_energy(), "potential_energy": sol.potential_energy(),
        "radiated_flux": sol.radiated_flux(),
        "added_mass": rs.added_mass, "damping": rs.damping,
        "audit": report.as_dict(),
    }
    if out.dir is not None:
        out.json("solution_summary.json", summary)
    return EXIT_OK


def cmd_audit(args):
    fb, water = _load(args)
    _mesh_config(args)
    g = water.gravity
    p = make_wave_parameters(args.omega, args.k, g, water.depth, modes=args.modes)
    cert = certify(fb, p, args.restriction, args.parity)
    if args.restriction == "full":
        mesh = build_mesh(fb, water.depth, p.nu, _mesh_config(args), symmetric=False)
        sol = solve_scattering(fb, p, mesh=mesh, modes=args.modes)
        report = audit_solution(sol)
        field = sol.phi
        extra = {"reflection": sol.reflection, "transmission": sol.transmission, "z": sol.z}
    else:
        if args.parity != "any" and not fb.symmetric:
            raise ConfigError("parity restriction needs a body symmetric about x = 0")
        mesh = build_mesh(fb, water.depth, p.nu, _mesh_config(args))
        rs = radiation_set(mesh, p, fb.dec, args.parity, args.modes)
        field = rs.solution(MOTIONS[args.restriction][0])
        report = audit_solution(field)
        extra = {"added_mass": rs.added_mass, "damping": rs.damping}
    doc = {"audit": report.as_dict(), "certificate": cert.as_dict(), **extra}
    if args.john:
        doc["john_transform_residual"] = john_transform_residual(field, field.params)["residual"]
    Output(args, "audit").json("audit.json", doc)
    return EXIT_OK


COMMANDS = {
    "check-geometry": cmd_check_geometry,
    "hydrostatics": cmd_hydrostatics,
    "bands": cmd_bands,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "scatter": cmd_scatter,
    "audit": cmd_audit,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    # k >= nu, cut-off and instability are problems with the requested setup
    except (ConfigError, InvalidGeometry, ObliqueAngleTooLarge, CutOff, Unstable, OSError) as exc:
        print(f"floatwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatwaveError as exc:
        print(f"floatwave: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
