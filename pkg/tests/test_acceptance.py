"""Acceptance gate: one PASS/FAIL line per criterion, tolerances pinned."""
from __future__ import annotations

import csv
import json
import math
import time

import numpy as np
import pytest

from floatwave.audits import audit_solution
from floatwave.cli import main
from floatwave.coupled import FloatingBody, build_mesh, radiation_set, solve_scattering, trapped_mode_scan
from floatwave.dispersion import classify_ell_b, make_wave_parameters, propagating_root
from floatwave.field import assemble, l2_error, solve
from floatwave.geometry import BodySection, catamaran, split_at_waterline
from floatwave.hydrostatics import compute_matrices, lambda0
from floatwave.mesh import MeshConfig, Tag, generate_mesh

from conftest import G, rect_section


@pytest.fixture
def gate(capsys):
    def record(number, title, checks, elapsed=None, limit=None):
        ok = all(passed for _, passed in checks)
        if limit is not None:
            ok = ok and elapsed < limit
        detail = "; ".join(text for text, _ in checks)
        timing = f"; {elapsed:.2f}s < {limit:g}s" if limit is not None else ""
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}{timing}")
        assert ok, f"criterion {number} failed: {detail}"
    return record


def test_criterion_01_hydrostatics(gate):
    t0 = time.perf_counter()
    body = rect_section()
    m = compute_matrices(body, split_at_waterline(body))
    lam = lambda0(m, G)
    elapsed = time.perf_counter() - t0
    got = (m.I_M, m.I_M2, m.I_D, m.I_Dxx, m.I_By)
    want = (1.0, 5 / 12, 2.0, 2 / 3, -0.25)
    err = max(abs(a - b) for a, b in zip(got, want))
    lam_err = abs(lam - 2 * G) / (2 * G)
    gate(1, "hydrostatics oracle", [
        (f"max integral error {err:.1e} <= 1e-12", err <= 1e-12),
        (f"lambda0 rel error {lam_err:.1e} <= 1e-12", lam_err <= 1e-12),
    ], elapsed, 1.0)


def _bisection(nu, h):
    lo, hi = nu, nu / math.tanh(nu * h)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.tanh(mid * h) < nu:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_02_dispersion(gate):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    worst = 0.0
    for nu, h in rng.uniform(0.1, 10.0, size=(100, 2)):
        k0 = propagating_root(nu, h)
        worst = max(worst, abs(k0 * math.tanh(k0 * h) - nu) / nu)
    root = propagating_root(1.0, 1.0)
    oracle = _bisection(1.0, 1.0)
    elapsed = time.perf_counter() - t0
    gate(2, "dispersion", [
        (f"max residual / nu {worst:.1e} <= 1e-12", worst <= 1e-12),
        (f"|root - bisection| {abs(root - oracle):.1e} <= 1e-9", abs(root - oracle) <= 1e-9),
        (f"|root - 1.199678640| {abs(root - 1.199678640):.1e} <= 1e-9", abs(root - 1.199678640) <= 1e-9),
    ], elapsed, 1.0)


def test_criterion_03_manufactured_solution(gate):
    t0 = time.perf_counter()
    nu, k, ell = 1.0, 0.6, 0.8
    exact = lambda x, y: np.exp(nu * y) * np.cos(ell * x)

    def dn(pts, n):
        x, y = pts[:, 0], pts[:, 1]
        return np.exp(nu * y) * (-ell * np.sin(ell * x) * n[:, 0] + nu * np.cos(ell * x) * n[:, 1])

    params = make_wave_parameters(math.sqrt(nu * G), k, G, 1.0)
    errs = []
    for h in (0.2, 0.1, 0.05):
        mesh = generate_mesh(None, 1.0, MeshConfig(h_mesh=h, x_trunc=2.0))
        data = {Tag.BOTTOM: dn, Tag.TRUNC_LEFT: dn, Tag.TRUNC_RIGHT: dn}
        errs.append(l2_error(mesh, solve(assemble(mesh, params, neumann=data, dtn=False)).phi, exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    elapsed = time.perf_counter() - t0
    gate(3, "manufactured solution", [
        (f"L2 errors {', '.join(f'{e:.2e}' for e in errs)}", True),
        (f"orders {orders[0]:.2f}, {orders[1]:.2f} >= 1.8", bool(np.all(orders >= 1.8))),
    ], elapsed, 60.0)


def _heave(h_mesh, fb, params):
    mesh = build_mesh(fb, params.depth, params.nu, MeshConfig(h_mesh=h_mesh))
    return radiation_set(mesh, params, fb.dec).solution(1)


def test_criterion_04_energy_flux(gate, rect_fb):
    t0 = time.perf_counter()
    params = make_wave_parameters(math.sqrt(G), 0.5, G, 1.0)
    r = {h: audit_solution(_heave(h, rect_fb, params)).energy_flux_residual for h in (0.1, 0.05)}
    elapsed = time.perf_counter() - t0
    gate(4, "energy-flux identity (heaving rectangle)", [
        (f"residual {r[0.05]:.2e} <= 0.02 at h_mesh 0.05", r[0.05] <= 0.02),
        (f"decreasing {r[0.1]:.2e} -> {r[0.05]:.2e}", r[0.05] < r[0.1]),
    ], elapsed, 60.0)


def test_criterion_05_equipartition(gate, rect_fb):
    t0 = time.perf_counter()
    params = make_wave_parameters(math.sqrt(G), 0.5, G, 1.0)
    mesh = build_mesh(rect_fb, 1.0, 1.0, MeshConfig(h_mesh=0.05))
    free = audit_solution(solve_scattering(rect_fb, params, mesh=mesh)).equipartition_residual
    fixed = audit_solution(solve_scattering(rect_fb, params, mesh=mesh, fixed=True)).equipartition_residual
    elapsed = time.perf_counter() - t0
    gate(5, "equipartition", [
        (f"coupled residual {free:.2e} <= 0.02", free <= 0.02),
        (f"fixed-body residual {fixed:.2e} <= 0.02", fixed <= 0.02),
    ], elapsed, 60.0)


def test_criterion_06_reciprocity(gate, rect_fb, cat_fb):
    lopsided = FloatingBody.from_section(
        BodySection.uniform(np.array([[-1.0, -0.7], [0.6, -0.4], [1.2, 0.5], [-0.8, 0.6]]), 0.45), force=True
    )
    cases = [
        (rect_fb, make_wave_parameters(math.sqrt(G), 0.5, G, 1.0)),
        (cat_fb, make_wave_parameters(math.sqrt(2 * G), 0.7, G)),
        (lopsided, make_wave_parameters(math.sqrt(1.5 * G), 0.3, G, 2.0)),
    ]
    asym, neg = 0.0, 0.0
    for fb, params in cases:
        mesh = build_mesh(fb, params.depth, params.nu, MeshConfig(h_mesh=0.1), symmetric=False)
        rs = radiation_set(mesh, params, fb.dec)
        A, B = rs.added_mass, rs.damping
        asym = max(asym, np.linalg.norm(A - A.T) / np.linalg.norm(A))
        neg = max(neg, -np.linalg.eigvalsh(0.5 * (B + B.T)).min() / np.linalg.norm(B))
    gate(6, "reciprocity and damping", [
        (f"max ||A - A^T|| / ||A|| {asym:.1e} <= 1e-8", asym <= 1e-8),
        (f"min eig(B) / ||B|| {-neg:.1e} >= -1e-8", neg <= 1e-8),
    ])


def test_criterion_07_rectangle_scan(gate, tmp_path):
    body = tmp_path / "rect.json"
    body.write_text(json.dumps({
        "contour": [[-1, -0.5], [1, -0.5], [1, 0.5], [-1, 0.5]],
        "density_regions": [{"polygon": [[-1, -0.5], [1, -0.5], [1, 0.5], [-1, 0.5]], "rho": 0.5}],
        "depth": "infinite", "gravity": G,
    }))
    t0 = time.perf_counter()
    # omega^2 in [2g, 4g]: property Omega holds throughout (lambda0 = 2g)
    code = main([
        "scan", "--body", str(body), "--omega-min", repr(math.sqrt(2 * G)), "--omega-max", repr(math.sqrt(4 * G)),
        "--n-omega", "200", "--k", "1", "--hmesh", "0.1", "--out", str(tmp_path / "scan"),
    ])
    elapsed = time.perf_counter() - t0
    with open(tmp_path / "scan" / "scan.csv") as f:
        rows = list(csv.DictReader(ln for ln in f if not ln.startswith("#")))
    flags = sum(r["flag"] == "true" for r in rows)
    covered = sum(r["certificate"] == "Corollary1" for r in rows)
    gate(7, "single-part rectangle sweep", [
        (f"{len(rows)} rows", len(rows) == 200),
        (f"{covered} rows certified by the single-part result", covered == 200),
        (f"{flags} flags", flags == 0),
        (f"exit code {code}", code == 0),
    ], elapsed, 600.0)


# (motion, parity, expected statement, band): Omega_plus with m = 0, Omega_minus with m = 1
CATAMARAN_CASES = [
    ("sway", "odd", "Prop3", "minus"),
    ("sway", "even", "Prop4", "plus"),
    ("heave", "odd", "Prop5", "minus"),
    ("heave", "even", "Prop6", "plus"),
    ("roll", "even", "Prop7", "plus"),
    ("roll", "odd", "Prop8", "minus"),
]


def _band_omegas(band, k, b, n=50, margin=0.05):
    lo, hi = (math.pi / 2, math.pi) if band == "plus" else (math.pi, 1.5 * math.pi)
    ell = np.linspace(lo + margin, hi - margin, n) / b
    return np.sqrt(G * np.sqrt(ell ** 2 + k ** 2))


def test_criterion_08_catamaran_propositions(gate, cat_fb):
    t0 = time.perf_counter()
    k, b = 0.5, 1.0
    checks = []
    meshes = {}
    for motion, parity, name, band in CATAMARAN_CASES:
        omegas = _band_omegas(band, k, b)
        nu_min = float(omegas.min()) ** 2 / G
        if band not in meshes:
            meshes[band] = build_mesh(cat_fb, math.inf, nu_min, MeshConfig(h_mesh=0.1))
        rows = trapped_mode_scan(cat_fb, omegas, k, G, motion=motion, parity=parity, mesh=meshes[band])
        certified = sum(r.certificate == name for r in rows)
        flags = sum(r.flag for r in rows)
        errors = sum(bool(r.error) for r in rows)
        checks.append((f"{name} {motion}/{parity}: {certified}/50 certified, {flags} flags, {errors} errors",
                       certified == 50 and flags == 0 and errors == 0))
    elapsed = time.perf_counter() - t0
    # uncovered control: coupled sway-roll has no statement; reported only
    rows = trapped_mode_scan(cat_fb, _band_omegas("minus", k, b, n=10), k, G, motion="full", parity="odd",
                             mesh=meshes["minus"])
    checks.append((f"uncovered full/odd sweep: {sum(r.flag for r in rows)} flags (informational)", True))
    gate(8, "two-part symmetric catamaran sweeps", checks, elapsed, 1800.0)


def _brute_bands(x):
    top = int(x / math.pi) + 2
    minus = any(math.pi * m <= x <= math.pi * (2 * m + 1) / 2 for m in range(top))
    plus = any(math.pi * (2 * m + 1) / 2 <= x <= math.pi * (m + 1) for m in range(top))
    return minus, plus


def test_criterion_09_band_classifier(gate):
    rng = np.random.default_rng(99)
    xs = list(rng.uniform(0, 30, 960)) + [j * math.pi / 2 for j in range(40)]
    mismatches = complement = 0
    for x in xs:
        info = classify_ell_b(x)
        mismatches += (info.omega_minus, info.omega_plus) != _brute_bands(x)
        complement += not (info.omega_minus or info.omega_plus)
    gate(9, "band classifier", [
        (f"{len(xs)} values, {mismatches} disagreements with the inequalities", len(xs) == 1000 and mismatches == 0),
        (f"{complement} values in neither band", complement == 0),
    ])


def test_criterion_10_parity(gate, cat_fb):
    params = make_wave_parameters(math.sqrt(2 * G), 0.7, G)
    mesh = build_mesh(cat_fb, math.inf, params.nu, MeshConfig(h_mesh=0.1))
    m = mesh.mirror
    rs = radiation_set(mesh, params, cat_fb.dec)
    sway, heave = rs.phi[:, 0], rs.phi[:, 1]
    odd = np.abs(sway + sway[m]).max() / np.abs(sway).max()
    even = np.abs(heave - heave[m]).max() / np.abs(heave).max()
    gate(10, "parity of the catamaran radiation potentials", [
        (f"mirror-symmetric mesh: {m is not None}", m is not None),
        (f"sway odd defect {odd:.1e} <= 1e-10", odd <= 1e-10),
        (f"heave even defect {even:.1e} <= 1e-10", even <= 1e-10),
    ])


def test_criterion_11_scattering(gate, rect_fb):
    params = make_wave_parameters(math.sqrt(G), 0.5, G, 1.0)
    empty = solve_scattering(None, params, mesh_config=MeshConfig(h_mesh=0.1))
    mesh = build_mesh(rect_fb, 1.0, 1.0, MeshConfig(h_mesh=0.05))
    body = solve_scattering(rect_fb, params, mesh=mesh)
    defect = abs(abs(body.reflection) ** 2 + abs(body.transmission) ** 2 - 1)
    gate(11, "scattering sanity", [
        (f"empty |R| {abs(empty.reflection):.1e} <= 1e-8", abs(empty.reflection) <= 1e-8),
        (f"empty ||T| - 1| {abs(abs(empty.transmission) - 1):.1e} <= 1e-8", abs(abs(empty.transmission) - 1) <= 1e-8),
        (f"rectangle ||R|^2 + |T|^2 - 1| {defect:.2e} <= 0.01", defect <= 0.01),
    ])
