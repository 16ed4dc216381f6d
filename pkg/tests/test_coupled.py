from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from floatwave.audits import audit_solution
from floatwave.coupled import (
    MOTIONS,
    FloatingBody,
    build_mesh,
    coupled_matrix,
    radiation_set,
    solve_scattering,
    trapped_mode_scan,
)
from floatwave.dispersion import make_wave_parameters
from floatwave.errors import ConfigError, NotInEquilibrium
from floatwave.mesh import MeshConfig

from conftest import G, rect_section


@pytest.fixture(scope="module")
def params():
    # nu h = 1, k = 0.5 nu
    return make_wave_parameters(math.sqrt(G), 0.5, G, 1.0)


@pytest.fixture(scope="module")
def rect_meshes(rect_fb):
    return {h: build_mesh(rect_fb, 1.0, 1.0, MeshConfig(h_mesh=h)) for h in (0.1, 0.05)}


@pytest.fixture(scope="module")
def rect_rad(rect_fb, rect_meshes, params):
    return {h: radiation_set(m, params, rect_fb.dec) for h, m in rect_meshes.items()}


def test_equilibrium_gate():
    heavy = rect_section(0.6)
    with pytest.raises(NotInEquilibrium):
        FloatingBody.from_section(heavy)
    fb = FloatingBody.from_section(heavy, force=True)
    assert not fb.equilibrium.stable


def test_radiation_parity(rect_rad, rect_meshes):
    rs = rect_rad[0.1]
    m = rect_meshes[0.1].mirror
    phi = rs.phi
    scale = np.abs(phi).max(axis=0)
    assert np.abs(phi[:, 1] - phi[m, 1]).max() <= 1e-10 * scale[1]
    assert np.abs(phi[:, 0] + phi[m, 0]).max() <= 1e-10 * scale[0]
    assert np.abs(phi[:, 2] + phi[m, 2]).max() <= 1e-10 * scale[2]


def test_heave_damping_matches_flux(rect_rad, params):
    rs = rect_rad[0.05]
    assert rs.damping[1, 1] > 0
    sol = rs.solution(1)
    # omega^2 B22 is the energy radiated by unit heave through the truncation lines
    assert params.omega ** 2 * rs.damping[1, 1] == pytest.approx(sol.radiated_flux(), rel=1e-8)


def test_added_mass_and_damping_structure(rect_rad):
    for rs in rect_rad.values():
        A, B = rs.added_mass, rs.damping
        assert np.linalg.norm(A - A.T) <= 1e-8 * np.linalg.norm(A)
        assert np.linalg.eigvalsh(0.5 * (B + B.T)).min() >= -1e-8 * np.linalg.norm(B)
        # heave added mass of a surface-piercing rectangle is positive
        assert A[1, 1] > 0 and A[0, 0] > 0


def test_added_mass_self_convergence(rect_rad):
    A1, A2 = rect_rad[0.1].added_mass, rect_rad[0.05].added_mass
    assert np.linalg.norm(A1 - A2) < 0.03 * np.linalg.norm(A2)
    assert np.all(np.abs(np.diag(A1) - np.diag(A2)) < 0.03 * np.abs(np.diag(A2)))


def test_coupled_matrix_block_structure(rect_rad, rect_fb, params):
    T, smin = coupled_matrix(rect_rad[0.1], rect_fb.model)
    assert T.shape == (3, 3)
    scale = np.linalg.norm(T)
    for i, j in ((0, 1), (1, 0), (1, 2), (2, 1)):
        assert abs(T[i, j]) <= 1e-10 * scale
    assert np.allclose(T @ np.zeros(3), 0)
    assert smin == pytest.approx(np.linalg.svd(T, compute_uv=False).min())
    expected = -params.omega ** 2 * (rect_fb.model.E + rect_rad[0.1].added_mass) + G * rect_fb.model.K \
        - 1j * params.omega ** 2 * rect_rad[0.1].damping
    assert np.allclose(T, expected, rtol=1e-12, atol=1e-12 * scale)


def test_restricted_coupled_matrix(rect_rad, rect_fb):
    full, _ = coupled_matrix(rect_rad[0.1], rect_fb.model)
    for motion, idx in MOTIONS.items():
        Tr, smin = coupled_matrix(rect_rad[0.1], rect_fb.model, motion=motion)
        assert np.array_equal(Tr, full[np.ix_(idx, idx)])
        if len(idx) == 1:
            assert smin == pytest.approx(abs(Tr[0, 0]))


def test_frozen_body_limit(rect_rad, rect_fb):
    model = rect_fb.model
    ratios = []
    for c in (1e2, 1e4, 1e6):
        heavy = dataclasses.replace(model, E=c * model.E)
        T, smin = coupled_matrix(rect_rad[0.1], heavy)
        ratios.append(smin / np.linalg.norm(T, 2))
    e = np.diag(model.E)
    assert ratios[-1] == pytest.approx(e.min() / e.max(), rel=1e-5)
    # with an isotropic inertia the motion term dominates completely
    iso = dataclasses.replace(model, E=1e6 * np.eye(3))
    T, smin = coupled_matrix(rect_rad[0.1], iso)
    assert smin / np.linalg.norm(T, 2) == pytest.approx(1.0, abs=1e-5)


def test_sway_restriction_orthogonality(cat_fb):
    p = make_wave_parameters(math.sqrt(1.2 * G), 0.4, G)
    mesh = build_mesh(cat_fb, math.inf, p.nu, MeshConfig(h_mesh=0.2))
    rs = radiation_set(mesh, p, cat_fb.dec, parity="odd")
    # odd potential against the even heave normal vanishes by parity
    assert abs(rs.reaction[1, 0]) <= 1e-12 * abs(rs.reaction[0, 0])
    assert abs(rs.reaction[1, 2]) <= 1e-12 * abs(rs.reaction[2, 2])


def test_scattering_empty_domain(params):
    s = solve_scattering(None, params, mesh_config=MeshConfig(h_mesh=0.1))
    assert abs(s.reflection) <= 1e-8
    assert abs(abs(s.transmission) - 1) <= 1e-8


def test_scattering_energy_and_haskind(rect_fb, rect_meshes, params):
    s = solve_scattering(rect_fb, params, mesh=rect_meshes[0.05])
    assert abs(abs(s.reflection) ** 2 + abs(s.transmission) ** 2 - 1) <= 0.01
    X, H = s.exciting_force, s.haskind_force
    assert np.linalg.norm(X - H) <= 0.02 * np.linalg.norm(X)
    # heave response of a symmetric body excited from one side
    assert abs(s.z[1]) > 0
    fixed = solve_scattering(rect_fb, params, mesh=rect_meshes[0.05], fixed=True)
    assert np.all(fixed.z == 0)
    assert abs(abs(fixed.reflection) ** 2 + abs(fixed.transmission) ** 2 - 1) <= 0.01


def test_scattering_energy_improves_under_refinement(rect_fb, rect_meshes, params):
    defects = [
        abs(abs(s.reflection) ** 2 + abs(s.transmission) ** 2 - 1)
        for s in (solve_scattering(rect_fb, params, mesh=rect_meshes[h]) for h in (0.1, 0.05))
    ]
    assert defects[1] < defects[0] / 2


def test_normal_incidence_continuity(rect_fb, rect_meshes):
    a = solve_scattering(rect_fb, make_wave_parameters(math.sqrt(G), 0.0, G, 1.0), mesh=rect_meshes[0.1])
    b = solve_scattering(rect_fb, make_wave_parameters(math.sqrt(G), 1e-12, G, 1.0), mesh=rect_meshes[0.1])
    assert abs(a.reflection - b.reflection) <= 1e-8
    assert abs(a.transmission - b.transmission) <= 1e-8
    assert np.abs(a.z - b.z).max() <= 1e-8 * np.abs(a.z).max()


def test_coupled_equipartition(rect_fb, rect_meshes, params):
    s = solve_scattering(rect_fb, params, mesh=rect_meshes[0.05])
    report = audit_solution(s)
    assert report.equipartition_residual <= 0.02


def test_scan_rows_and_continuity(rect_fb):
    # grid step below 0.005 sqrt(g / b0)
    b0 = rect_fb.dec.draft
    step = 0.005 * math.sqrt(G / b0)
    w0 = math.sqrt(2.2 * G)
    omegas = w0 + step * np.arange(8)
    rows = trapped_mode_scan(rect_fb, omegas, 1.0, G, mesh_config=MeshConfig(h_mesh=0.2))
    assert [r.omega for r in rows] == list(omegas)
    assert not any(r.flag for r in rows)
    assert all(r.certificate == "Corollary1" and r.covered for r in rows)
    assert all(not r.error for r in rows)
    s = np.array([r.sigma_min for r in rows])
    assert np.all(s > 0)
    assert np.all(np.maximum(s[1:] / s[:-1], s[:-1] / s[1:]) < 10)
    assert all(r.equipartition_residual < 0.05 for r in rows)


def test_scan_is_order_preserving_with_executor(rect_fb):
    omegas = np.sqrt(G * np.array([3.0, 2.1, 2.6]))
    kw = dict(mesh_config=MeshConfig(h_mesh=0.25))
    serial = trapped_mode_scan(rect_fb, omegas, 0.5, G, **kw)
    with ThreadPoolExecutor(3) as ex:
        pooled = trapped_mode_scan(rect_fb, omegas, 0.5, G, executor=ex, **kw)
    assert [r.values() for r in serial] == [r.values() for r in pooled]


def test_scan_rejects_bad_restrictions(rect_fb):
    with pytest.raises(ConfigError):
        trapped_mode_scan(rect_fb, [5.0], 0.5, G, motion="pitch")
    with pytest.raises(ConfigError):
        trapped_mode_scan(rect_fb, [5.0], 0.5, G, parity="both")
    lopsided = FloatingBody.from_section(rect_section().translated(0.2))
    with pytest.raises(ConfigError):
        trapped_mode_scan(lopsided, [5.0], 0.5, G, parity="odd")


def test_scan_records_errors_and_continues(rect_fb):
    omegas = [math.sqrt(2.5 * G), math.sqrt(3.0 * G)]
    mesh = build_mesh(rect_fb, math.inf, 2.5, MeshConfig(h_mesh=0.25))
    # the second frequency is not representable on a mesh of a different depth
    rows = trapped_mode_scan(rect_fb, omegas, 0.5, G, depth=1.0, mesh=mesh)
    assert len(rows) == 2
    assert all(r.error.startswith("ConfigError") for r in rows)
