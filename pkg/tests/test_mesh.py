from __future__ import annotations

import numpy as np
import pytest

from floatwave.errors import ConfigError
from floatwave.geometry import catamaran, split_at_waterline
from floatwave.mesh import MeshConfig, Tag, generate_mesh, read_mesh, unique_edges, vertical_trace, write_mesh

from conftest import rect_section


@pytest.fixture(scope="module")
def rect_mesh():
    return generate_mesh(split_at_waterline(rect_section()), 1.5, MeshConfig(h_mesh=0.1), symmetric=True)


def _check_invariants(mesh):
    p = mesh.nodes[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)
    assert mesh.min_angle() > 10.0
    # each boundary edge has exactly one adjacent triangle
    e = np.sort(np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    lookup = {tuple(k): c for k, c in zip(*np.unique(e, axis=0, return_counts=True))}
    for a, b in np.sort(mesh.boundary_edges, axis=1):
        assert lookup[(a, b)] == 1
    assert (counts == 1).sum() == len(mesh.boundary_edges)
    ends = mesh.nodes[mesh.boundary_edges]
    tags = mesh.tags
    assert np.all(ends[tags == Tag.FREE_SURFACE][..., 1] == 0.0)
    assert np.all(ends[tags == Tag.BOTTOM][..., 1] == -mesh.depth)
    assert np.all(ends[tags == Tag.TRUNC_LEFT][..., 0] == -mesh.x_trunc)
    assert np.all(ends[tags == Tag.TRUNC_RIGHT][..., 0] == mesh.x_trunc)


def test_structured_strip():
    mesh = generate_mesh(None, 1.0, MeshConfig(h_mesh=0.1, x_trunc=3.0))
    assert len(mesh.triangles) == 2 * 60 * 10
    _check_invariants(mesh)
    counts = {t: int((mesh.tags == t).sum()) for t in Tag}
    assert counts == {Tag.FREE_SURFACE: 60, Tag.WETTED: 0, Tag.BOTTOM: 60, Tag.TRUNC_LEFT: 10, Tag.TRUNC_RIGHT: 10}
    assert mesh.mirror is not None


def test_rectangle_grading(rect_mesh):
    _check_invariants(rect_mesh)
    e = unique_edges(rect_mesh.triangles)
    L = np.linalg.norm(rect_mesh.nodes[e[:, 0]] - rect_mesh.nodes[e[:, 1]], axis=1)
    assert L.min() >= 0.1 / 4 - 1e-12
    assert L.max() <= 0.1 + 1e-12
    # finer near the waterline corners than far away
    mid = rect_mesh.nodes[e].mean(axis=1)
    near = np.hypot(np.abs(mid[:, 0]) - 1.0, mid[:, 1]) < 0.1
    far = np.abs(mid[:, 0]) > 2.5
    assert L[near].mean() < 0.8 * L[far].mean()


def test_default_truncation_and_tags(rect_mesh):
    assert rect_mesh.x_trunc == pytest.approx(1.0 + 2 * 1.5)
    wet = rect_mesh.edges_with(Tag.WETTED)
    assert len(wet) > 0
    assert np.all(rect_mesh.wetted_segment[rect_mesh.tags == Tag.WETTED] >= 0)
    assert np.all(rect_mesh.wetted_segment[rect_mesh.tags != Tag.WETTED] == -1)


def test_mirror_map(rect_mesh):
    m = rect_mesh.mirror
    assert m is not None
    assert np.array_equal(m[m], np.arange(rect_mesh.n_nodes))
    assert np.array_equal(rect_mesh.nodes[m], rect_mesh.nodes * [-1.0, 1.0])


def test_catamaran_mesh():
    mesh = generate_mesh(split_at_waterline(catamaran()), 3.0, MeshConfig(h_mesh=0.15), symmetric=True)
    _check_invariants(mesh)
    assert mesh.mirror is not None
    # the gap between the hulls carries free surface
    fs = mesh.nodes[mesh.edges_with(Tag.FREE_SURFACE)].reshape(-1, 2)
    assert np.any(np.abs(fs[:, 0]) < 1.0)


def test_round_trip(tmp_path, rect_mesh):
    path = tmp_path / "rect.mesh"
    write_mesh(rect_mesh, path)
    back = read_mesh(path, split_at_waterline(rect_section()))
    assert np.array_equal(back.nodes, rect_mesh.nodes)
    assert np.array_equal(back.triangles, rect_mesh.triangles)
    assert np.array_equal(back.boundary_edges, rect_mesh.boundary_edges)
    assert np.array_equal(back.tags, rect_mesh.tags)
    assert back.depth == rect_mesh.depth and back.x_trunc == rect_mesh.x_trunc
    assert np.array_equal(back.wetted_segment, rect_mesh.wetted_segment)
    assert path.read_text().startswith("NODES ")


def test_bad_mesh_requests(tmp_path):
    dec = split_at_waterline(rect_section())
    with pytest.raises(ConfigError):
        generate_mesh(dec, 0.4)
    with pytest.raises(ConfigError):
        generate_mesh(dec, 1.0, MeshConfig(x_trunc=2.0))
    with pytest.raises(ConfigError):
        MeshConfig(h_mesh=-1.0)
    bad = tmp_path / "bad.mesh"
    bad.write_text("NODES 1\n1 0 0\nTRIANGLES 0\n")
    with pytest.raises(ConfigError):
        read_mesh(bad)


def test_vertical_trace_is_exact_for_linear_fields(rect_mesh):
    f = 2.0 * rect_mesh.nodes[:, 0] - 3.0 * rect_mesh.nodes[:, 1] + 0.5
    for x in (-3.3, -1.7, 2.05):
        y, v = vertical_trace(rect_mesh, f, x)
        assert y[0] == pytest.approx(-1.5) and y[-1] == pytest.approx(0.0)
        assert np.allclose(v, 2.0 * x - 3.0 * y + 0.5, atol=1e-12)
