import io

import numpy as np
import pytest

from arakelovlab.dec import DECOperators, Form1, wedge
from arakelovlab.families import flat_torus, genus2_mesh
from arakelovlab.mesh import (MeshError, UnsupportedGenusError, genus,
                              load_mesh, refine, save_mesh)
from arakelovlab.topology import (homology_basis, standard_symplectic,
                                  whitney_cup)

OCTAHEDRON = """VERTICES
0 1 0 0
1 -1 0 0
2 0 1 0
3 0 -1 0
4 0 0 1
5 0 0 -1
FACES
0 2 4
2 1 4
1 3 4
3 0 4
2 0 5
1 2 5
3 1 5
0 3 5
"""


def roundtrip(mesh):
    buf = io.StringIO()
    save_mesh(mesh, buf)
    buf.seek(0)
    return load_mesh(buf)


def test_torus_grid_counts():
    mesh = roundtrip(flat_torus(1j, 16))
    assert (mesh.n_vertices, mesh.n_edges, mesh.n_faces) == (256, 768, 512)
    assert genus(mesh) == 1


@pytest.mark.parametrize("style", ["octagon", "double-torus"])
def test_genus2_meshes(style):
    mesh = roundtrip(genus2_mesh(style, 1))
    assert genus(mesh) == 2
    assert mesh.euler_characteristic == -2


def test_byte_stream_and_path(tmp_path):
    path = tmp_path / "torus.mesh"
    save_mesh(flat_torus(1j, 4), str(path))
    a = load_mesh(str(path))
    b = load_mesh(io.BytesIO(path.read_bytes()))
    np.testing.assert_allclose(a.face_areas, b.face_areas)


def test_lengths_default_to_coordinates():
    mesh = load_mesh(io.StringIO(OCTAHEDRON))
    np.testing.assert_allclose(mesh.edge_lengths, np.sqrt(2))


def test_sphere_is_rejected():
    mesh = load_mesh(io.StringIO(OCTAHEDRON))
    with pytest.raises(UnsupportedGenusError):
        genus(mesh)


def test_dangling_edge_is_non_manifold():
    text = OCTAHEDRON.replace("0 3 5\n", "")
    with pytest.raises(MeshError, match="non-manifold edge"):
        load_mesh(io.StringIO(text))


def test_inconsistent_orientation():
    text = OCTAHEDRON.replace("0 3 5", "3 0 5")
    with pytest.raises(MeshError, match="orient"):
        load_mesh(io.StringIO(text))


def test_triangle_inequality_names_face():
    text = OCTAHEDRON + "EDGELENGTHS\n0 2 10\n"
    with pytest.raises(MeshError, match="face 0"):
        load_mesh(io.StringIO(text))


def test_refine_quadruples_faces():
    mesh = genus2_mesh("octagon", 1)
    fine = refine(mesh)
    assert fine.n_faces == 4 * mesh.n_faces
    assert genus(fine) == 2
    assert fine.length_mismatch() < 1e-12
    assert fine.total_area == pytest.approx(mesh.total_area, rel=1e-12)


@pytest.mark.parametrize("mesh", [flat_torus(1j, 8), genus2_mesh("octagon", 1),
                                  genus2_mesh("double-torus", 1)])
def test_homology_basis_is_symplectic(mesh):
    hb = homology_basis(mesh)
    g = genus(mesh)
    np.testing.assert_array_equal(hb.intersection, standard_symplectic(g))
    assert round(np.linalg.det(hb.intersection)) == 1
    np.testing.assert_array_equal(hb.cocycles @ hb.cycles.T,
                                  np.eye(2 * g, dtype=np.int64))
    # cycles are closed chains
    ops = DECOperators(mesh)
    assert np.all(ops.d0.T @ hb.cycles.T == 0)
    # the cup product of the dual cocycles inverts the intersection form
    cup = np.array([[whitney_cup(mesh, a, b) for b in hb.cocycles]
                    for a in hb.cocycles])
    np.testing.assert_allclose(cup, -np.linalg.inv(hb.intersection), atol=1e-12)


def test_d1_d0_vanishes_exactly():
    ops = DECOperators(genus2_mesh("octagon", 1))
    assert abs(ops.d1 @ ops.d0).max() == 0


def test_star_conventions():
    mesh = flat_torus(1j, 4)
    F = mesh.n_faces
    one, zero = np.ones(F, complex), np.zeros(F, complex)
    dx = Form1(0.5 * one, 0.5 * one)
    dy = Form1(-0.5j * one, 0.5j * one)
    dz = Form1(one, zero)
    np.testing.assert_allclose(dx.star().p, dy.p)
    np.testing.assert_allclose(dx.star().q, dy.q)
    np.testing.assert_allclose(dy.star().p, -dx.p)
    np.testing.assert_allclose(dz.star().p, -1j * dz.p)
    np.testing.assert_allclose(wedge(dx, dy), 1.0)


def test_laplacian_is_negative(rng):
    ops = DECOperators(genus2_mesh("double-torus", 2))
    for _ in range(20):
        f = rng.standard_normal(ops.mesh.n_vertices)
        assert -f @ (ops.stiffness @ f) <= 0


def test_d_of_function_is_closed(rng):
    mesh = genus2_mesh("octagon", 1)
    ops = DECOperators(mesh)
    u = rng.standard_normal(mesh.n_vertices)
    assert np.max(np.abs(ops.closedness(ops.d(u)))) < 1e-12
