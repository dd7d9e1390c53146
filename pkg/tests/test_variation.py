import itertools

import numpy as np
import pytest

from arakelovlab import variation as V
from arakelovlab.dec import Form1
from arakelovlab.families import flat_torus, genus2_mesh, torus_family
from arakelovlab.hodge import harmonic_basis
from arakelovlab.invariants import Surface
from arakelovlab.mesh import MeshError


def l2(values, mesh):
    A = mesh.face_areas.reshape((-1,) + (1,) * (values.ndim - 1))
    return np.sqrt(np.sum(A * np.abs(values) ** 2))


def find_modular(tau, target):
    """Integer (a, b, c, d) with ad - bc = 1 and (a tau + b)/(c tau + d) = target."""
    for a, b, c, d in itertools.product(range(-2, 3), repeat=4):
        if a * d - b * c == 1 and abs((a * tau + b) / (c * tau + d) - target) < 1e-9:
            return a, b, c, d
    raise AssertionError("no SL2(Z) element found")


# -- Beltrami differentials ------------------------------------------------

def test_beltrami_validation():
    with pytest.raises(V.BeltramiError):
        V.Beltrami(np.array([0.5, 1.0]))
    with pytest.raises(V.BeltramiError):
        V.Beltrami(np.zeros((2, 2)))
    with pytest.raises(V.BeltramiError):
        V.Beltrami(np.zeros(3), mask=np.ones(2, bool))


def test_beltrami_mask_zeroes_values():
    mu = V.Beltrami(np.full(4, 0.2 + 0.1j), mask=np.array([1, 0, 1, 0], bool))
    np.testing.assert_array_equal(np.asarray(mu), [0.2 + 0.1j, 0, 0.2 + 0.1j, 0])
    np.testing.assert_array_equal(np.asarray(2 * mu), 2 * np.asarray(mu))


def test_random_beltrami_excludes_ring(octagon, rng):
    p0 = octagon.mesh.basepoint
    mu = V.random_beltrami(octagon, rng, 0.1, exclude=(p0, 3))
    near = octagon.mesh.faces_near(p0, 3)
    assert np.all(np.asarray(mu)[near] == 0)
    assert np.max(np.abs(mu)) == pytest.approx(0.1)


# -- the S operator and the star variation ---------------------------------

def test_S_of_zero_and_type(octagon, rng):
    w = octagon.omega
    zero = V.S_operator(np.zeros(octagon.mesh.n_faces), w)
    assert np.max(np.abs(zero.p)) == 0 and np.max(np.abs(zero.q)) == 0
    mu = V.random_beltrami(octagon, rng)
    s = V.S_operator(mu, octagon.omega_p)
    assert np.max(np.abs(s.p)) == 0
    assert np.max(np.abs(s.q)) > 0


@pytest.mark.parametrize("name", ["torus", "octagon"])
def test_star_variation_identity(name, request, rng):
    s = request.getfixturevalue(name)
    mu = np.asarray(V.random_beltrami(s, rng))
    ops = s.ops
    for _ in range(3):
        theta = ops.d(rng.standard_normal(s.mesh.n_vertices))
        theta = theta + s.basis.xi.contract("k,k->", rng.standard_normal(2 * s.g))
        phi = s.basis.xi.contract("k,k->", rng.standard_normal(2 * s.g))
        lhs, rhs = V.star_variation_identity(s.mesh, theta, phi, mu)
        scale = np.sum(s.mesh.face_areas * np.abs(theta.p * phi.p * mu))
        assert abs(lhs - rhs) < 1e-8 * scale
        assert abs(lhs.imag) < 1e-12 * scale


# -- deformations ----------------------------------------------------------

def test_deform_at_zero_is_identity(octagon, rng):
    mu = V.random_beltrami(octagon, rng)
    assert V.deform(octagon.mesh, mu, 0.0) is octagon.mesh


def test_deform_rejects_degenerate_faces(torus):
    mu = np.full(torus.mesh.n_faces, 0.9)
    with pytest.raises(MeshError):
        V.deform(torus.mesh, mu, 2.0)


def test_induced_dilatation(double_torus, rng):
    mu = V.random_beltrami(double_torus, rng, 0.3)
    t = 1e-3
    k = V.induced_dilatation(double_torus.mesh, V.deform(double_torus.mesh, mu, t))
    assert np.max(np.abs(k / t - np.asarray(mu))) < 1e-3 * 0.3


def test_constant_beltrami_shifts_tau():
    tau, n, mu0, t = 0.3 + 1.1j, 8, 0.2 - 0.1j, 1e-4
    base = flat_torus(tau, n)
    tau_c = harmonic_basis(base).period_matrix()[0, 0]
    a, b, c, d = find_modular(tau, tau_c)

    def lattice_tau(step):
        m = V.deform(base, np.full(base.n_faces, mu0), step)
        tc = harmonic_basis(m).period_matrix()[0, 0]
        return (d * tc - b) / (-c * tc + a)

    fd = (lattice_tau(t) - lattice_tau(-t)) / (2 * t)
    assert abs(fd - mu0 * (np.conj(tau) - tau)) < 1e-6


def test_torus_family_tracks_tau():
    fam = torus_family(1j, 1.0, 8)
    assert fam.mesh(0.0).n_vertices == 64
    for t in (0.0, 0.1, 0.25):
        basis = harmonic_basis(fam.mesh(t))
        tau_c = basis.period_matrix()[0, 0]
        a, b, c, d = find_modular(fam.tau(t), tau_c)
        assert abs((a * fam.tau(t) + b) / (c * fam.tau(t) + d) - tau_c) < 1e-4
        assert abs(Surface(fam.mesh(t)).a_g()) < 1e-9
    with pytest.raises(MeshError):
        torus_family(1j, -1j, 8).tau(2.0)


def test_flat_torus_defects_and_volume():
    mesh = flat_torus(0.3 + 1.1j, 8)
    assert np.max(np.abs(mesh.cone_defects())) < 1e-12
    s = Surface(mesh)
    assert np.sum(mesh.face_areas * s.B) == pytest.approx(1.0, abs=1e-12)


# -- first variations --------------------------------------------------------

def test_omega1_dot_vanishes(torus, octagon):
    for s in (torus, octagon):
        dot = V.omega1_dot(s, np.zeros(s.mesh.n_faces))
        assert np.max(np.abs(dot.p)) == 0


def test_omega1_dot_constant_beltrami_on_flat_torus(torus):
    # the harmonic forms of a flat torus stay constant in lattice coordinates
    dot = V.omega1_dot(torus, np.full(torus.mesh.n_faces, 0.1 + 0.05j))
    assert np.max(np.abs(dot.p)) < 1e-4


def test_omega1_dot_matches_differences(double_torus, rng):
    mu = V.random_beltrami(double_torus, rng)
    rep = V.check_omega1_dot(double_torus, mu, 1e-2)
    assert rep.status == "pass"
    assert rep.rel_error < 1e-6


def test_h_dot_precondition(octagon, rng):
    mu = V.random_beltrami(octagon, rng)
    with pytest.raises(V.BeltramiError):
        V.h_dot(octagon, mu)


def test_a_g_dot_vanishes_on_torus(torus, rng):
    assert abs(V.a_g_dot(torus, V.random_beltrami(torus, rng))) < 1e-9


# -- ℓ, L, c and the bilinear forms ---------------------------------------

def test_ell_of_zero(double_torus):
    ell, L, c = V.ell_L_c(double_torus, np.zeros(double_torus.mesh.n_faces))
    assert np.max(np.abs(ell)) == 0
    assert np.max(np.abs(L)) == 0
    assert np.max(np.abs(c)) == 0


def test_dbar_ell_weak_form(double_torus, rng):
    s = double_torus
    lam = np.asarray(V.random_beltrami(s, rng))
    ell, _, _ = V.ell_L_c(s, lam)
    wl = Form1(np.zeros_like(s.omega_p.p), s.omega_p.p * lam[:, None])
    r = s.ops.d(ell).q - (wl.q - s.basis.harmonic_projection(wl).q)
    A = s.mesh.face_areas[:, None]
    for _ in range(3):
        dv = s.ops.d(rng.standard_normal(s.mesh.n_vertices)).p[:, None]
        scale = np.sum(A * np.abs(wl.q * dv))
        assert np.max(np.abs(np.sum(A * r * dv, axis=0))) < 1e-6 * scale


def test_dbar_ell_converges():
    errors = []
    for res in (2, 4):
        s = Surface(genus2_mesh("double-torus", res))
        lam = np.asarray(V.random_beltrami(s, np.random.default_rng(0)))
        ell, _, _ = V.ell_L_c(s, lam)
        wl = Form1(np.zeros_like(s.omega_p.p), s.omega_p.p * lam[:, None])
        r = s.ops.d(ell).q - (wl.q - s.basis.harmonic_projection(wl).q)
        errors.append(l2(r, s.mesh) / l2(wl.q, s.mesh))
    assert errors[1] < errors[0]


def test_L_brute_force(double_torus, rng):
    s = double_torus
    ell, L, c = V.ell_L_c(s, V.random_beltrami(s, rng))
    faces, A = s.mesh.faces, s.mesh.face_areas
    Omega0 = s.Omega0
    brute = np.zeros_like(L)
    # a P1 function integrates against a constant density as its face mean
    for f in range(s.mesh.n_faces):
        mean = ell[faces[f]].mean(axis=0)
        brute += A[f] * np.einsum("a,bc->abc", mean, Omega0[f])
    assert np.max(np.abs(brute - L)) < 1e-8 * np.max(np.abs(L))
    np.testing.assert_allclose(c, s.form.m_first(L, 3) / (1 - s.g))


@pytest.mark.parametrize("form", [V.EF1, V.EJ1, V.ED1])
def test_forms_vanish_at_zero(double_torus, rng, form):
    mu = V.random_beltrami(double_torus, rng)
    zero = np.zeros(double_torus.mesh.n_faces)
    assert form(double_torus, zero, mu) == 0
    assert form(double_torus, mu, zero) == 0


def test_forms_need_genus_two(torus, rng):
    mu = V.random_beltrami(torus, rng)
    with pytest.raises(ValueError):
        V.EF1(torus, mu, mu)


def test_EF_two_routes_and_symmetry(double_torus, rng):
    lam, mu = (V.random_beltrami(double_torus, rng) for _ in range(2))
    a = V.EF1(double_torus, lam, mu)
    b = V.EF1(double_torus, lam, mu, "rewrite")
    assert abs(a - b) < 1e-6 * abs(a)
    # anti-Hermitian: E(λ, μ̄) = -conj E(μ, λ̄), so E(λ, λ̄) is imaginary
    assert abs(a + np.conj(V.EF1(double_torus, mu, lam))) < 1e-8 * abs(a)
    d = V.EF1(double_torus, lam, lam)
    assert abs(d.real) < 1e-8 * abs(d)


def test_EJ_two_routes(double_torus, rng):
    lam, mu = (V.random_beltrami(double_torus, rng) for _ in range(2))
    P = V.PairData(double_torus, lam, mu)
    a = V.EJ1(double_torus, lam, mu)
    b = V.EJ1(double_torus, lam, mu, "projection")
    assert abs(a - b) < 1e-2 * max(abs(a), abs(P.cc))


def test_q0_pairing(double_torus, rng):
    lam = V.random_beltrami(double_torus, rng)
    lhs, rhs = V.q0_pairing(double_torus, lam)
    _, L, _ = V.ell_L_c(double_torus, lam)
    assert np.max(np.abs(lhs - rhs)) < 2e-2 * np.max(np.abs(L))


def test_ED_routes_converge():
    errors = []
    for res in (2, 4):
        s = Surface(genus2_mesh("double-torus", res))
        rng = np.random.default_rng(5)
        lam, mu = (V.random_beltrami(s, rng) for _ in range(2))
        a = V.ED1(s, lam, mu, "difference")
        b = V.ED1(s, lam, mu, "green")
        c = V.ED1(s, lam, mu, "projection")
        errors.append(max(abs(a - b), abs(b - c), abs(a - c)) / abs(a))
    assert errors[1] < errors[0]


def test_ED_diagonal_is_imaginary():
    s = Surface(genus2_mesh("double-torus", 4))
    lam = V.random_beltrami(s, np.random.default_rng(2))
    d = V.ED1(s, lam, lam)
    assert abs(d.real) < 2e-2 * abs(d)


def test_unknown_route(double_torus, rng):
    mu = V.random_beltrami(double_torus, rng)
    for form in (V.EF1, V.EJ1, V.ED1):
        with pytest.raises(ValueError):
            form(double_torus, mu, mu, "nope")


# -- the finite-difference harness -----------------------------------------

def test_parallel_map_preserves_order(monkeypatch):
    monkeypatch.setenv("ARAKELOVLAB_THREADS", "4")
    assert V.n_threads() == 4
    assert V.parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
    monkeypatch.setenv("ARAKELOVLAB_THREADS", "zero")
    assert V.n_threads() == 1


def test_family_caches_evaluations(torus):
    calls = []

    def evaluate(s, params):
        calls.append(params)
        return s.a_g()

    mu = np.full(torus.mesh.n_faces, 0.1)
    fam = V.DeformationFamily(torus.mesh, [mu], evaluate)
    first = fam.values([(0.01,), (-0.01,)])
    again = fam.values([(-0.01,), (0.01,)])
    assert len(calls) == 2
    assert first == again[::-1]


def test_report_serialises():
    rep = V.VariationReport("x", 1 + 2j, [1.0, 2.0], [0.1], 1.0, 0.5, 0.1)
    d = rep.to_dict()
    assert d["analytic"] == [1.0, 2.0]
    assert d["status"] == "fail"
    assert not rep.passed


def test_second_variation_genus_one(torus, rng):
    lam, mu = (V.random_beltrami(torus, rng) for _ in range(2))
    rep = V.second_variation_check(torus, lam, mu, 1e-2, 1e-8)
    assert rep.status == "pass"
    assert abs(rep.analytic) < 1e-8
