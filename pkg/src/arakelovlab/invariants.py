"""Surface invariants built on the harmonic basis and the Green operators.

:class:`Surface` bundles a mesh with its harmonic basis, the canonical
volume form B and a :class:`~arakelovlab.green.GreenSolver` for B, and
caches the forms everything else is assembled from:

* ``Omega0 = ω_(1)∧ω_(1)`` (face density, two H-axes),
* ``K0 = Φ̂(Omega0)`` and ``nu0 = *∂K0``,
* ``h = h_{P0}`` and the connection forms ω_(2), ω_(3).

Quadratic differentials are stored as their ``dz²`` coefficient per face.
"""

from functools import cached_property

import numpy as np

from .dec import DECOperators, Form1, qd_product, wedge
from .tensor import N
from .green import GreenSolver
from .hodge import harmonic_basis


def star_del(ops, u):
    """*∂u = -i u_z dz for a P1 function (trailing axes allowed)."""
    du = ops.d(u)
    return Form1(-1j * du.p, np.zeros_like(du.q))


def pair_beltrami(mesh, qd, mu):
    """∫ (q dz²) μ = -2i Σ_f A_f q_f μ_f; tensor axes of ``qd`` are kept."""
    A = mesh.face_areas
    mu = np.asarray(mu)
    w = (A * mu).reshape((-1,) + (1,) * (np.ndim(qd) - 1))
    return -2j * np.sum(w * qd, axis=0)


class Surface:
    """A mesh together with the objects every invariant is built from."""

    def __init__(self, mesh, basis=None, ops=None):
        self.mesh = mesh
        self.ops = ops if ops is not None else DECOperators(mesh)
        self.basis = basis if basis is not None else harmonic_basis(
            mesh, ops=self.ops)
        self.form = self.basis.form
        self.g = self.form.g
        self.B = self.basis.canonical_volume()
        self.green = GreenSolver(mesh, self.B, self.ops, mesh.basepoint,
                                 self.basis.laplace)

    # -- first order -----------------------------------------------------
    @cached_property
    def omega(self):
        return self.basis.omega1()

    @cached_property
    def omega_p(self):
        return self.omega.prime()

    @cached_property
    def omega_pp(self):
        return self.omega_p.conj()

    def hat_density(self, rho):
        return self.green.green_hat(self.ops.density_load(rho))

    def phi_density(self, rho):
        return self.green.green_phi(self.ops.density_load(rho))

    @cached_property
    def Omega0(self):
        """ω_(1)∧ω_(1) as a face density with two H-axes."""
        return wedge(self.omega, self.omega).real

    @cached_property
    def K0(self):
        return self.hat_density(self.Omega0)

    @cached_property
    def nu0(self):
        """ν_0 = *∂K_0."""
        return star_del(self.ops, self.K0)

    @cached_property
    def h(self):
        return self.green.green_function().real

    @cached_property
    def star_del_h(self):
        return star_del(self.ops, self.h)

    # -- connection forms ------------------------------------------------
    @cached_property
    def omega2(self):
        """ω_(2) = *dΦ(ω_(1)∧ω_(1))."""
        return self.ops.d(self.phi_density(self.Omega0)).star()

    @cached_property
    def omega2_hat(self):
        """*dK_0 + I *dh, the same form built from Φ̂."""
        I = self.form.I
        dK = self.ops.d(self.K0).star()
        dh = self.ops.d(self.h).star()
        return dK + Form1(dh.p[:, None, None] * I, dh.q[:, None, None] * I)

    @cached_property
    def omega3(self):
        """ω_(3) = *dΦ(ω_(2)∧ω_(1) + ω_(1)∧ω_(2))."""
        w1, w2 = self.omega, self.omega2
        rho = wedge(w2, w1, "ab,c->abc") + wedge(w1, w2, "a,bc->abc")
        return self.ops.d(self.phi_density(rho)).star()

    @cached_property
    def omega3_hat(self):
        """*dΦ̂(ω_(2)∧ω_(1) + ω_(1)∧ω_(2)), equal to ω_(3) when that
        2-form has zero integral."""
        w1, w2 = self.omega, self.omega2
        rho = wedge(w2, w1, "ab,c->abc") + wedge(w1, w2, "a,bc->abc")
        return self.ops.d(self.hat_density(rho)).star()

    # -- integrability ---------------------------------------------------
    def integrability_residuals(self):
        """Load-form residuals of dω_(2) = ω∧ω - Iδ and the degree-3 relation.

        Each residual is relative to the size of the right-hand side.
        """
        ops, w1, I = self.ops, self.omega, self.form.I
        p0 = self.mesh.basepoint
        w2, w3 = self.omega2, self.omega3

        lhs2 = ops.curl_load(w2)
        rhs2 = ops.density_load(self.Omega0).astype(complex)
        rhs2[p0] -= I
        lhs3 = ops.curl_load(w3)
        rhs3 = ops.density_load(wedge(w2, w1, "ab,c->abc")
                                + wedge(w1, w2, "a,bc->abc"))
        rhs3[p0] -= rhs3.sum(axis=0)
        return {
            "degree2": float(np.max(np.abs(lhs2 - rhs2))
                             / np.max(np.abs(rhs2))),
            "degree3": float(np.max(np.abs(lhs3 - rhs3))
                             / np.max(np.abs(rhs3))),
        }

    # -- invariants ------------------------------------------------------
    def a_g(self):
        """a_g = -M ∫ Φ̂(ω∧ω) ω∧ω (exact P1 x constant quadrature)."""
        t = self.ops.integrate_p(self.K0, self.Omega0, "ab,cd->abcd")
        return float(-self.form.M(t).real)

    def a_g_basis(self, psi=None):
        """a_g = -(1/2) Σ_ij ∫ ψ_i∧ψ̄_j Φ̂(ψ̄_i∧ψ_j) for an orthonormal basis.

        The factor 1/2 comes from Y_i·Ȳ_j = (i/2)δ_ij when the tensor
        definition is expanded in the basis.
        """
        psi = self.basis.psi if psi is None else psi
        rho = wedge(psi.conj(), psi, "i,j->ij")
        K = self.hat_density(rho)
        t = self.ops.integrate_p(K, wedge(psi, psi.conj(), "i,j->ij"),
                                 "ij,ij->")
        return float(-0.5 * t.real)

    # -- quadratic differentials -------------------------------------------
    def Xi(self, variant="dK0"):
        """Ξ = M(ν_0 ν_0 + 4 (*∂Φ̂(*dK_0∧ω_(1))) ω') per face.

        ``variant="nu0"`` uses ν_0∧ω'' in place of *dK_0∧ω_(1).
        """
        ops, M = self.ops, self.form.M
        if variant == "dK0":
            rho = wedge(ops.d(self.K0).star(), self.omega, "ab,c->abc")
        elif variant == "nu0":
            rho = wedge(self.nu0, self.omega_pp, "ab,c->abc")
        else:
            raise ValueError(f"unknown variant {variant!r}")
        X = star_del(ops, self.hat_density(rho))
        nu = self.nu0
        return M(qd_product(nu, nu) + 4 * qd_product(X, self.omega_p))

    def Upsilon(self):
        """Υ = (*∂h)² + (2/g) *∂Φ̂(*dh∧ω_(1))·ω' per face."""
        ops = self.ops
        dh = ops.d(self.h).star()
        Y = star_del(ops, self.hat_density(wedge(dh, self.omega, ",c->c")))
        sh = self.star_del_h
        return (sh.p ** 2
                + (2 / self.g) * self.form.dot(Y.p, self.omega_p.p))

    def xi_upsilon_identity(self):
        """Both sides of (m⊗m + M)(ω'_2 ω'_2 + 2 ω'_3 ω'_1) = Ξ + 2g(2g+1)Υ."""
        f = self.form
        w1, w2, w3 = self.omega_p, self.omega2, self.omega3
        t = qd_product(w2, w2) + 2 * qd_product(w3, w1)
        lhs = f.mm(t) + f.M(t)
        g = self.g
        rhs = self.Xi() + 2 * g * (2 * g + 1) * self.Upsilon()
        return lhs, rhs

    # -- quadratic differential q and fiber pairings -------------------------
    def ell_L_c(self, lam):
        """ℓ^λ = 2Φ̂d*(ω'λ), L^λ = ∫ℓ^λ ω∧ω and c^λ = (m⊗1)L^λ/(1-g).

        ``lam`` is a per-face Beltrami coefficient.  For g = 1 the last
        entry is ``None``.
        """
        lam = np.asarray(lam)
        wl = Form1(np.zeros_like(self.omega_p.p), self.omega_p.p * lam[:, None])
        ell = 2 * self.green.green_hat(self.ops.codiff_load(wl))
        L = self.ops.integrate_p(ell, self.Omega0, "a,bc->abc")
        c = None if self.g == 1 else self.form.m_first(L, 3) / (1 - self.g)
        return ell, L, c

    @cached_property
    def omega2_p(self):
        return self.omega2.prime()

    def q_differential(self):
        """q = (m⊗1)N(ω'ω'_2 + ω'_2ω')/(2-2g) as dz² coefficients (F, 2g)."""
        w1, w2 = self.omega_p, self.omega2_p
        t = qd_product(w1, w2) + qd_product(w2, w1)
        return self.form.m_first(N(t, 3), 3) / (2 - 2 * self.g)

    def q_expanded(self):
        """q = (2/(1-g))(m⊗1)(ω'ν_0) - 2ω'(*∂h)."""
        w1 = self.omega_p
        t = self.form.m_first(qd_product(w1, self.nu0), 3)
        return (2 / (1 - self.g)) * t - 2 * w1.p * self.star_del_h.p[:, None]

    def q_pairing(self, lam):
        """(∫qλ, ℓ^λ(P0) + c^λ)."""
        ell, _, c = self.ell_L_c(lam)
        lhs = pair_beltrami(self.mesh, self.q_differential(), lam)
        return lhs, ell[self.mesh.basepoint] + c

    def omega_p_at_basepoint(self):
        """ω' at P0: area-weighted mean of the faces around P0."""
        mask = (self.mesh.faces == self.mesh.basepoint).any(axis=1)
        A = self.mesh.face_areas[mask]
        return A @ self.omega_p.p[mask] / A.sum()

    def q_vector_field_pairing(self, v):
        """(∫q ∂̄V', (ω'V')(P0)) for V' = v ∂_z given by P1 values ``v``."""
        mu = self.ops.Dzb @ np.asarray(v, complex)
        lhs = pair_beltrami(self.mesh, self.q_differential(), mu)
        return lhs, self.omega_p_at_basepoint() * v[self.mesh.basepoint]

    # -- restrictions, pairings, residue -------------------------------------
    def fiber_restriction_checks(self):
        """e^J|_C against (2-2g)B and m(Ω_0) against 2gB, facewise."""
        g, B = self.g, self.B
        m0 = self.form.m(self.Omega0)
        eJ = (2 - 2 * g) / (2 * g) * m0
        scale = np.max(np.abs(B))
        return {
            "eJ_vs_B": float(np.max(np.abs(eJ - (2 - 2 * g) * B)) / scale),
            "m_Omega0_vs_B": float(np.max(np.abs(m0 - 2 * g * B)) / scale),
            "B_psi_route": float(np.max(np.abs(
                B - self.basis.canonical_volume_psi())) / scale),
            "total_B": float(self.ops.integrate2(B)),
        }

    def energy_pairing(self, rho):
        """∫Ω Φ̂(Ω̄) for a complex face density and its gradient form.

        The second value is -i∫∂Φ̂(Ω)∧∂̄Φ̂(Ω̄) - i∫∂Φ̂(Ω̄)∧∂̄Φ̂(Ω).
        """
        rho = np.asarray(rho, complex)
        K = self.hat_density(rho)
        Kb = self.hat_density(np.conj(rho))
        value = self.ops.integrate_p(Kb, rho, ",->")
        dK, dKb = self.ops.d(K), self.ops.d(Kb)
        A = self.mesh.face_areas
        grad = (-1j * np.sum(A * wedge(dK.prime(), dKb.dprime(), ",->"))
                - 1j * np.sum(A * wedge(dKb.prime(), dK.dprime(), ",->")))
        return complex(value), complex(grad)

    def mm_eta2(self):
        """(m⊗m)η'_2 = (m⊗m)N(ω'_1ω'_3 + ω'_2ω'_2 + ω'_3ω'_1) per face."""
        w1, w2, w3 = self.omega_p, self.omega2_p, self.omega3.prime()
        t = qd_product(w1, w3) + qd_product(w2, w2) + qd_product(w3, w1)
        return self.form.mm(N(t, 4))

    def residue_study(self, annuli, depth=None):
        """Area-weighted mean of z²·(m⊗m)η'_2 over annuli about P0.

        ``annuli`` is a sequence of (r_inner, r_outer) in the developed
        chart; the mean isolates the dz²/z² coefficient because the
        higher terms average out over full circles.
        """
        mesh = self.mesh
        r_max = max(r for _, r in annuli)
        if depth is None:
            h = np.sqrt(np.median(mesh.face_areas))
            depth = int(np.ceil(2 * r_max / h)) + 2
        pos, mask = mesh.develop(mesh.basepoint, depth)
        z = pos[mesh.faces].mean(axis=1)
        Q = self.mm_eta2()
        A = mesh.face_areas
        out = []
        for r0, r1 in annuli:
            sel = mask & (np.abs(z) >= r0) & (np.abs(z) < r1)
            if not sel.any():
                raise ValueError(f"annulus ({r0}, {r1}) contains no faces")
            val = np.sum(A[sel] * Q[sel] * z[sel] ** 2) / A[sel].sum()
            out.append(complex(val))
        return np.array(out)

    # -- a_g checks -----------------------------------------------------------
    def basis_invariance(self, rng, unitary=True):
        """|a_g(ψU) - a_g(ψ)| for a random (unitary by default) g x g U."""
        g = self.g
        Z = rng.standard_normal((g, g)) + 1j * rng.standard_normal((g, g))
        if unitary:
            U, _ = np.linalg.qr(Z)
        else:
            U = Z
        psi = self.basis.psi
        mixed = psi.contract("i,ij->j", U)
        return abs(self.a_g_basis(mixed) - self.a_g_basis(psi))


def residue_target(g):
    """The dz²/z² coefficient of (m⊗m)η'_2 at P0."""
    return -2 * g * (2 * g + 1) / (8 * np.pi ** 2)


def a_g_convergence(mesh, levels, refine_fn):
    """a_g on successive refinements with the observed convergence order."""
    values = []
    for _ in range(levels + 1):
        values.append(Surface(mesh).a_g())
        mesh = refine_fn(mesh)
    diffs = np.abs(np.diff(values))
    orders = [float(np.log2(diffs[k] / diffs[k + 1]))
              if diffs[k + 1] > 0 else float("inf")
              for k in range(len(diffs) - 1)]
    return {"values": values, "differences": diffs.tolist(), "orders": orders}
