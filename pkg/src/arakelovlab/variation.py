"""Beltrami differentials, first variations and the bilinear forms E^F_1,
E^J_1, E^D_1 on tangent pairs.

A Beltrami differential is stored per face as the coefficient of
``d/dz ⊗ dz̄`` in the face frame.  It pairs with a quadratic differential
``q dz²`` through ``∫ q μ dz∧dz̄ = -2i Σ_f A_f q_f μ_f`` (see
:func:`~arakelovlab.invariants.pair_beltrami`).

For a Beltrami ``λ`` the notation follows ``ℓ^λ = 2Φ̂d*(ω'λ)`` and
``ℓ̄^μ`` is the complex conjugate of ``ℓ^μ``.  Forms that are products of a
P1 function and a face-constant form are only ever integrated against
face-constant data, so the face mean of the P1 factor represents them
exactly.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dec import Form1, wedge
from .invariants import Surface, pair_beltrami
from .mesh import MeshError, RiemannMesh
from .tensor import N


class BeltramiError(ValueError):
    pass


@dataclass(frozen=True)
class Beltrami:
    """Per-face Beltrami coefficients with an optional support mask."""

    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        vals = np.asarray(self.values, complex)
        if self.mask is not None:
            mask = np.asarray(self.mask, bool)
            if mask.shape != vals.shape:
                raise BeltramiError("mask shape differs from the values")
            vals = np.where(mask, vals, 0.0)
            object.__setattr__(self, "mask", mask)
        if vals.ndim != 1:
            raise BeltramiError("Beltrami values must be one per face")
        if np.max(np.abs(vals), initial=0.0) >= 1:
            raise BeltramiError("|μ| must stay below 1")
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __mul__(self, c):
        return Beltrami(self.values * c, self.mask)

    __rmul__ = __mul__

    def __add__(self, other):
        return Beltrami(self.values + np.asarray(other))


def random_beltrami(surface, rng, amplitude=0.1, exclude=None, smooth=2):
    """Smooth random Beltrami differential on ``surface``.

    Random vertex loads are smoothed by ``smooth`` applications of Φ̂ and
    scaled to maximum modulus ``amplitude``.  ``exclude = (vertex, depth)``
    zeroes the values on the faces touching that ring.
    """
    V = surface.mesh.n_vertices
    u = rng.standard_normal(V) + 1j * rng.standard_normal(V)
    for _ in range(smooth):
        u = surface.green.green_hat(surface.ops.mass0 @ u)
    vals = surface.ops.face_mean(u)
    mask = None
    if exclude is not None:
        mask = ~surface.mesh.faces_near(*exclude)
        vals = np.where(mask, vals, 0.0)
    peak = np.max(np.abs(vals))
    if peak == 0:
        raise BeltramiError("the excluded ring covers the whole mesh")
    vals = amplitude * vals / peak
    return Beltrami(vals, mask)


def _mu(mu):
    return np.asarray(mu, complex)


def S_operator(mu, phi):
    """S(φ) = -2φ'μ - 2φ''μ̄ facewise (φ may carry tensor axes)."""
    mu = _mu(mu).reshape((-1,) + (1,) * (phi.p.ndim - 1))
    return Form1(-2 * phi.q * np.conj(mu), -2 * phi.p * mu)


def star_variation_identity(mesh, theta, phi, mu):
    """Both sides of ∫*θ∧Sφ = Re(4i∫θ'φ'μ) for real scalar forms."""
    A = mesh.face_areas
    lhs = np.sum(A * wedge(theta.star(), S_operator(mu, phi), ",->"))
    rhs = np.real(4j * pair_beltrami(mesh, theta.p * phi.p, _mu(mu)))
    return complex(lhs), float(rhs)


# -- deformations ---------------------------------------------------------

def deform(mesh, mu, t):
    """Map every face frame by z -> z + tμ_f z̄.

    Edge lengths seen from the two sides of an edge may then differ; the
    conformal structure is read face by face.  ``t = 0`` returns ``mesh``.
    """
    if t == 0:
        return mesh
    z = mesh.frames
    new = z + t * _mu(mu)[:, None] * np.conj(z)
    e1 = new[:, 1] - new[:, 0]
    e2 = new[:, 2] - new[:, 0]
    if np.min((np.conj(e1) * e2).imag) <= 0:
        raise MeshError("deformation produced a degenerate face")
    out = RiemannMesh(mesh.faces, new, mesh.n_vertices, mesh.coords,
                      mesh.basepoint, validate=False)
    return out


def induced_dilatation(base, deformed):
    """Complex dilatation of the facewise affine map between two meshes."""
    z, w = base.frames, deformed.frames
    dz1, dz2 = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
    dw1, dw2 = w[:, 1] - w[:, 0], w[:, 2] - w[:, 0]
    det = dz1 * np.conj(dz2) - np.conj(dz1) * dz2
    a = (dw1 * np.conj(dz2) - dw2 * np.conj(dz1)) / det
    b = (dw2 * dz1 - dw1 * dz2) / det
    return b / a


def pullback(phi, mu, t):
    """Pull a form on ``deform(mesh, μ, t)`` back to the base frames."""
    m = (t * _mu(mu)).reshape((-1,) + (1,) * (phi.p.ndim - 1))
    return Form1(phi.p + np.conj(m) * phi.q, phi.q + m * phi.p)


def omega1_dot(surface, mu):
    """ω̇_(1) = -dΦ̂d*Sω_(1) for the closed harmonic representative Σ ξ_k X_k.

    The discrete identity is exact for that representative; the type-exact
    ω_(1) differs from it by the discretisation error of the (1,0) split.
    """
    ops = surface.ops
    w = surface.basis.omega1_xi()
    load = ops.codiff_load(S_operator(mu, w))
    return ops.d(-surface.green.green_hat(load))


def omega_prime_circ(surface, mu):
    """(ω')° = -𝓗(ω''μ̄), the antiholomorphic variation of ω'."""
    wpp = surface.omega_pp
    m = np.conj(_mu(mu))[:, None]
    return -surface.basis.harmonic_projection(
        Form1(wpp.q * m, np.zeros_like(wpp.q)))


# -- first variations ------------------------------------------------------

def a_g_dot(surface, mu):
    """ȧ_g = -Re(4i∫Ξμ)."""
    return float(-np.real(4j * pair_beltrami(surface.mesh, surface.Xi(),
                                              _mu(mu))))


def h_dot(surface, mu, ring=3):
    """ḣ(P0) = -Re(4i∫Υμ); μ must vanish on the ``ring``-ring of P0."""
    mesh = surface.mesh
    near = mesh.faces_near(mesh.basepoint, ring)
    if np.any(np.abs(_mu(mu)[near]) > 0):
        raise BeltramiError(f"μ must vanish on the {ring}-ring of P0")
    return float(-np.real(4j * pair_beltrami(mesh, surface.Upsilon(),
                                              _mu(mu))))


def ell_L_c(surface, lam):
    return surface.ell_L_c(_mu(lam))


# -- bilinear forms --------------------------------------------------------

class PairData:
    """Shared data for evaluating the E-forms on one pair (λ, μ)."""

    def __init__(self, surface, lam, mu):
        if surface.g < 2:
            raise ValueError("the bilinear forms need genus >= 2")
        self.s = surface
        self.lam, self.mu = _mu(lam), _mu(mu)
        self.ell, self.L, self.c = surface.ell_L_c(self.lam)
        ell_mu, self.Lmu, self.cmu = surface.ell_L_c(self.mu)
        self.ellb = np.conj(ell_mu)
        self.cc = (2 - 2 * surface.g) * surface.form.dot(self.c,
                                                         np.conj(self.cmu))


def _hproj_p1(surface, u, w):
    """𝓗(u_a w_b): harmonic projection of a P1 function times a form."""
    ops, om = surface.ops, surface.omega
    c = ops.integrate_p(u, wedge(om, w), "a,xb->xab")
    vec = np.einsum("yx,xab->yab", surface.form.omega, c)
    return om.contract("y,yab->ab", -vec)


def EF1(surface, lam, mu, route="direct"):
    """E^F_1(λ, μ̄) by the defining formula (``"direct"``) or by the ``"rewrite"`` route."""
    P = PairData(surface, lam, mu)
    s, W = surface, surface.form.omega
    ops = s.ops
    if route == "direct":
        t = ops.integrate_pp(P.ell, P.ellb, s.Omega0, "a,d,bc->adbc")
        first = np.einsum("adbc,ab,cd->", t, W, W)
        lb = ops.integrate_pp(P.ell, P.ellb, s.B, "a,b,->ab")
        second = s.form.m(lb)
        return complex(2 * first + 2 * s.g * second + P.cc)
    if route == "rewrite":
        dens = wedge(s.omega_p, s.omega_pp)  # (F, b, d)
        t = ops.integrate_pp(P.ellb, P.ell, dens, "e,a,bd->eabd")
        term = (np.einsum("eabd,ea,bd->", t, W, W)
                - np.einsum("ebad,ea,bd->", t, W, W))
        return complex(-2 * term + P.cc)
    raise ValueError(f"unknown route {route!r}")


def EJ1(surface, lam, mu, route="tensor"):
    """E^J_1(λ, μ̄) by the M̂ formula (``"tensor"``) or by harmonic projection
    (``"projection"``)."""
    P = PairData(surface, lam, mu)
    s = surface
    if route == "tensor":
        t = np.multiply.outer(N(P.L, 3), np.conj(P.Lmu))
        return complex(s.form.Mhat(t) + P.cc)
    if route == "projection":
        H = _hproj_p1(s, P.ell, s.omega_p)  # 𝓗(ℓ_a ω'_b)
        Hs = Form1(np.swapaxes(H.p, 1, 2), np.swapaxes(H.q, 1, 2))
        # 𝓗(ℓ ω' - ω' ℓ)_{ab} = 𝓗(ℓ_a ω'_b) - 𝓗(ℓ_b ω'_a)
        D = H - Hs
        W = s.form.omega
        t = s.ops.integrate_p(P.ellb, wedge(D, s.omega_pp, "ab,d->abd"),
                              "e,abd->eabd")
        term = np.einsum("eabd,ea,bd->", t, W, W)
        return complex(-2 * term + P.cc)
    raise ValueError(f"unknown route {route!r}")


def Q0(surface):
    """Q_0 = N(ω'ω'_2 + ω'_2ω') + N(qI) per face (dz² coefficients)."""
    from .dec import qd_product
    s = surface
    t = qd_product(s.omega_p, s.omega2_p) + qd_product(s.omega2_p, s.omega_p)
    qI = np.einsum("Za,bc->Zabc", s.q_differential(), s.form.I)
    return N(t, 3) + N(qI, 3)


def q0_pairing(surface, lam):
    """(∫Q_0λ, N(L^λ + c^λI))."""
    _, L, c = surface.ell_L_c(_mu(lam))
    lhs = pair_beltrami(surface.mesh, Q0(surface), _mu(lam))
    return lhs, N(L + np.multiply.outer(c, surface.form.I), 3)


def _h_wlam(surface, lam):
    """𝓗(ω'λ), an H-valued face form."""
    wp = surface.omega_p
    return surface.basis.harmonic_projection(
        Form1(np.zeros_like(wp.p), wp.p * _mu(lam)[:, None]))


def ED1(surface, lam, mu, route="green"):
    """E^D_1(λ, μ̄) by ``"difference"`` (E^F_1 - E^J_1), ``"green"``
    (Green-operator formula) or ``"projection"`` (harmonic projections)."""
    s = surface
    if route == "difference":
        return EF1(s, lam, mu) - EJ1(s, lam, mu)
    ops, M = s.ops, s.form.M
    left = wedge(_h_wlam(s, lam), s.omega_p, "a,b->ab")  # (F, a, b)
    wpp = s.omega_pp
    if route == "green":
        ellb = np.conj(s.ell_L_c(_mu(mu))[0])
        mean = ops.face_mean(ellb)  # (F, d)
        phi = Form1(np.einsum("Fc,Fd->Fcd", wpp.p, mean)
                    - np.einsum("Fc,Fd->Fcd", mean, wpp.p),
                    np.einsum("Fc,Fd->Fcd", wpp.q, mean)
                    - np.einsum("Fc,Fd->Fcd", mean, wpp.q))
        K = s.green.green_hat(ops.codiff_load(phi))
        t = ops.integrate_p(K, left, "cd,ab->abcd")
        return complex(4 * M(t))
    if route == "projection":
        m = np.conj(_mu(mu))[:, None]
        Hm = s.basis.harmonic_projection(
            Form1(wpp.q * m, np.zeros_like(wpp.q)))
        rho = wedge(Hm, wpp, "c,d->cd") + wedge(wpp, Hm, "c,d->cd")
        K = s.hat_density(rho)
        t = ops.integrate_p(K, left, "cd,ab->abcd")
        return complex(4j * M(t))
    raise ValueError(f"unknown route {route!r}")


def xi_circ_pairing(surface, lam, mu):
    """∫Ξ°λ = -E^J_1 + ((g+1)/2g) E^F_1 + E^D_1/2.

    The E^F_1 coefficient is the one obtained by collecting the terms of
    the expansion; it is the value consistent with
    (-2i/(2g(2g+1))) ∂∂̄a_g = (e^F_1 - e^J_1)/(2g-2)².
    """
    g = surface.g
    ef = EF1(surface, lam, mu)
    ej = EJ1(surface, lam, mu)
    ed = ED1(surface, lam, mu)
    return -ej + (g + 1) / (2 * g) * ef + 0.5 * ed


def second_variation_formula(surface, lam, mu):
    """∂_s∂_t̄ a_g along deform(sλ + tμ), equal to -2i∫Ξ°λ.

    With the pairing and deformation conventions used here the mixed
    derivative carries the opposite sign to 2i∫Ξ°λ.
    """
    return -2j * xi_circ_pairing(surface, lam, mu)


# -- finite differences ----------------------------------------------------

def n_threads():
    """Worker count from ARAKELOVLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("ARAKELOVLAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """``list(map(fn, items))`` on up to :func:`n_threads` threads.

    Results keep the input order, so the output does not depend on the
    thread count.
    """
    items = list(items)
    workers = min(n_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


class DeformationFamily:
    """Meshes ``deform(base, Σ_k s_k μ_k, 1)`` for complex parameters s_k.

    Meshes and whatever ``evaluate`` returns on them are cached by the
    parameter tuple.  The zero parameter gives the base mesh itself.
    """

    def __init__(self, base, directions, evaluate, surface_fn=Surface):
        self.base = base
        self.directions = [_mu(d) for d in directions]
        self.evaluate = evaluate
        self.surface_fn = surface_fn
        self._cache = {}

    def mu(self, params):
        out = np.zeros(self.base.n_faces, complex)
        for s, d in zip(params, self.directions):
            out = out + s * d
        return out

    def mesh(self, params):
        params = tuple(complex(s) for s in params)
        if not any(params):
            return self.base
        return deform(self.base, self.mu(params), 1.0)

    def values(self, param_list):
        keys = [tuple(complex(s) for s in p) for p in param_list]
        todo = sorted({k for k in keys if k not in self._cache},
                      key=lambda k: [(z.real, z.imag) for z in k])

        def run(k):
            return self.evaluate(self.surface_fn(self.mesh(k)), k)

        for k, v in zip(todo, parallel_map(run, todo)):
            self._cache[k] = v
        return [self._cache[k] for k in keys]

    def __len__(self):
        return len(self._cache)


@dataclass
class VariationReport:
    """Analytic value against an extrapolated finite difference.

    ``status`` is ``"pass"``, ``"fail"`` or ``"inconclusive"``; the last one
    is reserved for a degenerate stencil or finite differences below their
    own noise floor.
    """

    name: str
    analytic: complex
    fd_values: list
    steps: list
    extrapolated: complex
    rel_error: float
    tolerance: float
    status: str = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status is None:
            ok = np.isfinite(self.rel_error) and self.rel_error <= self.tolerance
            self.status = "pass" if ok else "fail"

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        def enc(z):
            z = complex(z)
            return [z.real, z.imag]
        err = self.rel_error
        return {
            "name": self.name,
            "analytic": enc(self.analytic),
            "fd_values": [enc(v) for v in self.fd_values],
            "steps": [float(h) for h in self.steps],
            "extrapolated": enc(self.extrapolated),
            "rel_error": float(err) if np.isfinite(err) else None,
            "tolerance": self.tolerance,
            "status": self.status,
            **self.details,
        }


def _rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))
                 / max(np.max(np.abs(np.asarray(b))), 1e-300))


def _field_rel(mesh, ana, ext, k):
    A = np.tile(np.repeat(mesh.face_areas, k), 2)
    return float(np.sqrt(np.sum(A * np.abs(ana - ext) ** 2)
                         / np.sum(A * np.abs(ext) ** 2)))


def _inconclusive(name, analytic, tol, steps, reason):
    return VariationReport(name, analytic, [], steps, np.nan, np.nan, tol,
                           "inconclusive", {"reason": reason})


def _central(fam, h, scale=1.0):
    """Richardson-extrapolated central difference along direction ``scale``."""
    f = fam.values([(scale * h,), (-scale * h,), (scale * h / 2,),
                    (-scale * h / 2,)])
    d1 = (f[0] - f[1]) / (2 * h)
    d2 = (f[2] - f[3]) / h
    return [d1, d2], (4 * d2 - d1) / 3


def _noise_floor(value, h):
    return 1e3 * np.finfo(float).eps * max(np.max(np.abs(value)), 1e-300) / h


def check_a_g_dot(surface, mu, h=1e-2, tol=0.05, surface_fn=Surface):
    """ȧ_g from Ξ against central differences of a_g along ``deform``."""
    ana = a_g_dot(surface, mu)
    fam = DeformationFamily(surface.mesh, [mu], lambda s, k: s.a_g(),
                            surface_fn)
    try:
        fds, ext = _central(fam, h)
    except MeshError as exc:
        return _inconclusive("a_g_dot", ana, tol, [h, h / 2], str(exc))
    if abs(ext) < _noise_floor(surface.a_g(), h):
        return _inconclusive("a_g_dot", ana, tol, [h, h / 2],
                             "finite difference below its noise floor")
    return VariationReport("a_g_dot", ana, fds, [h, h / 2], ext,
                           _rel(ana, ext), tol)


def check_h_dot(surface, mu, h=1e-2, tol=0.05, surface_fn=Surface):
    """ḣ(P0) from Υ against central differences of h_{P0}(P0)."""
    ana = h_dot(surface, mu)
    p0 = surface.mesh.basepoint
    fam = DeformationFamily(surface.mesh, [mu], lambda s, k: s.h[p0],
                            surface_fn)
    try:
        fds, ext = _central(fam, h)
    except MeshError as exc:
        return _inconclusive("h_dot", ana, tol, [h, h / 2], str(exc))
    return VariationReport("h_dot", ana, fds, [h, h / 2], ext,
                           _rel(ana, ext), tol)


def _vec(w):
    return np.concatenate([w.p.ravel(), w.q.ravel()])


def check_omega1_dot(surface, mu, h=1e-2, tol=0.03, surface_fn=Surface):
    """ω̇_(1) = -dΦ̂d*Sω_(1) against pulled-back central differences of the
    closed harmonic representative."""
    mu = _mu(mu)

    def ev(s, k):
        return _vec(pullback(s.basis.omega1_xi(), mu, k[0]))

    fam = DeformationFamily(surface.mesh, [mu], ev, surface_fn)
    fds, ext = _central(fam, h)
    ana = _vec(omega1_dot(surface, mu))
    err = _field_rel(surface.mesh, ana, ext, surface.omega.p.shape[1])
    return VariationReport("omega1_dot", np.linalg.norm(ana),
                           [np.linalg.norm(v) for v in fds], [h, h / 2],
                           np.linalg.norm(ext), err, tol)


def check_omega_prime_circ(surface, mu, h=1e-2, tol=0.03, surface_fn=Surface):
    """(ω')° = -𝓗(ω''μ̄) against a Wirtinger difference in t = t1 + i t2."""
    mu = _mu(mu)

    def ev(s, k):
        return _vec(pullback(s.omega_p, mu, k[0]))

    fam = DeformationFamily(surface.mesh, [mu], ev, surface_fn)
    re, _ = _central(fam, h)
    im, _ = _central(fam, h, 1j)
    fds = [0.5 * (a + 1j * b) for a, b in zip(re, im)]
    ext = (4 * fds[1] - fds[0]) / 3
    ana = _vec(omega_prime_circ(surface, mu))
    err = _field_rel(surface.mesh, ana, ext, surface.omega.p.shape[1])
    return VariationReport("omega_prime_circ", np.linalg.norm(ana),
                           [np.linalg.norm(v) for v in fds], [h, h / 2],
                           np.linalg.norm(ext), err, tol)


def mixed_wirtinger(fam, h):
    """∂²F/∂s∂t̄ at 0 for F(s, t) with complex s, t, by central differences.

    Combines the four real mixed partials, each on a 2 x 2 stencil:
    ∂_s∂_t̄ = (F_11 + F_22 + i(F_12 - F_21))/4 with s = s1 + i s2 and
    t = t1 + i t2.
    """
    units = [(1, 1), (1, 1j), (1j, 1), (1j, 1j)]
    pts = []
    for us, ut in units:
        for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            pts.append((a * h * us, b * h * ut))
    f = fam.values(pts)
    part = [(f[4 * k] - f[4 * k + 1] - f[4 * k + 2] + f[4 * k + 3])
            / (4 * h * h) for k in range(4)]
    return 0.25 * (part[0] + part[3] + 1j * (part[1] - part[2]))


def second_variation_check(surface, lam, mu, h=1e-2, tol=0.10,
                           surface_fn=Surface):
    """∂_s∂_t̄ a_g(deform(sλ + tμ)) against the E-form assembly.

    Each step needs 16 meshes; steps h and h/2 are combined by Richardson
    extrapolation.  On a torus both sides must vanish and ``rel_error`` is
    the largest absolute value seen.
    """
    lam, mu = _mu(lam), _mu(mu)
    fam = DeformationFamily(surface.mesh, [lam, mu], lambda s, k: s.a_g(),
                            surface_fn)
    ana = 0.0 if surface.g == 1 else second_variation_formula(surface, lam, mu)
    try:
        d1 = mixed_wirtinger(fam, h)
        d2 = mixed_wirtinger(fam, h / 2)
    except MeshError as exc:
        return _inconclusive("second_variation", ana, tol, [h, h / 2],
                             str(exc))
    ext = (4 * d2 - d1) / 3
    details = {"evaluations": len(fam)}
    if surface.g == 1:
        err = float(max(abs(ext), abs(d1), abs(d2)))
        return VariationReport("second_variation", ana, [d1, d2], [h, h / 2],
                               ext, err, tol, details=details)
    floor = 1e3 * np.finfo(float).eps * abs(surface.a_g()) / (h * h / 4)
    if abs(ext) < floor:
        return _inconclusive("second_variation", ana, tol, [h, h / 2],
                             "finite difference below its noise floor")
    return VariationReport("second_variation", ana, [d1, d2], [h, h / 2],
                           ext, _rel(ana, ext), tol, details=details)
