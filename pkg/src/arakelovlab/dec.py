"""Discrete forms and exterior calculus on a :class:`RiemannMesh`.

Discretisation used throughout the package:

* 0-forms are continuous piecewise-linear (P1) functions, stored by vertex.
* 1-forms are constant on every face and stored by their ``dz`` and ``dz̄``
  coefficients in the face frame, ``phi = p dz + q dz̄``.  The Hodge star is
  then exact per face, ``*phi = -i p dz + i q dz̄``, so ``p dz`` is the
  (1,0) part and ``q dz̄`` the (0,1) part.
* 2-forms come in two flavours: a face density (coefficient of
  ``dx∧dy``), or a *load*, the functional ``v -> ∫ v Omega`` evaluated on the
  P1 hat functions.  Deltas and products with P1 functions are loads.

Tensor-valued objects carry their H-indices as trailing array axes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Form1:
    """Face-constant complex 1-form ``p dz + q dz̄`` (trailing tensor axes)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if self.p.shape != self.q.shape:
            raise ValueError("dz and dz̄ coefficient shapes differ")

    @property
    def shape(self):
        return self.p.shape[1:]

    def __add__(self, other):
        return Form1(self.p + other.p, self.q + other.q)

    def __sub__(self, other):
        return Form1(self.p - other.p, self.q - other.q)

    def __neg__(self):
        return Form1(-self.p, -self.q)

    def __mul__(self, c):
        return Form1(self.p * c, self.q * c)

    __rmul__ = __mul__

    def conj(self):
        """Complex conjugate form: conj(p dz + q dz̄) = q̄ dz + p̄ dz̄."""
        return Form1(np.conj(self.q), np.conj(self.p))

    def star(self):
        return Form1(-1j * self.p, 1j * self.q)

    def prime(self):
        """(1,0) part."""
        return Form1(self.p, np.zeros_like(self.q))

    def dprime(self):
        """(0,1) part."""
        return Form1(np.zeros_like(self.p), self.q)

    def contract(self, subscripts, *operands):
        """Apply one einsum to the tensor axes of both coefficients.

        ``subscripts`` refers to the tensor axes only, the face axis is added.
        """
        ins, out = subscripts.split("->")
        ins = ins.split(",")
        full = ",".join("Z" + s if i == 0 else s for i, s in enumerate(ins))
        full += "->Z" + out
        return Form1(np.einsum(full, self.p, *operands),
                     np.einsum(full, self.q, *operands))

    def norm(self, mesh):
        """L2 norm sqrt(∫ |phi|^2) summed over tensor components."""
        w = mesh.face_areas.reshape((-1,) + (1,) * (self.p.ndim - 1))
        return float(np.sqrt(np.sum(2 * w * (np.abs(self.p) ** 2
                                             + np.abs(self.q) ** 2))))

    def is_real(self, tol=1e-12):
        return np.allclose(self.q, np.conj(self.p), atol=tol)


def zeros1(mesh, shape=()):
    z = np.zeros((mesh.n_faces,) + tuple(shape), dtype=complex)
    return Form1(z, z.copy())


def _bcast(w, arr):
    return w.reshape((-1,) + (1,) * (arr.ndim - 1))


class DECOperators:
    """Sparse operators built once per mesh.

    ``Dz``/``Dzb`` map vertex values to the ``dz``/``dz̄`` coefficients of the
    P1 differential.  ``stiffness`` is ``S_uv = ∫ <du, dv>``, so the weak form
    of ``d*d`` is ``-stiffness``.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        F, V = mesh.n_faces, mesh.n_vertices
        z = mesh.frames
        e1 = z[:, 1] - z[:, 0]
        e2 = z[:, 2] - z[:, 0]
        det = e1 * np.conj(e2) - np.conj(e1) * e2
        # u = const + beta z + gamma zbar on each face
        beta = np.stack([(-np.conj(e2) + np.conj(e1)) / det,
                         np.conj(e2) / det, -np.conj(e1) / det], axis=1)
        gamma = np.stack([(e2 - e1) / det, -e2 / det, e1 / det], axis=1)
        rows = np.repeat(np.arange(F), 3)
        cols = mesh.faces.ravel()
        self.beta = beta
        self.gamma = gamma
        self.Dz = sp.csr_matrix((beta.ravel(), (rows, cols)), shape=(F, V))
        self.Dzb = sp.csr_matrix((gamma.ravel(), (rows, cols)), shape=(F, V))
        self.areas = mesh.face_areas
        A = sp.diags(self.areas)
        S = 2 * (self.Dz.T @ A @ self.Dzb + self.Dzb.T @ A @ self.Dz)
        self.stiffness = sp.csr_matrix(S.real)
        # edge incidence: d0 on cochains (E x V) and d1 (F x E)
        E = mesh.n_edges
        i, j = mesh.edges[:, 0], mesh.edges[:, 1]
        self.d0 = sp.csr_matrix(
            (np.r_[-np.ones(E), np.ones(E)], (np.r_[np.arange(E), np.arange(E)],
                                               np.r_[i, j])), shape=(E, V))
        self.d1 = sp.csr_matrix(
            (mesh.face_edge_signs.ravel().astype(float),
             (rows, mesh.face_edges.ravel())), shape=(F, E))
        # P1 mass matrix
        loc = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0
        vals = self.areas[:, None, None] * loc[None]
        r = np.repeat(mesh.faces, 3, axis=1).ravel()
        c = np.tile(mesh.faces, (1, 3)).ravel()
        self.mass0 = sp.csr_matrix((vals.ravel(), (r, c)), shape=(V, V))
        self.vertex_weights = np.asarray(self.mass0.sum(axis=1)).ravel()

    # -- 0-forms -------------------------------------------------------
    def d(self, u):
        """Differential of a P1 function (vertex values, any trailing axes)."""
        u = np.asarray(u)
        flat = u.reshape(len(u), -1)
        p = (self.Dz @ flat).reshape((self.mesh.n_faces,) + u.shape[1:])
        q = (self.Dzb @ flat).reshape((self.mesh.n_faces,) + u.shape[1:])
        return Form1(p, q)

    def face_mean(self, u):
        return np.asarray(u)[self.mesh.faces].mean(axis=1)

    def integrate0(self, u):
        """∫ u dA for a P1 function."""
        return np.tensordot(self.vertex_weights, u, axes=(0, 0))

    # -- 1-forms -------------------------------------------------------
    def from_cochain(self, c):
        """Face-constant form of a closed edge cochain (trailing axes ok)."""
        c = np.asarray(c)
        s = self.mesh.face_edge_signs
        fe = self.mesh.face_edges
        shp = (-1,) + (1,) * (c.ndim - 1)
        c01 = c[fe[:, 0]] * s[:, 0].reshape(shp)
        c20 = c[fe[:, 2]] * s[:, 2].reshape(shp)
        # potential on corners: u0 = 0, u1 = c01, u2 = -c20
        b, g = self.beta, self.gamma
        p = b[:, 1].reshape(shp) * c01 - b[:, 2].reshape(shp) * c20
        q = g[:, 1].reshape(shp) * c01 - g[:, 2].reshape(shp) * c20
        return Form1(p, q)

    def to_cochain(self, phi):
        """Edge integrals of a face-constant form, averaged over both faces."""
        ev = self.mesh.face_edge_vectors
        shp = (self.mesh.n_faces, 3) + (1,) * (phi.p.ndim - 1)
        vals = (phi.p[:, None] * ev.reshape(shp)
                + phi.q[:, None] * np.conj(ev).reshape(shp))
        vals = vals * self.mesh.face_edge_signs.reshape(shp)
        out = np.zeros((self.mesh.n_edges,) + phi.p.shape[1:], dtype=complex)
        np.add.at(out, self.mesh.face_edges.ravel(),
                  vals.reshape((-1,) + phi.p.shape[1:]))
        return out / 2

    def closedness(self, phi):
        """Jump of edge integrals between the two faces of every edge."""
        ev = self.mesh.face_edge_vectors
        shp = (self.mesh.n_faces, 3) + (1,) * (phi.p.ndim - 1)
        vals = (phi.p[:, None] * ev.reshape(shp)
                + phi.q[:, None] * np.conj(ev).reshape(shp))
        # the two faces traverse a shared edge in opposite directions
        out = np.zeros((self.mesh.n_edges,) + phi.p.shape[1:], dtype=complex)
        np.add.at(out, self.mesh.face_edges.ravel(),
                  vals.reshape((-1,) + phi.p.shape[1:]))
        return out

    def codiff_load(self, phi):
        """Load of the 2-form ``d*phi``: ``v -> -∫ dv ∧ *phi``."""
        A = _bcast(self.areas, phi.p)
        wp = (2 * A * phi.p).reshape(self.mesh.n_faces, -1)
        wq = (2 * A * phi.q).reshape(self.mesh.n_faces, -1)
        out = -(self.Dz.T @ wq + self.Dzb.T @ wp)
        return out.reshape((self.mesh.n_vertices,) + phi.p.shape[1:])

    def curl_load(self, phi):
        """Load of the 2-form ``d phi``: ``v -> -∫ dv ∧ phi``."""
        A = _bcast(self.areas, phi.p)
        wp = (-2j * A * phi.p).reshape(self.mesh.n_faces, -1)
        wq = (-2j * A * phi.q).reshape(self.mesh.n_faces, -1)
        out = -(self.Dz.T @ wq - self.Dzb.T @ wp)
        return out.reshape((self.mesh.n_vertices,) + phi.p.shape[1:])

    # -- 2-forms -------------------------------------------------------
    def density_load(self, rho):
        """Load of a face-constant density ``rho dx∧dy``."""
        rho = np.asarray(rho)
        w = _bcast(self.areas / 3, rho) * rho
        out = np.zeros((self.mesh.n_vertices,) + rho.shape[1:],
                       dtype=np.result_type(rho, float))
        for k in range(3):
            np.add.at(out, self.mesh.faces[:, k], w)
        return out

    def product_load(self, u, rho):
        """Load of ``u * rho dx∧dy`` for P1 ``u`` and face density ``rho``.

        Trailing axes of ``u`` and ``rho`` must broadcast.
        """
        u = np.asarray(u)
        rho = np.asarray(rho)
        uf = u[self.mesh.faces]  # (F, 3, ...)
        tot = uf.sum(axis=1)
        V = self.mesh.n_vertices
        res = None
        for k in range(3):
            local = (uf[:, k] + tot) / 12.0
            w = _bcast(self.areas, rho) * rho * local
            if res is None:
                res = np.zeros((V,) + w.shape[1:], dtype=w.dtype)
            np.add.at(res, self.mesh.faces[:, k], w)
        return res

    def integrate_pp(self, u, v, rho, subscripts):
        """Exact ∫ u v rho for P1 ``u``, ``v`` and a face density ``rho``.

        ``subscripts`` names the tensor axes only, e.g. ``"a,d,bc->abcd"``.
        """
        ins, out = subscripts.split("->")
        su, sv, sr = ins.split(",")
        uf = np.asarray(u)[self.mesh.faces]
        vf = np.asarray(v)[self.mesh.faces]
        rho = np.asarray(rho) * _bcast(self.areas / 12.0, np.asarray(rho))
        diag = np.einsum(f"Zk{su},Zk{sv},Z{sr}->{out}", uf, vf, rho)
        full = np.einsum(f"Z{su},Z{sv},Z{sr}->{out}", uf.sum(axis=1),
                         vf.sum(axis=1), rho)
        return diag + full

    def integrate_p(self, u, rho, subscripts):
        """Exact ∫ u rho for P1 ``u`` and a face density ``rho``."""
        ins, out = subscripts.split("->")
        su, sr = ins.split(",")
        um = np.asarray(u)[self.mesh.faces].mean(axis=1)
        rho = np.asarray(rho) * _bcast(self.areas, np.asarray(rho))
        return np.einsum(f"Z{su},Z{sr}->{out}", um, rho)

    def integrate2(self, rho):
        """∫ rho dx∧dy for a face density."""
        return np.tensordot(self.areas, rho, axes=(0, 0))

    def delta_load(self, vertex):
        out = np.zeros(self.mesh.n_vertices)
        out[vertex] = 1.0
        return out


def wedge(a, b, subscripts=None):
    """Density of ``a ∧ b`` (coefficient of dx∧dy).

    ``dz∧dz̄ = -2i dx∧dy``.  Tensor axes combine as an outer product unless
    ``subscripts`` (over tensor axes, face axis implicit) is given.
    """
    if subscripts is None:
        na, nb = a.p.ndim - 1, b.p.ndim - 1
        letters = "abcdefghijklmnop"
        sa, sb = letters[:na], letters[na:na + nb]
        subscripts = f"{sa},{sb}->{sa}{sb}"
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    full = f"Z{sa},Z{sb}->Z{out}"
    return -2j * (np.einsum(full, a.p, b.q) - np.einsum(full, a.q, b.p))


def qd_product(a, b, subscripts=None):
    """Quadratic differential ``a' b'`` as a dz² coefficient per face."""
    if subscripts is None:
        na, nb = a.p.ndim - 1, b.p.ndim - 1
        letters = "abcdefghijklmnop"
        sa, sb = letters[:na], letters[na:na + nb]
        subscripts = f"{sa},{sb}->{sa}{sb}"
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    return np.einsum(f"Z{sa},Z{sb}->Z{out}", a.p, b.p)
