"""Harmonic forms, the holomorphic basis, ω_(1) and the volume form B.

The harmonic representatives ξ_k come from the dual integer cocycles by one
Laplace solve each.  The complex structure on the harmonic space is read
off from the Gram matrix of the Hodge star and made into an exact complex
structure; the components of Σ ξ_k X_k along its -i eigenspace are closed
forms whose (0,1) part is the discretisation error.

Two holomorphic bases are offered.  ``holomorphic="type"`` (the default)
keeps the (1,0) part of those closed forms and re-orthonormalises, so every
ψ_i is exactly of type (1,0) and only approximately closed.
``holomorphic="closed"`` keeps the closed forms themselves.  In both cases
ω_(1) := Σ ψ_i Y_i + conj is the form every later construction uses, and
orthonormality, isotropy of H' and B = (i/2g) Σ ψ_i∧ψ̄_i hold exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .dec import DECOperators, Form1, wedge
from .green import LaplaceSolver
from .mesh import genus
from .tensor import HStar, SymplecticForm
from .topology import homology_basis, whitney_cup


class BasisError(RuntimeError):
    """Gram matrix not positive definite: the discrete star is broken."""


def _sym_fn(A, fn):
    w, v = np.linalg.eigh(A)
    return (v * fn(w)) @ v.T


@dataclass
class HarmonicBasis:
    """Harmonic basis of a mesh together with derived data.

    Attributes
    ----------
    xi : Form1, trailing axis 2g
        Real harmonic forms dual to ``homology.cycles``.
    psi : Form1, trailing axis g
        Orthonormal holomorphic forms, (i/2)∫ψ_i∧ψ̄_j = δ_ij.
    psi_coeffs : (2g, g) complex
        Coefficients of the closed holomorphic forms in the ξ basis; their
        transpose is the period matrix of the closed forms.
    Y : (2g, g) complex
        Columns are Y_i in X-coordinates; ω' = Σ ψ_i Y_i.
    star : HStar
        ♭* on H.
    """

    mesh: object
    ops: DECOperators
    homology: object
    form: SymplecticForm
    xi: Form1
    cup: np.ndarray
    gram_star: np.ndarray
    star: HStar
    psi_coeffs: np.ndarray
    Y: np.ndarray
    laplace: LaplaceSolver
    psi: Form1 = None
    holomorphic: str = "type"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.psi is None:
            self.psi = self.psi_closed

    @property
    def genus(self):
        return self.form.g

    @property
    def psi_closed(self):
        return self.xi.contract("k,ki->i", self.psi_coeffs)

    @property
    def periods(self):
        """periods[i, j] = ∫_{X_j} ψ_i."""
        return self.psi_coeffs.T.copy()

    def period_matrix(self):
        """tau = A^{-1} B from the A- and B-periods of ψ."""
        P = self.periods
        g = self.genus
        return np.linalg.solve(P[:, :g], P[:, g:])

    def omega1_xi(self):
        """Σ ξ_k X_k, the exactly closed and co-closed expression."""
        return self.xi.contract("k,kl->l", np.eye(2 * self.genus))

    def omega1_prime(self):
        """ω' = Σ ψ_i Y_i (trailing axis 2g)."""
        return self.psi.contract("i,li->l", self.Y)

    def omega1_dprime(self):
        return self.omega1_prime().conj()

    def omega1(self):
        """ω_(1) = ω' + ω'' (real, trailing axis 2g)."""
        w = self.omega1_prime() + self.omega1_dprime()
        return Form1(w.p, np.conj(w.p))

    def canonical_volume(self):
        """B = (1/2g) m(ω_(1)∧ω_(1)) as a face density."""
        w = self.omega1()
        dens = self.form.m(wedge(w, w))
        return (dens / (2 * self.genus)).real

    def canonical_volume_psi(self):
        """B = (i/2g) Σ ψ_i∧ψ̄_i, the second assembly route."""
        psi = self.psi
        return (0.5j / self.genus * np.einsum(
            "fii->f", wedge(psi, psi.conj()))).real

    def harmonic_projection(self, phi, side="left"):
        """-ω·(∫ω∧φ) (``side='left'``) or -(∫φ∧ω)·ω (``'right'``).

        Works for forms with trailing tensor axes.
        """
        w = self.omega1()
        A = self.mesh.face_areas
        if side == "left":
            dens = wedge(w, phi)
            c = np.tensordot(A, dens, axes=(0, 0))
            vec = np.einsum("ba,a...->b...", self.form.omega, c)
            return _combine(w, -vec)
        dens = wedge(phi, w)
        d = np.tensordot(A, dens, axes=(0, 0))
        # d[..., a]; result -Σ (X_a . X_b) d_a ω_b
        vec = -np.einsum("...a,ab->b...", d, self.form.omega)
        return _combine(w, vec)

    def harmonic_residuals(self):
        """Relative closedness and co-closedness residuals of every ξ_k."""
        ops = self.ops
        jump = np.abs(ops.closedness(self.xi))
        codiff = np.abs(ops.codiff_load(self.xi))
        scale = np.sqrt(np.sum(self.mesh.face_areas[:, None]
                               * np.abs(self.xi.p) ** 2, axis=0))
        lens = self.mesh.edge_lengths[:, None]
        return {
            "closed": float(np.max(jump / lens / scale)),
            "coclosed": float(np.max(np.abs(codiff).sum(axis=0) / scale)),
        }


def _combine(xi, vec):
    """Σ_b vec[b, ...] ξ_b for a coefficient array with leading axis 2g."""
    vec = np.asarray(vec)
    rest = vec.shape[1:]
    flat = vec.reshape(len(vec), -1)
    p = (xi.p @ flat).reshape((len(xi.p),) + rest)
    q = (xi.q @ flat).reshape((len(xi.q),) + rest)
    return Form1(p, q)


def exact_complex_structure(S, Q):
    """Nearest exact complex structure commuting with S.

    S = J^{-1} Q with Q symmetric positive definite; returns
    S (-S^2)^{-1/2}, computed through the antisymmetric matrix
    Q^{1/2} S Q^{-1/2}.
    """
    Qh = _sym_fn(Q, np.sqrt)
    Qih = _sym_fn(Q, lambda w: 1 / np.sqrt(w))
    A = Qh @ S @ Qih
    A = 0.5 * (A - A.T)
    P = _sym_fn(-A @ A, lambda w: 1 / np.sqrt(w))
    return Qih @ (A @ P) @ Qh


def harmonic_basis(mesh, homology=None, ops=None, laplace=None,
                   holomorphic="type"):
    """Harmonic basis, holomorphic basis and complex structure of ``mesh``."""
    if holomorphic not in ("type", "closed"):
        raise ValueError("holomorphic must be 'type' or 'closed'")
    g = genus(mesh)
    ops = ops if ops is not None else DECOperators(mesh)
    homology = homology if homology is not None else homology_basis(mesh)
    laplace = laplace if laplace is not None else LaplaceSolver(ops)
    form = SymplecticForm(homology.intersection)

    zeta = ops.from_cochain(homology.cocycles.T.astype(float))
    u = laplace.solve(-ops.codiff_load(zeta).real)
    du = ops.d(u)
    xi = zeta - du

    cup = np.array([[whitney_cup(mesh, a, b) for b in homology.cocycles]
                    for a in homology.cocycles])
    A = mesh.face_areas
    cup_faces = np.tensordot(A, wedge(xi, xi), axes=(0, 0)).real
    Q = np.tensordot(A, wedge(xi, xi.star()), axes=(0, 0)).real
    Q = 0.5 * (Q + Q.T)
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise BasisError("Gram matrix of the Hodge star is not positive definite")
    S = np.linalg.solve(cup, Q)
    S_exact = exact_complex_structure(S, Q)
    star = HStar(S_exact.T, form)

    # Y_i: projections of X_1..X_g onto the -i eigenspace of ♭*
    Pp = 0.5 * (np.eye(2 * g) + 1j * S_exact.T)
    Y = Pp[:, :g]
    W = np.hstack([Y, np.conj(Y)])
    a = np.linalg.inv(W)[:g].T  # ψ_i = Σ_k a[k, i] ξ_k
    G = 0.5j * a.T @ cup @ np.conj(a)
    G = 0.5 * (G + G.conj().T)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise BasisError("holomorphic Gram matrix is not positive definite") \
            from exc
    C = np.linalg.inv(L).T
    a = a @ C
    Y = Y @ np.linalg.inv(C).T

    closed = xi.contract("k,ki->i", a)
    if holomorphic == "type":
        psi = closed.prime()
        G = 0.5j * np.tensordot(A, wedge(psi, psi.conj()), axes=(0, 0))
        G = 0.5 * (G + G.conj().T)
        psi = psi.contract("i,ij->j", np.linalg.inv(np.linalg.cholesky(G)).T)
    else:
        psi = closed

    basis = HarmonicBasis(mesh, ops, homology, form, xi, cup, Q, star, a, Y,
                          laplace, psi, holomorphic)
    gram = 0.5j * np.tensordot(A, wedge(psi, psi.conj()), axes=(0, 0))
    w_psi, w_xi = basis.omega1(), basis.omega1_xi()
    YY = form.dot(Y.T[:, None, :], np.conj(Y).T[None, :, :])
    basis.diagnostics = {
        "cup_whitney_vs_faces": float(np.max(np.abs(cup - cup_faces))),
        "star_square": float(np.max(np.abs(S @ S + np.eye(2 * g)))),
        "gram_residual": float(np.max(np.abs(gram - np.eye(g)))),
        "isotropy": float(np.max(np.abs(form.dot(Y.T[:, None], Y.T[None])))),
        "y_ybar": float(np.max(np.abs(YY - 0.5j * np.eye(g)))),
        "psi_01_fraction": float(np.sqrt(
            np.sum(A[:, None] * np.abs(closed.q) ** 2)
            / np.sum(A[:, None] * np.abs(closed.p) ** 2))),
        "omega1_vs_xi": (w_psi - w_xi).norm(mesh) / w_xi.norm(mesh),
    }
    return basis
