"""Tensor algebra over H = H_1(C; C) in a symplectic basis.

A degree-n tensor is an array whose last n axes have length 2g and hold
coefficients in the basis X_1..X_2g.  Leading axes are free (for example the
face axis of an H-valued form), so every contraction here acts on trailing
axes only.  ``omega`` is the intersection matrix ``omega[i, j] = X_i . X_j``.
"""

import itertools

import numpy as np

from .topology import standard_symplectic


class TensorDegreeError(ValueError):
    pass


class NotAlternatingError(ValueError):
    pass


def _check(t, n, dim):
    if t.ndim < n or any(s != dim for s in t.shape[t.ndim - n:]):
        raise TensorDegreeError(f"expected {n} trailing axes of length {dim}, "
                                f"got shape {t.shape}")


class SymplecticForm:
    """Intersection form on H and the contractions built from it."""

    def __init__(self, omega):
        omega = np.asarray(omega)
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1] or len(omega) % 2:
            raise ValueError("intersection matrix must be 2g x 2g")
        if not np.allclose(omega, -omega.T):
            raise ValueError("intersection matrix is not antisymmetric")
        if not np.isclose(np.linalg.det(omega), 1.0):
            raise ValueError("intersection matrix is not unimodular")
        self.omega = omega.astype(float)
        self.dim = len(omega)
        self.g = self.dim // 2

    @classmethod
    def standard(cls, g):
        return cls(standard_symplectic(g))

    @property
    def I(self):
        """Intersection tensor sum_i X_i X_{g+i} - X_{g+i} X_i (degree 2)."""
        return self.omega.copy()

    def dot(self, z, w):
        """Z . W for degree-1 tensors (trailing axis)."""
        return np.einsum("...a,ab,...b->...", z, self.omega, w)

    # -- contractions to scalars ----------------------------------------
    def m(self, t):
        """m(Z_1 Z_2) = Z_1 . Z_2."""
        _check(t, 2, self.dim)
        return np.einsum("...ab,ab->...", t, self.omega)

    def m_first(self, t, n):
        """(m ⊗ 1) on the first two of the last n axes."""
        if n < 2:
            raise TensorDegreeError("m ⊗ 1 needs degree >= 2")
        _check(t, n, self.dim)
        return self._contract_slots(t, n, 0, 1)

    def _contract_slots(self, t, n, i, j):
        """Contract trailing slots i < j of a degree-n tensor with omega."""
        lead = t.ndim - n
        moved = np.moveaxis(t, [lead + i, lead + j], [-2, -1])
        return np.einsum("...ab,ab->...", moved, self.omega)

    def mm(self, t):
        """(m ⊗ m) of a degree-4 tensor."""
        _check(t, 4, self.dim)
        w = self.omega
        return np.einsum("...abcd,ab,cd->...", t, w, w)

    def M(self, t):
        """M(Z1 Z2 Z3 Z4) = (Z2 . Z3)(Z4 . Z1)."""
        _check(t, 4, self.dim)
        w = self.omega
        return np.einsum("...abcd,bc,da->...", t, w, w)

    def Mhat(self, t):
        """M̂(Z1 Z2 Z3 W1 W2 W3) = (Z1 . W1)(Z2 . W2)(Z3 . W3)."""
        _check(t, 6, self.dim)
        w = self.omega
        return np.einsum("...abcdef,ad,be,cf->...", t, w, w, w)

    def mmm(self, t):
        """(m ⊗ m ⊗ m) of a degree-6 tensor."""
        _check(t, 6, self.dim)
        w = self.omega
        return np.einsum("...abcdef,ab,cd,ef->...", t, w, w, w)

    def M1(self, t):
        """M_1 = (m ⊗ m ⊗ m) restricted to Λ³H ⊗ Λ³H."""
        self._check_lambda3_pair(t)
        return self.mmm(t)

    def M2(self, t):
        """M_2 = M̂ restricted to Λ³H ⊗ Λ³H."""
        self._check_lambda3_pair(t)
        return self.Mhat(t)

    def _check_lambda3_pair(self, t, tol=1e-10):
        _check(t, 6, self.dim)
        lead = t.ndim - 6
        for half in (0, 3):
            for perm in ((1, 0, 2), (0, 2, 1)):
                axes = list(range(t.ndim))
                for k, p in enumerate(perm):
                    axes[lead + half + k] = lead + half + p
                if not np.allclose(np.transpose(t, axes), -t, atol=tol):
                    raise NotAlternatingError(
                        "M_1/M_2 need both factors in the image of Λ³H")

    # -- degree 6 -> degree 4 -------------------------------------------
    def M3(self, t):
        """M_3(Z1 Z2 Z3 W1 W2 W3) = (Z3 . W1) Z1 Z2 W2 W3."""
        _check(t, 6, self.dim)
        return np.einsum("...abcdef,cd->...abef", t, self.omega)

    def M4(self, t):
        """M_4(Z1 Z2 Z3 W1 W2 W3) = (Z3 . W2) W1 Z1 Z2 W3."""
        _check(t, 6, self.dim)
        return np.einsum("...abcdef,ce->...dabf", t, self.omega)

    # -- Λ³H and its pieces ----------------------------------------------
    def qH(self, z):
        """Z -> Z ∧ I = N(Z I)."""
        _check(z, 1, self.dim)
        return N(np.multiply.outer(z, self.omega), 3)

    def pH(self, t):
        """(1/(2g-2)) (m ⊗ 1) on Λ³H; a left inverse of :meth:`qH`."""
        if self.g < 2:
            raise ValueError("p_H needs genus >= 2")
        check_alternating(t)
        return self._contract_slots(t, 3, 0, 1) / (2 * self.g - 2)

    def pU(self, t):
        """Projection Λ³H -> U, U realised as the kernel of p_H."""
        return t - self.qH(self.pH(t))

    def qU(self, u, tol=1e-10):
        """Inclusion U -> Λ³H (checks that u lies in the kernel of p_H)."""
        if np.max(np.abs(self.pH(u)), initial=0.0) > tol * max(
                1.0, np.max(np.abs(u))):
            raise ValueError("element is not in the kernel of p_H")
        return u


def N(t, n=None):
    """Sum of the n cyclic shifts of the last n axes."""
    if n is None:
        n = t.ndim
    if n < 1:
        raise TensorDegreeError("N needs degree >= 1")
    lead = t.ndim - n
    out = np.zeros_like(t)
    for k in range(n):
        axes = list(range(lead)) + [lead + (i + k) % n for i in range(n)]
        out = out + np.transpose(t, axes)
    return out


def lambda3_embed(z1, z2, z3):
    """Z1 ∧ Z2 ∧ Z3 as the signed sum of its 6 permutations in H^{⊗3}."""
    vecs = (np.asarray(z1), np.asarray(z2), np.asarray(z3))
    out = 0
    for perm in itertools.permutations(range(3)):
        sign = np.linalg.det(np.eye(3)[list(perm)])
        a, b, c = (vecs[p] for p in perm)
        out = out + sign * np.einsum("...a,...b,...c->...abc", a, b, c)
    return out


def check_alternating(t, tol=1e-10):
    """Raise unless the last 3 axes of t are totally antisymmetric."""
    if t.ndim < 3:
        raise TensorDegreeError("Λ³H elements have degree 3")
    lead = t.ndim - 3
    scale = max(1.0, float(np.max(np.abs(t), initial=0.0)))
    for perm in ((1, 0, 2), (0, 2, 1)):
        axes = list(range(lead)) + [lead + p for p in perm]
        if np.max(np.abs(np.transpose(t, axes) + t), initial=0.0) > tol * scale:
            raise NotAlternatingError("tensor is not in the image of Λ³H")


class HStar:
    """The transpose Hodge star on H as a real 2g x 2g matrix.

    ``matrix @ z`` gives the coefficients of ♭*Z.  The H' (-i) and H'' (+i)
    eigenspaces are returned as column bases.
    """

    def __init__(self, matrix, form):
        self.matrix = np.asarray(matrix, float)
        self.form = form
        w, v = np.linalg.eig(self.matrix)
        order = np.argsort(w.imag)
        self._vals = w[order]
        self._vecs = v[:, order]

    def __call__(self, z):
        return np.einsum("ab,...b->...a", self.matrix, z)

    @property
    def h_prime(self):
        g = self.form.g
        return self._vecs[:, :g]

    @property
    def h_dprime(self):
        return np.conj(self.h_prime)

    def residuals(self):
        """Deviations from ♭*² = -1 and from preserving the intersection form."""
        S, W = self.matrix, self.form.omega
        return {
            "square": float(np.max(np.abs(S @ S + np.eye(len(S))))),
            "symplectic": float(np.max(np.abs(S.T @ W @ S - W))),
        }
