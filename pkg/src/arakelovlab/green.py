"""Green operators on P1 functions.

``green_hat`` solves ``d*d K = Omega - (∫Omega) B`` with ``∫ K B = 0`` and
``green_phi`` the same with the delta at the basepoint replacing ``B``,
normalised to vanish at the basepoint.  Both accept loads with arbitrary
trailing tensor axes and solve all components against one factorisation.
"""

import logging
import os

import numpy as np
import scipy.sparse.linalg as spla

from .dec import DECOperators

logger = logging.getLogger(__name__)

#: above this many vertices the sparse LU is replaced by conjugate gradients
DIRECT_LIMIT = int(os.environ.get("ARAKELOVLAB_DIRECT_LIMIT", 400_000))


class SolverError(RuntimeError):
    pass


class GValueZero:
    """Returned by :func:`arakelov_green` when the two points coincide.

    G vanishes to first order on the diagonal, so log G is -inf there.
    """

    value = 0.0
    log_value = -np.inf

    def __repr__(self):
        return "GValueZero()"

    def __bool__(self):
        return False


class LaplaceSolver:
    """Factorised stiffness matrix with vertex ``pin`` held at zero."""

    def __init__(self, ops, pin=0, rtol=1e-10):
        self.ops = ops
        self.pin = pin
        self.rtol = rtol
        V = ops.mesh.n_vertices
        keep = np.ones(V, bool)
        keep[pin] = False
        self._keep = keep
        S = ops.stiffness.tocsc()
        self._S_red = S[keep][:, keep].tocsc()
        self._lu = None
        if V <= DIRECT_LIMIT:
            try:
                self._lu = spla.splu(self._S_red)
            except MemoryError:
                logger.warning("sparse LU ran out of memory, using CG")

    def _solve_real(self, rhs):
        if self._lu is not None:
            return self._lu.solve(rhs)
        out = np.empty_like(rhs)
        n = self._S_red.shape[0]
        for k in range(rhs.shape[1]):
            x, info = spla.cg(self._S_red, rhs[:, k], rtol=self.rtol,
                              maxiter=10 * n)
            if info != 0:
                raise SolverError(f"CG did not converge (info={info})")
            out[:, k] = x
        return out

    def solve(self, rhs):
        """Solve ``stiffness @ u = rhs`` for rhs with zero column sums."""
        rhs = np.asarray(rhs)
        shape = rhs.shape
        flat = rhs.reshape(shape[0], -1)
        red = flat[self._keep]
        if np.iscomplexobj(red):
            sol = (self._solve_real(np.ascontiguousarray(red.real))
                   + 1j * self._solve_real(np.ascontiguousarray(red.imag)))
        else:
            sol = self._solve_real(np.ascontiguousarray(red))
        out = np.zeros(flat.shape, dtype=sol.dtype)
        out[self._keep] = sol
        return out.reshape(shape)


class GreenSolver:
    """Green operators of a mesh for the volume form ``B``.

    ``B`` is a face density with ``∫B = 1``.  ``basepoint`` enables
    :meth:`green_phi`.
    """

    def __init__(self, mesh, B, ops=None, basepoint=None, laplace=None):
        self.mesh = mesh
        self.ops = ops if ops is not None else DECOperators(mesh)
        self.B = np.asarray(B, float)
        self.b = self.ops.density_load(self.B)
        self.basepoint = basepoint if basepoint is not None else mesh.basepoint
        self.laplace = laplace if laplace is not None else LaplaceSolver(self.ops)

    def with_basepoint(self, p0):
        return GreenSolver(self.mesh, self.B, self.ops, p0, self.laplace)

    def _total(self, load):
        return np.sum(load, axis=0)

    def green_hat(self, load):
        """Φ̂ applied to a 2-form given as a load (trailing axes allowed)."""
        load = np.asarray(load)
        tot = self._total(load)
        rhs = load - np.multiply.outer(self.b, tot)
        K = -self.laplace.solve(rhs)
        mean = np.tensordot(self.b, K, axes=(0, 0))
        return K - mean[None]

    def green_phi(self, load):
        """Φ (delta at the basepoint), normalised to vanish at the basepoint."""
        if self.basepoint is None:
            raise SolverError("green_phi needs a basepoint")
        load = np.asarray(load)
        tot = self._total(load)
        rhs = load.astype(np.result_type(load, float)).copy()
        rhs[self.basepoint] -= tot
        K = -self.laplace.solve(rhs)
        return K - K[self.basepoint][None]

    def residual_hat(self, load, K):
        """Relative residual of the defining equations of Φ̂."""
        load = np.asarray(load)
        rhs = load - np.multiply.outer(self.b, self._total(load))
        lhs = -(self.ops.stiffness @ K.reshape(len(K), -1)).reshape(K.shape)
        scale = max(np.max(np.abs(rhs)), 1e-300)
        return (float(np.max(np.abs(lhs - rhs)) / scale),
                float(np.max(np.abs(np.tensordot(self.b, K, axes=(0, 0))))))

    def green_function(self, p0=None):
        """h_{P0} = -Φ̂(δ_{P0}) as vertex values."""
        p0 = self.basepoint if p0 is None else p0
        if p0 is None:
            raise SolverError("green_function needs a basepoint")
        return -self.green_hat(self.ops.delta_load(p0))

    def hodge_decompose(self, phi, harmonic_projection):
        """Split phi into (harmonic, *dΦ̂dphi, dΦ̂d*phi).

        Exact on the span of harmonic forms, P1 differentials and their
        stars; anything outside that span is left in
        ``phi - sum(parts)``.
        """
        ops = self.ops
        exact = ops.d(self.green_hat(ops.codiff_load(phi)))
        coexact = ops.d(self.green_hat(ops.curl_load(phi))).star()
        return harmonic_projection(phi), coexact, exact


def arakelov_green(solver, p0, p1):
    """G(P0, P1) = exp(-4 pi h_{P0}(P1)); a :class:`GValueZero` on the diagonal."""
    if p0 == p1:
        return GValueZero()
    h = solver.green_function(p0)
    return float(np.exp(-4 * np.pi * h[p1].real))
