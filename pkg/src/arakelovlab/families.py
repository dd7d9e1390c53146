"""Test surfaces: flat tori, two genus-2 translation surfaces, torus families.

Also provides :func:`torus_green_oracle`, an Ewald-summed lattice series for
the Green function of a flat torus, and an independent theta-function
formula used to cross-check it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .mesh import MeshError, RiemannMesh


def _grid_faces(n, index):
    """Faces and unwrapped corner positions of an n x n periodic grid.

    ``index(i, j)`` returns the vertex id of grid point (i mod n, j mod n).
    Positions are integer lattice coordinates (i, j) as complex i + 1j*j.
    """
    faces, pos = [], []
    for j in range(n):
        for i in range(n):
            a, b = index(i, j), index(i + 1, j)
            c, d = index(i + 1, j + 1), index(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
            pos += [((i, j), (i + 1, j), (i + 1, j + 1)),
                    ((i, j), (i + 1, j + 1), (i, j + 1))]
    return faces, np.array(pos, dtype=float)


def flat_torus(tau, n, basepoint=0):
    """Flat torus C/(Z + tau Z) on an n x n grid, each cell split on its diagonal.

    Face frames are global lattice coordinates, so every vertex is flat and
    constant Beltrami differentials are globally meaningful.
    """
    tau = complex(tau)
    if tau.imag <= 0:
        raise MeshError("flat_torus needs Im tau > 0")
    if n < 3:
        raise MeshError("flat_torus needs n >= 3")
    faces, pos = _grid_faces(n, lambda i, j: (i % n) + n * (j % n))
    frames = (pos[..., 0] + tau * pos[..., 1]) / n
    return RiemannMesh(np.array(faces), frames, n * n, basepoint=basepoint)


def torus_point(tau, n, z):
    """Grid vertex nearest to the point ``z`` of C/(Z + tau Z)."""
    tau, z = complex(tau), complex(z)
    b = z.imag / tau.imag
    a = z.real - b * tau.real
    i, j = int(round(a * n)) % n, int(round(b * n)) % n
    return i + n * j


def vertex_positions(tau, n):
    """Lattice position of every vertex of :func:`flat_torus`."""
    j, i = np.divmod(np.arange(n * n), n)
    return (i + complex(tau) * j) / n


# -- Green function oracle ----------------------------------------------

def _lattice_basis(tau):
    tau = complex(tau)
    return np.array([[1.0, tau.real], [0.0, tau.imag]])


def _lattice_points(L, R):
    """All points L @ m (m integer) with |L m| <= R."""
    Linv = np.linalg.inv(L)
    M = int(np.ceil(R * np.linalg.norm(Linv, 2))) + 1
    m = np.arange(-M, M + 1)
    mm = np.stack(np.meshgrid(m, m, indexing="ij"), -1).reshape(-1, 2)
    pts = mm @ L.T
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= R]


def _tail_radius(decay, density, diam, tol):
    """Smallest radius whose Gaussian tail bound drops below ``tol``.

    Bounds sum_{|x|>R} e^{-decay |x|^2}/(decay |x|^2) by ``density`` times the
    integral over |x| > R - diam.
    """
    R = 2 * diam + 1.0
    while True:
        r = R - diam
        bound = density * np.pi * np.exp(-decay * r * r) / (decay * decay * r * r)
        if r > 0 and bound < tol:
            return R
        R *= 1.2


def torus_green_oracle(tau, z, tol=1e-10):
    """h(z) on C/(Z + tau Z): solves Δh = 1/A - δ_0 with zero mean.

    Ewald split of the Fourier series sum_{k != 0} e^{2πi k.z}/(4π² A |k|²)
    into a reciprocal and a real-space sum; both tails are bounded by
    ``tol``.  ``z`` may be an array.
    """
    tau = complex(tau)
    z = np.asarray(z, dtype=complex)
    L = _lattice_basis(tau)
    A = tau.imag
    Ls = np.linalg.inv(L).T
    alpha = A / np.pi
    diam = np.linalg.norm(L @ [1, 1]) + np.linalg.norm(L @ [1, -1])
    diam_s = np.linalg.norm(Ls @ [1, 1]) + np.linalg.norm(Ls @ [1, -1])
    k = _lattice_points(Ls, _tail_radius(alpha, A, diam_s, tol))
    k2 = np.sum(k * k, axis=1)
    k, k2 = k[k2 > 0], k2[k2 > 0]
    lam = _lattice_points(L, _tail_radius(np.pi**2 / alpha, 1 / A, diam, tol)
                          + diam)

    xy = np.stack([z.real.ravel(), z.imag.ravel()], -1)
    # reduce to the fundamental cell so the real-space sum stays short
    frac = xy @ np.linalg.inv(L).T
    xy = (frac - np.round(frac)) @ L.T
    d = xy[:, None, :] - lam[None]
    r2 = np.sum(d * d, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("torus_green_oracle is singular at lattice points")
    real = A * np.pi * exp1(np.pi**2 * r2 / alpha).sum(axis=1)
    recip = (np.exp(-alpha * k2) / k2 * np.cos(2 * np.pi * xy @ k.T)).sum(axis=1)
    h = (recip + real - alpha) / (4 * np.pi**2 * A)
    return h.reshape(z.shape)


def torus_green_theta(tau, z, terms=60):
    """Same function from the Jacobi theta function theta_1.

    h = -(1/2π) log|θ1(πz|τ)| + y²/(2 Im τ) + c(τ), with c fixed by the
    zero-mean condition.  Independent of :func:`torus_green_oracle`.
    """
    tau = complex(tau)
    z = np.asarray(z, dtype=complex)
    L = _lattice_basis(tau)
    xy = np.stack([z.real, z.imag], -1)
    frac = xy @ np.linalg.inv(L).T
    frac -= np.floor(frac)
    xy = frac @ L.T
    zr = xy[..., 0] + 1j * xy[..., 1]
    q = np.exp(1j * np.pi * tau)
    n = np.arange(terms)
    v = np.pi * zr[..., None]
    theta = 2 * np.sum((-1.0) ** n * q ** ((n + 0.5) ** 2)
                       * np.sin((2 * n + 1) * v), axis=-1)
    A = tau.imag
    m = np.arange(1, terms)
    c = (np.pi * A / 4 + np.sum(np.log(np.abs(1 - q ** (2 * m))))) / (2 * np.pi) \
        - A / 6
    return -np.log(np.abs(theta)) / (2 * np.pi) + zr.imag ** 2 / (2 * A) + c


# -- genus 2 ------------------------------------------------------------

def _grade(z, centers, radius, beta):
    """Pull points radially towards the nearest centre.

    Inside ``radius`` the distance r to the centre becomes
    radius * s(r / radius) with s(x) = x^(beta - (beta - 1) x): C¹ at the
    rim and ~x^beta at the cone point.  Rays through the centre are kept,
    so polygon sides and spokes through cone points stay straight.
    """
    z = np.asarray(z, dtype=complex)
    out = z.copy()
    flat = out.reshape(-1)
    d = flat[:, None] - np.asarray(centers)[None, :]
    k = np.argmin(np.abs(d), axis=1)
    dk = d[np.arange(len(flat)), k]
    r = np.abs(dk)
    inside = (r < radius) & (r > 0)
    x = r[inside] / radius
    s = np.exp((beta - (beta - 1) * x) * np.log(x))
    flat[inside] = np.asarray(centers)[k[inside]] + dk[inside] / r[inside] \
        * radius * s
    return out


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _octagon(n, beta=3.0):
    """Regular octagon with opposite sides glued by translation.

    Each of the 8 fan triangles around the centre is split into n² faces.
    The 8 corners become one cone point of total angle 6π; the centre is a
    flat vertex and is the default basepoint.
    """
    c = np.exp(1j * np.pi * np.arange(9) / 4)
    key = lambda w: (int(round(w.real * n * 1e6)), int(round(w.imag * n * 1e6)))
    uf = _UnionFind()
    faces_pos = []
    for k in range(8):
        P0, P1, P2 = 0j, c[k], c[k + 1]
        pt = lambda a, b: P0 + (a / n) * (P1 - P0) + (b / n) * (P2 - P0)
        for a in range(n):
            for b in range(n - a):
                faces_pos.append((pt(a, b), pt(a + 1, b), pt(a, b + 1)))
                if a + b < n - 1:
                    faces_pos.append((pt(a + 1, b), pt(a + 1, b + 1),
                                      pt(a, b + 1)))
    for k in range(4):
        for j in range(n + 1):
            s = j / n
            w = c[k] + s * (c[k + 1] - c[k])
            w2 = c[k + 4] + (1 - s) * (c[k + 5] - c[k + 4])
            uf.union(key(w), key(w2))
    frames = np.array(faces_pos)
    faces = np.empty(frames.shape, dtype=np.int64)
    # number vertices by first appearance, centre first
    order = sorted({uf.find(key(w)) for w in frames.ravel()},
                   key=lambda r: (r != key(0j), r))
    roots = {r: i for i, r in enumerate(order)}
    for f in range(len(frames)):
        for m in range(3):
            faces[f, m] = roots[uf.find(key(frames[f, m]))]
    if beta != 1:
        frames = _grade(frames, c[:8], 0.3, beta)
    return RiemannMesh(faces, frames, len(roots), basepoint=0)


def _double_torus(n, beta=2.0):
    """Two unit square n x n tori glued crosswise along a horizontal slit.

    The slit has n/2 edges on row n/2 starting at column n/4; its endpoints
    become the two cone points (angle 4π each).
    """
    k = max(n // 2, 1)
    i0, j0 = n // 4, n // 2
    idx = lambda t, i, j: t * n * n + (i % n) + n * (j % n)
    faces, frames = [], []
    for t in range(2):
        f, pos = _grid_faces(n, lambda i, j, t=t: idx(t, i, j))
        f = np.array(f)
        cells_above = [(i, j0) for i in range(i0, i0 + k)]
        for ci, cj in cells_above:
            for tri in (2 * (ci + n * cj), 2 * (ci + n * cj) + 1):
                for m in range(3):
                    v = f[tri, m] - t * n * n
                    vi, vj = v % n, v // n
                    if vj == j0 and i0 < vi < i0 + k:
                        f[tri, m] = idx(1 - t, vi, vj)
        faces.append(f)
        frames.append((pos[..., 0] + 1j * pos[..., 1]) / n)
    faces = np.concatenate(faces)
    frames = np.concatenate(frames)
    if beta != 1:
        ends = [complex(i0, j0) / n, complex(i0 + k, j0) / n]
        frames = _grade(frames, ends, 0.2, beta)
    # merge slit endpoints of the second torus into the first
    for vi in (i0, i0 + k):
        faces[faces == idx(1, vi, j0)] = idx(0, vi, j0)
    used = np.unique(faces)
    remap = -np.ones(2 * n * n, dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces = remap[faces]
    bp = int(remap[idx(0, (i0 + k // 2 + n // 2) % n, 0)])
    return RiemannMesh(faces, frames, len(used), basepoint=bp)


def genus2_mesh(style="octagon", resolution=2, grading=None):
    """Genus-2 translation surface.

    ``octagon`` uses 4*resolution subdivisions per fan triangle;
    ``double-torus`` uses two (4*resolution)^2 grids.  Vertices near the
    cone points are graded with exponent ``grading`` (default 3 for the
    6π cone, 2 for the 4π cones; 1 switches grading off) so that the
    singular behaviour of holomorphic forms there is resolved.
    """
    if resolution < 1:
        raise MeshError("resolution must be >= 1")
    n = 4 * int(resolution)
    if style == "octagon":
        return _octagon(n, 3.0 if grading is None else grading)
    if style in ("double-torus", "double_torus"):
        return _double_torus(n, 2.0 if grading is None else grading)
    raise MeshError(f"unknown genus-2 style {style!r}")


# -- deformation families -------------------------------------------------

@dataclass(frozen=True)
class TorusFamily:
    """tau_t = tau0 + t*direction, realised on a fixed n x n grid.

    ``beltrami`` is the constant Beltrami differential d(mu)/dt at t = 0 in
    the lattice coordinate of ``mesh(0)``.
    """

    tau0: complex
    direction: complex
    n: int

    def tau(self, t):
        tau = self.tau0 + t * self.direction
        if np.imag(tau) <= 0:
            raise MeshError(f"family leaves the upper half-plane at t={t}")
        return tau

    def mesh(self, t=0.0):
        return flat_torus(self.tau(t), self.n)

    @property
    def dtau_dt(self):
        return self.direction

    @property
    def beltrami(self):
        return self.direction / (np.conj(self.tau0) - self.tau0)


def torus_family(tau0, direction, n):
    fam = TorusFamily(complex(tau0), complex(direction), int(n))
    fam.tau(0.0)
    return fam


# -- first variation of h on a torus ---------------------------------------

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x * x)


def torus_cutoff_beltrami(tau, n, mu0, r1, r2):
    """Per-face Beltrami of f(z) = z + μ0 (z̄ - ζ(z)) on :func:`flat_torus`.

    ζ = z̄ χ(|z|) with χ = 1 on |z| < r1 and χ = 0 on |z| > r2, so the
    map is the identity near the basepoint 0 and equals z + μ0 z̄ far away.
    The first-order Beltrami differential is μ0 (1 - ∂̄ζ), computed from the
    piecewise linear interpolant of ζ; it vanishes exactly on faces whose
    corners all lie in |z| < r1.
    """
    tau = complex(tau)
    mesh = flat_torus(tau, n)
    z = mesh.frames
    L = _lattice_basis(tau)
    c = z.mean(axis=1)
    frac = np.stack([c.real, c.imag], -1) @ np.linalg.inv(L).T
    shift = np.round(frac) @ L.T
    z = z - (shift[:, 0] + 1j * shift[:, 1])[:, None]
    zeta = np.conj(z) * (1 - _smoothstep((np.abs(z) - r1) / (r2 - r1)))
    e1, e2 = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
    f1, f2 = zeta[:, 1] - zeta[:, 0], zeta[:, 2] - zeta[:, 0]
    det = e1 * np.conj(e2) - np.conj(e1) * e2
    dbar = (f2 * e1 - f1 * e2) / det
    mu = mu0 * (1 - dbar)
    mu[np.all(np.abs(z) < r1, axis=1)] = 0.0
    return mesh, mu


def torus_h_dot_oracle(tau, mu0, z0=1e-3, step=1e-4):
    """d/dt of h_{P0}(P0) along the cutoff family of :func:`torus_cutoff_beltrami`.

    The deformed torus is C/(a_t(Z + τ_t Z)) with a_t = 1 + tμ0 and
    τ_t = (τ + tμ0 τ̄)/a_t, and the map is the identity near 0, so the
    pulled-back Green function near 0 is h_{τ_t}(z/a_t).  The t-derivative
    is taken by central differences of the lattice oracle at z = z0; the
    result is even in z0, so the error in z0 is O(z0²).
    """
    tau = complex(tau)

    def value(t):
        a = 1 + t * mu0
        tau_t = (tau + t * mu0 * np.conj(tau)) / a
        return float(torus_green_oracle(tau_t, z0 / a))

    return (value(step) - value(-step)) / (2 * step)
