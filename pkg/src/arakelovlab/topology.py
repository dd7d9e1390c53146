"""Symplectic homology basis of a closed triangulated surface.

Generators come from a tree-cotree decomposition with lexicographic tie
breaking; the intersection form is evaluated through the Whitney cup
product of the dual cocycles and then brought to standard symplectic shape
by integer row operations.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, genus


class TopologyError(RuntimeError):
    """Degenerate intersection form; signals a broken mesh."""


@dataclass(frozen=True)
class HomologyBasis:
    """Cycles X_1..X_2g with X_i . X_{g+j} = delta_ij.

    ``cycles[i]`` is an integer edge chain (canonical edge orientation i<j),
    ``cocycles[i]`` the dual closed integer cochain, ``cocycles[i](X_j) =
    delta_ij``, and ``intersection[i, j] = X_i . X_j``.
    """

    cycles: np.ndarray
    cocycles: np.ndarray
    intersection: np.ndarray

    @property
    def genus(self):
        return len(self.cycles) // 2


def standard_symplectic(g):
    J = np.zeros((2 * g, 2 * g), dtype=np.int64)
    J[:g, g:] = np.eye(g, dtype=np.int64)
    J[g:, :g] = -np.eye(g, dtype=np.int64)
    return J


def tree_cotree(mesh):
    """Return (vertex parent, parent edge, dual parent, dual edge, generators).

    Roots are vertex 0 and face 0; neighbours are visited in increasing
    index order, which makes the decomposition reproducible.
    """
    V, F, E = mesh.n_vertices, mesh.n_faces, mesh.n_edges
    vert_edges = [[] for _ in range(V)]
    for e, (i, j) in enumerate(mesh.edges):
        vert_edges[i].append((int(j), e))
        vert_edges[j].append((int(i), e))
    for lst in vert_edges:
        lst.sort()
    parent = -np.ones(V, dtype=np.int64)
    parent_edge = -np.ones(V, dtype=np.int64)
    in_tree = np.zeros(E, bool)
    seen = np.zeros(V, bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w, e in vert_edges[v]:
            if not seen[w]:
                seen[w] = True
                parent[w] = v
                parent_edge[w] = e
                in_tree[e] = True
                queue.append(w)
    if not seen.all():
        raise MeshError("mesh is not connected")

    face_parent = -np.ones(F, dtype=np.int64)
    face_parent_edge = -np.ones(F, dtype=np.int64)
    in_cotree = np.zeros(E, bool)
    fseen = np.zeros(F, bool)
    fseen[0] = True
    order = [0]
    queue = deque([0])
    while queue:
        f = queue.popleft()
        for e in sorted(mesh.face_edges[f]):
            if in_tree[e]:
                continue
            f0, f1 = mesh.edge_faces[e]
            h = f1 if f0 == f else f0
            if not fseen[h]:
                fseen[h] = True
                face_parent[h] = f
                face_parent_edge[h] = e
                in_cotree[e] = True
                order.append(int(h))
                queue.append(h)
    generators = np.nonzero(~in_tree & ~in_cotree)[0]
    return dict(parent=parent, parent_edge=parent_edge,
                face_parent=face_parent, face_parent_edge=face_parent_edge,
                face_order=np.array(order), generators=generators,
                in_tree=in_tree)


def _path_to_root(mesh, tc, v):
    """Edge chain of the tree path from v to the root."""
    chain = {}
    while tc["parent"][v] >= 0:
        e = int(tc["parent_edge"][v])
        w = int(tc["parent"][v])
        i, j = mesh.edges[e]
        chain[e] = chain.get(e, 0) + (1 if (v == i and w == j) else -1)
        v = w
    return chain


def generator_loops(mesh, tc):
    E = mesh.n_edges
    loops = []
    for e in tc["generators"]:
        i, j = (int(x) for x in mesh.edges[e])
        c = np.zeros(E, dtype=np.int64)
        c[e] += 1
        for k, s in _path_to_root(mesh, tc, j).items():
            c[k] += s
        for k, s in _path_to_root(mesh, tc, i).items():
            c[k] -= s
        loops.append(c)
    return np.array(loops, dtype=np.int64)


def dual_cocycles(mesh, tc):
    """Closed integer cochains, one per generator, zero on the tree."""
    gens = tc["generators"]
    E = mesh.n_edges
    out = np.zeros((len(gens), E), dtype=np.int64)
    fe, fs = mesh.face_edges, mesh.face_edge_signs
    for a, e0 in enumerate(gens):
        c = out[a]
        c[e0] = 1
        for f in tc["face_order"][::-1][:-1]:
            pe = tc["face_parent_edge"][f]
            k = int(np.nonzero(fe[f] == pe)[0][0])
            rest = sum(fs[f, m] * c[fe[f, m]] for m in range(3) if m != k)
            c[pe] = -rest * fs[f, k]
        root = tc["face_order"][0]
        if sum(fs[root, m] * c[fe[root, m]] for m in range(3)) != 0:
            raise TopologyError("cocycle closure failed at the root face")
    return out


def whitney_cup(mesh, a, b):
    """∫ a ∧ b for closed edge cochains (exact, purely combinatorial)."""
    fe, fs = mesh.face_edges, mesh.face_edge_signs
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    a01, a12 = a[..., fe[:, 0]] * fs[:, 0], a[..., fe[:, 1]] * fs[:, 1]
    b01, b12 = b[..., fe[:, 0]] * fs[:, 0], b[..., fe[:, 1]] * fs[:, 1]
    return 0.5 * np.sum(a01 * b12 - a12 * b01, axis=-1)


def symplectic_reduce(form):
    """Integer unimodular A with A @ form @ A.T standard symplectic."""
    form = np.asarray(np.rint(form), dtype=np.int64)
    n = len(form)
    g = n // 2
    pair = lambda x, y: int(x @ form @ y)
    rest = [row.copy() for row in np.eye(n, dtype=np.int64)]
    es, fs = [], []
    for _ in range(g):
        x = rest.pop(0)
        while True:
            vals = [pair(x, z) for z in rest]
            nz = [k for k, v in enumerate(vals) if v != 0]
            if not nz:
                raise TopologyError("degenerate intersection form")
            a = min(nz, key=lambda k: (abs(vals[k]), k))
            if len(nz) == 1:
                break
            for k in nz:
                if k != a:
                    rest[k] = rest[k] - (vals[k] // vals[a]) * rest[a]
        if abs(vals[a]) != 1:
            raise TopologyError("intersection form is not unimodular")
        y = rest.pop(a) * vals[a]
        rest = [z - pair(z, y) * x + pair(z, x) * y for z in rest]
        es.append(x)
        fs.append(y)
    A = np.array(es + fs, dtype=np.int64)
    if not np.array_equal(A @ form @ A.T, standard_symplectic(g)):
        raise TopologyError("symplectic reduction did not converge")
    return A


def homology_basis(mesh):
    g = genus(mesh)
    tc = tree_cotree(mesh)
    if len(tc["generators"]) != 2 * g:
        raise TopologyError(f"tree-cotree produced {len(tc['generators'])} "
                            f"generators for genus {g}")
    loops = generator_loops(mesh, tc)
    coc = dual_cocycles(mesh, tc)
    periods = coc @ loops.T
    if not np.array_equal(periods, np.eye(2 * g, dtype=np.int64)):
        raise TopologyError("generator cocycles are not dual to the loops")
    cup = np.array([[whitney_cup(mesh, coc[i], coc[j]) for j in range(2 * g)]
                    for i in range(2 * g)])
    # with dual bases, ∫ xi_i ∧ xi_j = -(I^{-1})_{ij}
    inter = -np.linalg.inv(cup)
    inter_int = np.rint(inter).astype(np.int64)
    if np.max(np.abs(inter - inter_int)) > 1e-9:
        raise TopologyError("non-integral intersection form")
    A = symplectic_reduce(inter_int)
    Ainv_T = np.rint(np.linalg.inv(A).T).astype(np.int64)
    cycles = A @ loops
    cocycles = Ainv_T @ coc
    return HomologyBasis(cycles, cocycles, A @ inter_int @ A.T)
