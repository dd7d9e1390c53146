"""Closed oriented triangle meshes carrying a conformal structure.

The conformal structure lives on the faces: every face stores the complex
positions of its three corners in a local planar frame.  Frames are only
defined up to translation and rotation; when a mesh is read from edge
lengths the canonical frame puts corner 0 at the origin and corner 1 on the
positive real axis.  Generators that know a global flat coordinate (flat
tori, translation surfaces) pass their own frames, which keeps constant
Beltrami differentials meaningful across faces.
"""

import io
import logging
from collections import deque

import numpy as np

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Invalid mesh input; the message names the offending simplex."""


class UnsupportedGenusError(MeshError):
    pass


def frames_from_lengths(lengths):
    """Planar corner positions for faces with side lengths ``lengths``.

    ``lengths[f, k]`` is the length of the side from corner k to corner k+1.
    """
    lengths = np.asarray(lengths, dtype=float)
    l01, l12, l20 = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    x2 = (l01**2 + l20**2 - l12**2) / (2 * l01)
    y2 = np.sqrt(np.maximum(l20**2 - x2**2, 0.0))
    frames = np.zeros((len(lengths), 3), dtype=complex)
    frames[:, 1] = l01
    frames[:, 2] = x2 + 1j * y2
    return frames


class RiemannMesh:
    """Closed oriented triangulated surface with per-face conformal frames.

    Parameters
    ----------
    faces : (F, 3) int array
        Consistently oriented vertex triples.
    frames : (F, 3) complex array
        Corner positions of every face in its local frame (counter-clockwise).
    n_vertices : int, optional
    coords : (V, 3) float array, optional
        Embedding, only kept for output.
    basepoint : int, optional
        Vertex P0 for pointed-surface operations.
    """

    def __init__(self, faces, frames, n_vertices=None, coords=None,
                 basepoint=None, validate=True):
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.frames = np.ascontiguousarray(frames, dtype=complex)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (F, 3) array")
        if self.frames.shape != self.faces.shape:
            raise MeshError("frames must match faces in shape")
        self.n_vertices = int(n_vertices if n_vertices is not None
                              else self.faces.max() + 1)
        self.coords = None if coords is None else np.asarray(coords, float)
        self.basepoint = basepoint
        self._build_edges()
        if validate:
            self._validate()
        for arr in (self.faces, self.frames, self.edges, self.face_edges,
                    self.face_edge_signs, self.edge_faces):
            arr.flags.writeable = False

    # -- combinatorics -------------------------------------------------
    def _build_edges(self):
        F = len(self.faces)
        a = self.faces
        b = np.roll(self.faces, -1, axis=1)
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = lo * self.n_vertices + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True,
                                          return_counts=True)
        self.edges = np.stack([uniq // self.n_vertices,
                               uniq % self.n_vertices], axis=1)
        self.face_edges = inverse.reshape(F, 3)
        self.face_edge_signs = np.where(a < b, 1, -1).astype(np.int64)
        self._edge_counts = counts
        edge_faces = -np.ones((len(uniq), 2), dtype=np.int64)
        for f in range(F):
            for k in range(3):
                e = self.face_edges[f, k]
                slot = 0 if self.face_edge_signs[f, k] > 0 else 1
                if edge_faces[e, slot] >= 0:
                    edge_faces[e, slot] = -2
                else:
                    edge_faces[e, slot] = f
        self.edge_faces = edge_faces

    def _validate(self):
        bad = np.nonzero(self._edge_counts != 2)[0]
        if len(bad):
            i, j = self.edges[bad[0]]
            raise MeshError(f"non-manifold edge ({i}, {j}) borders "
                            f"{self._edge_counts[bad[0]]} faces")
        bad = np.nonzero((self.edge_faces < 0).any(axis=1))[0]
        if len(bad):
            i, j = self.edges[bad[0]]
            raise MeshError(f"non-orientable or inconsistently oriented at "
                            f"edge ({i}, {j})")
        if np.any(self.faces[:, 0] == self.faces[:, 1]) or np.any(
                self.faces[:, 1] == self.faces[:, 2]) or np.any(
                self.faces[:, 0] == self.faces[:, 2]):
            raise MeshError("degenerate face with repeated vertex")
        areas = self.face_areas
        bad = np.nonzero(~(areas > 0))[0]
        if len(bad):
            raise MeshError(f"triangle inequality violated in face {bad[0]} "
                            f"{tuple(self.faces[bad[0]])}")
        used = np.zeros(self.n_vertices, bool)
        used[self.faces.ravel()] = True
        if not used.all():
            raise MeshError(f"isolated vertex {np.nonzero(~used)[0][0]}")

    # -- geometry ------------------------------------------------------
    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def face_areas(self):
        e1 = self.frames[:, 1] - self.frames[:, 0]
        e2 = self.frames[:, 2] - self.frames[:, 0]
        return 0.5 * np.imag(np.conj(e1) * e2)

    @property
    def face_edge_vectors(self):
        """(F, 3) complex: side k runs from corner k to corner k+1."""
        return np.roll(self.frames, -1, axis=1) - self.frames

    @property
    def face_edge_lengths(self):
        return np.abs(self.face_edge_vectors)

    @property
    def edge_lengths(self):
        """Per-edge length, averaged over the two incident faces."""
        out = np.zeros(self.n_edges)
        np.add.at(out, self.face_edges.ravel(), self.face_edge_lengths.ravel())
        return out / 2

    def length_mismatch(self):
        """Largest relative disagreement of an edge length between its faces."""
        lengths = self.face_edge_lengths.ravel()
        mean = self.edge_lengths[self.face_edges.ravel()]
        return float(np.max(np.abs(lengths - mean) / mean))

    @property
    def total_area(self):
        return float(self.face_areas.sum())

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def vertex_angle_sums(self):
        """Total corner angle at every vertex (2*pi at flat points)."""
        z = self.frames
        u = np.roll(z, -1, axis=1) - z
        v = np.roll(z, 1, axis=1) - z
        ang = np.abs(np.angle(v / u))
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.faces.ravel(), ang.ravel())
        return out

    def cone_defects(self):
        return 2 * np.pi - self.vertex_angle_sums()

    def with_frames(self, frames):
        return RiemannMesh(self.faces, frames, self.n_vertices, self.coords,
                           self.basepoint)

    def with_basepoint(self, p0):
        if not 0 <= p0 < self.n_vertices:
            raise MeshError(f"basepoint {p0} is not a vertex")
        m = RiemannMesh.__new__(RiemannMesh)
        m.__dict__.update(self.__dict__)
        m.basepoint = int(p0)
        return m

    def vertex_rings(self, center, depth):
        """Vertices within combinatorial distance ``depth`` of ``center``."""
        adj = self.vertex_adjacency()
        seen = {center: 0}
        queue = deque([center])
        while queue:
            v = queue.popleft()
            if seen[v] == depth:
                continue
            for w in adj[v]:
                if w not in seen:
                    seen[w] = seen[v] + 1
                    queue.append(w)
        return np.array(sorted(seen))

    def faces_near(self, center, depth):
        """Boolean mask of faces touching the ``depth``-ring of ``center``."""
        near = np.zeros(self.n_vertices, bool)
        near[self.vertex_rings(center, depth)] = True
        return near[self.faces].any(axis=1)

    def develop(self, center, depth):
        """Local coordinates around ``center`` by unfolding face frames.

        Returns ``(pos, faces)``: complex vertex positions with ``center`` at
        0 (NaN outside the region) and a mask of the faces that were
        unfolded.  Only meaningful when the frames agree up to translation
        and no cone point lies inside the ``depth``-ring.
        """
        mask = self.faces_near(center, depth)
        pos = np.full(self.n_vertices, np.nan + 0j)
        pos[center] = 0.0
        todo = set(np.flatnonzero(mask).tolist())
        while todo:
            done = []
            for f in todo:
                known = [k for k in range(3)
                         if not np.isnan(pos[self.faces[f, k]])]
                if not known:
                    continue
                k = known[0]
                shift = pos[self.faces[f, k]] - self.frames[f, k]
                for m in range(3):
                    v = self.faces[f, m]
                    if np.isnan(pos[v]):
                        pos[v] = self.frames[f, m] + shift
                done.append(f)
            if not done:
                raise MeshError("region around the centre is disconnected")
            todo.difference_update(done)
        return pos, mask

    def vertex_adjacency(self):
        adj = [[] for _ in range(self.n_vertices)]
        for i, j in self.edges:
            adj[i].append(int(j))
            adj[j].append(int(i))
        return [sorted(a) for a in adj]

    def __repr__(self):
        return (f"RiemannMesh(V={self.n_vertices}, E={self.n_edges}, "
                f"F={self.n_faces})")


def genus(mesh):
    """Genus from the Euler characteristic; genus 0 is rejected."""
    chi = mesh.euler_characteristic
    if chi % 2:
        raise MeshError(f"odd Euler characteristic {chi}")
    g = (2 - chi) // 2
    if g < 1:
        raise UnsupportedGenusError(f"genus {g} surfaces are not supported")
    return g


def refine(mesh):
    """1-to-4 midpoint subdivision; child frames are halves of the parent."""
    V, E = mesh.n_vertices, mesh.n_edges
    mid = V + mesh.face_edges  # (F, 3): midpoint of side k
    f = mesh.faces
    z = mesh.frames
    zm = 0.5 * (z + np.roll(z, -1, axis=1))
    faces = np.concatenate([
        np.stack([f[:, 0], mid[:, 0], mid[:, 2]], 1),
        np.stack([mid[:, 0], f[:, 1], mid[:, 1]], 1),
        np.stack([mid[:, 2], mid[:, 1], f[:, 2]], 1),
        np.stack([mid[:, 0], mid[:, 1], mid[:, 2]], 1),
    ])
    frames = np.concatenate([
        np.stack([z[:, 0], zm[:, 0], zm[:, 2]], 1),
        np.stack([zm[:, 0], z[:, 1], zm[:, 1]], 1),
        np.stack([zm[:, 2], zm[:, 1], z[:, 2]], 1),
        np.stack([zm[:, 0], zm[:, 1], zm[:, 2]], 1),
    ])
    coords = None
    if mesh.coords is not None:
        coords = np.concatenate([mesh.coords,
                                 mesh.coords[mesh.edges].mean(axis=1)])
    return RiemannMesh(faces, frames, V + E, coords, mesh.basepoint)


# -- text format -------------------------------------------------------

def load_mesh(source, fmt="arakelovlab"):
    """Read the sectioned text format (VERTICES / FACES / EDGELENGTHS).

    ``source`` is a path, a text stream or a byte stream.
    """
    if fmt != "arakelovlab":
        raise MeshError(f"unknown mesh format {fmt!r}")
    if isinstance(source, (str, bytes)) and not hasattr(source, "read"):
        with open(source, "rb") as fh:
            text = fh.read().decode()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    sections = {"VERTICES": [], "FACES": [], "EDGELENGTHS": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.upper() in sections:
            current = line.upper()
            continue
        if current is None:
            raise MeshError(f"line {lineno}: data before any section header")
        sections[current].append((lineno, line.split()))

    vids = {}
    coords = []
    for lineno, tok in sections["VERTICES"]:
        vids[int(tok[0])] = len(vids)
        coords.append([float(t) for t in tok[1:4]] if len(tok) >= 4 else None)
    faces = []
    for lineno, tok in sections["FACES"]:
        if len(tok) != 3:
            raise MeshError(f"line {lineno}: a face needs exactly 3 vertices")
        try:
            faces.append([vids[int(t)] for t in tok])
        except KeyError as exc:
            raise MeshError(f"line {lineno}: unknown vertex {exc}") from None
    if not faces:
        raise MeshError("no faces")
    faces = np.array(faces, dtype=np.int64)
    n = len(vids)

    explicit = {}
    for lineno, tok in sections["EDGELENGTHS"]:
        i, j, ell = vids[int(tok[0])], vids[int(tok[1])], float(tok[2])
        explicit[(min(i, j), max(i, j))] = ell

    have_coords = all(c is not None for c in coords)
    xyz = np.array(coords, float) if have_coords else None
    lengths = np.zeros(faces.shape)
    for f, tri in enumerate(faces):
        for k in range(3):
            i, j = tri[k], tri[(k + 1) % 3]
            key = (min(i, j), max(i, j))
            if key in explicit:
                lengths[f, k] = explicit[key]
            elif xyz is not None:
                lengths[f, k] = np.linalg.norm(xyz[i] - xyz[j])
            else:
                raise MeshError(f"edge {key} has neither a length nor "
                                f"vertex coordinates")
    for f, (a, b, c) in enumerate(lengths):
        if not (a < b + c and b < a + c and c < a + b):
            raise MeshError(f"triangle inequality violated in face {f} "
                            f"{tuple(int(v) for v in faces[f])}")
    return RiemannMesh(faces, frames_from_lengths(lengths), n, xyz)


def save_mesh(mesh, dest):
    """Write ``mesh`` in the text format, with explicit edge lengths."""
    out = io.StringIO()
    out.write("VERTICES\n")
    for v in range(mesh.n_vertices):
        if mesh.coords is not None:
            x, y, z = mesh.coords[v]
            out.write(f"{v} {x:.17g} {y:.17g} {z:.17g}\n")
        else:
            out.write(f"{v}\n")
    out.write("FACES\n")
    for a, b, c in mesh.faces:
        out.write(f"{a} {b} {c}\n")
    out.write("EDGELENGTHS\n")
    for (i, j), ell in zip(mesh.edges, mesh.edge_lengths):
        out.write(f"{i} {j} {ell:.17g}\n")
    text = out.getvalue()
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
