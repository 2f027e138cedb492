"""Triangular meshes of the planar test domains.

Meshes are built deterministically without an external mesher: the square is
a structured grid with alternating diagonals, the disk is a set of concentric
rings (ring ``k`` carries ``6k`` vertices), and the ellipse and treffle are
images of the disk mesh under their boundary parameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError, MeshParseError

DOMAIN_KINDS = ("disk", "square", "ellipse", "treffle", "file")
MIN_BOUNDARY_VERTICES = 8


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D simplicial mesh.

    Attributes
    ----------
    vertices : (n_v, 2) float array
    triangles : (n_t, 3) int array, counter-clockwise
    boundary_vertex : (n_v,) bool array
    triangle_area : (n_t,) float array, strictly positive
    reoriented : indices of input triangles whose orientation was flipped
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    triangle_area: np.ndarray
    reoriented: tuple[int, ...] = field(default=())

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "Mesh":
        """Validate connectivity, fix orientation and flag boundary vertices."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n_v, 2)")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        n_v = len(vertices)
        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= n_v:
            raise MeshError("triangle references a vertex index out of range")
        t = triangles
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex index")

        signed = _signed_areas(vertices, triangles)
        scale = np.ptp(vertices, axis=0).max()
        degenerate = np.flatnonzero(np.abs(signed) <= 1e-14 * scale**2)
        if degenerate.size:
            raise MeshError(f"degenerate triangle {int(degenerate[0])}")
        flipped = np.flatnonzero(signed < 0)
        if flipped.size:
            triangles = triangles.copy()
            triangles[flipped, 1], triangles[flipped, 2] = (
                triangles[flipped, 2].copy(),
                triangles[flipped, 1].copy(),
            )
            signed = np.abs(signed)

        edges, counts = _edge_multiplicity(triangles)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        boundary = np.zeros(n_v, dtype=bool)
        boundary[edges[counts == 1].ravel()] = True

        for arr in (vertices, triangles, boundary, signed):
            arr.setflags(write=False)
        return cls(vertices, triangles, boundary, signed, tuple(int(i) for i in flipped))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(self.triangle_area.sum())

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges ``(n_e, 2)`` and the number of triangles sharing each."""
        return _edge_multiplicity(self.triangles)

    def boundary_edges(self) -> np.ndarray:
        edges, counts = self.edges()
        return edges[counts == 1]

    def edge_lengths(self) -> np.ndarray:
        edges, _ = self.edges()
        d = self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def mesh_size(self) -> float:
        """Longest edge length ``h``."""
        return float(self.edge_lengths().max())

    def diameter(self) -> float:
        """Diameter of the vertex set, computed over boundary vertices."""
        pts = self.vertices[self.boundary_vertex]
        best = 0.0
        for start in range(0, len(pts), 512):
            d = pts[start:start + 512, None, :] - pts[None, :, :]
            best = max(best, float(np.sqrt((d**2).sum(-1)).max()))
        return best

    def polygon_area(self) -> float:
        """Area enclosed by the boundary loops (shoelace formula)."""
        total = 0.0
        for loop in self.boundary_loops():
            p = self.vertices[loop]
            q = np.roll(p, -1, axis=0)
            total += 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))
        return total

    def boundary_loops(self) -> list[np.ndarray]:
        """Boundary vertex cycles, each oriented with the domain on its left."""
        succ = {}
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        bset = {tuple(e) for e in map(tuple, np.sort(self.boundary_edges(), axis=1))}
        for a, b in directed:
            key = (a, b) if a < b else (b, a)
            if key in bset:
                succ[int(a)] = int(b)
        loops = []
        seen = set()
        for start in sorted(succ):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            nxt = succ[start]
            while nxt != start:
                loop.append(nxt)
                seen.add(nxt)
                nxt = succ[nxt]
            loops.append(np.array(loop))
        return loops

    def transformed(self, fn) -> "Mesh":
        """Mesh with the same connectivity and vertices mapped by ``fn``."""
        return Mesh.from_arrays(fn(np.array(self.vertices)), np.array(self.triangles))

    def relabeled(self, perm: np.ndarray) -> "Mesh":
        """Mesh whose new vertex ``i`` is old vertex ``perm[i]``."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        return Mesh.from_arrays(self.vertices[perm], inverse[self.triangles])

    def to_bytes(self) -> bytes:
        return self.vertices.tobytes() + self.triangles.tobytes()


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edge_multiplicity(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0, return_counts=True)


@dataclass(frozen=True)
class DomainSpec:
    """Description of a test domain and its resolution.

    ``subdiv`` is the number of cells per side (square) or of radial rings
    (polar domains). Alternatively give ``target_triangles`` or a target edge
    length ``h``; exactly one resolution source is used, in that order.
    """

    kind: str = "disk"
    subdiv: int | None = None
    target_triangles: int | None = None
    h: float | None = None
    semi_axes: tuple[float, float] = (1.0, 0.6)
    lobes: float = 0.3
    n_lobes: int = 3
    side: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise MeshError(f"unknown domain kind {self.kind!r}")
        for name in ("subdiv", "target_triangles", "h"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise MeshError(f"{name} must be positive")
        if min(self.semi_axes) <= 0:
            raise MeshError("ellipse semi-axes must be positive")
        if self.kind == "treffle" and not 0 <= self.lobes < 1:
            # r(phi) = 1 + lobes*cos(n phi) must stay positive
            raise MeshError(f"treffle lobe amplitude {self.lobes} must lie in [0, 1)")
        if self.side <= 0:
            raise MeshError("side must be positive")
        if self.kind == "file" and not self.path:
            raise MeshError("file domain requires a path")

    def resolve_subdiv(self) -> int:
        if self.subdiv is not None:
            return int(self.subdiv)
        if self.target_triangles is not None:
            if self.kind == "square":
                return max(1, int(round(math.sqrt(self.target_triangles / 2))))
            return max(1, int(round(math.sqrt(self.target_triangles / 6))))
        if self.h is not None:
            extent = self.side if self.kind == "square" else self._radius()
            return max(1, int(math.ceil(extent / self.h)))
        return 40

    def _radius(self) -> float:
        if self.kind == "ellipse":
            return max(self.semi_axes)
        if self.kind == "treffle":
            return 1.0 + self.lobes
        return 1.0

    def boundary_radius(self, phi):
        """Radial boundary function of the polar domains (disk and treffle)."""
        if self.kind == "treffle":
            return 1.0 + self.lobes * np.cos(self.n_lobes * phi)
        return np.ones_like(phi)


def generate(spec: DomainSpec) -> Mesh:
    """Build the mesh described by ``spec``."""
    if spec.kind == "file":
        return load_mesh(spec.path)
    n = spec.resolve_subdiv()
    if spec.kind == "square":
        if 4 * n < MIN_BOUNDARY_VERTICES:
            raise MeshError(f"resolution too coarse: {4 * n} boundary vertices")
        return square_mesh(n, spec.side)
    if 6 * n < MIN_BOUNDARY_VERTICES:
        raise MeshError(f"resolution too coarse: {6 * n} boundary vertices")
    pts, tris = _ring_disk(n)
    if spec.kind == "ellipse":
        a, b = spec.semi_axes
        pts = pts * np.array([a, b])
    elif spec.kind == "treffle":
        rho = np.hypot(pts[:, 0], pts[:, 1])
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        scale = spec.boundary_radius(phi)
        pts = pts * scale[:, None]
        # exact placement of the outer ring on the curve
        outer = np.isclose(rho, 1.0, rtol=0, atol=1e-14)
        pts[outer] = np.column_stack([np.cos(phi[outer]), np.sin(phi[outer])]) * scale[outer, None]
    return Mesh.from_arrays(pts, tris)


def square_mesh(n: int, side: float = 1.0) -> Mesh:
    """``[0, side]^2`` with ``n`` cells per side, diagonals alternating by cell parity."""
    xs = np.arange(n + 1) / n * side
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return Mesh.from_arrays(pts, tris)


def _ring_disk(n: int):
    """Unit disk with ``n`` concentric rings; ``6 n^2`` triangles."""
    pts = [(0.0, 0.0)]
    starts = [0]
    for k in range(1, n + 1):
        starts.append(len(pts))
        r = k / n
        j = np.arange(6 * k)
        ang = 2 * np.pi * j / (6 * k)
        if k == n:
            pts.extend(zip(np.cos(ang), np.sin(ang)))
        else:
            pts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
    tris = []
    for k in range(1, n + 1):
        outer = [starts[k] + j for j in range(6 * k)]
        inner = [0] if k == 1 else [starts[k - 1] + j for j in range(6 * (k - 1))]
        n_out, n_in = len(outer), len(inner)
        if n_in == 1:
            for j in range(n_out):
                tris.append((inner[0], outer[j], outer[(j + 1) % n_out]))
            continue
        # merge both rings by angle; exact integer arithmetic on fractions j/len
        i = o = 0
        while i < n_in or o < n_out:
            next_in = (i + 1) * n_out
            next_out = (o + 1) * n_in
            if o < n_out and (i >= n_in or next_out <= next_in):
                tris.append((inner[i % n_in], outer[o], outer[(o + 1) % n_out]))
                o += 1
            else:
                tris.append((inner[i % n_in], outer[o % n_out], inner[(i + 1) % n_in]))
                i += 1
    return np.array(pts, dtype=float), np.array(tris, dtype=np.int64)


def distance_to_boundary(mesh: Mesh, points: np.ndarray | None = None) -> np.ndarray:
    """Exact Euclidean distance from each vertex (or ``points``) to the boundary edges."""
    edges = mesh.boundary_edges()
    if len(edges) == 0:
        raise MeshError("mesh has no boundary edges")
    pts = mesh.vertices if points is None else np.asarray(points, dtype=float)
    a = mesh.vertices[edges[:, 0]]
    ab = mesh.vertices[edges[:, 1]] - a
    ab2 = (ab**2).sum(axis=1)
    out = np.empty(len(pts))
    chunk = max(1, 2_000_000 // len(edges))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk, None, :]
        ap = p - a[None]
        tpar = np.clip((ap * ab[None]).sum(-1) / ab2[None], 0.0, 1.0)
        diff = ap - tpar[..., None] * ab[None]
        out[s:s + chunk] = np.sqrt((diff**2).sum(-1).min(axis=1))
    if points is None:
        out[mesh.boundary_vertex] = 0.0
    return out


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` in the ``mesh2d`` text format."""
    lines = [f"mesh2d {mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    b = mesh.boundary_vertex.astype(int)
    for i, j, k in mesh.triangles.tolist():
        lines.append(f"{i} {j} {k} {b[i]} {b[j]} {b[k]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Parse a ``mesh2d`` file. Clockwise triangles are reoriented and listed in
    ``Mesh.reoriented``; every other defect raises :class:`MeshParseError`."""
    text = Path(path).read_text().splitlines()
    rows = [(n + 1, ln.split()) for n, ln in enumerate(text) if ln.strip()]
    if not rows:
        raise MeshParseError("empty file", 1)
    lineno, head = rows[0]
    if len(head) != 3 or head[0] != "mesh2d":
        raise MeshParseError("expected header 'mesh2d <n_v> <n_t>'", lineno)
    try:
        n_v, n_t = int(head[1]), int(head[2])
    except ValueError:
        raise MeshParseError("non-integer counts in header", lineno) from None
    if len(rows) != 1 + n_v + n_t:
        raise MeshParseError(
            f"expected {n_v + n_t} data lines, found {len(rows) - 1}", rows[-1][0]
        )
    verts = np.empty((n_v, 2))
    for idx, (lineno, tok) in enumerate(rows[1:1 + n_v]):
        if len(tok) != 2:
            raise MeshParseError("vertex line must hold 'x y'", lineno)
        try:
            verts[idx] = float(tok[0]), float(tok[1])
        except ValueError:
            raise MeshParseError("malformed coordinate", lineno) from None
    tris = np.empty((n_t, 3), dtype=np.int64)
    flags = np.zeros(n_v, dtype=bool)
    for idx, (lineno, tok) in enumerate(rows[1 + n_v:]):
        if len(tok) != 6:
            raise MeshParseError("triangle line must hold 'i j k b1 b2 b3'", lineno)
        try:
            ijk = [int(s) for s in tok[:3]]
            bflags = [int(s) for s in tok[3:]]
        except ValueError:
            raise MeshParseError("malformed triangle entry", lineno) from None
        for v in ijk:
            if not 0 <= v < n_v:
                raise MeshParseError(f"vertex index {v} out of range [0, {n_v})", lineno)
        if len(set(ijk)) != 3:
            raise MeshParseError("repeated vertex index", lineno)
        if any(b not in (0, 1) for b in bflags):
            raise MeshParseError("boundary flags must be 0 or 1", lineno)
        tris[idx] = ijk
        flags[ijk] |= np.array(bflags, dtype=bool)
        a = _signed_areas(verts, tris[idx:idx + 1])[0]
        if a == 0.0:
            raise MeshParseError("zero-area triangle", lineno)
    try:
        mesh = Mesh.from_arrays(verts, tris)
    except MeshError as exc:
        raise MeshParseError(str(exc), rows[0][0]) from None
    if not np.array_equal(flags, mesh.boundary_vertex):
        bad = int(np.flatnonzero(flags != mesh.boundary_vertex)[0])
        raise MeshParseError(f"boundary flag of vertex {bad} contradicts the topology", rows[0][0])
    return mesh
