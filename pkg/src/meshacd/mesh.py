"""Core mesh types and measures.

A :class:`SolidMesh` is an indexed triangle mesh representing a closed
2-manifold solid (possibly several shells, possibly with interior void
shells whose orientation subtracts volume).  All operations here are pure
functions of their inputs; meshes are never mutated after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateTriangle,
    InconsistentOrientation,
    MeshValidationError,
    NonManifoldEdge,
    OpenBoundary,
    ZeroVolume,
)

# Scale-relative tolerances (see also cutting.py).  areaEps multiplies the
# squared bounding-box diagonal so it matches the spec'd normalized value
# on a normalized mesh and stays meaningful on raw model units.
AREA_EPS_REL = 1e-12
NORMAL_UNIT_EPS = 1e-9


@dataclass(frozen=True)
class SolidMesh:
    """Closed 2-manifold triangle mesh with outward CCW winding.

    Construct via :func:`validate_manifold`; direct construction skips the
    invariants and is reserved for code that has already established them.
    """

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64))
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class Plane:
    """Oriented plane ``{x : normal . x = offset}`` with unit normal."""

    normal: np.ndarray  # (3,) float64, |normal| = 1
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > NORMAL_UNIT_EPS:
            raise ValueError(f"plane normal must be unit length, got |n|={np.linalg.norm(n)}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        self.normal.setflags(write=False)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic right-handed in-plane basis (u, v) with u x v = normal."""
        n = self.normal
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        u = np.cross(e, n)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    def to_plane_coords(self, points: np.ndarray) -> np.ndarray:
        u, v = self.basis()
        p = np.asarray(points, dtype=np.float64)
        return np.stack([p @ u, p @ v], axis=-1)


@dataclass(frozen=True)
class Transform:
    """Uniform-scale rigid transform used for normalization and PCA frames.

    Maps model space to working space via ``q = scale * R.T @ (p - translation)``
    and back via ``p = R @ (q / scale) + translation``.
    """

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        q = np.asarray(points, dtype=np.float64)
        return (q / self.scale) @ self.rotation.T + self.translation

    @staticmethod
    def identity() -> "Transform":
        return Transform()


@dataclass(frozen=True)
class PointSet:
    """Sampled points plus the provenance needed to reproduce them."""

    points: np.ndarray  # (N, 3) float64
    provenance: str  # "surface" | "interior"
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "points", np.ascontiguousarray(self.points, dtype=np.float64))
        self.points.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

def signed_volume(mesh: SolidMesh) -> float:
    """Divergence-theorem volume: sum of v0 . (v1 x v2) / 6 over triangles.

    Positive for outward-oriented shells; interior voids subtract.
    """
    c = mesh.corners()
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    c = vertices[triangles]
    return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def surface_area(mesh: SolidMesh) -> float:
    return float(triangle_areas(mesh.vertices, mesh.triangles).sum())


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _edge_table(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges (3T, 2) and their undirected sorted form."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return e, np.sort(e, axis=1)


def validate_manifold(vertices, triangles) -> SolidMesh:
    """Canonicalize a vertex/triangle soup into a SolidMesh.

    Checks: index range, degenerate triangles, edge valence exactly 2 with
    opposite directions, nonzero enclosed volume.  Winding is flipped
    globally if the signed volume comes out negative.  Unreferenced
    vertices are dropped.

    Raises the matching :class:`~meshacd.errors.MeshValidationError`
    subclass, carrying offending element indices.
    """
    v = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
    t = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)

    if len(t) == 0:
        raise ZeroVolume("mesh has no triangles")
    if t.min() < 0 or t.max() >= len(v):
        bad = np.nonzero((t < 0) | (t >= len(v)))[0]
        raise MeshValidationError("triangle vertex index out of range", np.unique(bad))

    repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 2] == t[:, 0])
    if repeated.any():
        raise DegenerateTriangle("triangle with repeated vertex index",
                                 np.nonzero(repeated)[0])

    lo, hi = v.min(axis=0), v.max(axis=0)
    diag2 = float(((hi - lo) ** 2).sum())
    areas = triangle_areas(v, t)
    tiny = areas <= AREA_EPS_REL * max(diag2, 1e-300)
    if tiny.any():
        raise DegenerateTriangle("triangle with (near-)zero area", np.nonzero(tiny)[0])

    directed, undirected = _edge_table(t)
    order = np.lexsort((undirected[:, 1], undirected[:, 0]))
    su = undirected[order]
    sd = directed[order]
    # Group boundaries of equal undirected edges.
    change = np.any(su[1:] != su[:-1], axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [len(su)]])
    counts = np.diff(starts)

    if (counts != 2).any():
        tri_of_edge = order % len(t)  # directed edge i belongs to triangle i mod T
        singles = np.nonzero(counts == 1)[0]
        if len(singles):
            idx = starts[singles]
            raise OpenBoundary(
                f"{len(singles)} boundary edge(s), e.g. {tuple(su[idx[0]])}",
                tri_of_edge[idx],
            )
        multi = np.nonzero(counts > 2)[0]
        idx = starts[multi]
        raise NonManifoldEdge(
            f"{len(multi)} edge(s) with valence > 2, e.g. {tuple(su[idx[0]])} "
            f"(valence {counts[multi[0]]})",
            tri_of_edge[idx],
        )

    first = starts[:-1]
    same_direction = np.all(sd[first] == sd[first + 1], axis=1)
    if same_direction.any():
        bad = first[same_direction]
        raise InconsistentOrientation(
            f"{same_direction.sum()} edge(s) traversed twice in the same direction, "
            f"e.g. {tuple(sd[bad[0]])}",
            (order % len(t))[bad],
        )

    # Drop unreferenced vertices, keeping original order.
    used = np.zeros(len(v), dtype=bool)
    used[t.reshape(-1)] = True
    if not used.all():
        remap = np.cumsum(used) - 1
        v = v[used]
        t = remap[t]

    mesh = SolidMesh(v, t)
    vol = signed_volume(mesh)
    vol_eps = AREA_EPS_REL * max(diag2, 1e-300) ** 1.5
    if abs(vol) <= vol_eps:
        raise ZeroVolume(f"mesh encloses no volume (signed volume {vol:g})")
    if vol < 0:
        mesh = SolidMesh(v, t[:, [0, 2, 1]])
    return mesh


# ---------------------------------------------------------------------------
# Connectivity
# ---------------------------------------------------------------------------

def _shell_labels(triangles: np.ndarray, num_vertices: int) -> np.ndarray:
    """Label triangles by vertex-connectivity component."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    t = np.arange(len(triangles))
    rows = np.concatenate([t, t, t])
    cols = triangles.T.reshape(-1)
    m = coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)),
        shape=(len(triangles), num_vertices),
    )
    graph = m @ m.T  # triangles sharing any vertex
    _, labels = cc(graph, directed=False)
    return labels


def connected_components(mesh: SolidMesh) -> list[SolidMesh]:
    """Split a mesh into its connected solids.

    Shells are grouped by vertex connectivity; interior void shells
    (negative signed volume) are paired with the smallest positively
    oriented shell that contains them, so each output is a valid solid and
    the outputs' volumes sum to the input volume.
    """
    labels = _shell_labels(mesh.triangles, mesh.num_vertices)
    n = labels.max() + 1
    if n == 1:
        return [mesh]

    shells = []
    for i in range(n):
        tris = mesh.triangles[labels == i]
        used = np.unique(tris)
        remap = np.full(mesh.num_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        shells.append(SolidMesh(mesh.vertices[used], remap[tris]))

    vols = np.array([signed_volume(s) for s in shells])
    solids = [i for i in range(n) if vols[i] > 0]
    voids = [i for i in range(n) if vols[i] <= 0]

    if not voids:
        return shells

    from .sampling import point_in_mesh

    groups: dict[int, list[int]] = {i: [i] for i in solids}
    for j in voids:
        probe = shells[j].vertices[0]
        containing = [i for i in solids
                      if vols[i] > -vols[j] and point_in_mesh(shells[i], probe)]
        if not containing:
            # Inverted orientation with no host: treat as its own solid.
            flipped = SolidMesh(shells[j].vertices, shells[j].triangles[:, [0, 2, 1]])
            shells[j] = flipped
            groups[j] = [j]
            continue
        host = min(containing, key=lambda i: vols[i])
        groups[host].append(j)

    out = []
    for host in sorted(groups):
        members = groups[host]
        vs, ts, offset = [], [], 0
        for i in members:
            vs.append(shells[i].vertices)
            ts.append(shells[i].triangles + offset)
            offset += shells[i].num_vertices
        out.append(SolidMesh(np.concatenate(vs), np.concatenate(ts)))
    return out


# ---------------------------------------------------------------------------
# Principal axes
# ---------------------------------------------------------------------------

def pca_axes(mesh: SolidMesh) -> Transform:
    """Principal axes of the surface, as a Transform whose rotation columns
    are the covariance eigenvectors in descending-eigenvalue order.

    Uses the exact area-weighted covariance of the uniform surface measure
    (closed-form second moments per triangle), so the result is
    deterministic without sampling.  Sign convention: each axis has its
    largest-magnitude entry positive; the frame is made right-handed by
    flipping the last axis if needed.
    """
    c = mesh.corners()
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    total = areas.sum()
    centroid_per_tri = c.mean(axis=1)
    mean = (areas[:, None] * centroid_per_tri).sum(axis=0) / total

    # Second moment of a triangle about the origin:
    # E[x x^T] = (1/12) (sum_i sum_j v_i v_j^T + sum_i v_i v_i^T).
    d = c - mean  # center first for conditioning
    s = d.sum(axis=1)  # (T, 3)
    outer_sum = np.einsum("ti,tj->tij", s, s)
    outer_self = np.einsum("tki,tkj->tij", d, d)
    second = (outer_sum + outer_self) / 12.0
    cov = np.einsum("t,tij->ij", areas, second) / total

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    axes = eigvecs[:, order]
    for k in range(3):
        col = axes[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            axes[:, k] = -col
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    return Transform(scale=1.0, rotation=axes, translation=mean)
