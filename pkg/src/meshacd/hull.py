"""Convex hulls as watertight SolidMeshes.

Backed by Qhull (scipy.spatial.ConvexHull); this module's job is turning
Qhull's facet soup into an outward-oriented manifold triangle mesh and
mapping degeneracies to the package's error type.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial._qhull import QhullError

from .errors import DegenerateHull
from .mesh import PointSet, SolidMesh

HULL_EPS_REL = 1e-9  # times bounding-box diagonal


def hull_volume(points: np.ndarray) -> float:
    """Volume of the convex hull of a point cloud (0.0 when degenerate)."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def convex_hull(points) -> SolidMesh:
    """Watertight convex hull mesh of a point cloud or mesh vertex set.

    Raises :class:`DegenerateHull` for coplanar/collinear input (callers
    treat such components as flat slabs).
    """
    if isinstance(points, SolidMesh):
        pts = points.vertices
    elif isinstance(points, PointSet):
        pts = points.points
    else:
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateHull(f"need at least 4 points, got {len(pts)}")

    try:
        qh = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHull(f"qhull rejected input: {exc}") from exc

    tris = qh.simplices.copy()
    # Orient each facet outward using Qhull's facet equations.
    c = pts[tris]
    face_normal = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    flip = np.einsum("ij,ij->i", face_normal, qh.equations[:, :3]) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    used = np.unique(tris)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return SolidMesh(pts[used], remap[tris])
