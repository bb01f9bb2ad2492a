"""Splitting a solid mesh in two with a plane.

The cut walks the classic four stages: classify triangles against the
plane, split the crossing ones, chain the cut boundary into closed loops,
and triangulate flat caps over the loops (constrained Delaunay, respecting
every loop edge, with even-odd parity discarding hole triangles).

Caps are rebuilt per side from that side's own open boundary, so
geometry lying exactly on the plane (coplanar faces are dropped during
classification) never double-covers a side.  In the generic case the two
caps are mirror images, as the triangulation of each side's identical
loop set is deterministic.

Two cap strategies exist: ``"cdt"`` (watertight, validated -- the public
contract) and ``"fan"`` (loop fans from the loop centroid -- exact volumes
and hulls but possibly self-overlapping caps; used only inside plane
search where thousands of throwaway cuts are evaluated).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely
import shapely.errors
import shapely.geometry
from scipy.spatial import cKDTree

from .errors import EmptySide, OpenChain, TriangulationFailure
from .mesh import Plane, SolidMesh, signed_volume, validate_manifold

CUT_EPS_REL = 1e-9      # times bounding-box diagonal
VOL_EPS_REL = 2.4e-10   # times diagonal^3; equals 1e-8 at normalized scale
CAP_AREA_EPS_REL = 1e-12  # sliver-loop rejection, times diagonal^2


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def _vertex_sides(mesh: SolidMesh, plane: Plane, cut_eps: float):
    """Snapped vertex positions, per-vertex side in {-1, 0, +1}, distances."""
    sd = plane.signed_distance(mesh.vertices)
    snap = np.abs(sd) <= cut_eps
    verts = mesh.vertices.copy()
    verts[snap] -= sd[snap, None] * plane.normal
    sides = np.sign(sd).astype(np.int8)
    sides[snap] = 0
    sd = sd.copy()
    sd[snap] = 0.0
    return verts, sides, sd


def classify_triangles(mesh: SolidMesh, plane: Plane):
    """Partition triangle indices into (negative, positive, crossing) sets.

    Vertices within the cut tolerance count as on-plane; a triangle crosses
    only when it has strictly positive and strictly negative vertices.
    Triangles lying entirely on the plane go to the negative set.
    """
    cut_eps = CUT_EPS_REL * mesh.bbox_diagonal()
    _, sides, _ = _vertex_sides(mesh, plane, cut_eps)
    s = sides[mesh.triangles]
    has_pos = (s > 0).any(axis=1)
    has_neg = (s < 0).any(axis=1)
    crossing = has_pos & has_neg
    positive = has_pos & ~crossing
    negative = ~has_pos  # everything else, including fully coplanar
    idx = np.arange(mesh.num_triangles)
    return idx[negative], idx[positive], idx[crossing]


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _split_one(ids, coords, sides, dists):
    """Split one crossing triangle into per-side polygons.

    ids/coords/sides/dists describe the 3 corners in winding order; sides
    are the snapped {-1, 0, +1} classes, dists the signed distances used
    for edge interpolation.  Returns (neg_poly, pos_poly, new_points):
    polygons are vertex-id lists; crossing points get placeholder ids
    -(position+1) into ``new_points``, a list of (edge_key, coordinates).
    """
    neg, pos, new_points = [], [], []
    for i in range(3):
        j = (i + 1) % 3
        if sides[i] >= 0:
            pos.append(ids[i])
        if sides[i] <= 0:
            neg.append(ids[i])
        if sides[i] * sides[j] < 0:
            a, b = (i, j) if ids[i] < ids[j] else (j, i)
            t = dists[a] / (dists[a] - dists[b])
            p = coords[a] + t * (coords[b] - coords[a])
            key = (ids[a], ids[b])
            new_points.append((key, p))
            token = -len(new_points)
            pos.append(token)
            neg.append(token)
    return neg, pos, new_points


def split_crossing(triangle, plane: Plane):
    """Split a single crossing triangle.

    Returns (negative_triangles, positive_triangles, segment): coordinate
    triangle lists whose union covers the input exactly, plus the
    intersection segment endpoints on the plane.
    """
    tri = np.asarray(triangle, dtype=np.float64).reshape(3, 3)
    d = plane.signed_distance(tri)
    if not ((d > 0).any() and (d < 0).any()):
        raise ValueError("triangle does not cross the plane")

    neg, pos, new_points = _split_one([0, 1, 2], tri, np.sign(d).astype(int), d)
    coords = {i: tri[i] for i in range(3)}
    for k, (_, p) in enumerate(new_points):
        coords[-(k + 1)] = p

    def fan(poly):
        return [np.array([coords[poly[0]], coords[poly[i]], coords[poly[i + 1]]])
                for i in range(1, len(poly) - 1)]

    on_plane = [coords[i] for i in neg if i in set(pos)]
    segment = np.array(on_plane[:2])
    return fan(neg), fan(pos), segment


# ---------------------------------------------------------------------------
# Cross-sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossSection:
    """Closed cut-boundary loops on a plane.

    ``loops`` index into ``points2d``/``points3d``; loop orientation is
    canonical: outer loops counter-clockwise in the plane basis, hole
    loops clockwise (decided by even-odd containment depth).
    """

    plane: Plane
    points2d: np.ndarray            # (N, 2)
    points3d: np.ndarray            # (N, 3)
    loops: list[np.ndarray]         # index arrays, canonical orientation
    depths: list[int]               # even-odd containment depth per loop

    def loop_signed_areas(self) -> np.ndarray:
        out = []
        for loop in self.loops:
            p = self.points2d[loop]
            q = self.points2d[np.roll(loop, -1)]
            out.append(0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1])))
        return np.array(out)

    def region_area(self) -> float:
        """Area of the even-odd region (outer loops minus holes)."""
        return float(self.loop_signed_areas().sum())


def _merge_endpoints(points: np.ndarray, tol: float) -> np.ndarray:
    """Union-find merge of points within tol; returns representative ids."""
    n = len(points)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if tol > 0 and n > 1:
        tree = cKDTree(points)
        for i, j in tree.query_pairs(tol):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(n)])


def build_cross_section(segments, plane: Plane, tol: float | None = None) -> CrossSection:
    """Chain cut segments into closed loops with canonical orientation.

    ``segments`` is (S, 2, 3): 3D endpoint pairs produced by a watertight
    cut.  Endpoints are merged within ``tol`` (default: cut tolerance from
    the segment cloud's extent).  Raises :class:`OpenChain` when the
    segments do not close into simple loops.
    """
    seg = np.asarray(segments, dtype=np.float64).reshape(-1, 2, 3)
    if len(seg) == 0:
        raise OpenChain("no segments")
    flat = seg.reshape(-1, 3)
    if tol is None:
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        tol = CUT_EPS_REL * float(np.linalg.norm(hi - lo))

    rep = _merge_endpoints(flat, tol)
    uniq, inverse = np.unique(rep, return_inverse=True)
    points3d = flat[uniq]
    ends = inverse.reshape(-1, 2)

    # Adjacency: each section vertex must join exactly two segments.
    adj: dict[int, list[int]] = {}
    for a, b in ends:
        if a == b:
            continue  # zero-length segment collapsed by merging
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    bad = [v for v, nb in adj.items() if len(nb) != 2]
    if bad:
        raise OpenChain(f"{len(bad)} section vertex(es) with degree != 2")

    loops = []
    visited = set()
    for start in sorted(adj):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            a, b = adj[cur]
            nxt = b if a == prev else a
            if nxt == start:
                break
            if nxt in visited:
                raise OpenChain("loop walk revisited a vertex")
            loop.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        if len(loop) < 3:
            raise OpenChain("degenerate loop with fewer than 3 vertices")
        loops.append(np.array(loop, dtype=np.int64))

    points2d = plane.to_plane_coords(points3d)

    # Even-odd containment depth via shapely, then canonical orientation.
    polys = [shapely.geometry.Polygon(points2d[lp]) for lp in loops]
    depths = []
    for i, lp in enumerate(loops):
        probe = shapely.geometry.Point(points2d[lp[0]])
        depth = sum(1 for j, pg in enumerate(polys) if j != i and pg.contains(probe))
        depths.append(depth)

    oriented = []
    for lp, depth in zip(loops, depths):
        p = points2d[lp]
        q = points2d[np.roll(lp, -1)]
        area = 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))
        want_ccw = depth % 2 == 0
        if (area > 0) != want_ccw:
            lp = lp[::-1].copy()
        oriented.append(lp)

    return CrossSection(plane=plane, points2d=points2d, points3d=points3d,
                        loops=oriented, depths=depths)


# ---------------------------------------------------------------------------
# Cap triangulation
# ---------------------------------------------------------------------------

def _even_odd_inside(points: np.ndarray, section: CrossSection) -> np.ndarray:
    """Even-odd parity of query points against all section loops (2D)."""
    inside = np.zeros(len(points), dtype=np.int64)
    for lp in section.loops:
        a = section.points2d[lp]
        b = section.points2d[np.roll(lp, -1)]
        # Horizontal ray to +x: edge crosses if it spans the query's y.
        for k, (x, y) in enumerate(points):
            spans = (a[:, 1] > y) != (b[:, 1] > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xs = a[:, 0] + (y - a[:, 1]) / (b[:, 1] - a[:, 1]) * (b[:, 0] - a[:, 0])
            inside[k] += int(np.count_nonzero(spans & (xs > x)))
    return inside % 2 == 1


def triangulate_cap(section: CrossSection) -> np.ndarray:
    """Constrained Delaunay triangulation of the section's solid region.

    Every loop edge is a constraint; triangles whose centroid fails the
    even-odd parity test against the loop set are discarded (hole
    removal).  Returns (T, 3) indices into the section's vertex table,
    counter-clockwise in the plane basis; empty when every loop is a
    degenerate sliver.
    """
    areas = section.loop_signed_areas()
    scale2 = float(np.ptp(section.points2d, axis=0).max()) ** 2
    keep = np.abs(areas) > CAP_AREA_EPS_REL * max(scale2, 1e-300)
    loops = [lp for lp, k in zip(section.loops, keep) if k]
    depths = [d for d, k in zip(section.depths, keep) if k]
    if not loops:
        return np.zeros((0, 3), dtype=np.int64)

    coord_to_id = {}
    for lp in loops:
        for idx in lp:
            coord_to_id[tuple(section.points2d[idx])] = int(idx)

    # Assemble even-odd polygons: shells at even depth, each hole attached
    # to its smallest containing shell.
    shells = [(lp, d) for lp, d in zip(loops, depths) if d % 2 == 0]
    holes = [(lp, d) for lp, d in zip(loops, depths) if d % 2 == 1]
    try:
        shell_polys = [shapely.geometry.Polygon(section.points2d[lp]) for lp, _ in shells]
        assigned: list[list[np.ndarray]] = [[] for _ in shells]
        for lp, d in holes:
            probe = shapely.geometry.Point(section.points2d[lp[0]])
            candidates = [i for i, pg in enumerate(shell_polys)
                          if shells[i][1] == d - 1 and pg.contains(probe)]
            if not candidates:
                raise TriangulationFailure("hole loop without containing shell")
            host = min(candidates, key=lambda i: shell_polys[i].area)
            assigned[host].append(lp)

        out = []
        for (shell_lp, _), hole_lps in zip(shells, assigned):
            poly = shapely.geometry.Polygon(
                section.points2d[shell_lp],
                [section.points2d[h] for h in hole_lps],
            )
            tris = shapely.constrained_delaunay_triangles(poly)
            for geom in tris.geoms:
                xy = list(geom.exterior.coords)[:3]
                try:
                    ids = [coord_to_id[tuple(c)] for c in xy]
                except KeyError as exc:
                    raise TriangulationFailure(
                        "triangulator introduced a vertex off the loop set"
                    ) from exc
                p = section.points2d[ids]
                cross = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - \
                        (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
                if cross < 0:
                    ids = [ids[0], ids[2], ids[1]]
                out.append(ids)
    except shapely.errors.GEOSException as exc:
        raise TriangulationFailure(f"constrained triangulation failed: {exc}") from exc

    if not out:
        raise TriangulationFailure("triangulation produced no triangles")
    tri = np.array(out, dtype=np.int64)

    # Spec'd hole-removal rule, applied as a final filter.
    centroids = section.points2d[tri].mean(axis=1)
    tri = tri[_even_odd_inside(centroids, section)]

    p = section.points2d[tri]
    tri_area = 0.5 * np.abs(
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    ).sum()
    region = sum(a for a, k in zip(section.loop_signed_areas(), keep) if k)
    if abs(tri_area - region) > 1e-8 * max(region, 1e-300):
        raise TriangulationFailure(
            f"cap area {tri_area:.17g} does not tile region {region:.17g}"
        )
    return tri


def _fan_cap(section: CrossSection) -> tuple[np.ndarray, np.ndarray]:
    """Centroid-fan cap: exact signed area/volume, possibly overlapping.

    Returns (extra_points3d, triangles) where triangle indices >= N refer
    to the appended fan centroids.
    """
    areas = section.loop_signed_areas()
    scale2 = float(np.ptp(section.points2d, axis=0).max()) ** 2
    keep = np.abs(areas) > CAP_AREA_EPS_REL * max(scale2, 1e-300)
    tris = []
    extra = []
    n = len(section.points3d)
    for lp, k in zip(section.loops, keep):
        if not k:
            continue
        center_id = n + len(extra)
        extra.append(section.points3d[lp].mean(axis=0))
        nxt = np.roll(lp, -1)
        for a, b in zip(lp, nxt):
            tris.append((center_id, int(a), int(b)))
    if not tris:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    return np.array(extra), np.array(tris, dtype=np.int64)


# ---------------------------------------------------------------------------
# The cut
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutResult:
    negative_side: SolidMesh   # normal . x < offset
    positive_side: SolidMesh
    cap_triangle_count: int
    negative_volume: float
    positive_volume: float


def _side_boundary_segments(triangles: np.ndarray) -> np.ndarray:
    """Directed edges of an open surface that lack a reverse partner."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    und = np.sort(e, axis=1)
    order = np.lexsort((und[:, 1], und[:, 0]))
    su = und[order]
    change = np.any(su[1:] != su[:-1], axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [len(su)]])
    counts = np.diff(starts)
    single = counts == 1
    return e[order][starts[:-1][single]]


def _assemble_side(working: np.ndarray, tri_rows: list[np.ndarray],
                   plane: Plane, cut_eps: float, flip_cap: bool,
                   cap_method: str, validate: bool):
    """Close one side with caps over its open boundary and build the mesh."""
    tris = np.concatenate([t for t in tri_rows if len(t)]) if tri_rows else np.zeros((0, 3), np.int64)
    if len(tris) == 0:
        raise EmptySide("no surface triangles on this side")

    boundary = _side_boundary_segments(tris)
    cap_count = 0
    extra_points = np.zeros((0, 3))
    cap_tris = np.zeros((0, 3), dtype=np.int64)

    if len(boundary):
        on_plane = np.abs(plane.signed_distance(working[boundary.reshape(-1)]))
        if on_plane.max() > 10 * cut_eps:
            raise OpenChain("open boundary off the cutting plane")
        section = build_cross_section(working[boundary], plane, tol=cut_eps)
        if cap_method == "cdt":
            local = triangulate_cap(section)
            if len(local) == 0:
                raise EmptySide("cut cross-section is a degenerate sliver")
            cap_pts = section.points3d
        else:
            extra_points, local = _fan_cap(section)
            if len(local) == 0:
                raise EmptySide("cut cross-section is a degenerate sliver")
            cap_pts = np.concatenate([section.points3d, extra_points]) if len(extra_points) else section.points3d

        # Map cap vertices back to working-array ids by exact coordinates.
        coord_to_wid = {}
        for wid in np.unique(boundary.reshape(-1)):
            coord_to_wid[working[wid].tobytes()] = int(wid)
        base = len(working)
        appended = []
        wids = np.empty(len(cap_pts), dtype=np.int64)
        for i, pt in enumerate(cap_pts):
            key = pt.tobytes()
            if key in coord_to_wid:
                wids[i] = coord_to_wid[key]
            else:
                wids[i] = base + len(appended)
                appended.append(pt)
        if appended:
            working = np.concatenate([working, np.array(appended)])
        cap_tris = wids[local]
        if flip_cap:
            cap_tris = cap_tris[:, [0, 2, 1]]
        cap_count = len(cap_tris)
        tris = np.concatenate([tris, cap_tris])

    used = np.unique(tris)
    remap = np.full(len(working), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = working[used]
    tris = remap[tris]

    if validate:
        mesh = validate_manifold(verts, tris)
    else:
        mesh = SolidMesh(verts, tris)
    return mesh, cap_count


def cut(mesh: SolidMesh, plane: Plane, *, cap_method: str = "cdt",
        validate: bool = True) -> CutResult:
    """Split ``mesh`` into two watertight solids along ``plane``.

    The negative side keeps everything with normal . x < offset.  Raises
    :class:`EmptySide` when a side carries (near-)zero volume, or
    :class:`OpenChain`/:class:`TriangulationFailure` when tolerances break
    down (callers may retry with a perturbed plane).
    """
    diag = mesh.bbox_diagonal()
    cut_eps = CUT_EPS_REL * diag
    vol_eps = VOL_EPS_REL * diag ** 3

    working, sides, dists = _vertex_sides(mesh, plane, cut_eps)
    s = sides[mesh.triangles]
    has_pos = (s > 0).any(axis=1)
    has_neg = (s < 0).any(axis=1)
    crossing = np.nonzero(has_pos & has_neg)[0]
    pos_whole = mesh.triangles[has_pos & ~has_neg]
    neg_whole = mesh.triangles[has_neg & ~has_pos]
    # Fully coplanar triangles are dropped; each side's cap re-covers the
    # region it actually needs.

    if (len(pos_whole) == 0 and len(crossing) == 0) or \
       (len(neg_whole) == 0 and len(crossing) == 0):
        raise EmptySide("plane does not intersect the solid")

    # Split crossing triangles, sharing intersection vertices per edge.
    edge_cache: dict[tuple[int, int], int] = {}
    new_points: list[np.ndarray] = []
    neg_sub, pos_sub = [], []
    for ti in crossing:
        ids = mesh.triangles[ti]
        neg_poly, pos_poly, fresh = _split_one(ids, working[ids], sides[ids], dists[ids])
        token_to_wid = {}
        for tok, (key, p) in enumerate(fresh, start=1):
            wid = edge_cache.get(key)
            if wid is None:
                wid = len(working) + len(new_points)
                new_points.append(p)
                edge_cache[key] = wid
            token_to_wid[-tok] = wid

        def to_wids(poly):
            return [token_to_wid.get(x, x) for x in poly]

        for poly, sink in ((neg_poly, neg_sub), (pos_poly, pos_sub)):
            w = to_wids(poly)
            for i in range(1, len(w) - 1):
                sink.append((w[0], w[i], w[i + 1]))

    if new_points:
        working = np.concatenate([working, np.array(new_points)])

    neg_rows = [neg_whole, np.array(neg_sub, dtype=np.int64).reshape(-1, 3)]
    pos_rows = [pos_whole, np.array(pos_sub, dtype=np.int64).reshape(-1, 3)]

    neg_mesh, neg_caps = _assemble_side(working, neg_rows, plane, cut_eps,
                                        flip_cap=False, cap_method=cap_method,
                                        validate=validate)
    pos_mesh, pos_caps = _assemble_side(working, pos_rows, plane, cut_eps,
                                        flip_cap=True, cap_method=cap_method,
                                        validate=validate)

    neg_vol = signed_volume(neg_mesh)
    pos_vol = signed_volume(pos_mesh)
    if neg_vol < vol_eps or pos_vol < vol_eps:
        raise EmptySide(f"side volume below tolerance ({neg_vol:g} / {pos_vol:g})")

    if validate:
        total = signed_volume(mesh)
        if abs(neg_vol + pos_vol - total) > 1e-6 * abs(total):
            raise TriangulationFailure(
                f"cut lost volume: {neg_vol:g} + {pos_vol:g} != {total:g}"
            )

    return CutResult(
        negative_side=neg_mesh,
        positive_side=pos_mesh,
        cap_triangle_count=neg_caps + pos_caps,
        negative_volume=neg_vol,
        positive_volume=pos_vol,
    )


def cut_with_retry(mesh: SolidMesh, plane: Plane, *, cap_method: str = "cdt",
                   validate: bool = True) -> CutResult:
    """Cut, retrying with a perturbed plane offset on tolerance breakdown.

    Perturbs by +-3 cut tolerances (then +6) before giving up, re-raising
    the last failure.  EmptySide is not retried: a plane that misses the
    solid will keep missing it.
    """
    diag = mesh.bbox_diagonal()
    last: Exception | None = None
    for bump in (0.0, 3.0, -3.0, 6.0):
        candidate = plane if bump == 0.0 else Plane(plane.normal,
                                                    plane.offset + bump * CUT_EPS_REL * diag)
        try:
            return cut(mesh, candidate, cap_method=cap_method, validate=validate)
        except (OpenChain, TriangulationFailure) as exc:
            last = exc
    raise last
