"""Cutting-plane selection.

Three strategies, sharing one search space of axis-aligned candidate
planes (optionally in the component's principal frame):

* ``greedy_plan`` -- one-step lookahead, picks the candidate minimizing the
  worse child concavity.
* ``mcts_plan`` -- Monte Carlo tree search over multi-step cut sequences,
  scored by the mean per-step worst concavity, with UCB selection and
  max-backup.
* ``refine_plane`` -- ternary search on the chosen plane's offset inside
  the candidate spacing, holding the rest of the plan fixed.

Inside the search, concavity is always the volume-gap radius (never the
sampled boundary term): cuts here are throwaway evaluations, so they use
the fast fan-cap cut without manifold validation; volumes and hulls are
exact either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .concavity import gap_radius_from_volumes
from .cutting import CutResult, cut
from .errors import EmptySide, MeshAcdError, NoValidCandidates, OpenChain, TriangulationFailure
from .hull import hull_volume
from .mesh import Plane, SolidMesh, Transform, pca_axes, signed_volume

_CUT_ERRORS = (EmptySide, OpenChain, TriangulationFailure)


@dataclass(frozen=True)
class PlannerParams:
    candidates_per_axis: int = 20     # m
    iterations: int = 500             # t
    max_depth: int = 4                # d
    exploration: float | None = None  # None = adaptive: root concavity / depth
    seed: int = 0
    use_pca: bool = False
    refine_iterations: int = 15

    def __post_init__(self):
        if self.candidates_per_axis < 1 or self.iterations < 1 or self.max_depth < 1:
            raise ValueError("candidates_per_axis, iterations, max_depth must be >= 1")
        if self.refine_iterations < 0:
            raise ValueError("refine_iterations must be >= 0")


@dataclass(frozen=True)
class PlanePath:
    """A full d-step cutting plan and the worst concavity after each step."""

    planes: list[Plane]
    per_step_worst: list[float]


def quality(per_step_worst) -> float:
    """Mean of the negated per-step worst concavities (higher is better).

    Rewarding every intermediate step prefers plans that improve early,
    not just plans with a good end state.
    """
    w = list(per_step_worst)
    if not w:
        raise ValueError("need at least one step")
    return -sum(w) / len(w)


def ucb(node: "SearchNode", parent_visits: int, c: float) -> float:
    """Upper confidence bound: Q + c * sqrt(2 ln(parent) / N)."""
    return node.value + c * math.sqrt(2.0 * math.log(parent_visits) / node.visit_count)


# ---------------------------------------------------------------------------
# Search-side component wrapper (cached measures)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Comp:
    mesh: SolidMesh
    volume: float
    concavity: float  # gap-radius concavity, the in-search metric
    uid: int


class _CompFactory:
    def __init__(self):
        self.next_uid = 0

    def make(self, mesh: SolidMesh, volume: float | None = None) -> _Comp:
        vol = signed_volume(mesh) if volume is None else volume
        rv = gap_radius_from_volumes(vol, hull_volume(mesh.vertices))
        comp = _Comp(mesh=mesh, volume=vol, concavity=rv, uid=self.next_uid)
        self.next_uid += 1
        return comp


def _axes_rotation(component: SolidMesh, params: PlannerParams) -> np.ndarray:
    if params.use_pca:
        return pca_axes(component).rotation
    return np.eye(3)


def _axis_extent(component: SolidMesh, normal: np.ndarray) -> tuple[float, float]:
    proj = component.vertices @ normal
    return float(proj.min()), float(proj.max())


def _fast_cut(mesh: SolidMesh, plane: Plane) -> CutResult:
    return cut(mesh, plane, cap_method="fan", validate=False)


# ---------------------------------------------------------------------------
# Candidates
# ---------------------------------------------------------------------------

def _raw_candidates(component: SolidMesh, m: int, rotation: np.ndarray) -> list[Plane]:
    planes = []
    for k in range(3):
        n = np.ascontiguousarray(rotation[:, k])
        n = n / np.linalg.norm(n)
        lo, hi = _axis_extent(component, n)
        extent = hi - lo
        for i in range(1, m + 1):
            planes.append(Plane(n, lo + extent * i / (m + 1)))
    return planes


def candidate_planes(component: SolidMesh, m: int,
                     axes: Transform | None = None, *, prune: bool = True) -> list[Plane]:
    """Equal-spaced interior candidate planes along each of three axes.

    Offsets sit at ``lo + i/(m+1) * extent`` for i=1..m (faces excluded).
    With ``prune`` (the default), candidates whose trial cut leaves a side
    empty are removed.  Raises :class:`NoValidCandidates` when nothing
    survives.
    """
    rotation = axes.rotation if axes is not None else np.eye(3)
    planes = _raw_candidates(component, m, rotation)
    if prune:
        kept = []
        for p in planes:
            try:
                _fast_cut(component, p)
            except _CUT_ERRORS:
                continue
            kept.append(p)
        planes = kept
    if not planes:
        raise NoValidCandidates(
            f"no candidate plane produces a two-sided cut (m={m})"
        )
    return planes


# ---------------------------------------------------------------------------
# One-step greedy
# ---------------------------------------------------------------------------

def one_step_cost(component: SolidMesh, plane: Plane) -> float:
    """Worse child gap-radius concavity after cutting with ``plane``."""
    r = _fast_cut(component, plane)
    left = gap_radius_from_volumes(r.negative_volume, hull_volume(r.negative_side.vertices))
    right = gap_radius_from_volumes(r.positive_volume, hull_volume(r.positive_side.vertices))
    return max(left, right)


def greedy_plan(component: SolidMesh, params: PlannerParams) -> Plane:
    """One-step lookahead: the candidate minimizing the worse child
    concavity, ties broken by candidate order (axis, then offset)."""
    rotation = _axes_rotation(component, params)
    planes = _raw_candidates(component, params.candidates_per_axis, rotation)
    best_plane, best_cost = None, math.inf
    for p in planes:
        try:
            c = one_step_cost(component, p)
        except _CUT_ERRORS:
            continue
        if c < best_cost:
            best_plane, best_cost = p, c
    if best_plane is None:
        raise NoValidCandidates("every candidate cut failed")
    return best_plane


# ---------------------------------------------------------------------------
# Rollout (default policy)
# ---------------------------------------------------------------------------

def _mid_planes(comp: _Comp, rotation: np.ndarray) -> list[Plane]:
    lo, hi = comp.mesh.bounds()
    out = []
    for k in range(3):
        n = np.ascontiguousarray(rotation[:, k])
        n = n / np.linalg.norm(n)
        proj_lo, proj_hi = _axis_extent(comp.mesh, n)
        out.append(Plane(n, 0.5 * (proj_lo + proj_hi)))
    return out


class _Rollout:
    """Greedy mid-plane rollout with per-component memoization.

    The rollout is deterministic, so the best mid-cut of a given component
    is computed once and shared across every simulation that reaches it.
    """

    def __init__(self, factory: _CompFactory, rotation: np.ndarray):
        self.factory = factory
        self.rotation = rotation
        self.cache: dict[int, tuple[Plane, _Comp, _Comp] | None] = {}

    def best_mid_cut(self, comp: _Comp):
        if comp.uid in self.cache:
            return self.cache[comp.uid]
        best = None
        best_q = -math.inf
        for plane in _mid_planes(comp, self.rotation):
            try:
                r = _fast_cut(comp.mesh, plane)
            except _CUT_ERRORS:
                continue
            left = self.factory.make(r.negative_side, r.negative_volume)
            right = self.factory.make(r.positive_side, r.positive_volume)
            q = -max(left.concavity, right.concavity)
            if q > best_q:
                best_q = q
                best = (plane, left, right)
        self.cache[comp.uid] = best
        return best

    def run(self, components: list[_Comp], steps: int):
        """Returns (planes, per_step_worst); operates on a copy."""
        comps = list(components)
        planes: list[Plane] = []
        worsts: list[float] = []
        for _ in range(steps):
            i = max(range(len(comps)), key=lambda j: comps[j].concavity)
            trial = self.best_mid_cut(comps[i])
            if trial is not None:
                plane, left, right = trial
                comps[i:i + 1] = [left, right]
                planes.append(plane)
            worsts.append(max(c.concavity for c in comps))
        return planes, worsts


def default_policy(components: list[SolidMesh], steps_remaining: int,
                   axes: Transform | None = None):
    """Greedy completion: repeatedly cut the worst component at its
    bounding-box midpoint along the best of the three axis directions.

    Returns (planes, per_step_worst).  A step where all three mid-cuts
    fail keeps the component and repeats the previous worst.
    """
    rotation = axes.rotation if axes is not None else np.eye(3)
    factory = _CompFactory()
    comps = [factory.make(m) for m in components]
    rollout = _Rollout(factory, rotation)
    return rollout.run(comps, steps_remaining)


# ---------------------------------------------------------------------------
# MCTS
# ---------------------------------------------------------------------------

@dataclass
class SearchNode:
    """Node of the cutting-plane search tree."""

    components: list[_Comp]
    incoming_plane: Plane | None
    depth: int
    visit_count: int = 0
    value: float = -math.inf
    untried_planes: list[Plane] = field(default_factory=list)
    children: list["SearchNode"] = field(default_factory=list)
    worst_after: float = 0.0
    rollout_result: tuple[list[Plane], list[float]] | None = None

    def worst_index(self) -> int:
        return max(range(len(self.components)),
                   key=lambda j: self.components[j].concavity)


class _Search:
    def __init__(self, component: SolidMesh, params: PlannerParams,
                 root_concavity: float | None):
        self.params = params
        self.rotation = _axes_rotation(component, params)
        self.rng = np.random.default_rng(params.seed)
        self.factory = _CompFactory()
        self.rollout = _Rollout(self.factory, self.rotation)
        root_comp = self.factory.make(component)
        self.root = SearchNode(components=[root_comp], incoming_plane=None, depth=0)
        self.root.untried_planes = self._node_candidates(self.root)
        self.root.worst_after = root_comp.concavity
        if params.exploration is not None:
            self.c = params.exploration
        else:
            base = root_concavity if root_concavity is not None else root_comp.concavity
            self.c = base / params.max_depth
        # Best full plan seen through each root child, keyed by child id.
        self.best_path: dict[int, tuple[float, PlanePath]] = {}

    def _node_candidates(self, node: SearchNode) -> list[Plane]:
        comp = node.components[node.worst_index()]
        return _raw_candidates(comp.mesh, self.params.candidates_per_axis, self.rotation)

    def _expand(self, node: SearchNode) -> SearchNode | None:
        """Try untried planes (in random order) until one cuts; returns the
        new child, or None when the node has no expandable plane left."""
        i = node.worst_index()
        comp = node.components[i]
        while node.untried_planes:
            pick = int(self.rng.integers(len(node.untried_planes)))
            plane = node.untried_planes.pop(pick)
            try:
                r = _fast_cut(comp.mesh, plane)
            except _CUT_ERRORS:
                continue  # pruned permanently for this node
            left = self.factory.make(r.negative_side, r.negative_volume)
            right = self.factory.make(r.positive_side, r.positive_volume)
            comps = list(node.components)
            comps[i:i + 1] = [left, right]
            child = SearchNode(components=comps, incoming_plane=plane,
                               depth=node.depth + 1)
            child.worst_after = max(c.concavity for c in comps)
            if child.depth < self.params.max_depth:
                child.untried_planes = self._node_candidates(child)
            node.children.append(child)
            return child
        return None

    def _tree_policy(self):
        """Descend by UCB, expanding the first node with untried planes.

        Returns (tree_planes, tree_worsts, leaf_node).
        """
        node = self.root
        planes: list[Plane] = []
        worsts: list[float] = []
        path = [node]
        while node.depth < self.params.max_depth:
            if node.untried_planes:
                child = self._expand(node)
                if child is not None:
                    planes.append(child.incoming_plane)
                    worsts.append(child.worst_after)
                    path.append(child)
                    return planes, worsts, path
                # fall through: everything untried failed
            if not node.children:
                break  # dead end
            parent_visits = max(node.visit_count, 1)
            node = max(node.children, key=lambda ch: ucb(ch, parent_visits, self.c))
            planes.append(node.incoming_plane)
            worsts.append(node.worst_after)
            path.append(node)
        return planes, worsts, path

    def _simulate(self, leaf: SearchNode):
        if leaf.rollout_result is None:
            steps = self.params.max_depth - leaf.depth
            leaf.rollout_result = self.rollout.run(leaf.components, steps)
        return leaf.rollout_result

    def run(self) -> tuple[Plane, PlanePath]:
        p = self.params
        for _ in range(p.iterations):
            planes, worsts, path = self._tree_policy()
            leaf = path[-1]
            roll_planes, roll_worsts = self._simulate(leaf)
            all_planes = planes + roll_planes
            all_worsts = worsts + roll_worsts
            if len(all_worsts) < p.max_depth:  # dead end with failing rollout
                pad = all_worsts[-1] if all_worsts else leaf.worst_after
                all_worsts = all_worsts + [pad] * (p.max_depth - len(all_worsts))
            q = quality(all_worsts)
            for node in path:  # backup, root included
                node.visit_count += 1
                node.value = max(node.value, q)
            if len(path) > 1:
                child_id = id(path[1])
                prev = self.best_path.get(child_id)
                if prev is None or q > prev[0]:
                    self.best_path[child_id] = (q, PlanePath(all_planes, all_worsts))

        if not self.root.children:
            raise NoValidCandidates("no candidate plane could cut the component")
        best_child = max(self.root.children, key=lambda ch: ch.value)
        _, path = self.best_path[id(best_child)]
        return best_child.incoming_plane, path


def mcts_plan(component: SolidMesh, params: PlannerParams,
              root_concavity: float | None = None) -> tuple[Plane, PlanePath]:
    """Monte Carlo tree search for the next cutting plane.

    Runs ``iterations`` rounds of UCB descent + expansion + greedy rollout
    + max-backup, then returns the root child with the highest value and
    the best full plan through it (for offset refinement).  Deterministic
    for a fixed seed.  ``root_concavity`` feeds the adaptive exploration
    constant when the caller has already measured the component.
    """
    return _Search(component, params, root_concavity).run()


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _plan_quality(component: SolidMesh, planes: list[Plane]) -> float:
    """Re-simulate a plane sequence, always cutting the current worst
    component; failed cuts repeat the previous worst."""
    factory = _CompFactory()
    comps = [factory.make(component)]
    worsts = []
    for plane in planes:
        i = max(range(len(comps)), key=lambda j: comps[j].concavity)
        try:
            r = _fast_cut(comps[i].mesh, plane)
            comps[i:i + 1] = [factory.make(r.negative_side, r.negative_volume),
                              factory.make(r.positive_side, r.positive_volume)]
        except _CUT_ERRORS:
            pass
        worsts.append(max(c.concavity for c in comps))
    return quality(worsts)


def refine_plane(component: SolidMesh, path: PlanePath,
                 params: PlannerParams) -> Plane:
    """Ternary-search the first plane's offset within +- half the candidate
    spacing, holding the rest of the plan and the score function fixed.

    Never returns a plane scoring worse than the input's first plane.
    """
    if not path.planes:
        raise ValueError("empty plane path")
    first = path.planes[0]
    rest = path.planes[1:]
    lo_e, hi_e = _axis_extent(component, first.normal)
    spacing = (hi_e - lo_e) / (params.candidates_per_axis + 1)
    half = spacing / 2.0

    def score(offset: float) -> float:
        return _plan_quality(component, [Plane(first.normal, offset)] + rest)

    best_offset = first.offset
    best_q = score(best_offset)
    lo, hi = first.offset - half, first.offset + half
    for _ in range(params.refine_iterations):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        q1, q2 = score(m1), score(m2)
        if q1 > best_q:
            best_q, best_offset = q1, m1
        if q2 > best_q:
            best_q, best_offset = q2, m2
        if q1 < q2:
            lo = m1
        else:
            hi = m2
    return Plane(first.normal, best_offset)
