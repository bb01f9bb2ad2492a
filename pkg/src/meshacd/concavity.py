"""Concavity metrics: how far a component is from its convex hull.

Two complementary distance terms are combined:

* ``boundary_concavity`` -- two-sided Hausdorff distance between sampled
  boundary surfaces (point-to-triangle in both directions).
* ``gap_radius`` -- radius of the sphere whose volume equals the
  hull-minus-shape volume gap; a fast surrogate for the interior
  Hausdorff term, which the oracle ``interior_concavity_oracle`` computes
  directly from interior samples (validation only -- never in the planner).

The production metric is ``max(boundary, k * gap_radius)`` with k < 1;
``surrogate_bound_margin`` checks the sqrt(2) guarantee relating the
surrogate to the exact interior term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distance import directed_hausdorff, directed_hausdorff_points
from .errors import DegenerateHull
from .hull import convex_hull
from .mesh import SolidMesh, signed_volume
from .sampling import sample_interior, sample_surface

DEFAULT_SURFACE_DENSITY = 3000.0
DEFAULT_INTERIOR_COUNT = 100_000
DEFAULT_GAP_COEFFICIENT = 0.3


@dataclass(frozen=True)
class ConcavityParams:
    """Sampling and weighting knobs for concavity evaluation."""

    surface_density: float = DEFAULT_SURFACE_DENSITY  # points per unit area
    interior_count: int = DEFAULT_INTERIOR_COUNT      # oracle only
    k: float = DEFAULT_GAP_COEFFICIENT                # gap-radius weight, in (0, 1]
    seed: int = 0

    def __post_init__(self):
        if self.surface_density <= 0:
            raise ValueError("surface_density must be positive")
        if not 0.0 < self.k <= 1.0:
            raise ValueError("k must be in (0, 1]")

    def sampling_tolerance(self) -> float:
        """Discrete-sampling error budget: nearest-sample spacing scales as
        density^(-1/2)."""
        return 2.0 / math.sqrt(self.surface_density)


@dataclass(frozen=True)
class ConcavityReport:
    """Concavity terms for one component (normalized length units)."""

    boundary_dist: float
    gap_radius: float
    fast: float                      # max(boundary, k * gap_radius)
    interior_dist: float | None = None
    exact: float | None = None       # max(boundary, interior) when oracle ran

    def __post_init__(self):
        assert self.boundary_dist >= 0 and self.gap_radius >= 0
        assert self.fast >= self.boundary_dist - 1e-15


def boundary_concavity(component: SolidMesh, hull: SolidMesh,
                       params: ConcavityParams) -> float:
    """Two-sided sampled-boundary Hausdorff distance.

    Samples of each surface are measured against the triangles of the
    other, which is strictly tighter than point-to-point.
    """
    comp_pts = sample_surface(component, params.surface_density, params.seed)
    hull_pts = sample_surface(hull, params.surface_density, params.seed + 1)
    return max(
        directed_hausdorff(comp_pts, hull),
        directed_hausdorff(hull_pts, component),
    )


def gap_radius(component: SolidMesh, hull: SolidMesh) -> float:
    """Radius of the sphere with volume Vol(hull) - Vol(component)."""
    gap = max(0.0, signed_volume(hull) - signed_volume(component))
    return (3.0 * gap / (4.0 * math.pi)) ** (1.0 / 3.0)


def gap_radius_from_volumes(component_volume: float, hull_vol: float) -> float:
    gap = max(0.0, hull_vol - component_volume)
    return (3.0 * gap / (4.0 * math.pi)) ** (1.0 / 3.0)


def interior_concavity_oracle(component: SolidMesh, hull: SolidMesh,
                              params: ConcavityParams) -> float:
    """Interior Hausdorff term, computed the expensive way.

    Directed distance from hull interior samples to component interior
    samples (the reverse direction is zero by containment).  Interiors
    include their boundary, so surface samples are folded into both sets.
    Validation/testing only.
    """
    hull_int = sample_interior(hull, params.interior_count, params.seed + 2)
    comp_int = sample_interior(component, params.interior_count, params.seed + 3)
    hull_sur = sample_surface(hull, params.surface_density, params.seed + 4)
    comp_sur = sample_surface(component, params.surface_density, params.seed + 5)
    query = np.concatenate([hull_int.points, hull_sur.points])
    target = np.concatenate([comp_int.points, comp_sur.points])
    return directed_hausdorff_points(query, target)


def concavity_fast(component: SolidMesh, params: ConcavityParams) -> ConcavityReport:
    """Production concavity: max(boundary, k * gap_radius).

    Computes the hull internally from the component's vertices.  Raises
    :class:`DegenerateHull` for flat components (callers decide policy).
    """
    hull = convex_hull(component.vertices)
    return concavity_fast_with_hull(component, hull, params)


def concavity_fast_with_hull(component: SolidMesh, hull: SolidMesh,
                             params: ConcavityParams) -> ConcavityReport:
    hb = boundary_concavity(component, hull, params)
    rv = gap_radius(component, hull)
    return ConcavityReport(boundary_dist=hb, gap_radius=rv,
                           fast=max(hb, params.k * rv))


def concavity_exact(component: SolidMesh, params: ConcavityParams) -> ConcavityReport:
    """Fast report augmented with the interior oracle and exact combination."""
    hull = convex_hull(component.vertices)
    hb = boundary_concavity(component, hull, params)
    rv = gap_radius(component, hull)
    hi = interior_concavity_oracle(component, hull, params)
    return ConcavityReport(boundary_dist=hb, gap_radius=rv,
                           fast=max(hb, params.k * rv),
                           interior_dist=hi, exact=max(hb, hi))


def surrogate_bound_margin(component: SolidMesh, params: ConcavityParams) -> float:
    """sqrt(2) * max(boundary, gap_radius) - max(boundary, interior_oracle).

    Non-negative in the continuum; at sampled resolution it may dip by at
    most the sampling tolerance.
    """
    hull = convex_hull(component.vertices)
    hb = boundary_concavity(component, hull, params)
    rv = gap_radius(component, hull)
    hi = interior_concavity_oracle(component, hull, params)
    return math.sqrt(2.0) * max(hb, rv) - max(hb, hi)


def flat_component_report() -> ConcavityReport:
    """Report for a component whose hull is degenerate (flat slab): such a
    part is already convex for collision purposes."""
    return ConcavityReport(boundary_dist=0.0, gap_radius=0.0, fast=0.0)


__all__ = [
    "ConcavityParams",
    "ConcavityReport",
    "boundary_concavity",
    "gap_radius",
    "gap_radius_from_volumes",
    "interior_concavity_oracle",
    "concavity_fast",
    "concavity_fast_with_hull",
    "concavity_exact",
    "surrogate_bound_margin",
    "flat_component_report",
    "DegenerateHull",
]
