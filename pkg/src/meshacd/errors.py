"""Exception types raised across the package.

Every geometric failure carries enough context (offending element indices,
counts) to diagnose the input without re-running with a debugger.
"""

from __future__ import annotations


class MeshAcdError(Exception):
    """Base class for all package errors."""


class MeshValidationError(MeshAcdError):
    """A mesh failed the closed-2-manifold validation.

    ``elements`` holds the offending vertex/edge/triangle indices, with a
    meaning that depends on the subclass.
    """

    def __init__(self, message: str, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class NonManifoldEdge(MeshValidationError):
    """An undirected edge is shared by more than two triangles."""


class OpenBoundary(MeshValidationError):
    """An undirected edge is used by exactly one triangle (hole in surface)."""


class InconsistentOrientation(MeshValidationError):
    """An edge is traversed twice in the same direction (flipped triangle)."""


class DegenerateTriangle(MeshValidationError):
    """A triangle has (near-)zero area or repeated vertex indices."""


class ZeroVolume(MeshValidationError):
    """The mesh encloses no volume."""


class DegenerateHull(MeshAcdError):
    """Convex hull input was coplanar/collinear; no 3D hull exists."""


class EmptyInterior(MeshAcdError):
    """Interior sampling accepted no points within its oversampling budget."""


class EmptySide(MeshAcdError):
    """A cut left one side of the plane without solid volume."""


class OpenChain(MeshAcdError):
    """Cross-section segments failed to close into loops (tolerance breakdown)."""


class TriangulationFailure(MeshAcdError):
    """Cap triangulation failed (constraint intersection / numeric noise)."""


class NoValidCandidates(MeshAcdError):
    """No candidate cutting plane produces a usable cut of the component."""


class CapExceeded(MeshAcdError):
    """Decomposition hit the component-count safety cap.

    Carries the partial result so callers can still use it.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class ParseError(MeshAcdError):
    """A mesh file could not be parsed; ``position`` is a line number (text
    formats) or byte offset (binary STL)."""

    def __init__(self, message: str, position=None):
        super().__init__(message)
        self.position = position
