"""Exception and warning types shared across the package.

Two families matter for the CLI exit code: :class:`ValidationError` covers
bad inputs (exit 1), :class:`ComputationError` covers geometry that defeats
an algorithm at run time (exit 2).
"""

from __future__ import annotations


class FracredError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FracredError):
    """Input files or arguments are malformed or inconsistent."""


class ComputationError(FracredError):
    """A geometric computation failed on otherwise well-formed input."""


# -- computation errors -----------------------------------------------------

class DegeneratePoint(ComputationError):
    """Point coincides with a sphere center; its projection is undefined."""


class NotOnSphere(ComputationError):
    """Point handed to an on-sphere operation is off the sphere surface."""


class EmptySet(ComputationError):
    """Point set is empty where at least one point is required."""


class EmptyMesh(ComputationError):
    """Mesh has no vertices where a non-empty mesh is required."""


class ZeroTotalArea(ComputationError):
    """All triangles of a mesh are degenerate; area sampling is impossible."""


class DegenerateConfiguration(ComputationError):
    """Coplanar, collinear or coincident points defeat the solver."""


class RegionTooLarge(ComputationError):
    """Projected region exceeds a single spherical cap (angular radius >= 90 deg)."""


class SelfIntersectingBoundary(ComputationError):
    """Unwrapped gap boundary cannot be made a simple polygon."""


class CollinearNodes(ComputationError):
    """RBF nodes are collinear; the interpolation system is singular."""


class SingularSystem(ComputationError):
    """Linear system remained singular after the regularized retry."""


class MissingPairs(ComputationError):
    """Case defines no fracture line pairs, so no metric can be computed."""


# -- validation errors -------------------------------------------------------

class UnsupportedFormat(ValidationError):
    """Mesh file extension or magic bytes are not PLY, STL or OBJ."""


class MalformedFile(ValidationError):
    """Mesh file violates its format; carries the failing byte offset."""

    def __init__(self, message: str, path: str | None = None, offset: int | None = None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class IndexOutOfRange(ValidationError):
    """Face references a vertex index beyond the vertex count."""


class SchemaError(ValidationError):
    """Case file violates the schema; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DanglingReference(ValidationError):
    """Case file references a fragment id that is not defined."""


class UnitsMismatch(ValidationError):
    """Case file declares units other than millimeters."""


class IoError(ValidationError):
    """A report or mesh file could not be written."""


# -- warnings ----------------------------------------------------------------

class NonConvergenceWarning(UserWarning):
    """Iterative refinement hit its iteration cap; best iterate returned."""


class IllConditionedWarning(UserWarning):
    """Interpolation system was ill-conditioned; ridge fallback applied."""
