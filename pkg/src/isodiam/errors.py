"""Exception types shared across the library."""


class IsodiamError(Exception):
    """Base class for all library errors."""


class NoConvergence(IsodiamError):
    """An iterative solver exhausted its budget without meeting tolerance."""


class OutOfChart(IsodiamError):
    """A computed point left the backend's chart domain."""


class DegeneratePolygon(IsodiamError):
    """Polygon area is negligible relative to its perimeter."""


class NonSimplePolygon(IsodiamError):
    """Polygon has self-intersections."""


class EmptyAttainment(IsodiamError):
    """Enclosing ball has no attainment vertices within tolerance."""


class PatchUnavailable(IsodiamError):
    """No boundary patch clear of the attainment set for volume projection."""


class LineSearchFailed(IsodiamError):
    """Backtracking produced a step below the minimum admissible size."""


class SelfIntersection(IsodiamError):
    """Too many consecutive rejected steps due to non-simple trial polygons."""


class SingularMetric(IsodiamError):
    """Graph metric determinant fell below tolerance."""


class EmptyContactSet(IsodiamError):
    """Obstacle solution has no contact nodes."""


class WrongBackend(IsodiamError):
    """Verification routine called with an incompatible backend."""


class RootFindFailed(IsodiamError):
    """1D root solve (e.g. ball radius for a target volume) failed."""


class ConfigInvalid(IsodiamError):
    """Experiment configuration failed schema validation."""


class ExperimentFailed(IsodiamError):
    """An experiment ran but one of its assertions did not hold."""
