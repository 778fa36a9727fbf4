"""Exception types shared across the engine.

The CLI maps these onto distinct exit codes, so raising the right class
matters: bad arguments/shapes/ranges -> ValidationError, numeric or
geometric degeneracy -> GeometryError, file/format trouble -> SceneIOError.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class ValidationError(EngineError):
    """Input failed a precondition (shape, range, missing field)."""


class GeometryError(EngineError):
    """Geometric or numeric degeneracy (camera on plane, behind camera)."""


class SceneIOError(EngineError):
    """Malformed, truncated or inconsistent scene/raster files."""
