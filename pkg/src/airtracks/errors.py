"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PipelineError):
    """Invalid, unknown, or contradictory configuration."""


class InputError(PipelineError):
    """An input file is missing, unreadable, or malformed beyond recovery."""


class DegenerateGeometryError(PipelineError):
    """Point set collapses to fewer than three non-collinear points."""


class UnsupportedGeometryError(PipelineError):
    """Operation requires a convex polygon and was given something else."""


class CorruptTileError(PipelineError):
    """Elevation tile bytes do not match the declared grid shape."""


class MissingTerrainError(PipelineError):
    """No elevation tile covers the queried position."""


class ArchiveError(PipelineError):
    """Archive creation or verification failed; source files were kept."""


class RebuildRequiredError(ArchiveError):
    """Existing archive is corrupt and must be rebuilt from source files."""
