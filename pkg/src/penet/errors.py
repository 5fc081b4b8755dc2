"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not conform for an operation."""


class LayoutError(ValueError):
    """Flat batch size disagrees with the declared (batch, points) layout."""


class EmptyCloudError(ValueError):
    """An operation received a point cloud with zero points."""


class SamplingError(ValueError):
    """Requested more points than a cloud contains."""


class FormatError(ValueError):
    """A binary or text file does not match its declared format."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Dataset contents violate a documented constraint."""
