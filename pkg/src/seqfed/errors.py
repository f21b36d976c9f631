"""Exception types shared across the package."""


class EstimationError(RuntimeError):
    """Base class for failures inside an estimation procedure."""


class SingularInformationError(EstimationError):
    """Information matrix is numerically singular where an inverse is required."""


class InitInfeasibleError(EstimationError):
    """A usable initial sample or initial fit could not be obtained."""


class DegenerateClassesError(ValueError):
    """All response labels belong to a single class."""


class EmptyPoolError(ValueError):
    """No inactive candidates remain to select from."""


class ExhaustedSiteError(EstimationError):
    """A site ran out of candidates before reaching its precision targets."""


class DataFormatError(ValueError):
    """Input data file violates the expected schema."""


class ConfigError(ValueError):
    """Configuration file or CLI arguments are invalid."""
