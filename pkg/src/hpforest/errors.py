"""Exception hierarchy shared across the package."""


class HpForestError(Exception):
    """Base class for all package errors."""


class ConfigError(HpForestError, ValueError):
    """Invalid run configuration or hyperparameters."""


class DataError(HpForestError, ValueError):
    """Input data that cannot be ingested or modelled."""


class PanelFormatError(DataError):
    """Malformed panel CSV. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None, country=None, year=None):
        self.line = line
        self.country = country
        self.year = year
        where = []
        if line is not None:
            where.append(f"line {line}")
        if country is not None:
            where.append(f"{country}/{year}" if year is not None else str(country))
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyDesignError(DataError):
    """No usable supervised rows could be built."""


class DegenerateSampleError(DataError):
    """Too few observations for the requested statistic."""


class SingularDesignError(DataError):
    """Regressor matrix is not of full column rank."""

    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)
