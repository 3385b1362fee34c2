class DataError(ValueError):
    """Input data violates a documented contract."""


class UndefinedCorrelation(DataError):
    """Correlation requested on a coordinate with zero variance."""
