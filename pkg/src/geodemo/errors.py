"""Exception hierarchy for the geodemo toolkit.

Three branches map to the CLI exit codes: ConfigError (2), DataError (3)
and DegeneracyError (4).
"""


class GeodemoError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GeodemoError):
    """Invalid configuration value or combination."""

    exit_code = 2


class DataError(GeodemoError):
    """Malformed, inconsistent or missing input data."""

    exit_code = 3


class DegeneracyError(GeodemoError):
    """Numerically degenerate input (zero variance, zero denominator, ...)."""

    exit_code = 4


# --- ingest ---------------------------------------------------------------

class MissingColumn(DataError):
    pass


class DuplicateDistrict(DataError):
    pass


class EmptyTable(DataError):
    pass


class BadDistrictCode(DataError):
    pass


class GroupTotalInconsistent(DataError):
    pass


class NoGroupTotal(DataError):
    pass


class SuppressedCellsRemain(DataError):
    pass


class ZeroDenominator(DegeneracyError):
    pass


class RateOutOfRange(DataError):
    pass


# --- preprocess -----------------------------------------------------------

class ConstantColumn(DegeneracyError):
    def __init__(self, variable: str):
        super().__init__(f"column {variable!r} has zero variance")
        self.variable = variable


class ThresholdOutOfRange(ConfigError):
    pass


class AllVariablesRemoved(DegeneracyError):
    pass


# --- cluster --------------------------------------------------------------

class KZero(ConfigError):
    pass


class KTooLarge(ConfigError):
    pass


class DimensionMismatch(DegeneracyError):
    pass


# --- kselect --------------------------------------------------------------

class KRangeInvalid(ConfigError):
    pass


class DegenerateCovariance(DegeneracyError):
    pass


class DegenerateData(DegeneracyError):
    pass


# --- evaluate -------------------------------------------------------------

class SingleCluster(DegeneracyError):
    pass


class EmptyCluster(DegeneracyError):
    pass


# --- profile --------------------------------------------------------------

class UnknownVariableInRule(DataError):
    pass


class UnknownClusterId(DataError):
    pass


class RuleSyntaxError(ConfigError):
    pass


# --- validate -------------------------------------------------------------

class DuplicateCode(DataError):
    pass


class NoJoinedRows(DataError):
    pass


class MissingLookup(DataError):
    pass


class MissingArea(DataError):
    pass


# --- interface ------------------------------------------------------------

class NoCodeProperty(DataError):
    pass


class InvalidGeoJSON(DataError):
    pass


class EmptyAssignments(DataError):
    pass
