"""Exception hierarchy for the surveillance toolkit."""

from __future__ import annotations


class PmsurvError(Exception):
    """Base class for all toolkit errors."""


# -- corpus / model ----------------------------------------------------------

class UnknownAccount(PmsurvError):
    pass


class UnknownMarket(PmsurvError):
    pass


class UnknownEvent(PmsurvError):
    pass


class TimeBeforeSeries(PmsurvError):
    """Price lookup requested before the first point of a series."""


class ValidationFailed(PmsurvError):
    """Corpus rejected; carries the full validation report."""

    def __init__(self, report):
        self.report = report
        fatal = getattr(report, "fatal", [])
        super().__init__(
            f"corpus validation failed with {len(fatal)} fatal violation(s)"
        )


# -- ingestion ---------------------------------------------------------------

class ParseError(PmsurvError):
    """Malformed corpus or config file content, located by file and line."""

    def __init__(self, file: str, line: int, reason: str):
        self.file = file
        self.line = line
        self.reason = reason
        super().__init__(f"{file}:{line}: {reason}")


class IoError(PmsurvError):
    pass


class InvalidConfig(PmsurvError):
    pass


# -- statistics --------------------------------------------------------------

class EmptyHistory(PmsurvError):
    pass


class InsufficientData(PmsurvError):
    pass


class InsufficientPopulation(PmsurvError):
    pass


class EmptySample(PmsurvError):
    pass


class NonPositiveDuration(PmsurvError):
    pass


# -- leakage scoring ---------------------------------------------------------

class MissingEventTime(PmsurvError):
    pass


class SeriesGap(PmsurvError):
    """Price series does not cover a required lookup time."""


class NotAdmitted(PmsurvError):
    """Market failed the scope gate; carries the gate report."""

    def __init__(self, gate):
        self.gate = gate
        super().__init__(f"market not admitted by scope gate: {gate}")


# -- evaluation --------------------------------------------------------------

class UnknownId(PmsurvError):
    pass
