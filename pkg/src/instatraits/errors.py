"""Exception hierarchy.

``ValidationError`` subclasses signal bad input (CLI exit code 2); anything
else raised from a stage is treated as a stage failure (exit code 3).
"""


class ValidationError(ValueError):
    """Input does not satisfy a documented contract."""


class SchemaError(ValidationError):
    """Structured input is missing fields or references unknown entities."""


class ConfigurationError(ValidationError):
    """Estimator or pipeline parameters are out of range."""


class EncodingError(ValidationError):
    """A categorical value has no documented code."""


class InsufficientDataError(ValueError):
    """Too few observations for the requested statistic."""


class UndefinedStatisticError(ValueError):
    """The statistic is undefined for the given input (e.g. zero variance)."""


class StageError(RuntimeError):
    """A pipeline stage failed."""

    def __init__(self, stage, message, trait=None):
        self.stage = stage
        self.trait = trait
        self.message = str(message)
        where = f"{stage}" if trait is None else f"{stage} [{trait}]"
        super().__init__(f"{where}: {message}")
