"""Exception types shared across the simulator."""


class VflsimError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(VflsimError):
    """Array shapes or index ranges are inconsistent with the operation."""


class NumericError(VflsimError):
    """A NaN or Inf escaped a numeric operation."""


class ContractError(VflsimError):
    """An API precondition was violated (stale tape, invalid jitter radius, ...)."""


class GenerationError(VflsimError):
    """Random generation could not satisfy its constraints within the retry budget."""


class UnknownLabelError(VflsimError):
    """A synthetic label is too far from every codebook row to decode."""


class NonDifferentiableModelError(VflsimError):
    """A non-differentiable predictor was offered to the gradient-relay protocol."""


class UndefinedMetricError(VflsimError):
    """The requested metric is undefined for the given inputs (e.g. single-class AUC)."""


class DataFormatError(VflsimError):
    """A dataset file does not match its declared format."""


class ConfigError(VflsimError):
    """Configuration validation failed; carries every problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
