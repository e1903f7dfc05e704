from __future__ import annotations


class HblabError(Exception):
    """Root of every error raised by hblab."""


class ContractError(HblabError, ValueError):
    """A precondition of a public operation was violated (shapes, ranges)."""


class ConfigError(HblabError, ValueError):
    """A run configuration is inconsistent or names something that is missing."""


class SelectionBudgetError(ConfigError):
    def __init__(self, count: int, budget: int, realization: int | None = None):
        where = f"realization {realization}: " if realization is not None else ""
        super().__init__(f"{where}subset enumeration needs {count} subsets, budget is {budget}")
        self.count = count
        self.budget = budget
        self.realization = realization


class SubsetOverflowError(ContractError):
    """Binomial coefficient does not fit in a signed 64-bit integer."""


class NumericFailureError(HblabError, ArithmeticError):
    def __init__(self, message: str, iterations: int | None = None):
        suffix = f" (after {iterations} iterations)" if iterations is not None else ""
        super().__init__(message + suffix)
        self.iterations = iterations


class TrainingDivergedError(NumericFailureError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


class FormatError(HblabError, OSError):
    """An HBDS/HBNN file has a bad header, an unknown version or is truncated."""
