"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: config errors exit 2, identifiability
errors exit 3, I/O failures (plain OSError) exit 4.
"""


class ConfigError(ValueError):
    """Invalid configuration file, CLI argument, or grid axis."""


class IdentifiabilityError(ValueError):
    """A point set cannot determine the scaling-law parameters."""


class NumericError(ArithmeticError):
    """A numeric procedure failed (singular system, no converged start)."""


class TrainingDiverged(RuntimeError):
    """Pretraining hit a non-finite loss; message names epoch and batch."""


class LedgerMismatch(ConfigError):
    """An existing ledger belongs to a different corpus or configuration."""
