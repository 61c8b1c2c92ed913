"""Error taxonomy shared across the package.

Validation errors cover malformed inputs (bad files, shape mismatches,
violated preconditions); numerical errors cover failures of otherwise
well-posed computations (singular systems, step-count exhaustion,
non-finite states). The CLI maps them to exit codes 1 and 2.
"""


class ValidationError(ValueError):
    """Input or configuration violates a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical procedure failed or left its supported regime."""
