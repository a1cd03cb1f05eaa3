"""Exception hierarchy shared across the toolkit.

ValueError is used directly for dimension/argument mistakes; the classes
below mark failures that map to distinct CLI exit codes.
"""


class ConfigError(ValueError):
    """Invalid configuration file or preset (exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical computation failed (singular system, divergence; exit code 3)."""


class SynthesisError(NumericalError):
    """No certified stabilizing gain could be found."""


class SolverError(NumericalError):
    """An iterative solver failed to converge."""
