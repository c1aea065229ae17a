"""Exception hierarchy.

Errors are grouped by CLI exit code: configuration / validation problems
(exit 2), numerical non-convergence (exit 3), and size-cap violations
(exit 4). Everything derives from CodeMismatchError so library users can
catch broadly.
"""


class CodeMismatchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CodeMismatchError):
    """Bad user input: malformed spec files, inconsistent options."""

    exit_code = 2


class ChannelSpecError(ConfigError):
    """Channel spec file failed validation; message names the field."""


class DegenerateMetricError(ConfigError):
    """Some output column of a metric has no positive score."""


class MetricSupportError(ConfigError):
    """Metric assigns zero score everywhere the channel puts mass, so the
    mismatch objective is -inf at every (rho, theta)."""


class CompositionError(ConfigError):
    """n * P_X(x) is not an integer vector, so no exact type class exists."""


class DimensionTooLargeError(CodeMismatchError):
    """Brute-force oracle asked to enumerate an infeasible grid."""

    exit_code = 4


class SizeCapError(CodeMismatchError):
    """Simulation parameters exceed the exhaustive-decoding caps."""

    exit_code = 4


class NonConvergentError(CodeMismatchError):
    """Iterative solver exhausted its budget; carries the final residual."""

    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NonPositiveIterateError(NonConvergentError):
    """Fixed-point iterate left the positive orthant."""


class SaturationError(CodeMismatchError):
    """Optimized metric failed to reach the constant-composition exponent
    within tolerance; signals a solver or concavity-assumption breakdown."""

    exit_code = 3

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class AllZeroScoreError(CodeMismatchError):
    """Every codeword hit a zero-metric position; the decoder is undefined
    for this received sequence."""

    exit_code = 3
