"""Exception types shared across the package."""


class MshcapError(Exception):
    """Base class for all package errors."""


class SeparationError(MshcapError):
    """Compact set comes closer than the required node margin to the boundary layer."""


class EmptyCompactError(MshcapError):
    """No grid node falls inside the compact set."""


class StencilError(MshcapError):
    """A finite-difference stencil would read an exterior node."""


class InfeasibleError(MshcapError):
    """The weight/threshold pair violates delta > sup psi on the compact set."""


class ConvergenceError(MshcapError):
    """Sweeping scheme hit the sweep budget before reaching the update threshold."""

    def __init__(self, message, final_update=None, sweeps=None):
        super().__init__(message)
        self.final_update = final_update
        self.sweeps = sweeps


class EmptyFamilyError(MshcapError):
    """No candidate in a direct-oracle family passed the admissibility checks."""


class NonmonotoneSequenceError(MshcapError):
    """Outer-capacity shrink sequence increased beyond tolerance."""


class ConfigError(MshcapError):
    """Problem in a configuration file or weight expression.

    kind is one of "parse", "constraint", "eval"; line/col are set when the
    source location is known.
    """

    def __init__(self, message, kind="parse", line=None, col=None):
        super().__init__(message)
        self.kind = kind
        self.line = line
        self.col = col


class EvalGuardError(ConfigError):
    """Guarded operation (log, division, fractional power) hit an invalid operand."""

    def __init__(self, message, line=None, col=None):
        super().__init__(message, kind="eval", line=line, col=col)
