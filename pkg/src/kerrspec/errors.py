"""Exception types shared across the package.

Validation problems raise ValueError (or a subclass); numerical failures
raise RuntimeError subclasses; the multi-mode scale guard has its own class
so the CLI can map it to a distinct exit code.
"""


class ScaleGuardError(Exception):
    """Multi-mode oracle problem size exceeds the hard limit d**N <= 4096."""


class DegenerateSteadyStateError(RuntimeError):
    """The generator has more than one stationary direction; refusing to pick one."""


class TruncationConvergenceError(RuntimeError):
    """Fock truncation did not converge within the dimension schedule."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TruncationTailError(RuntimeError):
    """A mode's top Fock level carries non-negligible population."""


class GridTooShortError(RuntimeError):
    """Correlation grid ends before the correlation has settled to its coherent level."""


class ResolventError(RuntimeError):
    """A shifted-generator solve failed or was unreliable at some frequency."""


class ModelInconsistencyError(RuntimeError):
    """Slab absorption left the physical range [0, 1]."""


class CoverageError(ValueError):
    """Data grid extends beyond the model grid."""


class GridMismatchError(ValueError):
    """Two spectra that must share a grid do not."""
