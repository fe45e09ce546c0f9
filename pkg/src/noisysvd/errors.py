"""Exception types shared across the package."""


class NoisySVDError(Exception):
    """Base class for all package errors."""


class DimensionError(NoisySVDError, ValueError):
    pass


class RankMismatch(NoisySVDError, ValueError):
    """The input matrix does not have the requested numerical rank."""


class SingularSigma(NoisySVDError, ValueError):
    """A singular value block is too close to singular to invert."""


class GapCollapse(NoisySVDError, ValueError):
    """The spectral gap used by a perturbation bound is not positive."""


class InvariantViolation(NoisySVDError, ValueError):
    pass


class InsufficientSamples(NoisySVDError, ValueError):
    pass


class DegenerateInput(NoisySVDError, ValueError):
    pass


class ConfigError(NoisySVDError, ValueError):
    """Malformed or out-of-range run configuration."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field `{field}`")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
