class S2InverseError(Exception):
    """Base class for every error raised by s2inverse."""


class ConfigError(S2InverseError, ValueError):
    pass


class InvalidParameterError(S2InverseError, ValueError):
    pass


class InvalidBandlimitError(InvalidParameterError):
    def __init__(self, L):
        super().__init__(f"Bandlimit must be a positive integer (got L={L!r}).")
        self.L = L


class SpinExceedsBandlimitError(InvalidParameterError):
    def __init__(self, spin, L):
        super().__init__(f"Spin {spin} requires L > |s| (got L={L}).")
        self.spin = spin
        self.L = L


class InvalidDilationError(InvalidParameterError):
    pass


class NonconvexOrderError(InvalidParameterError):
    def __init__(self, p):
        super().__init__(f"Norm order p must be >= 1 (got p={p}).")
        self.p = p


class InvalidRadiusError(InvalidParameterError):
    pass


class InvalidAlphaError(InvalidParameterError):
    def __init__(self, alpha):
        super().__init__(f"Credible level alpha must lie in (0, 1) (got {alpha}).")
        self.alpha = alpha


class InvalidRegionError(InvalidParameterError):
    pass


class UnsupportedSpinError(InvalidParameterError):
    def __init__(self, spin, operation):
        super().__init__(f"{operation} supports spin-0 maps only (got spin {spin}).")
        self.spin = spin
        self.operation = operation


class UnsupportedRegularizerError(InvalidParameterError):
    pass


class OverlapError(InvalidParameterError):
    def __init__(self, first, second, distance):
        super().__init__(
            f"Caps {first} and {second} overlap (centre separation {distance:.6g} rad)."
        )
        self.first = first
        self.second = second
        self.distance = distance


class DimensionError(S2InverseError, ValueError):
    pass


class CompositionError(DimensionError):
    def __init__(self, position, produced, expected):
        super().__init__(
            f"Operator {position} expects {expected} but the previous stage produces {produced}."
        )
        self.position = position
        self.produced = produced
        self.expected = expected


class FormatError(S2InverseError):
    def __init__(self, path, reason):
        super().__init__(f"Invalid map file '{path}': {reason}")
        self.path = path
        self.reason = reason


class NumericalError(S2InverseError):
    pass


class StabilityError(NumericalError):
    pass


class UnboundedIntervalError(NumericalError):
    def __init__(self, direction, bound):
        super().__init__(
            f"Credible interval is unbounded in the {direction} direction "
            f"(objective stays below threshold up to {bound:.6g})."
        )
        self.direction = direction
        self.bound = bound


class EmptyIntervalError(NumericalError):
    pass


class ConvergenceWarning(UserWarning):
    pass
