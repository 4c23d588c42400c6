"""Exception hierarchy shared by every capm module."""


class CapmError(Exception):
    """Base class for all library errors."""


class GeometryError(CapmError):
    pass


class DegenerateView(GeometryError):
    """Camera boresight too close to horizontal, camera at or below ground, or singular homography."""


class AtInfinity(GeometryError):
    pass


class BehindCamera(GeometryError):
    pass


class HorizonInView(GeometryError):
    pass


class NonIntervalFeasibility(CapmError):
    """A radial feasibility scan found more than one feasible interval."""

    def __init__(self, intervals):
        self.intervals = list(intervals)
        spans = ", ".join(f"[{lo:.4f}, {hi:.4f}]" for lo, hi in self.intervals)
        super().__init__(f"feasible radii are not a single interval: {spans}")


class Unclassifiable(CapmError):
    pass


class TruncationStarved(CapmError):
    pass


class InfeasibleRegion(CapmError):
    pass


class ObservationFailed(CapmError):
    pass


class ConfigError(CapmError):
    pass


class ParseError(ConfigError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class UnknownKey(ConfigError):
    def __init__(self, key: str, lineno: int | None = None):
        self.key = key
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}unknown config key {key!r}")


class RangeError(ConfigError):
    pass
