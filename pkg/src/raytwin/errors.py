"""Exception hierarchy shared by all raytwin modules."""


class RaytwinError(Exception):
    """Base class for all raytwin errors."""


# --- scenario / scene loading ---

class ParseError(RaytwinError):
    """Malformed scenario or trace file."""


class GeometryError(RaytwinError):
    """Degenerate or non-planar surface geometry, reported with surface index."""


class UnknownVehicle(RaytwinError):
    """Vehicle id was never registered with a mesh template."""


# --- mobility ---

class NonMonotonicTime(RaytwinError):
    """Trace rows for one vehicle are not sorted by timestamp."""


# --- ray channel ---

class DegenerateGeometry(RaytwinError):
    """An antenna lies inside a mesh, or tx and rx coincide."""


class InvalidConfig(RaytwinError):
    """A configuration value is out of its valid range."""


class InactiveVehicle(RaytwinError):
    """Operation requested for a vehicle outside its active window."""


# --- stochastic baseline ---

class NonPositiveDistance(RaytwinError):
    """Link distance must be > 0."""


# --- coexistence ---

class InvalidSpec(RaytwinError):
    """A RAT spectral descriptor violates its invariants."""


class NoDesiredOverlap(RaytwinError):
    """The desired transmission occupies no block of the resource grid."""


class HalfDuplexError(RaytwinError):
    """A radio attempted to transmit while already transmitting."""


# --- metrics ---

class EmptySeries(RaytwinError):
    """Histogram requested over an empty value series."""


# --- wire protocol ---

class FrameError(RaytwinError):
    """Bad magic, unknown version/type, or inconsistent frame length."""


class TruncatedFrame(FrameError):
    """Frame ends before the declared payload length."""


class PayloadTooLarge(RaytwinError):
    """Encoded frame would exceed the datagram-safe limit."""
