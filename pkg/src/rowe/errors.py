"""Exception hierarchy for the rowe library."""


class RoweError(Exception):
    """Base class for all rowe errors."""


class UsageError(RoweError):
    """The caller violated an API precondition (bad argument, misuse)."""


class ProtocolError(RoweError):
    """An inbound frame violated the wire format (bad JSON, bad envelope)."""


class QueueFullError(RoweError):
    """A bounded queue is at capacity."""


class EndpointOpenError(RoweError):
    """Opening an endpoint failed (typically a bind/listen failure)."""


class EndpointClosedError(RoweError):
    """The operation was attempted on, or interrupted by, a closed endpoint."""
