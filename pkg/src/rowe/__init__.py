"""rowe: socket-like JSON messaging between two peers over WebSockets.

Open an endpoint on each side — ``open_local_endpoint(port)`` listens,
``open_remote_endpoint(host, port)`` dials and reconnects — then exchange
JSON objects with ``send``/``receive``, fire RPCs with ``invoke``/``reply``,
and bound each message's life with a per-message TTL.

    import rowe

    with rowe.open_remote_endpoint("127.0.0.1", 8631) as ep:
        reply = ep.invoke({"service": "add-two-numbers", "a": 38, "b": 4},
                          timeout_ms=1000)
"""

from .endpoint import (
    Counters,
    Endpoint,
    EndpointConfig,
    EndpointState,
    SendStatus,
    open_local_endpoint,
    open_remote_endpoint,
)
from .errors import (
    EndpointClosedError,
    EndpointOpenError,
    ProtocolError,
    QueueFullError,
    RoweError,
    UsageError,
)
from .wire import (
    IN_REPLY_TO,
    MESSAGE_ID,
    SUBPROTOCOL,
    TTL_KEY,
    UPGRADE_PATH,
    Message,
    build_message,
)

__version__ = "0.1.0"

__all__ = [
    "Counters",
    "Endpoint",
    "EndpointConfig",
    "EndpointState",
    "SendStatus",
    "open_local_endpoint",
    "open_remote_endpoint",
    "EndpointClosedError",
    "EndpointOpenError",
    "ProtocolError",
    "QueueFullError",
    "RoweError",
    "UsageError",
    "IN_REPLY_TO",
    "MESSAGE_ID",
    "SUBPROTOCOL",
    "TTL_KEY",
    "UPGRADE_PATH",
    "Message",
    "build_message",
    "__version__",
]
