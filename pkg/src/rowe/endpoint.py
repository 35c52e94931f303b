"""Endpoints: a socket-like, direct-style API over one WebSocket peer link.

An endpoint is one side of a single-peer connection.  ``open_local_endpoint``
listens for the peer (server role); ``open_remote_endpoint`` connects out and
keeps reconnecting with exponential backoff (client role).  Either way the
messaging API is identical.

All socket I/O happens on one internal service thread per endpoint.  Caller
threads interact with it only through the message queues, the correlation
table, and notification handles, under a single short-lived lock; blocking
calls park on condition variables or handles, never on the network, and never
busy-wait.  Messages wait in the outgoing queue until the link can take them
or their TTL expires, whichever comes first; TTL counts from the enqueue
instant, and the remaining life travels on the wire so the receiver expires
unconsumed messages too.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

from . import wire
from ._log import get_logger
from ._service import _Service
from .correlation import CorrelationTable, fresh_message_id, make_endpoint_nonce
from .errors import EndpointClosedError, ProtocolError, QueueFullError, UsageError
from .notify import NotificationHandle, WaitStatus
from .ttl_queue import DualOrderQueue
from .wire import INFINITE, Message

import socket
import threading


class SendStatus(enum.Enum):
    """Outcome of a send-side operation."""

    SENT = "sent"              # frame handed to the transport's write path
    DISCARDED = "discarded"    # TTL expired before the message could be sent
    QUEUED = "queued"          # accepted by a non-blocking operation
    QUEUE_FULL = "queue-full"  # outgoing queue at capacity; message not enqueued
    CLOSED = "closed"          # endpoint closed


class EndpointState(enum.Enum):
    STARTING = "starting"
    AWAITING_PEER = "awaiting-peer"
    CONNECTED = "connected"
    CLOSED = "closed"


class Role(enum.Enum):
    SERVER = "local-server"
    CLIENT = "remote-client"


@dataclass(frozen=True)
class Counters:
    """Monotone observability counters; see :meth:`Endpoint.counters`."""

    sent: int
    received: int
    discarded_ttl: int
    dropped_malformed: int
    late_replies: int


@dataclass
class EndpointConfig:
    outgoing_capacity: int | None = 1024
    incoming_capacity: int | None = None
    reconnect_initial_ms: int = 100
    reconnect_max_ms: int = 5000
    connect_timeout_ms: int = 5000


_TERMINAL_TO_SEND_STATUS = {
    WaitStatus.SENT: SendStatus.SENT,
    WaitStatus.DISCARDED: SendStatus.DISCARDED,
    WaitStatus.CLOSED: SendStatus.CLOSED,
}


def _normalize_ttl(ttl_ms) -> float:
    """Map the API's TTL/timeout convention to milliseconds or ``inf``.

    Any negative value means infinite.
    """
    if isinstance(ttl_ms, bool) or not isinstance(ttl_ms, (int, float)):
        raise UsageError(f"ttl/timeout must be a number of milliseconds: {ttl_ms!r}")
    if ttl_ms != ttl_ms:  # NaN
        raise UsageError("ttl/timeout must not be NaN")
    return INFINITE if ttl_ms < 0 else float(ttl_ms)


class Endpoint:
    """One side of a rowe connection.  Use the ``open_*`` functions to create one.

    Safe for concurrent use from multiple threads.  Also works as a context
    manager; leaving the block closes the endpoint.
    """

    def __init__(self, role: Role, *, listen_sock: socket.socket | None = None,
                 address: tuple[str, int] | None = None,
                 config: EndpointConfig | None = None) -> None:
        self.role = role
        self._address = address
        self._config = config or EndpointConfig()
        self._lock = threading.Lock()
        self._incoming_cv = threading.Condition(self._lock)
        self._space_cv = threading.Condition(self._lock)
        self._incoming = DualOrderQueue(self._config.incoming_capacity)
        self._outgoing = DualOrderQueue(self._config.outgoing_capacity)
        self._table = CorrelationTable()
        self._nonce = make_endpoint_nonce()
        self._id_counter = 0
        self._sent = 0
        self._received = 0
        self._dropped_malformed = 0
        self._discarded_inline = 0
        self._state = EndpointState.STARTING
        self._close_requested = False
        self._last_purge_at = time.monotonic()
        self._listen_sock = listen_sock
        self.port = listen_sock.getsockname()[1] if listen_sock is not None else (
            address[1] if address else None)
        self._state = EndpointState.AWAITING_PEER
        self._service = _Service(self, listen_sock=listen_sock, address=address)
        self._service.start()

    # -- lifecycle ---------------------------------------------------------

    @property
    def state(self) -> EndpointState:
        with self._lock:
            return self._state

    def close(self) -> None:
        """Close the connection, stop the service thread, wake every waiter.

        Idempotent.  After close, send operations return ``CLOSED`` and
        receive/invoke raise :class:`EndpointClosedError`.
        """
        with self._lock:
            self._close_requested = True
        self._service.wake()
        self._service.join(timeout=5.0)
        if self._service.is_alive():
            get_logger().error("service thread did not stop within 5s")

    def __enter__(self) -> "Endpoint":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- sending -----------------------------------------------------------

    def send(self, m: Message, ttl_ms: int | float = -1) -> SendStatus:
        """Send ``m``; block until it was sent or discarded.

        ``ttl_ms`` bounds how long the message may wait for a connected peer
        (negative = forever).  Returns ``SENT`` once the frame is handed to
        the transport's write path, ``DISCARDED`` when the TTL expired first,
        or ``CLOSED``.
        """
        wire.validate_message(m)
        ttl = _normalize_ttl(ttl_ms)
        return self._send_blocking(dict(m), ttl)

    def async_send(self, m: Message, ttl_ms: int | float = -1) -> SendStatus:
        """Enqueue ``m`` and return immediately; never blocks on the network.

        Returns ``QUEUED``, or ``QUEUE_FULL`` when the outgoing queue is at
        capacity (the message is not enqueued), or ``CLOSED``.
        """
        wire.validate_message(m)
        ttl = _normalize_ttl(ttl_ms)
        return self._send_nonblocking(dict(m), ttl)

    def reply(self, request: Message, body: Message, ttl_ms: int | float = -1) -> SendStatus:
        """Answer an invocation: send ``body`` with ``in_reply_to`` set from
        ``request``'s ``message_id``.  Blocking semantics of :meth:`send`."""
        return self._send_blocking(self._reply_message(request, body), _normalize_ttl(ttl_ms))

    def async_reply(self, request: Message, body: Message, ttl_ms: int | float = -1) -> SendStatus:
        """Non-blocking counterpart of :meth:`reply`."""
        return self._send_nonblocking(self._reply_message(request, body), _normalize_ttl(ttl_ms))

    def _reply_message(self, request: Message, body: Message) -> Message:
        if not isinstance(request, dict):
            raise UsageError(f"request must be a message, got {type(request).__name__}")
        request_id = request.get(wire.MESSAGE_ID)
        if not isinstance(request_id, str):
            raise UsageError("request carries no string message_id; nothing to reply to")
        wire.validate_message(body)
        if wire.IN_REPLY_TO in body:
            raise UsageError(f"reply body must not set {wire.IN_REPLY_TO!r}")
        out = dict(body)
        out[wire.IN_REPLY_TO] = request_id
        return out

    def _send_blocking(self, m: Message, ttl: float) -> SendStatus:
        handle = NotificationHandle()
        with self._lock:
            while True:
                if self._close_requested or self._state is EndpointState.CLOSED:
                    return SendStatus.CLOSED
                try:
                    self._outgoing.enqueue(m, ttl, time.monotonic(), waiter=handle)
                    break
                except QueueFullError:
                    self._space_cv.wait()
        self._service.wake()
        status = handle.wait()
        return _TERMINAL_TO_SEND_STATUS[status]

    def _send_nonblocking(self, m: Message, ttl: float) -> SendStatus:
        with self._lock:
            if self._close_requested or self._state is EndpointState.CLOSED:
                return SendStatus.CLOSED
            try:
                self._outgoing.enqueue(m, ttl, time.monotonic())
            except QueueFullError:
                return SendStatus.QUEUE_FULL
        self._service.wake()
        return SendStatus.QUEUED

    # -- receiving ---------------------------------------------------------

    def receive(self, timeout_ms: int | float = -1) -> Message | None:
        """Return the oldest unexpired ordinary message, or None at timeout.

        Reply messages never show up here; they are routed to their invoker.
        Delivered messages have ``rowe_ttl`` stripped; ``message_id`` and
        ``in_reply_to`` are preserved.  Raises :class:`EndpointClosedError`
        after close (distinct from a timeout's None).
        """
        timeout = _normalize_ttl(timeout_ms)
        deadline = None if timeout == INFINITE else time.monotonic() + timeout / 1000.0
        with self._lock:
            while True:
                if self._close_requested or self._state is EndpointState.CLOSED:
                    raise EndpointClosedError("endpoint is closed")
                msg = self._incoming.dequeue_front(time.monotonic())
                if msg is not None:
                    return msg
                if deadline is None:
                    self._incoming_cv.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        return None
                    self._incoming_cv.wait(remaining)

    # -- request/reply -----------------------------------------------------

    def invoke(self, m: Message, timeout_ms: int | float = -1) -> Message | None:
        """Perform an RPC: send ``m`` with a fresh ``message_id`` and block
        until the matching reply arrives or ``timeout_ms`` expires.

        The outgoing invocation's TTL equals the timeout: a request that
        cannot be sent before the caller gives up is discarded, not sent
        late.  Returns the reply, or None on timeout.  Raises
        :class:`EndpointClosedError` after close.
        """
        wire.validate_message(m)
        timeout = _normalize_ttl(timeout_ms)
        with self._lock:
            if self._close_requested or self._state is EndpointState.CLOSED:
                raise EndpointClosedError("endpoint is closed")
            message_id = fresh_message_id(self._nonce, self._id_counter)
            self._id_counter += 1
            out = dict(m)
            out[wire.MESSAGE_ID] = message_id
            handle = self._table.register(message_id)
            while True:
                try:
                    self._outgoing.enqueue(out, timeout, time.monotonic())
                    break
                except QueueFullError:
                    self._space_cv.wait()
                    if self._close_requested or self._state is EndpointState.CLOSED:
                        self._table.cancel(message_id)
                        raise EndpointClosedError("endpoint is closed")
        self._service.wake()

        status = handle.wait(None if timeout == INFINITE else timeout / 1000.0)
        if status is WaitStatus.PENDING:
            with self._lock:
                self._table.cancel(message_id)
            status = handle.status
        if status is WaitStatus.COMPLETED:
            return handle.result
        if status is WaitStatus.CLOSED:
            raise EndpointClosedError("endpoint closed while invocation was pending")
        return None

    # -- observability -----------------------------------------------------

    def counters(self) -> Counters:
        """Snapshot of the endpoint's monotone counters."""
        with self._lock:
            return Counters(
                sent=self._sent,
                received=self._received,
                discarded_ttl=(self._incoming.purged_count + self._outgoing.purged_count
                               + self._discarded_inline),
                dropped_malformed=self._dropped_malformed,
                late_replies=self._table.late_reply_count,
            )

    def _debug_purge_snapshot(self) -> tuple[float, float, float]:
        """(last purge instant, next incoming expiry, next outgoing expiry)."""
        with self._lock:
            return (self._last_purge_at,
                    self._incoming.next_expiry(),
                    self._outgoing.next_expiry())

    # -- service-thread hooks ----------------------------------------------
    # Called only from this endpoint's service thread.  They are the sole
    # bridge between the I/O loop and caller-visible state; each takes the
    # endpoint lock briefly and never blocks.

    def _service_close_requested(self) -> bool:
        with self._lock:
            return self._close_requested

    def _service_next_expiry(self) -> float:
        with self._lock:
            return min(self._incoming.next_expiry(), self._outgoing.next_expiry())

    def _service_purge(self, now: float) -> None:
        with self._lock:
            self._incoming.purge_expired(now)
            purged = self._outgoing.purge_expired(now)
            self._last_purge_at = now
            if purged:
                self._space_cv.notify_all()

    def _service_pop_outgoing(self, now: float, limit: int = 64):
        """Pop up to ``limit`` sendable message nodes, purging expired ones first."""
        with self._lock:
            before = self._outgoing.purged_count
            nodes = []
            while len(nodes) < limit:
                node = self._outgoing.pop_front_node(now)
                if node is None:
                    break
                nodes.append(node)
            if nodes or self._outgoing.purged_count != before:
                self._space_cv.notify_all()
            return nodes

    def _service_note_sent(self, nodes) -> None:
        with self._lock:
            self._sent += len(nodes)
        for node in nodes:
            if node.waiter is not None:
                node.waiter.signal(WaitStatus.SENT)

    def _service_send_failed(self, node) -> None:
        if node.waiter is not None:
            node.waiter.signal(WaitStatus.DISCARDED)

    def _service_deliver(self, payload: bytes, now: float) -> None:
        """Route one inbound text frame: decode, expire, correlate, or queue."""
        try:
            decoded = wire.decode_frame(payload, now)
        except ProtocolError as exc:
            self._service_count_malformed(str(exc))
            return
        with self._lock:
            self._received += 1
            if decoded.local_expiry <= now:
                self._discarded_inline += 1
                return
            if self._table.try_complete(decoded.message):
                return
            ttl = (INFINITE if decoded.local_expiry == INFINITE
                   else (decoded.local_expiry - now) * 1000.0)
            try:
                self._incoming.enqueue(decoded.message, ttl, now)
            except QueueFullError:
                get_logger().warning("incoming queue full; dropping a message")
                return
            self._incoming_cv.notify()

    def _service_count_malformed(self, reason: str) -> None:
        with self._lock:
            self._dropped_malformed += 1
        get_logger().info("dropping malformed inbound frame: %s", reason)

    def _service_mark_connected(self) -> None:
        with self._lock:
            if self._state is not EndpointState.CLOSED:
                self._state = EndpointState.CONNECTED

    def _service_mark_awaiting(self) -> None:
        with self._lock:
            if self._state is not EndpointState.CLOSED:
                self._state = EndpointState.AWAITING_PEER

    def _service_finish_close(self) -> None:
        """Last act of the service thread: fail everything still waiting."""
        with self._lock:
            self._state = EndpointState.CLOSED
            for node in self._outgoing.drain():
                if node.waiter is not None:
                    node.waiter.signal(WaitStatus.CLOSED)
            self._incoming.drain()
            self._table.fail_all()
            self._incoming_cv.notify_all()
            self._space_cv.notify_all()


def _check_port(port) -> None:
    if isinstance(port, bool) or not isinstance(port, int) or not 1 <= port <= 65535:
        raise UsageError(f"port must be an integer in [1, 65535]: {port!r}")


def open_local_endpoint(port: int, config: EndpointConfig | None = None) -> Endpoint:
    """Open a server-role endpoint listening on ``port``.

    The endpoint accepts exactly one peer; while a peer is connected, further
    WebSocket upgrade attempts are refused with HTTP 503.  Raises
    :class:`EndpointOpenError` when the port cannot be bound.
    """
    from .errors import EndpointOpenError

    _check_port(port)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind(("", port))
        sock.listen(16)
    except OSError as exc:
        sock.close()
        raise EndpointOpenError(f"cannot listen on port {port}: {exc}") from exc
    sock.setblocking(False)
    return Endpoint(Role.SERVER, listen_sock=sock, config=config)


def open_remote_endpoint(host: str, port: int, config: EndpointConfig | None = None) -> Endpoint:
    """Open a client-role endpoint toward ``host:port`` and return immediately.

    The connection is established in the background and re-established after
    a disconnect, with exponential backoff.  Messages may be sent right away;
    they wait in the outgoing queue until the link is up or their TTL runs
    out.  Connection trouble surfaces only through TTL discards, invocation
    timeouts, and counters.
    """
    if not isinstance(host, str) or not host:
        raise UsageError(f"host must be a non-empty string: {host!r}")
    _check_port(port)
    return Endpoint(Role.CLIENT, address=(host, port), config=config)
