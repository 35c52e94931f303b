"""Internal service thread: owns all socket I/O for one endpoint.

One thread per endpoint runs a ``selectors`` loop over the listening socket
(server role) or the outbound connection (client role), the one active peer
connection, and a wakeup pipe written by caller threads.  The loop sleeps
until the next socket event or the earliest TTL deadline of either queue,
whichever comes first; on every wake it purges expired messages and drains
the outgoing queue onto the wire.

RFC 6455 itself (handshake, framing, masking, ping/pong, close) is handled
by the ``websockets`` sans-io protocol objects; this module moves their bytes
and drives connection lifecycle: single-peer accept with HTTP 503 refusal of
extra upgrade attempts, 404 for unknown paths, client reconnect with
exponential backoff, and tolerant subprotocol negotiation.
"""

from __future__ import annotations

import errno
import math
import selectors
import socket
import threading
import time

from websockets.client import ClientProtocol
from websockets.frames import CloseCode, Frame, Opcode
from websockets.http11 import Request, Response
from websockets.protocol import State
from websockets.server import ServerProtocol
from websockets.uri import parse_uri

from ._log import get_logger
from .wire import INFINITE, SUBPROTOCOL, UPGRADE_PATH, encode_message

_HIGH_WATER = 64 * 1024      # stop framing new messages while this much is unflushed
_RECV_SIZE = 65536
_HANDSHAKE_TIMEOUT = 5.0
_REFUSAL_LINGER = 3.0        # grace for delivering a refusal response
_CLOSE_LINGER = 1.0          # grace for the closing handshake to finish


class _Conn:
    """One peer connection: socket, protocol state machine, outbound buffer."""

    __slots__ = ("sock", "proto", "outbuf", "server", "handshake_done",
                 "handshake_deadline", "close_deadline", "drop_after_flush",
                 "eof_wanted", "eof_sent", "frag", "frag_is_text")

    def __init__(self, sock, proto, server: bool, now: float) -> None:
        self.sock = sock
        self.proto = proto
        self.server = server
        self.outbuf = bytearray()
        self.handshake_done = False
        self.handshake_deadline = now + _HANDSHAKE_TIMEOUT
        self.close_deadline: float | None = None
        self.drop_after_flush = False
        self.eof_wanted = False
        self.eof_sent = False
        self.frag: list[bytes] | None = None
        self.frag_is_text = False


class _Refusal:
    """A transient connection being turned away with HTTP 503."""

    __slots__ = ("sock", "proto", "outbuf", "deadline", "responded")

    def __init__(self, sock, now: float) -> None:
        self.sock = sock
        self.proto = ServerProtocol()
        self.outbuf = bytearray()
        self.deadline = now + _REFUSAL_LINGER
        self.responded = False


class _Service(threading.Thread):
    def __init__(self, endpoint, *, listen_sock=None, address=None) -> None:
        name = f"rowe-service-{endpoint.port or id(endpoint):x}"
        super().__init__(name=name, daemon=True)
        self._ep = endpoint
        self._listen = listen_sock
        self._address = address
        self._log = get_logger()
        self._sel = selectors.DefaultSelector()
        self._wake_r, self._wake_w = socket.socketpair()
        self._wake_r.setblocking(False)
        self._wake_w.setblocking(False)
        self._conn: _Conn | None = None
        self._connecting: socket.socket | None = None
        self._connect_deadline = 0.0
        self._refusals: list[_Refusal] = []
        self._backoff_ms = endpoint._config.reconnect_initial_ms
        self._reconnect_at = 0.0  # first client attempt happens immediately
        self._wake_armed = False

    def wake(self) -> None:
        """Nudge the loop out of select(); callable from any thread.

        The armed flag keeps floods of enqueues down to one pipe byte: once a
        wakeup is pending, further wakes are free.  Setting the flag before
        sending guarantees the loop never sleeps through an armed wake.
        """
        if self._wake_armed:
            return
        self._wake_armed = True
        try:
            self._wake_w.send(b"\x01")
        except OSError:
            pass

    # -- main loop ---------------------------------------------------------

    def run(self) -> None:
        try:
            self._sel.register(self._wake_r, selectors.EVENT_READ, ("wake", None))
            if self._listen is not None:
                self._sel.register(self._listen, selectors.EVENT_READ, ("listen", None))
            self._loop()
        except Exception:
            self._log.exception("service loop failed; closing endpoint")
        finally:
            self._teardown()

    def _loop(self) -> None:
        while True:
            if self._ep._service_close_requested():
                return
            events = self._sel.select(self._select_timeout())
            now = time.monotonic()
            for key, mask in events:
                tag, obj = key.data
                if tag == "wake":
                    self._drain_wake()
                elif tag == "listen":
                    self._accept_pending(now)
                elif tag == "conn":
                    if self._conn is obj:
                        self._conn_event(obj, mask, now)
                elif tag == "connect":
                    self._finish_connect(now)
                elif tag == "refusal":
                    if obj in self._refusals:
                        self._refusal_event(obj, mask, now)
            now = time.monotonic()
            self._check_deadlines(now)
            self._ep._service_purge(now)
            self._transmit()

    def _select_timeout(self) -> float | None:
        t = self._ep._service_next_expiry()
        if self._address is not None and self._conn is None and self._connecting is None:
            t = min(t, self._reconnect_at)
        if self._connecting is not None:
            t = min(t, self._connect_deadline)
        conn = self._conn
        if conn is not None:
            if not conn.handshake_done:
                t = min(t, conn.handshake_deadline)
            if conn.close_deadline is not None:
                t = min(t, conn.close_deadline)
        for refusal in self._refusals:
            t = min(t, refusal.deadline)
        if t == INFINITE:
            return None
        return max(0.0, t - time.monotonic())

    def _drain_wake(self) -> None:
        # Disarm first: any wake() that follows lands a fresh byte, and any
        # enqueue already made is picked up later this same iteration.
        self._wake_armed = False
        while True:
            try:
                if not self._wake_r.recv(4096):
                    return
            except OSError:
                return

    def _check_deadlines(self, now: float) -> None:
        if (self._address is not None and self._conn is None
                and self._connecting is None and now >= self._reconnect_at
                and not self._ep._service_close_requested()):
            self._start_connect(now)
        if self._connecting is not None and now >= self._connect_deadline:
            self._log.info("connect attempt timed out")
            self._abort_connect(now)
        conn = self._conn
        if conn is not None:
            if not conn.handshake_done and now >= conn.handshake_deadline:
                self._log.info("peer did not complete the handshake in time")
                self._drop_conn(now)
            elif conn.close_deadline is not None and now >= conn.close_deadline:
                self._drop_conn(now)
        for refusal in [r for r in self._refusals if now >= r.deadline]:
            self._end_refusal(refusal)

    # -- server side -------------------------------------------------------

    def _accept_pending(self, now: float) -> None:
        while True:
            try:
                sock, addr = self._listen.accept()
            except (BlockingIOError, InterruptedError):
                return
            except OSError:
                return
            sock.setblocking(False)
            _set_nodelay(sock)
            if self._conn is not None:
                # One peer at a time: turn the newcomer away at the upgrade.
                refusal = _Refusal(sock, now)
                self._refusals.append(refusal)
                self._sel.register(sock, selectors.EVENT_READ, ("refusal", refusal))
                self._log.info("refusing extra peer from %s:%s", *addr[:2])
            else:
                proto = ServerProtocol(select_subprotocol=_select_subprotocol)
                self._conn = _Conn(sock, proto, server=True, now=now)
                self._sel.register(sock, selectors.EVENT_READ, ("conn", self._conn))
                self._log.debug("peer connecting from %s:%s", *addr[:2])

    def _refusal_event(self, refusal: _Refusal, mask: int, now: float) -> None:
        if mask & selectors.EVENT_READ:
            try:
                data = refusal.sock.recv(_RECV_SIZE)
            except (BlockingIOError, InterruptedError):
                data = None
            except OSError:
                self._end_refusal(refusal)
                return
            if data == b"":
                self._end_refusal(refusal)
                return
            if data and not refusal.responded:
                try:
                    refusal.proto.receive_data(data)
                except Exception:
                    self._end_refusal(refusal)
                    return
                for event in refusal.proto.events_received():
                    if isinstance(event, Request):
                        response = refusal.proto.reject(503, "endpoint already has a peer\n")
                        refusal.proto.send_response(response)
                        refusal.responded = True
                for chunk in refusal.proto.data_to_send():
                    if chunk:
                        refusal.outbuf += chunk
        if refusal.outbuf:
            try:
                sent = refusal.sock.send(refusal.outbuf)
                del refusal.outbuf[:sent]
            except (BlockingIOError, InterruptedError):
                pass
            except OSError:
                self._end_refusal(refusal)
                return
        if refusal.responded and not refusal.outbuf:
            self._end_refusal(refusal)
            return
        mask = selectors.EVENT_READ | (selectors.EVENT_WRITE if refusal.outbuf else 0)
        try:
            self._sel.modify(refusal.sock, mask, ("refusal", refusal))
        except (KeyError, ValueError, OSError):
            pass

    def _end_refusal(self, refusal: _Refusal) -> None:
        try:
            self._sel.unregister(refusal.sock)
        except (KeyError, ValueError):
            pass
        refusal.sock.close()
        if refusal in self._refusals:
            self._refusals.remove(refusal)

    # -- client side -------------------------------------------------------

    def _start_connect(self, now: float) -> None:
        host, port = self._address
        try:
            infos = socket.getaddrinfo(host, port, type=socket.SOCK_STREAM)
            family, type_, proto, _, addr = infos[0]
        except OSError as exc:
            self._log.info("cannot resolve %s: %s", host, exc)
            self._connect_failed(now)
            return
        sock = socket.socket(family, type_, proto)
        sock.setblocking(False)
        _set_nodelay(sock)
        try:
            err = sock.connect_ex(addr)
        except OSError as exc:
            sock.close()
            self._log.info("connect to %s:%s failed: %s", host, port, exc)
            self._connect_failed(now)
            return
        if err not in (0, errno.EINPROGRESS, errno.EWOULDBLOCK):
            sock.close()
            self._log.info("connect to %s:%s failed: %s", host, port, errno.errorcode.get(err, err))
            self._connect_failed(now)
            return
        self._connecting = sock
        self._connect_deadline = now + self._ep._config.connect_timeout_ms / 1000.0
        self._sel.register(sock, selectors.EVENT_WRITE, ("connect", None))

    def _finish_connect(self, now: float) -> None:
        sock = self._connecting
        if sock is None:
            return
        err = sock.getsockopt(socket.SOL_SOCKET, socket.SO_ERROR)
        try:
            self._sel.unregister(sock)
        except (KeyError, ValueError):
            pass
        self._connecting = None
        if err != 0:
            sock.close()
            self._log.info("connect to %s:%s failed: %s",
                           *self._address, errno.errorcode.get(err, err))
            self._connect_failed(now)
            return
        host, port = self._address
        hostpart = f"[{host}]" if ":" in host else host
        uri = parse_uri(f"ws://{hostpart}:{port}{UPGRADE_PATH}")
        proto = ClientProtocol(uri, subprotocols=[SUBPROTOCOL])
        conn = _Conn(sock, proto, server=False, now=now)
        request = proto.connect()
        proto.send_request(request)
        self._pump_out(conn)
        self._conn = conn
        self._sel.register(sock, selectors.EVENT_READ | selectors.EVENT_WRITE, ("conn", conn))
        self._flush(conn)

    def _abort_connect(self, now: float) -> None:
        sock = self._connecting
        if sock is None:
            return
        try:
            self._sel.unregister(sock)
        except (KeyError, ValueError):
            pass
        sock.close()
        self._connecting = None
        self._connect_failed(now)

    def _connect_failed(self, now: float) -> None:
        self._reconnect_at = now + self._backoff_ms / 1000.0
        self._backoff_ms = min(self._backoff_ms * 2, self._ep._config.reconnect_max_ms)

    # -- the active connection ---------------------------------------------

    def _conn_event(self, conn: _Conn, mask: int, now: float) -> None:
        if mask & selectors.EVENT_READ:
            for _ in range(16):
                try:
                    data = conn.sock.recv(_RECV_SIZE)
                except (BlockingIOError, InterruptedError):
                    break
                except OSError:
                    self._drop_conn(now)
                    return
                if data == b"":
                    try:
                        conn.proto.receive_eof()
                    except Exception:
                        pass
                    self._drop_conn(now)
                    return
                try:
                    conn.proto.receive_data(data)
                except Exception as exc:
                    self._log.info("peer violated the protocol: %s", exc)
                    self._drop_conn(now)
                    return
                self._process_events(conn, now)
                if self._conn is not conn:
                    return
                if len(data) < _RECV_SIZE:
                    break
        if self._conn is conn and mask & selectors.EVENT_WRITE:
            self._flush(conn)

    def _process_events(self, conn: _Conn, now: float) -> None:
        for event in conn.proto.events_received():
            if isinstance(event, Request):
                self._handle_request(conn, event, now)
            elif isinstance(event, Response):
                self._handle_response(conn, event, now)
            elif isinstance(event, Frame):
                self._handle_frame(conn, event, now)
            if self._conn is not conn:
                return
        self._pump_out(conn)
        if conn.proto.state in (State.CLOSING, State.CLOSED) and conn.close_deadline is None:
            conn.close_deadline = now + _CLOSE_LINGER
        self._flush(conn)

    def _handle_request(self, conn: _Conn, request: Request, now: float) -> None:
        if request.path.split("?", 1)[0] != UPGRADE_PATH:
            self._log.info("rejecting upgrade for unknown path %r", request.path)
            response = conn.proto.reject(404, "unknown path\n")
            conn.proto.send_response(response)
            conn.drop_after_flush = True
            conn.close_deadline = now + _CLOSE_LINGER
            return
        response = conn.proto.accept(request)
        conn.proto.send_response(response)
        if conn.proto.state is State.OPEN:
            offered = request.headers.get("Sec-WebSocket-Protocol")
            self._handshake_complete(conn, offered)
        else:
            self._log.info("rejecting invalid upgrade request")
            conn.drop_after_flush = True
            conn.close_deadline = now + _CLOSE_LINGER

    def _handle_response(self, conn: _Conn, response: Response, now: float) -> None:
        if conn.proto.state is State.OPEN:
            negotiated = response.headers.get("Sec-WebSocket-Protocol")
            self._handshake_complete(conn, negotiated)
        else:
            self._log.info("server rejected the connection: HTTP %s", response.status_code)
            self._drop_conn(now)

    def _handshake_complete(self, conn: _Conn, subprotocol: str | None) -> None:
        conn.handshake_done = True
        if subprotocol != SUBPROTOCOL:
            self._log.info("peer without %s subprotocol accepted (offered: %r)",
                           SUBPROTOCOL, subprotocol)
        self._backoff_ms = self._ep._config.reconnect_initial_ms
        self._ep._service_mark_connected()
        self._log.info("peer connected")

    def _handle_frame(self, conn: _Conn, frame: Frame, now: float) -> None:
        opcode = frame.opcode
        if opcode is Opcode.TEXT or opcode is Opcode.BINARY:
            if frame.fin:
                if opcode is Opcode.TEXT:
                    self._ep._service_deliver(bytes(frame.data), now)
                else:
                    self._ep._service_count_malformed("binary frame")
            else:
                conn.frag = [bytes(frame.data)]
                conn.frag_is_text = opcode is Opcode.TEXT
        elif opcode is Opcode.CONT:
            if conn.frag is None:
                return  # protocol object enforces RFC sequencing; be lenient
            conn.frag.append(bytes(frame.data))
            if frame.fin:
                payload = b"".join(conn.frag)
                was_text = conn.frag_is_text
                conn.frag = None
                if was_text:
                    self._ep._service_deliver(payload, now)
                else:
                    self._ep._service_count_malformed("binary frame")
        # PING/PONG/CLOSE are answered by the protocol object itself.

    def _transmit(self) -> None:
        """Drain the outgoing queue onto the socket until it is empty or the
        socket pushes back (then EVENT_WRITE resumes the drain)."""
        conn = self._conn
        if conn is None or not conn.handshake_done:
            return
        while conn.proto.state is State.OPEN:
            sent_any = False
            while conn.proto.state is State.OPEN and len(conn.outbuf) < _HIGH_WATER:
                now = time.monotonic()
                nodes = self._ep._service_pop_outgoing(now, limit=64)
                if not nodes:
                    break
                framed = []
                for node in nodes:
                    if node.expiry == INFINITE:
                        remaining = None
                    else:
                        remaining = max(1, math.ceil((node.expiry - now) * 1000))
                    try:
                        conn.proto.send_text(encode_message(node.message, remaining))
                    except Exception as exc:  # defensive: validated at the API boundary
                        self._log.error("cannot transmit message: %s", exc)
                        self._ep._service_send_failed(node)
                        continue
                    framed.append(node)
                self._pump_out(conn)
                self._ep._service_note_sent(framed)
                sent_any = True
            if conn.outbuf:
                self._flush(conn)
            if self._conn is not conn or not sent_any or conn.outbuf:
                return

    def _pump_out(self, conn: _Conn) -> None:
        for chunk in conn.proto.data_to_send():
            if chunk:
                conn.outbuf += chunk
            else:
                conn.eof_wanted = True

    def _flush(self, conn: _Conn) -> None:
        while conn.outbuf:
            try:
                sent = conn.sock.send(conn.outbuf)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                self._drop_conn(time.monotonic())
                return
            if sent <= 0:
                break
            del conn.outbuf[:sent]
        if not conn.outbuf:
            if conn.eof_wanted and not conn.eof_sent:
                conn.eof_sent = True
                try:
                    conn.sock.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
            if conn.drop_after_flush:
                self._drop_conn(time.monotonic())
                return
        mask = selectors.EVENT_READ | (selectors.EVENT_WRITE if conn.outbuf else 0)
        try:
            self._sel.modify(conn.sock, mask, ("conn", conn))
        except (KeyError, ValueError, OSError):
            pass

    def _drop_conn(self, now: float) -> None:
        conn = self._conn
        if conn is None:
            return
        self._conn = None
        try:
            self._sel.unregister(conn.sock)
        except (KeyError, ValueError):
            pass
        conn.sock.close()
        if conn.handshake_done:
            self._log.info("peer disconnected")
            self._ep._service_mark_awaiting()
        if self._address is not None:
            self._connect_failed(now)

    # -- shutdown ----------------------------------------------------------

    def _teardown(self) -> None:
        conn = self._conn
        if conn is not None:
            if conn.handshake_done and conn.proto.state is State.OPEN:
                try:
                    conn.proto.send_close(CloseCode.NORMAL_CLOSURE)
                    self._pump_out(conn)
                except Exception:
                    pass
            deadline = time.monotonic() + 0.25
            while conn.outbuf and time.monotonic() < deadline:
                try:
                    sent = conn.sock.send(conn.outbuf)
                    del conn.outbuf[:sent]
                except (BlockingIOError, InterruptedError):
                    time.sleep(0.005)
                except OSError:
                    break
            conn.sock.close()
            self._conn = None
        if self._connecting is not None:
            self._connecting.close()
            self._connecting = None
        for refusal in list(self._refusals):
            self._end_refusal(refusal)
        if self._listen is not None:
            self._listen.close()
        self._sel.close()
        self._wake_r.close()
        self._wake_w.close()
        self._ep._service_finish_close()
        self._log.info("endpoint closed")


def _select_subprotocol(proto, offered):
    # Tolerate peers that do not offer our subprotocol.
    return SUBPROTOCOL if SUBPROTOCOL in offered else None


def _set_nodelay(sock: socket.socket) -> None:
    try:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    except OSError:
        pass
