"""On-the-wire message format: one JSON object per WebSocket text frame.

A message is a JSON object (key/value association); non-object top levels are
rejected at the wire boundary.  Three envelope keys are reserved:

* ``message_id`` -- string, injected by ``invoke``; identifies an invocation.
* ``in_reply_to`` -- string, set by ``reply``; names the invocation answered.
* ``rowe_ttl`` -- non-negative integer, milliseconds of life remaining.
  Injected at transmit time when the sender gave a finite TTL and stripped
  before delivery, so it never appears in a message handed to user code.

Encoding preserves key insertion order and emits compact UTF-8 JSON, so a
given message always serializes to the same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .errors import ProtocolError, UsageError

#: Reserved envelope keys.
MESSAGE_ID = "message_id"
IN_REPLY_TO = "in_reply_to"
TTL_KEY = "rowe_ttl"

#: WebSocket subprotocol and HTTP upgrade path spoken by endpoints.
SUBPROTOCOL = "rowe.v1"
UPGRADE_PATH = "/rowe"

#: A message is a plain dict whose values are JSON values.
Message = dict[str, Any]

#: Expiry sentinel for "never expires".
INFINITE = math.inf

_KINDS = (str, int, float, bool, dict, list)


@dataclass(slots=True)
class DecodedFrame:
    """A decoded inbound frame: the delivered message plus its local expiry.

    ``local_expiry`` is an absolute timestamp on the receiver's monotonic
    clock (``arrival_time + rowe_ttl``), or ``math.inf`` when the frame
    carried no TTL.
    """

    message: Message
    local_expiry: float


def build_message(pairs: Iterable[Sequence]) -> Message:
    """Build a message from ``(key, kind, value)`` triples.

    ``kind`` is one of the Python types ``str``, ``int``, ``float``, ``bool``,
    ``dict``, ``list``, or ``None`` for a JSON null (in which case the value
    may be omitted).  Entries keep the given order.

    >>> build_message([("service", str, "add-two-numbers"), ("a", int, 38)])
    {'service': 'add-two-numbers', 'a': 38}

    Raises :class:`UsageError` on duplicate keys, on a value that does not
    match its declared kind, or when the reserved ``rowe_ttl`` key is given
    (TTLs are a parameter of the send operations, never a message entry).
    """
    out: Message = {}
    for entry in pairs:
        if not isinstance(entry, (tuple, list)) or len(entry) not in (2, 3):
            raise UsageError(f"entry must be (key, kind, value) or (key, None): {entry!r}")
        key, kind = entry[0], entry[1]
        if not isinstance(key, str) or not key:
            raise UsageError(f"message key must be a non-empty string: {key!r}")
        if key == TTL_KEY:
            raise UsageError(f"{TTL_KEY!r} is reserved; pass a ttl to the send operation instead")
        if key in out:
            raise UsageError(f"duplicate message key: {key!r}")
        if kind is None:
            if len(entry) == 3 and entry[2] is not None:
                raise UsageError(f"null entry {key!r} must not carry a value")
            out[key] = None
            continue
        if len(entry) != 3:
            raise UsageError(f"entry {key!r} is missing its value")
        value = entry[2]
        if kind is bool:
            ok = isinstance(value, bool)
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif kind in (str, dict, list):
            ok = isinstance(value, kind)
        else:
            raise UsageError(f"unsupported kind for {key!r}: {kind!r}")
        if not ok:
            raise UsageError(f"value for {key!r} does not match kind {kind.__name__}: {value!r}")
        out[key] = value
    return out


def validate_message(m: Message) -> None:
    """Check that ``m`` is an object-kind message a send operation accepts.

    Raises :class:`UsageError` when ``m`` is not a dict, contains the reserved
    ``rowe_ttl`` key, or is not JSON-serializable.
    """
    if not isinstance(m, dict):
        raise UsageError(f"message must be a JSON object (dict), got {type(m).__name__}")
    if TTL_KEY in m:
        raise UsageError(f"{TTL_KEY!r} is reserved; pass a ttl to the send operation instead")
    try:
        json.dumps(m, ensure_ascii=False, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"message is not JSON-serializable: {exc}") from exc


def encode_message(m: Message, remaining_ttl: int | float | None = None) -> bytes:
    """Serialize ``m`` as the payload of one WebSocket text frame.

    ``remaining_ttl`` is the message's remaining life in whole milliseconds;
    ``None`` or ``math.inf`` means no TTL and no ``rowe_ttl`` key is emitted.
    The input message is not mutated.
    """
    if not isinstance(m, dict):
        raise ProtocolError(f"only object-kind messages go on the wire, got {type(m).__name__}")
    if TTL_KEY in m:
        raise UsageError(f"message must not carry {TTL_KEY!r}; it is injected at transmit time")
    if remaining_ttl is None or remaining_ttl == INFINITE:
        payload = m
    else:
        if isinstance(remaining_ttl, bool) or not isinstance(remaining_ttl, int):
            raise UsageError(f"remaining_ttl must be an int or infinite: {remaining_ttl!r}")
        if remaining_ttl < 0:
            raise UsageError(f"remaining_ttl must be non-negative: {remaining_ttl!r}")
        payload = {**m, TTL_KEY: remaining_ttl}
    try:
        text = json.dumps(payload, ensure_ascii=False, separators=(",", ":"), allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"message is not JSON-serializable: {exc}") from exc
    return text.encode("utf-8")


def decode_frame(data: bytes | bytearray | str, arrival_time: float) -> DecodedFrame:
    """Parse the payload of one inbound text frame.

    Returns the delivered message (with ``rowe_ttl`` stripped, ``message_id``
    and ``in_reply_to`` preserved) and its local expiry computed against
    ``arrival_time``.  Raises :class:`ProtocolError` on invalid UTF-8,
    malformed JSON, a non-object top level, or an ill-typed reserved key;
    callers drop such frames and keep the connection open.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"frame is not valid UTF-8: {exc}") from exc
    else:
        text = data
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError(f"frame top level must be an object, got {type(obj).__name__}")

    expiry = INFINITE
    if TTL_KEY in obj:
        ttl = obj.pop(TTL_KEY)
        if isinstance(ttl, bool) or not isinstance(ttl, int):
            raise ProtocolError(f"{TTL_KEY} must be an integer, got {ttl!r}")
        if ttl < 0:
            raise ProtocolError(f"{TTL_KEY} must be non-negative, got {ttl!r}")
        expiry = arrival_time + ttl / 1000.0

    for key in (MESSAGE_ID, IN_REPLY_TO):
        if key in obj and not isinstance(obj[key], str):
            raise ProtocolError(f"{key} must be a string, got {obj[key]!r}")

    return DecodedFrame(message=obj, local_expiry=expiry)
