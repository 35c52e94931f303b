"""RPC bookkeeping: unique invocation ids and reply-to-invoker matching.

``invoke`` stamps each outgoing invocation with a fresh ``message_id`` and
registers a waiter here; every inbound message carrying ``in_reply_to`` is
consumed by the table (matched to its waiter, or counted as a late reply)
and never reaches the ordinary receive path.

Mutations happen under the endpoint's lock; the table itself does not
synchronize.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from .errors import UsageError
from .notify import NotificationHandle, WaitStatus
from .wire import IN_REPLY_TO, Message


def make_endpoint_nonce() -> str:
    """A 128-bit random hex value, generated once per endpoint open."""
    return secrets.token_hex(16)


def fresh_message_id(nonce: str, counter: int) -> str:
    """Render an invocation id as ``<nonce>-<counter>``.

    The counter strictly increases per endpoint, so ids never repeat within
    an endpoint; the nonce keeps ids from independently opened endpoints
    distinct without coordination.
    """
    return f"{nonce}-{counter}"


@dataclass(slots=True)
class PendingInvocation:
    message_id: str
    waiter: NotificationHandle


class CorrelationTable:
    """Pending-invocation registry matching replies to blocked invokers."""

    def __init__(self) -> None:
        self._entries: dict[str, PendingInvocation] = {}
        self.late_reply_count = 0

    def __len__(self) -> int:
        return len(self._entries)

    def register(self, message_id: str) -> NotificationHandle:
        """Create an entry for a fresh invocation; returns its waiter."""
        if message_id in self._entries:
            raise UsageError(f"invocation id already registered: {message_id!r}")
        handle = NotificationHandle()
        self._entries[message_id] = PendingInvocation(message_id, handle)
        return handle

    def try_complete(self, message: Message) -> bool:
        """Route a decoded, unexpired inbound message.

        Returns True when the message was consumed as a reply: either
        delivered to the matching waiter, or dropped and counted late when no
        invocation is pending under its ``in_reply_to``.  Returns False for
        ordinary messages, which flow on to the incoming queue.
        """
        if IN_REPLY_TO not in message:
            return False
        reply_to = message[IN_REPLY_TO]
        entry = self._entries.pop(reply_to, None) if isinstance(reply_to, str) else None
        if entry is None:
            self.late_reply_count += 1
            return True
        entry.waiter.signal(WaitStatus.COMPLETED, message)
        return True

    def cancel(self, message_id: str) -> bool:
        """Drop a pending invocation (timeout path); True if it was present."""
        entry = self._entries.pop(message_id, None)
        if entry is None:
            return False
        entry.waiter.signal(WaitStatus.TIMED_OUT)
        return True

    def fail_all(self) -> None:
        """Signal every pending waiter "closed" and empty the table."""
        entries = list(self._entries.values())
        self._entries.clear()
        for entry in entries:
            entry.waiter.signal(WaitStatus.CLOSED)
