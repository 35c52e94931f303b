"""One-shot waiters used to synchronize callers with the service thread.

A :class:`NotificationHandle` bundles a condition variable with a status slot
and an optional result.  The status moves exactly once from ``PENDING`` to a
terminal value; later signals are ignored.  One thread blocks in
:meth:`NotificationHandle.wait` while another (typically the endpoint's
service thread) signals the outcome.
"""

from __future__ import annotations

import enum
import threading

from .wire import Message


class WaitStatus(enum.Enum):
    PENDING = "pending"
    SENT = "sent"
    DISCARDED = "discarded"
    COMPLETED = "completed"
    TIMED_OUT = "timed-out"
    CLOSED = "closed"


class NotificationHandle:
    __slots__ = ("_cond", "_status", "_result")

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._status = WaitStatus.PENDING
        self._result: Message | None = None

    @property
    def status(self) -> WaitStatus:
        with self._cond:
            return self._status

    @property
    def result(self) -> Message | None:
        with self._cond:
            return self._result

    def signal(self, status: WaitStatus, result: Message | None = None) -> bool:
        """Move to a terminal status and wake the waiter.

        Returns False (and does nothing) if the handle was already signaled.
        """
        if status is WaitStatus.PENDING:
            raise ValueError("cannot signal PENDING")
        with self._cond:
            if self._status is not WaitStatus.PENDING:
                return False
            self._status = status
            self._result = result
            self._cond.notify_all()
            return True

    def wait(self, timeout: float | None = None) -> WaitStatus:
        """Block until signaled, or until ``timeout`` seconds elapse.

        Returns the terminal status, or ``PENDING`` if the timeout expired
        first (the handle may still be signaled later).
        """
        with self._cond:
            self._cond.wait_for(lambda: self._status is not WaitStatus.PENDING, timeout)
            return self._status
