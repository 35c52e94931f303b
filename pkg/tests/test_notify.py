import threading
import time

import pytest

from rowe.notify import NotificationHandle, WaitStatus


def test_starts_pending():
    h = NotificationHandle()
    assert h.status is WaitStatus.PENDING
    assert h.result is None


def test_signal_then_wait():
    h = NotificationHandle()
    assert h.signal(WaitStatus.SENT) is True
    assert h.wait(timeout=0) is WaitStatus.SENT


def test_only_first_signal_wins():
    h = NotificationHandle()
    assert h.signal(WaitStatus.COMPLETED, {"r": 1}) is True
    assert h.signal(WaitStatus.DISCARDED) is False
    assert h.status is WaitStatus.COMPLETED
    assert h.result == {"r": 1}


def test_signalling_pending_is_an_error():
    h = NotificationHandle()
    with pytest.raises(ValueError):
        h.signal(WaitStatus.PENDING)


def test_wait_timeout_returns_pending():
    h = NotificationHandle()
    t0 = time.monotonic()
    assert h.wait(timeout=0.05) is WaitStatus.PENDING
    assert time.monotonic() - t0 < 1.0


def test_cross_thread_wakeup():
    h = NotificationHandle()
    seen = []

    def waiter():
        seen.append(h.wait(timeout=5.0))

    th = threading.Thread(target=waiter)
    th.start()
    time.sleep(0.05)
    h.signal(WaitStatus.COMPLETED, {"answer": 42})
    th.join(timeout=2.0)
    assert seen == [WaitStatus.COMPLETED]
    assert h.result == {"answer": 42}


def test_wait_after_terminal_is_immediate():
    h = NotificationHandle()
    h.signal(WaitStatus.CLOSED)
    t0 = time.monotonic()
    assert h.wait() is WaitStatus.CLOSED
    assert time.monotonic() - t0 < 0.1
