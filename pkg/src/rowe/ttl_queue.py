"""Message queue linked in two orders at once: FIFO and by expiration date.

Every node sits on two doubly-linked chains through the same node objects:
the FIFO chain (enqueue order) and the expiry chain (soonest deadline first,
ties broken by enqueue order, infinite deadlines last).  Unlinking a node is
O(1) pointer surgery on both chains, so purging expired messages and
consuming delivered ones never scan.

Expiry insertion walks backward from the expiry tail.  Typical workloads
enqueue near-monotone deadlines (periodic status updates share one TTL), so
the walk is amortized O(1).

A node is linked in both orders or in neither.  ``expiry <= now`` counts as
expired: a zero TTL means "only if deliverable immediately".

Not internally synchronized; exactly one owner context mutates a queue at a
time (the endpoint provides the exclusion).
"""

from __future__ import annotations

import math

from .errors import QueueFullError, UsageError
from .notify import NotificationHandle, WaitStatus
from .wire import Message

INFINITE = math.inf


class QueueNode:
    __slots__ = (
        "message",
        "enqueue_seq",
        "expiry",
        "waiter",
        "fifo_prev",
        "fifo_next",
        "exp_prev",
        "exp_next",
        "_queue",
    )

    def __init__(self, message: Message, enqueue_seq: int, expiry: float,
                 waiter: NotificationHandle | None) -> None:
        self.message = message
        self.enqueue_seq = enqueue_seq
        self.expiry = expiry
        self.waiter = waiter
        self.fifo_prev: QueueNode | None = None
        self.fifo_next: QueueNode | None = None
        self.exp_prev: QueueNode | None = None
        self.exp_next: QueueNode | None = None
        self._queue: DualOrderQueue | None = None


class DualOrderQueue:
    """Doubly-linked message queue viewable as FIFO and as expiry order."""

    def __init__(self, capacity: int | None = None) -> None:
        if capacity is not None and capacity < 1:
            raise UsageError(f"capacity must be positive or None: {capacity!r}")
        self.capacity = capacity
        self._fifo_head: QueueNode | None = None
        self._fifo_tail: QueueNode | None = None
        self._exp_head: QueueNode | None = None
        self._exp_tail: QueueNode | None = None
        self._size = 0
        self._next_seq = 0
        #: Cumulative count of nodes removed by expiry (test- and counter-facing).
        self.purged_count = 0
        #: Cumulative count of expiry-link inspections made by purge_expired
        #: (instrumentation for the purge-efficiency property).
        self.expiry_inspections = 0

    def __len__(self) -> int:
        return self._size

    def enqueue(self, message: Message, ttl_ms: float, now: float,
                waiter: NotificationHandle | None = None) -> QueueNode:
        """Append a message; TTL is milliseconds from ``now``, ``math.inf`` for none.

        Raises :class:`QueueFullError` when the queue is at capacity (the
        message is not enqueued).
        """
        if ttl_ms < 0:
            raise UsageError(f"ttl must be >= 0 or infinite: {ttl_ms!r}")
        if self.capacity is not None and self._size >= self.capacity:
            raise QueueFullError(f"queue is at capacity ({self.capacity})")
        expiry = INFINITE if ttl_ms == INFINITE else now + ttl_ms / 1000.0
        node = QueueNode(message, self._next_seq, expiry, waiter)
        self._next_seq += 1

        node.fifo_prev = self._fifo_tail
        if self._fifo_tail is not None:
            self._fifo_tail.fifo_next = node
        else:
            self._fifo_head = node
        self._fifo_tail = node

        # Walk backward from the expiry tail; stop at the last node whose
        # expiry is <= ours so equal deadlines keep enqueue order.
        cur = self._exp_tail
        while cur is not None and cur.expiry > expiry:
            cur = cur.exp_prev
        node.exp_prev = cur
        if cur is None:
            node.exp_next = self._exp_head
            if self._exp_head is not None:
                self._exp_head.exp_prev = node
            self._exp_head = node
        else:
            node.exp_next = cur.exp_next
            if cur.exp_next is not None:
                cur.exp_next.exp_prev = node
            cur.exp_next = node
        if node.exp_next is None:
            self._exp_tail = node

        node._queue = self
        self._size += 1
        return node

    def dequeue_front(self, now: float) -> Message | None:
        """Purge expired nodes, then unlink and return the FIFO head's message."""
        node = self.pop_front_node(now)
        return None if node is None else node.message

    def pop_front_node(self, now: float) -> QueueNode | None:
        """Like :meth:`dequeue_front` but returns the whole node (with waiter)."""
        self.purge_expired(now)
        node = self._fifo_head
        if node is None:
            return None
        self._unlink(node)
        return node

    def purge_expired(self, now: float) -> int:
        """Remove every node with ``expiry <= now``; signal its waiter "discarded".

        Inspects at most (purged + 1) expiry links.
        """
        purged = 0
        while (node := self._exp_head) is not None:
            self.expiry_inspections += 1
            if node.expiry > now:
                break
            self._unlink(node)
            purged += 1
            if node.waiter is not None:
                node.waiter.signal(WaitStatus.DISCARDED)
        self.purged_count += purged
        return purged

    def remove(self, node: QueueNode) -> Message:
        """Unlink a node from both orders in O(1); returns its message."""
        if node._queue is not self:
            raise UsageError("node is not linked in this queue")
        self._unlink(node)
        return node.message

    def next_expiry(self) -> float:
        """Earliest deadline in the queue, or ``math.inf`` when none is finite."""
        return self._exp_head.expiry if self._exp_head is not None else INFINITE

    def _unlink(self, node: QueueNode) -> None:
        if node.fifo_prev is not None:
            node.fifo_prev.fifo_next = node.fifo_next
        else:
            self._fifo_head = node.fifo_next
        if node.fifo_next is not None:
            node.fifo_next.fifo_prev = node.fifo_prev
        else:
            self._fifo_tail = node.fifo_prev

        if node.exp_prev is not None:
            node.exp_prev.exp_next = node.exp_next
        else:
            self._exp_head = node.exp_next
        if node.exp_next is not None:
            node.exp_next.exp_prev = node.exp_prev
        else:
            self._exp_tail = node.exp_prev

        node.fifo_prev = node.fifo_next = None
        node.exp_prev = node.exp_next = None
        node._queue = None
        self._size -= 1

    def drain(self) -> list[QueueNode]:
        """Unlink and return every node in FIFO order (close path)."""
        nodes = []
        while self._fifo_head is not None:
            node = self._fifo_head
            self._unlink(node)
            nodes.append(node)
        return nodes

    # Traversal accessors, used by the service loop's debug hook and by tests.

    def fifo_messages(self) -> list[Message]:
        out = []
        node = self._fifo_head
        while node is not None:
            out.append(node.message)
            node = node.fifo_next
        return out

    def expiry_order_messages(self) -> list[Message]:
        out = []
        node = self._exp_head
        while node is not None:
            out.append(node.message)
            node = node.exp_next
        return out

    def self_check(self) -> None:
        """Validate the dual-linkage invariants; raises AssertionError if broken."""
        fifo_nodes = []
        prev = None
        node = self._fifo_head
        while node is not None:
            assert node.fifo_prev is prev, "broken fifo back-link"
            assert node._queue is self, "fifo node not owned by queue"
            if prev is not None:
                assert prev.enqueue_seq < node.enqueue_seq, "fifo order not by enqueue_seq"
            fifo_nodes.append(node)
            prev, node = node, node.fifo_next
        assert self._fifo_tail is prev, "fifo tail mismatch"

        exp_nodes = []
        prev = None
        node = self._exp_head
        while node is not None:
            assert node.exp_prev is prev, "broken expiry back-link"
            if prev is not None:
                assert (prev.expiry, prev.enqueue_seq) < (node.expiry, node.enqueue_seq), \
                    "expiry order not (expiry, enqueue_seq)"
            exp_nodes.append(node)
            prev, node = node, node.exp_next
        assert self._exp_tail is prev, "expiry tail mismatch"

        assert len(fifo_nodes) == len(exp_nodes) == self._size, "size mismatch"
        assert set(map(id, fifo_nodes)) == set(map(id, exp_nodes)), "order views disagree on node set"
