import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowe.correlation import CorrelationTable, fresh_message_id, make_endpoint_nonce
from rowe.errors import UsageError
from rowe.notify import WaitStatus


# -- id generation ---------------------------------------------------------

def test_successive_ids_differ():
    nonce = make_endpoint_nonce()
    assert fresh_message_id(nonce, 0) != fresh_message_id(nonce, 1)


def test_id_format():
    assert fresh_message_id("abc123", 17) == "abc123-17"


def test_ten_thousand_ids_distinct():
    nonce = make_endpoint_nonce()
    ids = {fresh_message_id(nonce, i) for i in range(10_000)}
    assert len(ids) == 10_000


def test_nonces_distinct_across_endpoints():
    nonces = {make_endpoint_nonce() for _ in range(1_000)}
    assert len(nonces) == 1_000
    assert all(len(n) == 32 for n in nonces)  # 128 bits in hex


# -- register / cancel -----------------------------------------------------

def test_register_creates_entry():
    table = CorrelationTable()
    table.register("n-1")
    assert len(table) == 1


def test_register_duplicate_is_usage_error():
    table = CorrelationTable()
    table.register("n-1")
    with pytest.raises(UsageError):
        table.register("n-1")


def test_register_then_cancel_empties_table():
    table = CorrelationTable()
    handle = table.register("n-1")
    assert table.cancel("n-1") is True
    assert len(table) == 0
    assert handle.status is WaitStatus.TIMED_OUT


def test_cancel_unknown_id():
    assert CorrelationTable().cancel("n-404") is False


def test_cancel_twice():
    table = CorrelationTable()
    table.register("n-1")
    assert table.cancel("n-1") is True
    assert table.cancel("n-1") is False


# -- try_complete ----------------------------------------------------------

def test_plain_message_not_consumed():
    table = CorrelationTable()
    assert table.try_complete({"x": 1}) is False
    assert table.try_complete({"message_id": "peer-5", "x": 1}) is False
    assert table.late_reply_count == 0


def test_matching_reply_completes_waiter():
    table = CorrelationTable()
    handle = table.register("X")
    reply = {"in_reply_to": "X", "r": 1}
    assert table.try_complete(reply) is True
    assert handle.status is WaitStatus.COMPLETED
    assert handle.result == {"in_reply_to": "X", "r": 1}
    assert len(table) == 0


def test_unmatched_reply_is_late():
    table = CorrelationTable()
    assert table.try_complete({"in_reply_to": "unknown"}) is True
    assert table.late_reply_count == 1


def test_reply_after_cancel_is_late():
    table = CorrelationTable()
    table.register("X")
    table.cancel("X")
    assert table.try_complete({"in_reply_to": "X", "r": 1}) is True
    assert table.late_reply_count == 1


def test_reply_carrying_both_keys_routes_as_reply():
    # a reply that is itself id-bearing still matches on in_reply_to
    table = CorrelationTable()
    handle = table.register("X")
    m = {"message_id": "peer-9", "in_reply_to": "X"}
    assert table.try_complete(m) is True
    assert handle.result == m


def test_fail_all_signals_closed():
    table = CorrelationTable()
    handles = [table.register(f"n-{i}") for i in range(5)]
    table.fail_all()
    assert len(table) == 0
    assert all(h.status is WaitStatus.CLOSED for h in handles)


# -- shuffled-replies property --------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=64), st.randoms(use_true_random=False))
def test_every_invoker_gets_its_own_reply(k, rng):
    table = CorrelationTable()
    nonce = make_endpoint_nonce()
    handles = {}
    for i in range(k):
        mid = fresh_message_id(nonce, i)
        handles[mid] = table.register(mid)
    order = list(handles)
    rng.shuffle(order)
    for mid in order:
        assert table.try_complete({"in_reply_to": mid, "echo": mid}) is True
    assert len(table) == 0
    assert table.late_reply_count == 0
    for mid, handle in handles.items():
        assert handle.status is WaitStatus.COMPLETED
        assert handle.result["echo"] == mid
