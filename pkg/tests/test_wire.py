import json
import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from rowe.errors import ProtocolError, UsageError
from rowe.wire import (
    INFINITE,
    TTL_KEY,
    DecodedFrame,
    build_message,
    decode_frame,
    encode_message,
    validate_message,
)


# -- build_message ---------------------------------------------------------

def test_build_message_entries_and_order():
    m = build_message([("service", str, "add-two-numbers"), ("a", int, 38), ("b", int, 4)])
    assert m == {"service": "add-two-numbers", "a": 38, "b": 4}
    assert list(m) == ["service", "a", "b"]


def test_build_message_empty():
    assert build_message([]) == {}


def test_build_message_null_entry():
    assert build_message([("k", None)]) == {"k": None}
    assert build_message([("k", None, None)]) == {"k": None}


def test_build_message_all_kinds():
    m = build_message([
        ("s", str, "x"),
        ("i", int, -3),
        ("f", float, 1.5),
        ("fi", float, 2),          # int accepted where a double is declared
        ("t", bool, True),
        ("o", dict, {"nested": 1}),
        ("l", list, [1, "two"]),
        ("n", None),
    ])
    assert m == {"s": "x", "i": -3, "f": 1.5, "fi": 2.0, "t": True,
                 "o": {"nested": 1}, "l": [1, "two"], "n": None}
    assert isinstance(m["fi"], float)


def test_build_message_duplicate_key():
    with pytest.raises(UsageError):
        build_message([("a", int, 1), ("a", int, 2)])


def test_build_message_reserved_ttl_key():
    with pytest.raises(UsageError):
        build_message([(TTL_KEY, int, 100)])


def test_build_message_kind_mismatch():
    with pytest.raises(UsageError):
        build_message([("a", int, "not an int")])
    with pytest.raises(UsageError):
        build_message([("a", int, True)])   # bool is not an integer entry
    with pytest.raises(UsageError):
        build_message([("a", bool, 1)])
    with pytest.raises(UsageError):
        build_message([("a", str, 7)])


def test_build_message_bad_entries():
    with pytest.raises(UsageError):
        build_message([("", str, "x")])
    with pytest.raises(UsageError):
        build_message([(3, str, "x")])
    with pytest.raises(UsageError):
        build_message([("a", str)])        # missing value for non-null kind
    with pytest.raises(UsageError):
        build_message([("a", set, {1})])
    with pytest.raises(UsageError):
        build_message([("a", None, 5)])    # null entry carrying a value


# -- validate_message ------------------------------------------------------

def test_validate_message_rejects_non_dict():
    with pytest.raises(UsageError):
        validate_message([1, 2])
    with pytest.raises(UsageError):
        validate_message("{}")


def test_validate_message_rejects_reserved_ttl():
    with pytest.raises(UsageError):
        validate_message({TTL_KEY: 5})


def test_validate_message_rejects_unserializable():
    with pytest.raises(UsageError):
        validate_message({"x": object()})
    with pytest.raises(UsageError):
        validate_message({"x": float("nan")})


# -- encode_message --------------------------------------------------------

def test_encode_empty_no_ttl():
    assert encode_message({}, None) == b"{}"
    assert encode_message({}, INFINITE) == b"{}"


def test_encode_injects_ttl():
    data = encode_message({"a": 1}, 1500)
    assert json.loads(data) == {"a": 1, TTL_KEY: 1500}


def test_encode_does_not_mutate_input():
    m = {"a": 1}
    encode_message(m, 1500)
    assert m == {"a": 1}


def test_encode_preserves_key_order():
    assert encode_message({"b": 1, "a": 2}) == b'{"b":1,"a":2}'
    # deterministic: same input, same bytes
    m = {"z": [1, 2], "y": {"k": None}}
    assert encode_message(m, 7) == encode_message(m, 7)


def test_encode_rejects_non_object():
    with pytest.raises(ProtocolError):
        encode_message([1, 2])


def test_encode_rejects_carried_ttl_key():
    with pytest.raises(UsageError):
        encode_message({TTL_KEY: 9})


def test_encode_rejects_bad_remaining_ttl():
    with pytest.raises(UsageError):
        encode_message({}, -1)
    with pytest.raises(UsageError):
        encode_message({}, 1.5)
    with pytest.raises(UsageError):
        encode_message({}, True)


# -- decode_frame ----------------------------------------------------------

def test_decode_no_ttl_infinite_expiry():
    frame = decode_frame(b'{"x":1}', arrival_time=100.0)
    assert frame == DecodedFrame(message={"x": 1}, local_expiry=INFINITE)


def test_decode_ttl_sets_expiry_and_strips_key():
    frame = decode_frame(b'{"x":1,"rowe_ttl":200}', arrival_time=100.0)
    assert frame.message == {"x": 1}
    assert frame.local_expiry == pytest.approx(100.2)


def test_decode_ttl_zero_expires_at_arrival():
    frame = decode_frame(b'{"rowe_ttl":0}', arrival_time=50.0)
    assert frame.local_expiry == 50.0


def test_decode_preserves_correlation_keys():
    frame = decode_frame(b'{"message_id":"n-1","in_reply_to":"n-0","v":2}', 0.0)
    assert frame.message == {"message_id": "n-1", "in_reply_to": "n-0", "v": 2}


@pytest.mark.parametrize("payload", [
    b"[1,2]",
    b'"just a string"',
    b"42",
    b"null",
    b"{",
    b"",
    b"\xff\xfe{}",
    b'{"rowe_ttl":-5}',
    b'{"rowe_ttl":1.5}',
    b'{"rowe_ttl":true}',
    b'{"rowe_ttl":"100"}',
    b'{"message_id":7}',
    b'{"in_reply_to":null}',
])
def test_decode_rejects_malformed(payload):
    with pytest.raises(ProtocolError):
        decode_frame(payload, 0.0)


# -- round-trip properties -------------------------------------------------
#
# The independent parse oracle is yaml.safe_load: JSON is a YAML subset, and
# PyYAML shares no code with the json module.  The value strategy avoids the
# few places where YAML 1.1 diverges from JSON text: floats are dyadic
# rationals (exact in both parsers), and strings exclude the code points
# PyYAML treats as line breaks or forbids outright (controls, U+2028/2029).

_text = st.text(st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), max_size=20)
_scalars = (st.none() | st.booleans()
            | st.integers(min_value=-(2 ** 53), max_value=2 ** 53)
            | st.integers(min_value=-(10 ** 6), max_value=10 ** 6).map(lambda n: n / 8)
            | _text)
_values = st.recursive(
    _scalars,
    lambda children: (st.lists(children, max_size=4)
                      | st.dictionaries(_text, children, max_size=4)),
    max_leaves=12,
)
_reserved = ("message_id", "in_reply_to", TTL_KEY)
_messages = st.dictionaries(
    _text.filter(lambda k: k not in _reserved), _values, max_size=6)


@settings(max_examples=200)
@given(_messages)
def test_round_trip_against_independent_parser(m):
    data = encode_message(m, INFINITE)
    assert decode_frame(data, 0.0).message == m
    assert yaml.safe_load(data.decode("utf-8")) == m


@settings(max_examples=200)
@given(_messages, st.integers(min_value=0, max_value=10 ** 9))
def test_ttl_injection_against_independent_parser(m, ttl):
    parsed = yaml.safe_load(encode_message(m, ttl).decode("utf-8"))
    assert parsed[TTL_KEY] == ttl
    assert {k: v for k, v in parsed.items() if k != TTL_KEY} == m
    frame = decode_frame(encode_message(m, ttl), arrival_time=1000.0)
    assert frame.message == m
    assert frame.local_expiry == pytest.approx(1000.0 + ttl / 1000.0)
