import pytest
from hypothesis import given
from hypothesis import strategies as st

from shuffledp.encoding import (
    BOTTOM,
    EncodingError,
    Tag,
    decode_message,
    decode_tuple,
    encode_message,
    encode_tuple,
    encode_value,
    is_bottom,
)

scalars = st.one_of(st.integers(min_value=-(2**80), max_value=2**80), st.binary(max_size=20),
                    st.text(max_size=10), st.none())
values = st.recursive(scalars, lambda inner: st.lists(inner, max_size=4).map(tuple), max_leaves=12)


@given(st.integers(0, 255), st.lists(values, max_size=5))
def test_message_round_trip(tag, fields):
    msg = encode_message(tag, *fields)
    assert decode_message(msg) == (tag, tuple(fields))


@given(st.lists(values, max_size=5).map(tuple))
def test_tuple_round_trip_is_canonical(t):
    b = encode_tuple(t)
    assert decode_tuple(b) == t
    assert encode_tuple(decode_tuple(b)) == b


def test_bool_and_numpy_ints_encode_as_ints():
    np = pytest.importorskip("numpy")
    assert encode_value(True) == encode_value(1)
    assert encode_value(np.int64(7)) == encode_value(7)


def test_zero_is_empty_payload():
    assert encode_value(0) == bytes([0x01, 0])


@pytest.mark.parametrize("bad", [
    b"",
    bytes([Tag.BIT, 0x01, 0x02, 0x00, 0x05]),  # leading zero byte in integer
    bytes([Tag.BIT, 0x02, 0x00]),  # negative zero
    bytes([Tag.BIT, 0x01, 0x80, 0x00]),  # non-minimal length
    bytes([Tag.BIT, 0x01, 0x05, 0x01]),  # truncated payload
    bytes([Tag.BIT, 0x09, 0x00]),  # unknown type
    bytes([Tag.BIT, 0x06, 0x01, 0x00]),  # None with payload
])
def test_rejects_non_canonical(bad):
    with pytest.raises(EncodingError):
        decode_message(bad)


def test_unencodable_type():
    with pytest.raises(EncodingError):
        encode_value(1.5)


def test_tag_must_fit_a_byte():
    with pytest.raises(EncodingError):
        encode_message(256)


def test_bottom():
    assert is_bottom(BOTTOM)
    assert not is_bottom(encode_message(Tag.BIT, 0))
    assert decode_message(BOTTOM) == (Tag.BOTTOM, ())
