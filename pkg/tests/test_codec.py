import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltafs.codec import (
    DEFAULT_CODEC,
    ZlibCodec,
    decode_varint,
    delta_apply,
    delta_encode,
    encode_varint,
    recover_base,
    xor_pages,
)
from deltafs.errors import CorruptDelta
from deltafs.oracle import zero_run_size

PAGE = 4096


def sparse_page(rng, runs, maxlen=60):
    arr = np.zeros(PAGE, np.uint8)
    for _ in range(runs):
        n = int(rng.integers(1, maxlen))
        s = int(rng.integers(0, PAGE - n))
        arr[s:s + n] = rng.integers(1, 256, n, dtype=np.uint8)
    return arr.tobytes()


def _page(seed, runs):
    rng = np.random.default_rng(seed)
    if runs < 0:
        return rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
    return sparse_page(rng, runs, maxlen=400)


# runs < 0 draws a dense random page; otherwise a page with that many non-zero runs
pages = st.builds(_page, st.integers(0, 2**32 - 1), st.integers(-1, 40))


@pytest.mark.parametrize("value,encoded", [(0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"),
                                           (300, b"\xac\x02"), (4096, b"\x80\x20")])
def test_varint_known_values(value, encoded):
    assert encode_varint(value) == encoded
    assert decode_varint(encoded, 0) == (value, len(encoded))


def test_varint_truncated():
    with pytest.raises(CorruptDelta):
        decode_varint(b"\x80", 0)


def test_identical_pages_give_three_byte_delta():
    base = bytes(range(256)) * 16
    assert len(delta_encode(base, base)) == 3


def test_single_byte_change_is_tiny():
    base = bytearray(PAGE)
    new = bytearray(base)
    new[1000] = 7
    d = delta_encode(bytes(base), bytes(new))
    assert len(d) <= 8
    assert delta_apply(bytes(base), d) == bytes(new)


def test_random_page_is_incompressible():
    rng = np.random.default_rng(5)
    new = rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
    assert len(delta_encode(bytes(PAGE), new)) > 256


def test_zero_delta_is_identity_both_ways():
    page = bytes(np.random.default_rng(1).integers(0, 256, PAGE, dtype=np.uint8))
    zero = delta_encode(page, page)
    assert delta_apply(page, zero) == page
    assert recover_base(page, zero) == page


def test_truncated_delta_rejected():
    base = bytes(PAGE)
    new = bytearray(PAGE)
    new[10:20] = b"x" * 10
    d = delta_encode(base, bytes(new))
    with pytest.raises(CorruptDelta):
        delta_apply(base, d[:-3])


def test_wrong_length_expansion_rejected():
    with pytest.raises(CorruptDelta):
        delta_apply(bytes(PAGE), DEFAULT_CODEC.compress(bytes(100)))


def test_twice_updated_page_recovers_flash_base():
    rng = np.random.default_rng(2)
    base = rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
    v1 = bytearray(base)
    v1[5:9] = b"abcd"
    d1 = delta_encode(base, bytes(v1))
    recovered = recover_base(bytes(v1), d1)
    assert recovered == base
    v2 = bytearray(v1)
    v2[3000] ^= 0xFF
    d2 = delta_encode(recovered, bytes(v2))
    assert recover_base(bytes(v2), d2) == base
    assert delta_apply(base, d2) == bytes(v2)


def test_zlib_codec_roundtrip_and_corruption():
    z = ZlibCodec()
    data = b"hello" * 100
    assert z.decompress(z.compress(data)) == data
    with pytest.raises(CorruptDelta):
        z.decompress(b"not zlib")


def test_size_matches_independent_arithmetic():
    rng = np.random.default_rng(9)
    for runs in range(0, 40, 3):
        a = rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
        x = sparse_page(rng, runs, maxlen=300)
        b = xor_pages(a, x)
        assert len(delta_encode(a, b)) == zero_run_size(a, b)


def _runs(buf):
    arr = np.frombuffer(buf, np.uint8) != 0
    edges = np.diff(np.concatenate(([0], arr.astype(np.int8), [0])))
    return int((edges == 1).sum()), int(arr.sum())


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_size_bound_short_literals(seed, runs):
    # tokens with literal runs under 128 bytes cost at most 3 header bytes each
    x = sparse_page(np.random.default_rng(seed), runs, maxlen=100)
    r, k = _runs(x)
    arr = np.frombuffer(x, np.uint8) != 0
    longest = max((len(s) for s in "".join("1" if v else "0" for v in arr).split("0")), default=0)
    bound = 3 * (r + 1) + k if longest < 128 else 4 * (r + 1) + k
    assert len(DEFAULT_CODEC.compress(x)) <= bound


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=9000))
def test_codec_roundtrip_arbitrary(data):
    assert DEFAULT_CODEC.decompress(DEFAULT_CODEC.compress(data)) == data


@settings(max_examples=300, deadline=None)
@given(pages, pages)
def test_apply_and_recover_involution(base, new):
    d = delta_encode(base, new)
    assert delta_apply(base, d) == new
    assert recover_base(new, d) == base
