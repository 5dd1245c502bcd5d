"""XOR delta encoding with a pluggable lossless compressor.

A delta is ``compress(base XOR new)``.  The default compressor is a zero-run
length codec: the buffer is a sequence of tokens::

    (zero_run_len: varint)(literal_len: varint)(literal bytes)

with base-128 little-endian varints.  Sparse XOR buffers, which dominate
update workloads, shrink to a few bytes per modified run.
"""

import zlib

import numpy as np

from .errors import CorruptDelta

PAGE_SIZE = 4096


def encode_varint(value):
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf, pos):
    """Return ``(value, next_pos)``; raises CorruptDelta on truncation."""
    value = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise CorruptDelta("truncated varint")
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise CorruptDelta("varint too long")


class Compressor:
    """Interface: ``decompress(compress(x)) == x`` for every byte string."""

    name = "abstract"

    def compress(self, data):
        raise NotImplementedError

    def decompress(self, data):
        raise NotImplementedError


def _nonzero_runs(data):
    """(start, end) pairs of maximal non-zero runs."""
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size == 0:
        return []
    nz = np.concatenate(([0], (arr != 0).astype(np.int8), [0]))
    edges = np.diff(nz)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


class ZeroRunCodec(Compressor):
    name = "zrle"

    def compress(self, data):
        data = bytes(data)
        out = bytearray()
        cursor = 0
        for start, end in _nonzero_runs(data):
            out += encode_varint(start - cursor)
            out += encode_varint(end - start)
            out += data[start:end]
            cursor = end
        if cursor < len(data) or not data:
            # trailing zeros (or the empty buffer) get an empty-literal token
            out += encode_varint(len(data) - cursor)
            out += encode_varint(0)
        return bytes(out)

    def decompress(self, data):
        data = bytes(data)
        out = bytearray()
        pos = 0
        while pos < len(data):
            zeros, pos = decode_varint(data, pos)
            lit, pos = decode_varint(data, pos)
            if pos + lit > len(data):
                raise CorruptDelta("literal runs past end of payload")
            if len(out) + zeros + lit > 1 << 24:
                raise CorruptDelta("implausible decoded length")
            out += bytes(zeros)
            out += data[pos:pos + lit]
            pos += lit
        return bytes(out)


class ZlibCodec(Compressor):
    """LZ-family alternative; not bit-specified, useful for comparisons."""

    name = "zlib"

    def __init__(self, level=6):
        self.level = level

    def compress(self, data):
        return zlib.compress(bytes(data), self.level)

    def decompress(self, data):
        try:
            return zlib.decompress(bytes(data))
        except zlib.error as exc:
            raise CorruptDelta(str(exc)) from exc


DEFAULT_CODEC = ZeroRunCodec()


def xor_pages(a, b):
    x = np.frombuffer(a, dtype=np.uint8)
    y = np.frombuffer(b, dtype=np.uint8)
    return np.bitwise_xor(x, y).tobytes()


def _check_page(buf, what):
    if len(buf) != PAGE_SIZE:
        raise ValueError(f"{what} must be {PAGE_SIZE} bytes, got {len(buf)}")


def delta_encode(base, new, codec=DEFAULT_CODEC):
    _check_page(base, "base")
    _check_page(new, "new")
    return codec.compress(xor_pages(base, new))


def _expand(delta, codec):
    try:
        xor = codec.decompress(delta)
    except CorruptDelta:
        raise
    except Exception as exc:  # foreign codecs raise their own types
        raise CorruptDelta(str(exc)) from exc
    if len(xor) != PAGE_SIZE:
        raise CorruptDelta(f"delta expands to {len(xor)} bytes, expected {PAGE_SIZE}")
    return xor


def delta_apply(base, delta, codec=DEFAULT_CODEC):
    """Rebuild the new page from its base and delta."""
    _check_page(base, "base")
    return xor_pages(base, _expand(delta, codec))


def recover_base(new, delta, codec=DEFAULT_CODEC):
    """Rebuild the base from the current page, skipping a flash read.

    XOR is an involution, so this is the same arithmetic as delta_apply with
    the roles swapped.
    """
    _check_page(new, "new")
    return xor_pages(new, _expand(delta, codec))
