"""Inode image and the delta entries packed into its inline area.

Inline area (3692 bytes)::

    [reserved offset 4B][data offsets 4B each ->][ free gap ][<- delta entries][xattr 200B]

Delta entries grow from the xattr boundary toward the offsets.  Each entry is
``delta bytes | size:1B | index:2B`` with the fixed-size header at its
tail-side end, so the region can be walked from the tail without a count.
"""

import math
import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import CorruptInode, OversizeDelta

INODE_SIZE = 4096
INODE_MAGIC = b"DFIN"
INLINE_START = 204
INLINE_SIZE = 3692
CRC_OFFSET = INLINE_START + INLINE_SIZE  # 3896
RESERVED_OFFSET = 4
XATTR_SIZE = 200
XATTR_START = INLINE_SIZE - XATTR_SIZE  # 3492, relative to the inline area
ENTRY_HEADER = 3  # index 2B + size 1B
MAX_DELTA = 255
INLINE_CAPACITY = INLINE_SIZE - RESERVED_OFFSET - XATTR_SIZE  # 3488
MAX_OFFSETS = INLINE_CAPACITY // 4  # 872
PAGE_SIZE = 4096


class CompressType(IntEnum):
    NONE = 0
    INLINE = 1
    MAIN = 2


@dataclass(frozen=True)
class DeltaEntry:
    page_index: int
    payload: bytes

    @property
    def total(self):
        return len(self.payload) + ENTRY_HEADER


@dataclass
class InodeImage:
    ino: int
    file_size: int = 0
    mid: int | None = None
    bgres_next: int | None = None
    offsets: list = field(default_factory=list)
    deltas: list = field(default_factory=list)  # oldest (tail side) first
    xattr: bytes = bytes(XATTR_SIZE)
    dirty: bool = False

    # -- derived flags ---------------------------------------------------

    @property
    def compress_type(self):
        if self.mid is not None:
            return CompressType.MAIN
        if self.deltas:
            return CompressType.INLINE
        return CompressType.NONE

    @property
    def compress_tag(self):
        return self.mid is not None or bool(self.deltas)

    @property
    def page_count(self):
        return len(self.offsets)

    # -- capacity --------------------------------------------------------

    def delta_bytes(self):
        return sum(e.total for e in self.deltas)

    def free_space(self):
        return max(0, INLINE_CAPACITY - 4 * len(self.offsets) - self.delta_bytes())

    def regions(self):
        """Byte ranges (relative to the inline area) of every populated field."""
        out = [("reserved", 0, RESERVED_OFFSET),
               ("offsets", RESERVED_OFFSET, RESERVED_OFFSET + 4 * len(self.offsets))]
        end = XATTR_START
        for e in self.deltas:
            out.append((f"delta[{e.page_index}]", end - e.total, end))
            end -= e.total
        out.append(("xattr", XATTR_START, INLINE_SIZE))
        return out

    def check_layout(self):
        """Raise CorruptInode if any two populated ranges overlap."""
        spans = sorted((lo, hi, name) for name, lo, hi in self.regions() if hi > lo)
        for (lo1, hi1, n1), (lo2, hi2, n2) in zip(spans, spans[1:]):
            if lo2 < hi1:
                raise CorruptInode(f"inode {self.ino}: {n1} overlaps {n2}")
        if spans and (spans[0][0] < 0 or spans[-1][1] > INLINE_SIZE):
            raise CorruptInode(f"inode {self.ino}: region outside inline area")

    def append_offset(self, lba):
        if len(self.offsets) >= MAX_OFFSETS:
            raise CorruptInode(f"inode {self.ino}: offset array full")
        if 4 * (len(self.offsets) + 1) + self.delta_bytes() > INLINE_CAPACITY:
            raise CorruptInode(f"inode {self.ino}: offsets would overrun delta entries")
        self.offsets.append(lba)
        self.file_size = PAGE_SIZE * len(self.offsets)
        self.dirty = True

    # -- delta entries ---------------------------------------------------

    def insert_delta(self, page_index, payload):
        """Append an entry at the head of the delta region; False when full."""
        if len(payload) > MAX_DELTA:
            raise OversizeDelta(f"{len(payload)}-byte delta exceeds the 1-byte size field")
        if not payload:
            raise OversizeDelta("empty delta")
        if len(payload) + ENTRY_HEADER > self.free_space():
            return False
        self.deltas.append(DeltaEntry(page_index, bytes(payload)))
        self.dirty = True
        return True

    def lookup_delta(self, page_index):
        for e in self.deltas:
            if e.page_index == page_index:
                return e.payload
        return None

    def remove_delta(self, page_index):
        for i, e in enumerate(self.deltas):
            if e.page_index == page_index:
                del self.deltas[i]
                self.dirty = True
                return True
        return False

    def evict_contending(self, new_offset_count):
        """Remove and return the entries a grown offset array would overlap.

        Only the eviction happens here; the caller appends the new offsets as
        it assigns their block addresses.
        """
        if new_offset_count > MAX_OFFSETS:
            raise CorruptInode(f"inode {self.ino}: {new_offset_count} offsets exceed the inline area")
        offsets_end = RESERVED_OFFSET + 4 * new_offset_count
        end = XATTR_START
        keep = 0
        for e in self.deltas:
            if end - e.total < offsets_end:
                break
            end -= e.total
            keep += 1
        evicted = self.deltas[keep:]
        if evicted:
            del self.deltas[keep:]
            self.dirty = True
        return evicted

    # -- serialization ---------------------------------------------------

    def flags(self):
        return int(self.compress_tag) | int(self.compress_type) << 1

    def to_bytes(self):
        self.check_layout()
        inline = bytearray(INLINE_SIZE)
        struct.pack_into(f"<{len(self.offsets)}I", inline, RESERVED_OFFSET, *self.offsets)
        end = XATTR_START
        for e in self.deltas:
            start = end - e.total
            n = len(e.payload)
            inline[start:start + n] = e.payload
            inline[start + n] = n
            struct.pack_into("<H", inline, start + n + 1, e.page_index)
            end = start
        inline[XATTR_START:] = self.xattr

        buf = bytearray(INODE_SIZE)
        buf[0:4] = INODE_MAGIC
        struct.pack_into("<IIQII", buf, 4, self.ino, self.flags(), self.file_size,
                         self.mid or 0, self.bgres_next or 0)
        buf[INLINE_START:CRC_OFFSET] = inline
        struct.pack_into("<I", buf, CRC_OFFSET, zlib.crc32(bytes(buf[:CRC_OFFSET])))
        return bytes(buf)

    @classmethod
    def from_bytes(cls, buf):
        if len(buf) != INODE_SIZE:
            raise CorruptInode("inode image must be 4096 bytes")
        if buf[0:4] != INODE_MAGIC:
            raise CorruptInode("bad inode magic")
        (crc,) = struct.unpack_from("<I", buf, CRC_OFFSET)
        if crc != zlib.crc32(bytes(buf[:CRC_OFFSET])):
            raise CorruptInode("inode checksum mismatch")
        ino, flags, file_size, mid, nxt = struct.unpack_from("<IIQII", buf, 4)
        n_off = math.ceil(file_size / PAGE_SIZE)
        if n_off > MAX_OFFSETS:
            raise CorruptInode(f"inode {ino}: file too large for inline indexing")
        inline = buf[INLINE_START:CRC_OFFSET]
        offsets = list(struct.unpack_from(f"<{n_off}I", inline, RESERVED_OFFSET))
        offsets_end = RESERVED_OFFSET + 4 * n_off

        deltas = []
        end = XATTR_START
        while end - ENTRY_HEADER >= offsets_end:
            size = inline[end - ENTRY_HEADER]
            if size == 0:
                break
            (index,) = struct.unpack_from("<H", inline, end - 2)
            start = end - ENTRY_HEADER - size
            if start < offsets_end:
                raise CorruptInode(f"inode {ino}: delta entry overlaps data offsets")
            deltas.append(DeltaEntry(index, bytes(inline[start:start + size])))
            end = start
        inode = cls(ino, file_size, mid or None, nxt or None, offsets, deltas,
                    bytes(inline[XATTR_START:]))
        if inode.flags() != flags:
            raise CorruptInode(f"inode {ino}: flags {flags:#x} disagree with contents")
        return inode


@dataclass(frozen=True)
class LatencyModel:
    """Latency constants (microseconds) and average entry size (bytes)."""

    alpha: float = 72.0
    beta: float = 25.3
    gamma: float = 954.0
    epsilon: float = 6.9
    lam: float = 9.2
    delta_miss: float = 250.0
    live_alpha: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "epsilon", "lam", "delta_miss"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.beta < self.gamma:
            raise ValueError("compressed writes must be cheaper than plain writes")

    def benefit(self, spared, alpha=None):
        return spared / (alpha or self.alpha) * (self.gamma - self.beta)

    def overhead(self, hr):
        return self.gamma + self.epsilon + hr * self.lam + (1.0 - hr) * self.delta_miss

    def restore_stall(self, base_hit):
        return self.gamma + self.epsilon + (self.lam if base_hit else self.delta_miss)


@dataclass(frozen=True)
class ReplaceDecision:
    replaced: bool
    evicted: DeltaEntry | None
    spared: int
    alpha: float
    hr: float
    benefit: float
    overhead: float


def try_replace(inode, candidate, model, hr):
    """Swap the largest live entry for ``candidate`` when it pays off.

    The spared bytes RI are the victim's footprint minus the candidate's; the
    swap happens only if the benefit of those bytes exceeds the cost of
    restoring and rewriting the victim's page.  No mutation on rejection.
    """
    if not inode.deltas:
        return ReplaceDecision(False, None, 0, model.alpha, hr, 0.0, model.overhead(hr))
    victim = max(inode.deltas, key=lambda e: e.total)  # first of equal sizes wins
    spared = victim.total - candidate.total
    alpha = model.alpha
    if model.live_alpha:
        alpha = inode.delta_bytes() / len(inode.deltas)
    ben = model.benefit(spared, alpha)
    oh = model.overhead(hr)
    if spared <= 0 or not ben > oh:
        return ReplaceDecision(False, None, spared, alpha, hr, ben, oh)
    inode.remove_delta(victim.page_index)
    if not inode.insert_delta(candidate.page_index, candidate.payload):
        raise CorruptInode("replacement candidate did not fit after eviction")
    return ReplaceDecision(True, victim, spared, alpha, hr, ben, oh)
