"""Main-area delta maintenance: compact blocks mapped by a per-file meta-block.

Meta-block layout, repeated per compact block and closed by a zero LBA::

    [compact_lba 4B][CN 1B][FS 2B][CN x (PI 4B, DO 2B)] ... [0 4B]

Compact block layout: ``[size 2B][delta]`` entries packed head to tail; each
DO in the meta-block points at an entry's size field.
"""

import struct
from dataclasses import dataclass, field

from .codec import DEFAULT_CODEC, delta_apply
from .errors import CorruptMapping, MetaFull
from .hotness import HotnessClass

BLOCK_SIZE = 4096
DESC_HEADER = 7
PAIR_SIZE = 6
SIZE_FIELD = 2
MAX_CN = 255
DEFAULT_THRESHOLD = 5


@dataclass
class CompactDescriptor:
    lba: int
    free: int
    entries: list = field(default_factory=list)  # [(page_index, offset)]

    @property
    def cn(self):
        return len(self.entries)

    def nbytes(self):
        return DESC_HEADER + PAIR_SIZE * self.cn


def build_compact_block(payloads):
    """Pack delta payloads; returns (block bytes, entry offsets, free space)."""
    buf = bytearray(BLOCK_SIZE)
    pos = 0
    offsets = []
    for p in payloads:
        if pos + SIZE_FIELD + len(p) > BLOCK_SIZE:
            raise MetaFull("deltas do not fit in one compact block")
        struct.pack_into("<H", buf, pos, len(p))
        buf[pos + SIZE_FIELD:pos + SIZE_FIELD + len(p)] = p
        offsets.append(pos)
        pos += SIZE_FIELD + len(p)
    return bytes(buf), offsets, BLOCK_SIZE - pos


def read_compact_entry(block, offset):
    if offset + SIZE_FIELD > BLOCK_SIZE:
        raise CorruptMapping(f"delta offset {offset} outside compact block")
    (size,) = struct.unpack_from("<H", block, offset)
    if size == 0 or offset + SIZE_FIELD + size > BLOCK_SIZE:
        raise CorruptMapping(f"delta at offset {offset} runs past the block")
    return bytes(block[offset + SIZE_FIELD:offset + SIZE_FIELD + size])


def meta_nbytes(descriptors):
    return sum(d.nbytes() for d in descriptors) + 4


def pack_meta(descriptors):
    if meta_nbytes(descriptors) > BLOCK_SIZE:
        raise MetaFull("meta-block cannot hold every descriptor")
    buf = bytearray(BLOCK_SIZE)
    pos = 0
    for d in descriptors:
        if d.cn > MAX_CN:
            raise MetaFull("compact block holds more than 255 deltas")
        struct.pack_into("<IBH", buf, pos, d.lba, d.cn, d.free)
        pos += DESC_HEADER
        for pi, do in d.entries:
            struct.pack_into("<IH", buf, pos, pi, do)
            pos += PAIR_SIZE
    return bytes(buf)  # trailing zeros double as the terminator


def unpack_meta(buf):
    descriptors = []
    pos = 0
    while True:
        if pos + 4 > BLOCK_SIZE:
            raise CorruptMapping("meta-block lacks a terminator")
        (lba,) = struct.unpack_from("<I", buf, pos)
        if lba == 0:
            return descriptors
        if pos + DESC_HEADER > BLOCK_SIZE:
            raise CorruptMapping("truncated descriptor")
        _, cn, free = struct.unpack_from("<IBH", buf, pos)
        pos += DESC_HEADER
        if pos + PAIR_SIZE * cn > BLOCK_SIZE:
            raise CorruptMapping("descriptor pairs run past the meta-block")
        entries = [struct.unpack_from("<IH", buf, pos + PAIR_SIZE * i) for i in range(cn)]
        pos += PAIR_SIZE * cn
        descriptors.append(CompactDescriptor(lba, free, entries))


def lookup_delta_main(device, mid, page_index):
    """Resolve a page's delta through the on-flash meta-block."""
    for d in unpack_meta(device.read(mid)):
        for pi, do in d.entries:
            if pi == page_index:
                return read_compact_entry(device.read(d.lba), do)
    return None


def should_compact(pending, hotness, threshold=DEFAULT_THRESHOLD):
    """Only write-hot/read-cold files, and only at >= threshold:1 packing."""
    if hotness != HotnessClass.ReadColdWriteHot or len(pending) < threshold:
        return False
    return sum(len(e.payload) + SIZE_FIELD for e in pending) <= BLOCK_SIZE


@dataclass
class DcmState:
    """In-memory mirror of one file's meta-block."""

    mid: int | None = None
    descriptors: list = field(default_factory=list)
    dirty: bool = False
    retired: list = field(default_factory=list)  # LBAs to invalidate once the inode is durable

    @classmethod
    def load(cls, device, mid):
        if mid is None:
            return cls()
        return cls(mid, unpack_meta(device.read(mid)))

    def count(self):
        return sum(d.cn for d in self.descriptors)

    def locate(self, page_index):
        for d in self.descriptors:
            for pi, do in d.entries:
                if pi == page_index:
                    return d, do
        return None

    def lookup(self, device, page_index):
        hit = self.locate(page_index)
        if hit is None:
            return None
        d, do = hit
        return read_compact_entry(device.read(d.lba), do)

    def remove(self, page_index):
        """Drop a superseded mapping; an emptied compact block is retired."""
        hit = self.locate(page_index)
        if hit is None:
            return False
        d, do = hit
        d.entries.remove((page_index, do))
        if not d.entries:
            self.descriptors.remove(d)
            self.retired.append(d.lba)
        self.dirty = True
        return True

    def page_indexes(self):
        return [pi for d in self.descriptors for pi, _ in d.entries]

    def relocate(self, old, new):
        """Patch a moved compact block; returns True if this file owned it."""
        for d in self.descriptors:
            if d.lba == old:
                d.lba = new
                self.dirty = True
                return True
        return False

    def write_meta(self, device):
        """Persist the descriptors as a fresh meta-block (or retire it when empty)."""
        if self.mid is not None:
            self.retired.append(self.mid)
        if self.descriptors:
            self.mid = device.alloc_and_write(pack_meta(self.descriptors))
        else:
            self.mid = None
        self.dirty = False
        return self.mid


def compact(device, inode, state, pending):
    """Pack ``pending`` into a new compact block and rewrite the meta-block.

    Both blocks hit the device before returning.  The caller must persist the
    inode (its MID may have changed) and then invalidate ``state.retired``.
    """
    descriptors = state.descriptors + [CompactDescriptor(0, 0, [(e.page_index, 0) for e in pending])]
    if meta_nbytes(descriptors) > BLOCK_SIZE:
        raise MetaFull("meta-block has no room for another descriptor")
    block, offsets, free = build_compact_block([e.payload for e in pending])
    lba = device.alloc_and_write(block)
    desc = CompactDescriptor(lba, free, [(e.page_index, off) for e, off in zip(pending, offsets)])
    state.descriptors.append(desc)
    inode.mid = state.write_meta(device)
    inode.dirty = True
    return lba, desc


def restore_file(device, inode, state, cache, codec=DEFAULT_CODEC, sink=None):
    """Decompress every main-area delta of a file back into full pages.

    Pages already cached clean hold the current data and are simply dirtied.
    Others are rebuilt from their flash base and inserted dirty, or, when a
    ``sink`` dict is given, stored there as ``{page_index: bytes}`` for the
    caller to write directly (a file may hold more deltas than the cache has
    pages).  All compact blocks and the meta-block are queued in
    ``state.retired``.  Returns the number of pages restored.
    """
    restored = 0
    for d in state.descriptors:
        block = device.read(d.lba)
        for pi, do in d.entries:
            key = (inode.ino, pi)
            page = cache.peek(key)
            restored += 1
            if page is not None:
                cache.mark_dirty(key)
                continue
            base = device.read(inode.offsets[pi])
            data = delta_apply(base, read_compact_entry(block, do), codec)
            if sink is None:
                cache.insert(key, data, "dirty")
            else:
                sink[pi] = data
        state.retired.append(d.lba)
    state.descriptors = []
    if state.mid is not None:
        state.retired.append(state.mid)
    state.mid = None
    state.dirty = False
    inode.mid = None
    inode.dirty = True
    return restored
