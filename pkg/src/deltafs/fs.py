"""Log-structured file system facade with inline and main-area delta compression.

On-device layout::

    fixed area (rewritten in place)            log (out-of-place)
    [superblock][name table][inode table]  |  data pages, meta-blocks, compact blocks

An updated page keeps two versions: the new data, clean in the page cache, and
the base, still valid on flash.  Only the compressed XOR between them is
persisted, inside the inode's inline area or in a compact block.
"""

import math
import struct
import zlib
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

from . import dcm
from .cache import CLEAN, DIRTY, PageCache
from .codec import DEFAULT_CODEC, delta_apply, delta_encode, recover_base
from .device import BLOCK_SIZE, FREE, INVALID, VALID, BlockDevice
from .errors import (
    CorruptDelta,
    CorruptInode,
    CorruptMapping,
    DeltaFSError,
    Exists,
    FileTooLarge,
    InvalidRead,
    MetaFull,
    NothingToClean,
    NotFound,
    OutOfRange,
)
from .hotness import Hcluster, HotnessClass
from .inline import MAX_DELTA, MAX_OFFSETS, DeltaEntry, InodeImage, LatencyModel, try_replace

SB_MAGIC = b"DFSB"
SB_VERSION = 1
NAME_SLOT = 64
NAME_MAX = NAME_SLOT - 5
SLOTS_PER_BLOCK = BLOCK_SIZE // NAME_SLOT


class WriteOutcome(str, Enum):
    COMPRESSED_INLINE = "CompressedInline"
    COMPRESSED_MAIN = "CompressedMain"
    PLAIN_DIRTY = "PlainDirty"
    APPENDED = "Appended"


@dataclass
class FSConfig:
    segment_count: int = 64
    blocks_per_segment: int = 512
    max_inodes: int = 1024
    cache_pages: int = 4096
    latency: LatencyModel = field(default_factory=LatencyModel)
    hcluster_window: int = 60_000
    dcm_threshold: int = 5
    bgres_budget: int = 16
    bgres_interval: int = 0  # ticks between implicit idle passes during replay; 0 = off
    gc_free_segments: int = 2
    compression: bool = True
    dcm: bool = True
    seed: int = 0

    @property
    def name_blocks(self):
        return math.ceil(self.max_inodes / SLOTS_PER_BLOCK)

    @property
    def reserved_segments(self):
        return math.ceil((1 + self.name_blocks + self.max_inodes) / self.blocks_per_segment)


@dataclass(frozen=True)
class FileHandle:
    ino: int
    path: str


@dataclass
class Superblock:
    segment_count: int
    blocks_per_segment: int
    reserved_segments: int
    max_inodes: int
    next_ino: int = 1
    bgres_head: int | None = None

    def to_bytes(self):
        buf = bytearray(BLOCK_SIZE)
        struct.pack_into("<4s7I", buf, 0, SB_MAGIC, SB_VERSION, self.segment_count,
                         self.blocks_per_segment, self.reserved_segments, self.max_inodes,
                         self.next_ino, self.bgres_head or 0)
        struct.pack_into("<I", buf, BLOCK_SIZE - 4, zlib.crc32(bytes(buf[:BLOCK_SIZE - 4])))
        return bytes(buf)

    @classmethod
    def from_bytes(cls, buf):
        magic, version, *fields = struct.unpack_from("<4s7I", buf, 0)
        (crc,) = struct.unpack_from("<I", buf, BLOCK_SIZE - 4)
        if magic != SB_MAGIC or version != SB_VERSION:
            raise CorruptInode("bad superblock magic")
        if crc != zlib.crc32(bytes(buf[:BLOCK_SIZE - 4])):
            raise CorruptInode("superblock checksum mismatch")
        sc, bps, rs, mi, nxt, head = fields
        return cls(sc, bps, rs, mi, nxt, head or None)


@dataclass
class RecoveryReport:
    files: int = 0
    pages: int = 0
    reconstructed: int = 0
    stale: list = field(default_factory=list)  # (path, index): reverted to an older durable version
    lost_files: list = field(default_factory=list)
    unrecoverable: list = field(default_factory=list)  # (path, index, reason)

    @property
    def ok(self):
        return not self.unrecoverable


@dataclass
class ConsistencyReport:
    violations: list = field(default_factory=list)
    checked_inodes: int = 0
    checked_deltas: int = 0

    @property
    def clean(self):
        return not self.violations

    def __str__(self):
        if self.clean:
            return f"clean ({self.checked_inodes} inodes, {self.checked_deltas} deltas)"
        return "\n".join(self.violations)


def _pack_name(ino, path):
    raw = path.encode()
    if len(raw) > NAME_MAX:
        raise ValueError(f"path longer than {NAME_MAX} bytes: {path!r}")
    return struct.pack("<IB", ino, len(raw)) + raw.ljust(NAME_MAX, b"\0")


class DeltaFS:
    def __init__(self, device, config, sb):
        self.device = device
        self.config = config
        self.codec = DEFAULT_CODEC
        self.sb = sb
        self.now = 0
        device.on_relocate = self._on_relocate

        self.cache = PageCache(config.cache_pages)
        self.outcomes = Counter()
        self.latency_us = 0.0
        self.stalls = []
        self.decisions = []
        self.compactions = 0
        self.bgres_restored_files = 0
        self._reset_volatile()

    def _reset_volatile(self):
        self.hot = Hcluster(self.config.hcluster_window, self.config.seed)
        self.inodes = {}
        self.dcm = {}
        self.names = {}
        self.paths = {}
        self.pending = {}
        self.appended = {}
        self.owner = {}  # data LBA -> (ino, page index)
        self.prev = {}  # BGRes list back-links, rebuilt from the on-flash next links
        self._sb_dirty = False
        self._name_dirty = set()
        self._reloc_dirty = set()
        self._persisted = set()  # inos with an inode image on flash

    # -- construction ----------------------------------------------------

    @classmethod
    def mkfs(cls, config=None, device=None):
        config = config or FSConfig()
        if device is None:
            device = BlockDevice(config.segment_count, config.blocks_per_segment,
                                 config.reserved_segments)
        else:
            device.reserved_segments = config.reserved_segments
        sb = Superblock(device.segment_count, device.blocks_per_segment,
                        config.reserved_segments, config.max_inodes)
        fs = cls(device, config, sb)
        fs._write_super()
        for blk in range(config.name_blocks):
            device.write_fixed(1 + blk, bytes(BLOCK_SIZE))
        return fs

    @classmethod
    def mount(cls, device, config=None):
        sb = Superblock.from_bytes(device.peek(0))
        config = replace(config or FSConfig(), segment_count=sb.segment_count,
                         blocks_per_segment=sb.blocks_per_segment, max_inodes=sb.max_inodes)
        if config.reserved_segments != sb.reserved_segments:
            raise CorruptInode("superblock geometry disagrees with itself")
        device.reserved_segments = sb.reserved_segments
        fs = cls(device, config, sb)
        fs._load()
        return fs

    def inode_lba(self, ino):
        return 1 + self.config.name_blocks + ino - 1

    def _read_names(self):
        names = {}
        for blk in range(self.config.name_blocks):
            raw = self.device.peek(1 + blk)
            for slot in range(SLOTS_PER_BLOCK):
                ino, n = struct.unpack_from("<IB", raw, slot * NAME_SLOT)
                if ino:
                    off = slot * NAME_SLOT + 5
                    names[raw[off:off + n].decode()] = ino
        return names

    def _load(self):
        self.sb = Superblock.from_bytes(self.device.read(0))
        self.names = self._read_names()
        self.paths = {ino: p for p, ino in self.names.items()}
        for ino in sorted(self.paths):
            inode = InodeImage.from_bytes(self.device.read(self.inode_lba(ino)))
            self.cache.stats.record("inode", False)
            self.inodes[ino] = inode
            self._persisted.add(ino)
            self.dcm[ino] = dcm.DcmState.load(self.device, inode.mid)
            self.appended[ino] = 0
            for idx, lba in enumerate(inode.offsets):
                self.owner[lba] = (ino, idx)
        ino, prev, seen = self.sb.bgres_head, None, set()
        while ino and ino not in seen and ino in self.inodes:
            seen.add(ino)
            self.prev[ino] = prev
            prev, ino = ino, self.inodes[ino].bgres_next

    # -- small helpers ---------------------------------------------------

    def _inode(self, ino):
        self.cache.stats.record("inode", True)
        return self.inodes[ino]

    def _handle(self, h):
        ino = h.ino if isinstance(h, FileHandle) else self.names.get(h)
        if ino not in self.inodes:
            raise NotFound(f"no such file: {h!r}")
        return ino

    def page_count(self, ino):
        return len(self.inodes[ino].offsets) + self.appended[ino]

    def stat(self, h):
        return self.page_count(self._handle(h)) * BLOCK_SIZE

    def open(self, path):
        if path not in self.names:
            raise NotFound(path)
        return FileHandle(self.names[path], path)

    def listdir(self):
        return sorted(self.names)

    def live_delta(self, ino, idx):
        """(location, payload) of the page's live delta, or None."""
        payload = self.inodes[ino].lookup_delta(idx)
        if payload is not None:
            return "inline", payload
        for e in self.pending.get(ino, ()):
            if e.page_index == idx:
                return "pending", e.payload
        payload = self.dcm[ino].lookup(self.device, idx)
        if payload is not None:
            return "main", payload
        return None

    def _drop_delta(self, ino, idx):
        if self.inodes[ino].remove_delta(idx):
            return "inline"
        pend = self.pending.get(ino, [])
        for i, e in enumerate(pend):
            if e.page_index == idx:
                del pend[i]
                return "pending"
        if self.dcm[ino].remove(idx):
            return "main"
        return None

    def _content(self, ino, idx):
        """Current page bytes without touching cache state or counters."""
        page = self.cache.peek((ino, idx))
        if page is not None:
            return page.payload
        base = self.device.peek(self.inodes[ino].offsets[idx])
        hit = self.live_delta(ino, idx)
        return delta_apply(base, hit[1], self.codec) if hit else base

    def _restore_page(self, ino, idx, payload):
        """Rebuild an evicted entry's page; returns (data, base_hit).

        A cached page already holds the data (its base is derivable in
        memory); otherwise the base comes from flash.
        """
        key = (ino, idx)
        page = self.cache.get(key, "base") if key in self.cache else None
        if page is not None:
            data, hit = page.payload, True
        else:
            self.cache.stats.record("base", False)
            base = self.device.read(self.inodes[ino].offsets[idx])
            data, hit = delta_apply(base, payload, self.codec), False
        stall = self.config.latency.restore_stall(hit)
        self.stalls.append(stall)
        self.latency_us += stall
        return data, hit

    def _pressure(self, incoming):
        if self.cache.dirty_count() + incoming > self.cache.capacity:
            self.flush_all()

    # -- namespace -------------------------------------------------------

    def create(self, path):
        if path in self.names:
            raise Exists(path)
        _pack_name(0, path)
        ino = next((i for i in range(1, self.config.max_inodes + 1) if i not in self.inodes), None)
        if ino is None:
            raise FileTooLarge("inode table full")
        inode = InodeImage(ino, dirty=True)
        self.inodes[ino] = inode
        self.dcm[ino] = dcm.DcmState()
        self.appended[ino] = 0
        self.names[path] = ino
        self.paths[ino] = path
        self._name_dirty.add(ino)
        if ino >= self.sb.next_ino:
            self.sb.next_ino = ino + 1
            self._sb_dirty = True
        return FileHandle(ino, path)

    def delete(self, h):
        ino = self._handle(h)
        path = self.paths[ino]
        inode = self.inodes[ino]
        if ino in self.prev:
            self._unlink(ino)
        del self.names[path]
        del self.paths[ino]
        self._name_dirty.add(ino)
        self._write_names()
        state = self.dcm.pop(ino)
        doomed = list(inode.offsets) + [d.lba for d in state.descriptors] + state.retired
        if state.mid is not None:
            doomed.append(state.mid)
        for lba in doomed:
            self.owner.pop(lba, None)
            self.device.invalidate(lba)
        del self.inodes[ino]
        self.pending.pop(ino, None)
        self.appended.pop(ino, None)
        self.cache.drop_inode(ino)
        self.hot.forget(ino)
        self._reloc_dirty.discard(ino)
        self._persisted.discard(ino)
        self._settle()

    # -- write path ------------------------------------------------------

    def write_page(self, h, idx, payload):
        if len(payload) != BLOCK_SIZE:
            raise ValueError(f"payload must be {BLOCK_SIZE} bytes")
        ino = self._handle(h)
        n = self.page_count(ino)
        if not 0 <= idx <= n:
            raise OutOfRange(f"page {idx} of a {n}-page file")
        if idx == n and n >= MAX_OFFSETS:
            raise FileTooLarge(f"files are capped at {MAX_OFFSETS} pages")
        self._pressure(2)
        outcome = self._write(ino, idx, bytes(payload))
        self.outcomes[outcome] += 1
        lat = self.config.latency
        self.latency_us += lat.beta if outcome in (WriteOutcome.COMPRESSED_INLINE,
                                                   WriteOutcome.COMPRESSED_MAIN) else lat.gamma
        self._settle()
        return outcome

    def _write(self, ino, idx, payload):
        inode = self._inode(ino)
        key = (ino, idx)
        self.hot.record_access(ino, "write", self.now)
        if idx == self.page_count(ino):
            self.appended[ino] += 1
            self.cache.insert(key, payload, DIRTY)
            return WriteOutcome.APPENDED

        page = self.cache.peek(key)
        if not self.config.compression or (page is not None and self.cache.is_dirty(key)):
            self._drop_delta(ino, idx)
            self.cache.insert(key, payload, DIRTY)
            return WriteOutcome.PLAIN_DIRTY

        hit = self.live_delta(ino, idx)
        if page is not None:
            self.cache.get(key, "base")
            base = recover_base(page.payload, hit[1], self.codec) if hit else page.payload
        else:
            self.cache.stats.record("base", False)
            base = self.device.read(inode.offsets[idx])
        delta = delta_encode(base, payload, self.codec)
        self._drop_delta(ino, idx)
        if len(delta) > MAX_DELTA:
            self.cache.insert(key, payload, DIRTY)
            return WriteOutcome.PLAIN_DIRTY

        if inode.insert_delta(idx, delta):
            self.cache.insert(key, payload, CLEAN)
            return WriteOutcome.COMPRESSED_INLINE

        candidate = DeltaEntry(idx, delta)
        decision = try_replace(inode, candidate, self.config.latency, self.cache.stats.base_hr)
        self.decisions.append(decision)
        if decision.replaced:
            victim = decision.evicted
            data, _ = self._restore_page(ino, victim.page_index, victim.payload)
            self.cache.insert((ino, victim.page_index), data, DIRTY)
            self.cache.insert(key, payload, CLEAN)
            return WriteOutcome.COMPRESSED_INLINE

        if self.config.dcm and self.hot.classify(ino, self.now) == HotnessClass.ReadColdWriteHot:
            pend = self.pending.setdefault(ino, [])
            pend.append(candidate)
            self.cache.insert(key, payload, CLEAN)
            if dcm.should_compact(pend, HotnessClass.ReadColdWriteHot, self.config.dcm_threshold):
                self.pending[ino] = []
                self._compact(ino, pend)
            return WriteOutcome.COMPRESSED_MAIN

        self.cache.insert(key, payload, DIRTY)
        return WriteOutcome.PLAIN_DIRTY

    def _compact(self, ino, entries):
        """Move entries into a compact block; on MetaFull their pages go dirty."""
        inode = self.inodes[ino]
        state = self.dcm[ino]
        try:
            dcm.compact(self.device, inode, state, entries)
        except MetaFull:
            for e in entries:
                key = (ino, e.page_index)
                if key in self.cache:
                    self.cache.mark_dirty(key)
                else:
                    data, _ = self._restore_page(ino, e.page_index, e.payload)
                    self.cache.insert(key, data, DIRTY)
            return False
        self.compactions += 1
        if ino not in self.prev:
            head = self.sb.bgres_head
            inode.bgres_next = head
            if head:
                self.prev[head] = ino
            self.prev[ino] = None
            self.sb.bgres_head = ino
            self._sb_dirty = True
        self._write_inode(ino)
        if self._sb_dirty:
            self._write_super()
        return True

    # -- read path -------------------------------------------------------

    def read_page(self, h, idx):
        ino = self._handle(h)
        n = self.page_count(ino)
        if not 0 <= idx < n:
            raise OutOfRange(f"page {idx} of a {n}-page file")
        self._inode(ino)
        self.hot.record_access(ino, "read", self.now)
        key = (ino, idx)
        lat = self.config.latency
        page = self.cache.get(key, "data")
        if page is not None:
            self.latency_us += lat.lam
            return page.payload
        hit = self.live_delta(ino, idx)
        base = self.device.read(self.inodes[ino].offsets[idx])
        if hit:
            self.cache.stats.record("base", False)
            data = delta_apply(base, hit[1], self.codec)
            self.latency_us += lat.delta_miss + lat.epsilon
        else:
            data = base
            self.latency_us += lat.delta_miss
        self.cache.insert(key, data, CLEAN)
        return data

    # -- flushing --------------------------------------------------------

    def _write_super(self):
        self.device.write_fixed(0, self.sb.to_bytes())
        self._sb_dirty = False

    def _write_names(self):
        """Write name-table blocks; a name is published only once its inode is on flash."""
        ready = {i for i in self._name_dirty if i in self._persisted or i not in self.paths}
        for blk in sorted({(ino - 1) // SLOTS_PER_BLOCK for ino in ready}):
            buf = bytearray(BLOCK_SIZE)
            for slot in range(SLOTS_PER_BLOCK):
                ino = blk * SLOTS_PER_BLOCK + slot + 1
                if ino in self.paths and ino in self._persisted:
                    buf[slot * NAME_SLOT:(slot + 1) * NAME_SLOT] = _pack_name(ino, self.paths[ino])
            self.device.write_fixed(1 + blk, bytes(buf))
        self._name_dirty -= ready

    def _unlink(self, ino):
        """Drop a file from the BGRes list, persisting the patched neighbour."""
        prev = self.prev.pop(ino)
        nxt = self.inodes[ino].bgres_next
        self.inodes[ino].bgres_next = None
        self.inodes[ino].dirty = True
        if nxt:
            self.prev[nxt] = prev
        if prev is None:
            self.sb.bgres_head = nxt
            self._write_super()
        else:
            self.inodes[prev].bgres_next = nxt
            self._write_inode(prev)

    def _write_inode(self, ino):
        inode = self.inodes[ino]
        state = self.dcm[ino]
        if state.dirty:
            state.write_meta(self.device)
            inode.mid = state.mid
        if inode.mid is None and ino in self.prev:
            self._unlink(ino)
        self.device.write_fixed(self.inode_lba(ino), inode.to_bytes())
        self._persisted.add(ino)
        inode.dirty = False
        self._reloc_dirty.discard(ino)
        retired, state.retired = state.retired, []
        for lba in retired:
            self.device.invalidate(lba)

    def _needs_flush(self, ino):
        state = self.dcm[ino]
        return (self.inodes[ino].dirty or state.dirty or state.retired or self.appended[ino]
                or self.pending.get(ino) or ino in self._name_dirty
                or self.cache.dirty_keys(ino))

    def fsync(self, h):
        ino = self._handle(h)
        before = self.device.write_count
        self._fsync(ino)
        if self._sb_dirty:
            self._write_super()
        self._settle()
        return self.device.write_count - before

    def _fsync(self, ino, extra=None):
        inode = self.inodes[ino]
        extra = dict(extra or {})
        # gated-out main-area candidates fall back to ordinary writes
        for e in self.pending.pop(ino, []):
            key = (ino, e.page_index)
            if key in self.cache:
                self.cache.mark_dirty(key)
            else:
                base = self.device.peek(inode.offsets[e.page_index])
                extra[e.page_index] = delta_apply(base, e.payload, self.codec)

        grow = self.appended[ino]
        if grow:
            evicted = inode.evict_contending(len(inode.offsets) + grow)
            if evicted:
                cls = self.hot.classify(ino, self.now) if self.config.dcm else None
                if self.config.dcm and dcm.should_compact(evicted, cls, self.config.dcm_threshold):
                    self._compact(ino, evicted)  # on MetaFull the pages are dirtied in place
                else:
                    for e in evicted:
                        data, _ = self._restore_page(ino, e.page_index, e.payload)
                        extra[e.page_index] = data

        writes = {k[1]: self.cache.peek(k).payload for k in self.cache.dirty_keys(ino)}
        writes.update(extra)
        for idx in sorted(writes):
            lba = self.device.alloc_and_write(writes[idx])
            if idx < len(inode.offsets):
                old = inode.offsets[idx]
                inode.offsets[idx] = lba
                inode.dirty = True
                self.owner.pop(old, None)
                self.device.invalidate(old)
            else:
                inode.append_offset(lba)
                self.appended[ino] -= 1
            self.owner[lba] = (ino, idx)
            key = (ino, idx)
            if idx in extra:
                self.cache.insert(key, writes[idx], CLEAN)
            else:
                self.cache.mark_clean(key)

        state = self.dcm[ino]
        if inode.dirty or state.dirty or state.retired:
            self._write_inode(ino)
        if ino in self._name_dirty:
            self._write_names()

    def flush_all(self):
        before = self.device.write_count
        for ino in sorted(self.inodes):
            if self._needs_flush(ino):
                self._fsync(ino)
        if self._name_dirty:
            self._write_names()
        if self._sb_dirty:
            self._write_super()
        self._settle()
        return self.device.write_count - before

    def sync_files(self):
        return [self.paths[i] for i in sorted(self.inodes) if self._needs_flush(i)]

    # -- cleaning support ------------------------------------------------

    def _on_relocate(self, old, new):
        if old in self.owner:
            ino, idx = self.owner.pop(old)
            self.owner[new] = (ino, idx)
            self.inodes[ino].offsets[idx] = new
            self.inodes[ino].dirty = True
            self._reloc_dirty.add(ino)
            return
        for ino, state in self.dcm.items():
            if state.mid == old:
                state.mid = new
                self.inodes[ino].mid = new
                self.inodes[ino].dirty = True
                self._reloc_dirty.add(ino)
                return
            if state.relocate(old, new):
                self._reloc_dirty.add(ino)
                return
            if old in state.retired:
                state.retired[state.retired.index(old)] = new
                return
        raise CorruptMapping(f"cleaning moved unowned block {old}")

    def _settle(self):
        """Persist every inode whose blocks were moved by segment cleaning."""
        while self._reloc_dirty:
            self._write_inode(min(self._reloc_dirty))

    def clean(self):
        reclaimed = self.device.clean_segment()
        self._settle()
        return reclaimed

    # -- background restoration -------------------------------------------

    def bgres_list(self):
        out, ino, seen = [], self.sb.bgres_head, set()
        while ino and ino not in seen:
            seen.add(ino)
            out.append(ino)
            ino = self.inodes[ino].bgres_next
        return out

    def run_bgres(self, budget=None):
        """Restore main-area deltas of read-hot or sparsely compacted files."""
        budget = self.config.bgres_budget if budget is None else budget
        restored = 0
        for ino in self.bgres_list()[:budget]:
            state = self.dcm[ino]
            cls = self.hot.classify(ino, self.now)
            if cls.read_hot or state.count() < self.config.dcm_threshold:
                rebuilt = {}
                dcm.restore_file(self.device, self.inodes[ino], state, self.cache,
                                 self.codec, sink=rebuilt)
                self._fsync(ino, rebuilt)
                restored += 1
        if self._sb_dirty:
            self._write_super()
        self._settle()
        self.bgres_restored_files += restored
        return restored

    def idle(self):
        """Idle-time work: BGRes, then cleaning if free segments run low."""
        restored = self.run_bgres()
        reclaimed = 0
        if self.device.free_segments() < self.config.gc_free_segments:
            try:
                reclaimed = self.clean()
            except NothingToClean:
                pass
        return restored, reclaimed

    # -- crash and recovery ----------------------------------------------

    def snapshot(self):
        """{(path, index): bytes} for every page, from memory, without side effects."""
        out = {}
        for ino, path in self.paths.items():
            for idx in range(self.page_count(ino)):
                out[(path, idx)] = self._content(ino, idx)
        return out

    def crash_and_recover(self):
        expected = self.snapshot()
        self.cache.clear()
        self._reset_volatile()
        self.device.on_relocate = self._on_relocate
        self._load()

        report = RecoveryReport(files=len(self.inodes))
        seen_paths = set()
        for ino, path in sorted(self.paths.items()):
            seen_paths.add(path)
            inode = self.inodes[ino]
            for idx, lba in enumerate(inode.offsets):
                report.pages += 1
                try:
                    base = self.device.read(lba)
                    hit = self.live_delta(ino, idx)
                    data = delta_apply(base, hit[1], self.codec) if hit else base
                except DeltaFSError as exc:
                    report.unrecoverable.append((path, idx, type(exc).__name__))
                    continue
                if hit:
                    report.reconstructed += 1
                    self.cache.insert((ino, idx), data, CLEAN)
                if expected.get((path, idx)) != data:
                    report.stale.append((path, idx))
        for path, idx in expected:
            if path not in seen_paths and path not in report.lost_files:
                report.lost_files.append(path)
            elif path in seen_paths and idx >= len(self.inodes[self.names[path]].offsets):
                report.stale.append((path, idx))
        return report

    # -- consistency check -------------------------------------------------

    def fsck(self):
        rep = ConsistencyReport()
        bad = rep.violations.append
        dev = self.device
        try:
            sb = Superblock.from_bytes(dev.peek(0))
        except CorruptInode as exc:
            bad(f"superblock: {exc}")
            return rep

        valid, invalid, free = dev.counts()
        if valid + invalid + free != dev.capacity:
            bad("device: block states do not sum to capacity")

        refs = Counter()
        inodes = {}
        for path, ino in self._read_names().items():
            try:
                inode = InodeImage.from_bytes(dev.peek(self.inode_lba(ino)))
            except CorruptInode as exc:
                bad(f"inode {ino} ({path}): {exc}")
                continue
            if inode.ino != ino:
                bad(f"inode {ino}: slot holds inode {inode.ino}")
            try:
                inode.check_layout()
            except CorruptInode as exc:
                bad(str(exc))
            inodes[ino] = inode
            rep.checked_inodes += 1
            for idx, lba in enumerate(inode.offsets):
                refs[lba] += 1
                if lba < dev.first_log_lba or not dev.is_valid(lba):
                    bad(f"inode {ino}: page {idx} base at LBA {lba} is not valid")
            for e in inode.deltas:
                rep.checked_deltas += 1
                self._fsck_delta(bad, inode, e.page_index, e.payload, "inline")

            if inode.mid is None:
                continue
            refs[inode.mid] += 1
            if not dev.is_valid(inode.mid):
                bad(f"inode {ino}: dangling MID {inode.mid}")
                continue
            try:
                descriptors = dcm.unpack_meta(dev.peek(inode.mid))
            except CorruptMapping as exc:
                bad(f"inode {ino}: meta-block {exc}")
                continue
            if not descriptors:
                bad(f"inode {ino}: empty meta-block still referenced")
            inline_idx = {e.page_index for e in inode.deltas}
            for d in descriptors:
                refs[d.lba] += 1
                if not dev.is_valid(d.lba):
                    bad(f"inode {ino}: compact block {d.lba} is not valid")
                    continue
                if d.cn == 0:
                    bad(f"inode {ino}: descriptor for {d.lba} has no deltas")
                block = dev.peek(d.lba)
                spans = []
                for pi, do in d.entries:
                    rep.checked_deltas += 1
                    try:
                        payload = dcm.read_compact_entry(block, do)
                    except CorruptMapping as exc:
                        bad(f"inode {ino}: page {pi}: {exc}")
                        continue
                    spans.append((do, do + dcm.SIZE_FIELD + len(payload)))
                    if pi in inline_idx:
                        bad(f"inode {ino}: page {pi} has both inline and main deltas")
                    self._fsck_delta(bad, inode, pi, payload, "main")
                spans.sort()
                if any(b[0] < a[1] for a, b in zip(spans, spans[1:])):
                    bad(f"inode {ino}: overlapping entries in compact block {d.lba}")
                if spans and spans[-1][1] > BLOCK_SIZE - d.free:
                    bad(f"inode {ino}: compact block {d.lba} entries exceed its FS field")

        # BGRes list integrity
        listed, ino = [], sb.bgres_head
        while ino:
            if ino in listed:
                bad(f"bgres: cycle at inode {ino}")
                break
            if ino not in inodes:
                bad(f"bgres: list references missing inode {ino}")
                break
            listed.append(ino)
            ino = inodes[ino].bgres_next
        for i, inode in inodes.items():
            if (inode.mid is not None) != (i in listed):
                bad(f"bgres: inode {i} main-area state and list membership disagree")

        for lba, n in refs.items():
            if n > 1:
                bad(f"LBA {lba} referenced {n} times")
        lo = dev.first_log_lba
        for lba in range(lo, dev.capacity):
            if dev.state[lba] == VALID and lba not in refs:
                bad(f"LBA {lba} is valid but unreferenced")

        for ino, idx in self.cache.dirty_keys():
            if ino in self.inodes and self.live_delta(ino, idx) is not None:
                bad(f"page ({ino}, {idx}) is dirty while a delta references it")
        return rep

    def _fsck_delta(self, bad, inode, idx, payload, where):
        if idx >= len(inode.offsets):
            bad(f"inode {inode.ino}: {where} delta for page {idx} beyond file end")
            return
        lba = inode.offsets[idx]
        if not self.device.is_valid(lba):
            return  # already reported as an invalid base
        try:
            delta_apply(self.device.peek(lba), payload, self.codec)
        except CorruptDelta as exc:
            bad(f"inode {inode.ino}: {where} delta for page {idx}: {exc}")


__all__ = [
    "DeltaFS", "FSConfig", "FileHandle", "WriteOutcome", "RecoveryReport",
    "ConsistencyReport", "Superblock", "InvalidRead", "FREE", "INVALID",
]
