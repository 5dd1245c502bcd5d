"""Brute-force reference model of the write path, used to cross-check replays.

It keeps every page's current bytes and flash bytes, computes each XOR and
its zero-run encoded size directly, and tracks inline capacity, main-area
batches, the page cache and block-write counts as plain arithmetic.  Nothing
here touches on-device byte layouts.  Segment cleaning is not modeled, so
predictions hold only while the real replay performs no relocations.
"""

from collections import OrderedDict

import numpy as np

from .hotness import Hcluster, HotnessClass
from .trace import resolve_payload

INLINE_BYTES = 3488
ENTRY_OVERHEAD = 3
COMPACT_OVERHEAD = 2
META_BYTES = 4096
NAME_SLOTS_PER_BLOCK = 64


def varint_len(v):
    return max(1, -(-int(v).bit_length() // 7))


def zero_run_size(a, b):
    """Encoded size of a XOR b under the zero-run token format."""
    x = np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)
    nz = np.flatnonzero(x)
    if nz.size == 0:
        return varint_len(len(x)) + 1
    breaks = np.flatnonzero(np.diff(nz) > 1)
    starts = np.concatenate(([nz[0]], nz[breaks + 1]))
    ends = np.concatenate((nz[breaks], [nz[-1]])) + 1
    gaps = starts - np.concatenate(([0], ends[:-1]))
    size = 0
    for g, s, e in zip(gaps.tolist(), starts.tolist(), ends.tolist()):
        size += varint_len(g) + varint_len(e - s) + (e - s)
    tail = len(x) - int(ends[-1])
    if tail:
        size += varint_len(tail) + 1
    return size


class _File:
    def __init__(self, ino):
        self.ino = ino
        self.flushed = 0
        self.appended = 0
        self.inline = []  # [(idx, size)] oldest first
        self.pending = []
        self.batches = []  # main-area compact blocks: [[(idx, size)], ...]
        self.has_mid = False
        self.meta_dirty = False
        self.inode_dirty = True
        self.listed = False
        self.next = None
        self.persisted = False

    def delta_bytes(self):
        return sum(s + ENTRY_OVERHEAD for _, s in self.inline)

    def free(self):
        return INLINE_BYTES - 4 * self.flushed - self.delta_bytes()

    def main_count(self):
        return sum(len(b) for b in self.batches)


class Oracle:
    """Predicts write outcomes, block-write totals and eviction stalls."""

    def __init__(self, config, bgres_interval=None):
        self.cfg = config
        self.lat = config.latency
        self.cap = config.cache_pages
        self.hot = Hcluster(config.hcluster_window, config.seed)
        self.bgres_interval = config.bgres_interval if bgres_interval is None else bgres_interval
        self.last_idle = 0
        self.now = 0
        self.files = {}
        self.by_ino = {}
        self.content = {}
        self.flash = {}
        self.cache = OrderedDict()  # (ino, idx) -> dirty flag
        self.dirty_order = OrderedDict()
        self.base_hits = 0
        self.base_misses = 0
        self.stalls = []
        self.outcomes = []
        self.name_dirty = set()
        self.sb_dirty = False
        self.next_ino = 1
        self.head = None
        self.writes = 1 + -(-config.max_inodes // NAME_SLOTS_PER_BLOCK)

    # -- cache model -------------------------------------------------------

    def _put(self, key, dirty):
        self.cache[key] = dirty
        self.cache.move_to_end(key)
        if dirty:
            self.dirty_order.setdefault(key, None)
        else:
            self.dirty_order.pop(key, None)
        while len(self.cache) > self.cap:
            victim = next((k for k in self.cache if k != key and not self.cache[k]), None)
            if victim is None:
                del self.cache[key]
                break
            del self.cache[victim]

    def _mark(self, key, dirty):
        if key in self.cache:
            self.cache[key] = dirty
        if dirty:
            self.dirty_order.setdefault(key, None)
        else:
            self.dirty_order.pop(key, None)

    def _base_lookup(self, key):
        if key in self.cache:
            self.cache.move_to_end(key)
            self.base_hits += 1
            return True
        self.base_misses += 1
        return False

    def _hr(self):
        n = self.base_hits + self.base_misses
        return self.base_hits / n if n else 0.0

    def _restore(self, key):
        hit = self._base_lookup(key)
        self.stalls.append(self.lat.gamma + self.lat.epsilon + (self.lat.lam if hit else self.lat.delta_miss))

    def _pressure(self, incoming):
        if len(self.dirty_order) + incoming > self.cap:
            self.flush_all()

    # -- delta bookkeeping ---------------------------------------------------

    def _drop(self, f, idx):
        for lst in (f.inline, f.pending):
            for i, (j, _) in enumerate(lst):
                if j == idx:
                    del lst[i]
                    if lst is f.inline:
                        f.inode_dirty = True
                    return
        for b in f.batches:
            for i, (j, _) in enumerate(b):
                if j == idx:
                    del b[i]
                    if not b:
                        f.batches.remove(b)
                    f.meta_dirty = True
                    return

    def _has_delta(self, f, idx):
        return any(j == idx for j, _ in f.inline + f.pending) or \
            any(j == idx for b in f.batches for j, _ in b)

    def _meta_size(self, batches):
        return sum(7 + 6 * len(b) for b in batches) + 4

    def _compact(self, f, entries):
        if self._meta_size(f.batches + [entries]) > META_BYTES:
            for idx, _ in entries:
                key = (f.ino, idx)
                if key in self.cache:
                    self._mark(key, True)
                else:
                    self._restore(key)
                    self._put(key, True)
            return False
        f.batches.append(list(entries))
        self.writes += 2  # compact block + meta-block
        f.has_mid = True
        f.meta_dirty = False
        if not f.listed:
            f.listed = True
            f.next = self.head
            self.head = f.ino
            self.sb_dirty = True
        self._write_inode(f)
        if self.sb_dirty:
            self._write_sb()
        return True

    def _write_sb(self):
        self.writes += 1
        self.sb_dirty = False

    def _unlink(self, f):
        prev = next((g for g in self.by_ino.values() if g.listed and g.next == f.ino), None)
        nxt, f.next, f.listed = f.next, None, False
        if prev is None:
            self.head = nxt
            self._write_sb()
        else:
            prev.next = nxt
            self._write_inode(prev)

    def _write_inode(self, f):
        if f.meta_dirty:
            if f.batches:
                self.writes += 1
            else:
                f.has_mid = False
            f.meta_dirty = False
        if not f.has_mid and f.listed:
            self._unlink(f)
        self.writes += 1
        f.inode_dirty = False
        f.persisted = True

    def _write_names(self):
        ready = {i for i in self.name_dirty if self.by_ino[i].persisted}
        self.writes += len({(i - 1) // NAME_SLOTS_PER_BLOCK for i in ready})
        self.name_dirty -= ready

    # -- operations ----------------------------------------------------------

    def create(self, path):
        ino = next(i for i in range(1, self.cfg.max_inodes + 1) if i not in self.by_ino)
        f = _File(ino)
        self.files[path] = f
        self.by_ino[ino] = f
        self.name_dirty.add(ino)
        if ino >= self.next_ino:
            self.next_ino = ino + 1
            self.sb_dirty = True

    def write(self, path, idx, payload):
        self._pressure(2)
        f = self.files[path]
        key = (f.ino, idx)
        self.hot.record_access(f.ino, "write", self.now)
        out = self._write(f, key, idx, payload)
        self.content[key] = payload
        self.outcomes.append(out)
        return out

    def _write(self, f, key, idx, payload):
        if idx == f.flushed + f.appended:
            f.appended += 1
            self._put(key, True)
            return "Appended"
        if not self.cfg.compression or key in self.dirty_order:
            self._drop(f, idx)
            self._put(key, True)
            return "PlainDirty"
        self._base_lookup(key)
        size = zero_run_size(self.flash[key], payload)
        self._drop(f, idx)
        if size > 255:
            self._put(key, True)
            return "PlainDirty"
        if size + ENTRY_OVERHEAD <= f.free():
            f.inline.append((idx, size))
            f.inode_dirty = True
            self._put(key, False)
            return "CompressedInline"

        victim = max(f.inline, key=lambda e: e[1]) if f.inline else None
        if victim is not None:
            spared = victim[1] - size
            alpha = self.lat.alpha
            if self.lat.live_alpha:
                alpha = f.delta_bytes() / len(f.inline)
            ben = spared / alpha * (self.lat.gamma - self.lat.beta)
            hr = self._hr()
            oh = self.lat.gamma + self.lat.epsilon + hr * self.lat.lam + (1 - hr) * self.lat.delta_miss
            if spared > 0 and ben > oh:
                f.inline.remove(victim)
                f.inline.append((idx, size))
                f.inode_dirty = True
                vkey = (f.ino, victim[0])
                self._restore(vkey)
                self._put(vkey, True)
                self._put(key, False)
                return "CompressedInline"

        if self.cfg.dcm and self.hot.classify(f.ino, self.now) == HotnessClass.ReadColdWriteHot:
            f.pending.append((idx, size))
            self._put(key, False)
            if self._batch_ok(f.pending, HotnessClass.ReadColdWriteHot):
                batch, f.pending = f.pending, []
                self._compact(f, batch)
            return "CompressedMain"
        self._put(key, True)
        return "PlainDirty"

    def _batch_ok(self, entries, cls):
        return (cls == HotnessClass.ReadColdWriteHot and len(entries) >= self.cfg.dcm_threshold
                and sum(s + COMPACT_OVERHEAD for _, s in entries) <= 4096)

    def read(self, path, idx):
        f = self.files[path]
        key = (f.ino, idx)
        self.hot.record_access(f.ino, "read", self.now)
        if key in self.cache:
            self.cache.move_to_end(key)
            return
        if self._has_delta(f, idx):
            self.base_misses += 1
        self._put(key, False)

    def _needs_flush(self, f):
        return (f.inode_dirty or f.meta_dirty or f.appended or f.pending or f.ino in self.name_dirty
                or any(k[0] == f.ino for k in self.dirty_order))

    def _fsync(self, f, extra=None):
        extra = set(extra or ())
        for idx, _ in f.pending:
            key = (f.ino, idx)
            if key in self.cache:
                self._mark(key, True)
            else:
                extra.add(idx)
        f.pending = []

        if f.appended:
            room = INLINE_BYTES - 4 * (f.flushed + f.appended)
            keep, used = 0, 0
            for _, s in f.inline:
                if used + s + ENTRY_OVERHEAD > room:
                    break
                used += s + ENTRY_OVERHEAD
                keep += 1
            evicted = f.inline[keep:]
            if evicted:
                del f.inline[keep:]
                f.inode_dirty = True
                cls = self.hot.classify(f.ino, self.now) if self.cfg.dcm else None
                if self.cfg.dcm and self._batch_ok(evicted, cls):
                    self._compact(f, evicted)
                else:
                    for idx, _ in evicted:
                        self._restore((f.ino, idx))
                        extra.add(idx)

        dirty = {k[1] for k in self.dirty_order if k[0] == f.ino}
        for idx in sorted(dirty | extra):
            key = (f.ino, idx)
            self.writes += 1
            self.flash[key] = self.content[key]
            if idx < f.flushed:
                f.inode_dirty = True
            else:
                f.flushed += 1
                f.appended -= 1
                f.inode_dirty = True
            if idx in extra:
                self._put(key, False)
            else:
                self._mark(key, False)

        if f.inode_dirty or f.meta_dirty:
            self._write_inode(f)
        if f.ino in self.name_dirty:
            self._write_names()

    def fsync(self, path):
        self._fsync(self.files[path])
        if self.sb_dirty:
            self._write_sb()

    def flush_all(self):
        for ino in sorted(self.by_ino):
            f = self.by_ino[ino]
            if self._needs_flush(f):
                self._fsync(f)
        if self.name_dirty:
            self._write_names()
        if self.sb_dirty:
            self._write_sb()

    def bgres(self):
        order, ino = [], self.head
        while ino:
            order.append(ino)
            ino = self.by_ino[ino].next
        for ino in order[:self.cfg.bgres_budget]:
            f = self.by_ino[ino]
            cls = self.hot.classify(ino, self.now)
            n = f.main_count()
            if cls.read_hot or n < self.cfg.dcm_threshold:
                rebuilt = set()
                for b in f.batches:
                    for idx, _ in b:
                        key = (ino, idx)
                        if key in self.cache:
                            self._mark(key, True)
                        else:
                            rebuilt.add(idx)
                f.batches = []
                f.has_mid = False
                f.meta_dirty = False
                f.inode_dirty = True
                self._fsync(f, rebuilt)
        if self.sb_dirty:
            self._write_sb()

    def step(self, rec):
        self.now = rec.tick
        if self.bgres_interval and rec.tick - self.last_idle >= self.bgres_interval:
            self.last_idle = rec.tick
            self.bgres()
        if rec.op == "create":
            self.create(rec.path)
        elif rec.op == "write":
            key = (self.files[rec.path].ino, rec.index)
            payload = resolve_payload(rec, self.content.get(key))
            return self.write(rec.path, rec.index, payload)
        elif rec.op == "read":
            self.read(rec.path, rec.index)
        elif rec.op == "fsync":
            self.fsync(rec.path)
        elif rec.op == "idle":
            self.last_idle = rec.tick
            self.bgres()
        else:
            raise NotImplementedError(f"oracle does not model {rec.op!r}")
        return None


def predict(records, config, bgres_interval=None):
    """(outcome names, predicted device block writes, modeled stalls)."""
    o = Oracle(config, bgres_interval)
    for rec in records:
        o.step(rec)
    o.flush_all()
    return o.outcomes, o.writes, o.stalls
