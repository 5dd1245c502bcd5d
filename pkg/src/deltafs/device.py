"""Simulated flash address space: segments, out-of-place log writes, cleaning.

Segments ``[0, reserved_segments)`` form a fixed-location metadata area that is
rewritten in place (superblock, name table, inode table), the way F2FS keeps
its checkpoint and NAT outside the main log.  Everything else is the log.
"""

import struct

import numpy as np

from .errors import DeviceFull, ImageFormatError, InvalidRead, InvalidState, NothingToClean

BLOCK_SIZE = 4096
IMAGE_MAGIC = b"DFSIMG01"

FREE, VALID, INVALID = 0, 1, 2


class BlockDevice:
    def __init__(self, segment_count, blocks_per_segment=512, reserved_segments=0,
                 on_relocate=None):
        if segment_count <= reserved_segments:
            raise ValueError("device needs at least one log segment")
        self.block_size = BLOCK_SIZE
        self.blocks_per_segment = blocks_per_segment
        self.segment_count = segment_count
        self.reserved_segments = reserved_segments
        self.on_relocate = on_relocate

        n = segment_count * blocks_per_segment
        self.blocks = {}
        self.state = np.zeros(n, dtype=np.uint8)
        self.stamp = np.zeros(n, dtype=np.int64)
        self._seq = 0
        self._active = None
        self._cursor = 0

        self.write_count = 0
        self.read_count = 0
        self.erase_count = 0
        self.relocations = 0

    @property
    def capacity(self):
        return self.state.size

    @property
    def first_log_lba(self):
        return self.reserved_segments * self.blocks_per_segment

    def segment_of(self, lba):
        return lba // self.blocks_per_segment

    def counts(self):
        """(valid, invalid, free) block totals."""
        c = np.bincount(self.state, minlength=3)
        return int(c[VALID]), int(c[INVALID]), int(c[FREE])

    def _check_payload(self, payload):
        if len(payload) != BLOCK_SIZE:
            raise ValueError(f"payload must be {BLOCK_SIZE} bytes, got {len(payload)}")

    def _store(self, lba, payload):
        self.blocks[lba] = bytes(payload)
        self.state[lba] = VALID
        self._seq += 1
        self.stamp[lba] = self._seq
        self.write_count += 1

    # -- log allocation -------------------------------------------------

    def _segment_states(self, seg):
        lo = seg * self.blocks_per_segment
        return self.state[lo:lo + self.blocks_per_segment]

    def _open_segment(self):
        for seg in range(self.reserved_segments, self.segment_count):
            if not self._segment_states(seg).any():
                self._active = seg
                self._cursor = 0
                return True
        return False

    def _next_lba(self):
        if self._active is None or self._cursor >= self.blocks_per_segment:
            self._active = None
            if not self._open_segment():
                return None
        lba = self._active * self.blocks_per_segment + self._cursor
        self._cursor += 1
        return lba

    def alloc_and_write(self, payload):
        self._check_payload(payload)
        lba = self._next_lba()
        if lba is None:
            try:
                self.clean_segment()
            except NothingToClean:
                raise DeviceFull("no free block and nothing to clean") from None
            lba = self._next_lba()
            if lba is None:
                raise DeviceFull("cleaning yielded no free block")
        self._store(lba, payload)
        return lba

    def write_fixed(self, lba, payload):
        """In-place write inside the reserved metadata area."""
        self._check_payload(payload)
        if not 0 <= lba < self.first_log_lba:
            raise InvalidState(f"LBA {lba} is not in the fixed area")
        self._store(lba, payload)

    def read(self, lba):
        if not 0 <= lba < self.capacity or self.state[lba] != VALID:
            raise InvalidRead(f"LBA {lba} is not valid")
        self.read_count += 1
        return self.blocks[lba]

    def peek(self, lba):
        """Raw stored bytes regardless of state; does not count as a read."""
        return self.blocks.get(lba, bytes(BLOCK_SIZE))

    def is_valid(self, lba):
        return 0 <= lba < self.capacity and self.state[lba] == VALID

    def invalidate(self, lba):
        if not 0 <= lba < self.capacity or self.state[lba] != VALID:
            raise InvalidState(f"LBA {lba} is not valid")
        if lba < self.first_log_lba:
            raise InvalidState(f"LBA {lba} is in the fixed area")
        self.state[lba] = INVALID

    # -- cleaning -------------------------------------------------------

    def free_segments(self):
        return sum(1 for seg in range(self.reserved_segments, self.segment_count)
                   if not self._segment_states(seg).any())

    def clean_segment(self):
        """Greedy cleaning: erase the segment with the most invalid blocks.

        Valid blocks are copied back into the log and reported through
        ``on_relocate(old_lba, new_lba)``.  Returns the number of blocks freed.
        """
        best, best_invalid = None, 0
        for seg in range(self.reserved_segments, self.segment_count):
            n_invalid = int(np.count_nonzero(self._segment_states(seg) == INVALID))
            if n_invalid > best_invalid:
                best, best_invalid = seg, n_invalid
        if best is None:
            raise NothingToClean("no segment holds an invalid block")

        lo = best * self.blocks_per_segment
        survivors = [(lba, self.blocks[lba])
                     for lba in range(lo, lo + self.blocks_per_segment)
                     if self.state[lba] == VALID]
        for lba in range(lo, lo + self.blocks_per_segment):
            self.blocks.pop(lba, None)
        self._segment_states(best)[:] = FREE
        self.stamp[lo:lo + self.blocks_per_segment] = 0
        self.erase_count += 1
        if self._active == best:
            self._active = None

        for old, payload in survivors:
            new = self._next_lba()
            self._store(new, payload)
            self.relocations += 1
            if self.on_relocate is not None:
                self.on_relocate(old, new)
        return best_invalid

    # -- image persistence ----------------------------------------------

    def _bitmap(self):
        n = self.capacity
        padded = np.zeros(-(-n // 4) * 4, dtype=np.uint8)
        padded[:n] = self.state
        quads = padded.reshape(-1, 4)
        return (quads[:, 0] | quads[:, 1] << 2 | quads[:, 2] << 4 | quads[:, 3] << 6).astype(np.uint8)

    def save(self, path):
        zero = bytes(BLOCK_SIZE)
        with open(path, "wb") as fh:
            fh.write(IMAGE_MAGIC + struct.pack("<II", BLOCK_SIZE, self.segment_count))
            for lba in range(self.capacity):
                fh.write(self.blocks.get(lba, zero))
            fh.write(self._bitmap().tobytes())

    @classmethod
    def load(cls, path, reserved_segments=0, on_relocate=None):
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < 16 or raw[:8] != IMAGE_MAGIC:
            raise ImageFormatError("bad image magic")
        block_size, segment_count = struct.unpack_from("<II", raw, 8)
        if block_size != BLOCK_SIZE or segment_count == 0:
            raise ImageFormatError("unsupported geometry")
        body = len(raw) - 16
        n = (body * 4) // (4 * BLOCK_SIZE + 1)
        while n > 0 and n * BLOCK_SIZE + -(-n // 4) > body:
            n -= 1
        if n * BLOCK_SIZE + -(-n // 4) != body or n % segment_count:
            raise ImageFormatError("image size does not match its header")
        dev = cls(segment_count, n // segment_count, reserved_segments, on_relocate)
        bitmap = np.frombuffer(raw, dtype=np.uint8, offset=16 + n * BLOCK_SIZE)
        states = np.stack([(bitmap >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)[:n]
        if (states > INVALID).any():
            raise ImageFormatError("bad validity bitmap")
        dev.state[:] = states
        for lba in np.flatnonzero(states != FREE).tolist():
            off = 16 + lba * BLOCK_SIZE
            dev.blocks[lba] = raw[off:off + BLOCK_SIZE]
        return dev
