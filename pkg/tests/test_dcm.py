import numpy as np
import pytest

from deltafs import dcm
from deltafs.cache import PageCache
from deltafs.codec import delta_encode
from deltafs.device import BlockDevice
from deltafs.errors import CorruptMapping, MetaFull
from deltafs.hotness import HotnessClass
from deltafs.inline import DeltaEntry, InodeImage

RCWH = HotnessClass.ReadColdWriteHot


def entries(n, size=100, start=0):
    return [DeltaEntry(start + i, bytes([i + 1]) * size) for i in range(n)]


def test_should_compact_gate():
    assert dcm.should_compact(entries(5, 10), RCWH)
    assert not dcm.should_compact(entries(5, 10), HotnessClass.ReadHotWriteHot)
    assert not dcm.should_compact(entries(4, 10), RCWH)
    assert not dcm.should_compact(entries(20, 250), RCWH)


def test_compact_block_layout():
    block, offsets, free = dcm.build_compact_block([e.payload for e in entries(5)])
    assert free == 4096 - 510 and offsets == [0, 102, 204, 306, 408]
    assert block[510:] == bytes(4096 - 510)
    assert dcm.read_compact_entry(block, 204) == bytes([3]) * 100


def setup_file(n_pages=12):
    dev = BlockDevice(4, blocks_per_segment=64)
    inode = InodeImage(5)
    rng = np.random.default_rng(0)
    bases, news = {}, {}
    for i in range(n_pages):
        base = rng.integers(0, 256, 4096, dtype=np.uint8).tobytes()
        inode.append_offset(dev.alloc_and_write(base))
        new = bytearray(base)
        new[i * 10:i * 10 + 30] = bytes(30)
        bases[i], news[i] = base, bytes(new)
    return dev, inode, bases, news


def test_compact_and_lookup():
    dev, inode, bases, news = setup_file()
    state = dcm.DcmState()
    batch = [DeltaEntry(i, delta_encode(bases[i], news[i])) for i in range(5)]
    lba, desc = dcm.compact(dev, inode, state, batch)
    assert inode.mid is not None and desc.cn == 5
    assert desc.free == 4096 - sum(len(e.payload) + 2 for e in batch)
    first = inode.mid
    batch2 = [DeltaEntry(i, delta_encode(bases[i], news[i])) for i in range(5, 10)]
    dcm.compact(dev, inode, state, batch2)
    assert state.retired == [first]
    descs = dcm.unpack_meta(dev.read(inode.mid))
    assert len(descs) == 2 and descs[0] == desc
    for e in batch + batch2:
        assert dcm.lookup_delta_main(dev, inode.mid, e.page_index) == e.payload
    assert dcm.lookup_delta_main(dev, inode.mid, 11) is None


def test_corrupt_offset_detected():
    block, _, _ = dcm.build_compact_block([b"x" * 10])
    with pytest.raises(CorruptMapping):
        dcm.read_compact_entry(block, 5000)
    with pytest.raises(CorruptMapping):
        dcm.read_compact_entry(block, 4095)


def test_meta_full():
    many = [dcm.CompactDescriptor(100 + i, 0, [(j, 0) for j in range(20)]) for i in range(40)]
    with pytest.raises(MetaFull):
        dcm.pack_meta(many)


def test_meta_roundtrip_bit_exact():
    rng = np.random.default_rng(3)
    for _ in range(50):
        descs = [dcm.CompactDescriptor(int(rng.integers(1, 2**32)), int(rng.integers(0, 4096)),
                                       [(int(rng.integers(0, 2**32)), int(rng.integers(0, 4096)))
                                        for _ in range(int(rng.integers(1, 30)))])
                 for _ in range(int(rng.integers(0, 8)))]
        raw = dcm.pack_meta(descs)
        assert dcm.unpack_meta(raw) == descs
        assert dcm.pack_meta(dcm.unpack_meta(raw)) == raw


def test_restore_file():
    dev, inode, bases, news = setup_file()
    state = dcm.DcmState()
    dcm.compact(dev, inode, state, [DeltaEntry(i, delta_encode(bases[i], news[i])) for i in range(5)])
    cache = PageCache(16)
    assert dcm.restore_file(dev, inode, state, cache) == 5
    assert inode.mid is None and state.count() == 0
    for i in range(5):
        assert cache.peek((5, i)).payload == news[i] and cache.is_dirty((5, i))
    assert dcm.restore_file(dev, inode, state, cache) == 0


def test_remove_retires_empty_block():
    dev, inode, bases, news = setup_file()
    state = dcm.DcmState()
    lba, _ = dcm.compact(dev, inode, state, [DeltaEntry(i, delta_encode(bases[i], news[i])) for i in range(5)])
    state.retired.clear()
    for i in range(5):
        assert state.remove(i)
    assert state.retired == [lba] and state.dirty
    state.write_meta(dev)
    assert state.mid is None
