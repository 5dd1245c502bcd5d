import numpy as np
import pytest

from deltafs.codec import delta_encode
from deltafs.errors import Exists, InvalidRead, NotFound, OutOfRange
from deltafs.fs import DeltaFS, FSConfig, WriteOutcome
from deltafs.hotness import HotnessClass
from deltafs.inline import DeltaEntry
from scenarios import PAGE, durable_pages, run_scenario, small_config, tweak


def rand_page(rng):
    return rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()


def new_file(fs, path, n, rng):
    h = fs.create(path)
    pages = [rand_page(rng) for _ in range(n)]
    for i, p in enumerate(pages):
        assert fs.write_page(h, i, p) == WriteOutcome.APPENDED
    fs.fsync(h)
    return h, pages


def one_byte(page, at=100):
    b = bytearray(page)
    b[at] ^= 0x5A
    return bytes(b)


def test_create_stat_and_duplicates():
    fs = DeltaFS.mkfs()
    h = fs.create("/a")
    assert fs.stat(h) == 0
    with pytest.raises(Exists):
        fs.create("/a")
    with pytest.raises(NotFound):
        fs.open("/nope")


def test_thousand_creates():
    fs = DeltaFS.mkfs(FSConfig(max_inodes=1024))
    inos = {fs.create(f"/f{i}").ino for i in range(1000)}
    assert len(inos) == 1000


def test_compressed_write_defers_flash_writes():
    rng = np.random.default_rng(0)
    fs = DeltaFS.mkfs()
    h, pages = new_file(fs, "/a", 4, rng)
    before = fs.device.write_count
    new = one_byte(pages[2])
    assert fs.write_page(h, 2, new) == WriteOutcome.COMPRESSED_INLINE
    assert fs.device.write_count == before
    assert fs.read_page(h, 2) == new
    assert fs.fsync(h) == 1  # inode only
    assert fs.fsync(h) == 0


def test_plain_writes():
    rng = np.random.default_rng(1)
    fs = DeltaFS.mkfs()
    h, pages = new_file(fs, "/a", 3, rng)
    assert fs.write_page(h, 0, rand_page(rng)) == WriteOutcome.PLAIN_DIRTY
    assert fs.write_page(h, 0, one_byte(pages[0])) == WriteOutcome.PLAIN_DIRTY  # page is dirty
    assert fs.fsync(h) == 2  # data + inode


def test_holes_and_unwritten_reads():
    rng = np.random.default_rng(2)
    fs = DeltaFS.mkfs()
    h, _ = new_file(fs, "/a", 2, rng)
    with pytest.raises(OutOfRange):
        fs.write_page(h, 5, rand_page(rng))
    with pytest.raises(OutOfRange):
        fs.read_page(h, 2)


def test_read_after_eviction_rebuilds_from_base():
    rng = np.random.default_rng(3)
    fs = DeltaFS.mkfs(FSConfig(cache_pages=8))
    h, pages = new_file(fs, "/a", 6, rng)
    new = one_byte(pages[1], 4000)
    fs.write_page(h, 1, new)
    other, _ = new_file(fs, "/b", 8, rng)
    for i in range(8):
        fs.read_page(other, i)
    assert (h.ino, 1) not in fs.cache
    assert fs.read_page(h, 1) == new


def test_recompressing_a_compressed_page_keeps_one_delta():
    rng = np.random.default_rng(4)
    fs = DeltaFS.mkfs()
    h, pages = new_file(fs, "/a", 2, rng)
    v1 = one_byte(pages[0], 10)
    v2 = one_byte(v1, 20)
    fs.write_page(h, 0, v1)
    assert fs.write_page(h, 0, v2) == WriteOutcome.COMPRESSED_INLINE
    inode = fs.inodes[h.ino]
    assert len(inode.deltas) == 1
    fs.cache.clear()
    assert fs.read_page(h, 0) == v2


def test_crash_after_inline_write_and_flush():
    rng = np.random.default_rng(5)
    fs = DeltaFS.mkfs()
    h, pages = new_file(fs, "/a", 3, rng)
    new = one_byte(pages[0])
    fs.write_page(h, 0, new)
    fs.fsync(h)
    rep = fs.crash_and_recover()
    assert rep.ok and not rep.stale and rep.reconstructed == 1
    assert fs.read_page(fs.open("/a"), 0) == new


def test_crash_without_inode_flush_reverts_to_base():
    rng = np.random.default_rng(6)
    fs = DeltaFS.mkfs()
    h, pages = new_file(fs, "/a", 3, rng)
    fs.write_page(h, 0, one_byte(pages[0]))
    rep = fs.crash_and_recover()
    assert rep.ok and rep.stale == [("/a", 0)]
    assert fs.read_page(fs.open("/a"), 0) == pages[0]


def crowded_file(fs, rng, n=800):
    """A file whose offset array leaves almost no inline room."""
    h, pages = new_file(fs, "/big", n, rng)
    fs.hot.classify = lambda ino, now: HotnessClass.ReadColdWriteHot
    return h, pages


def test_main_area_path_survives_crash_without_flush():
    rng = np.random.default_rng(7)
    fs = DeltaFS.mkfs()
    h, pages = crowded_file(fs, rng)
    outcomes, latest = [], {}
    for i in range(20):
        new = tweak(pages[i], rng, 40)
        outcomes.append(fs.write_page(h, i, new))
        latest[i] = new
    assert WriteOutcome.COMPRESSED_MAIN in outcomes
    assert fs.compactions >= 1
    inode = fs.inodes[h.ino]
    in_main = {pi for d in fs.dcm[h.ino].descriptors for pi, _ in d.entries}
    rep = fs.crash_and_recover()
    assert rep.ok
    h = fs.open("/big")
    for i in in_main:
        assert fs.read_page(h, i) == latest[i]
    assert fs.fsck().clean


def compacted(fs, rng, path, chunks):
    h, pages = new_file(fs, path, 12, rng)
    entries = []
    for i in range(chunks):
        new = tweak(pages[i], rng, 30)
        fs.cache.insert((h.ino, i), new, 0)
        entries.append(DeltaEntry(i, delta_encode(pages[i], new)))
    assert fs._compact(h.ino, entries)
    return h


@pytest.mark.parametrize("cls,chunks,restored", [
    (HotnessClass.ReadHotWriteCold, 6, 1),
    (HotnessClass.ReadColdWriteHot, 8, 0),
    (HotnessClass.ReadColdWriteCold, 3, 1),
])
def test_bgres_rules(cls, chunks, restored):
    rng = np.random.default_rng(8)
    fs = DeltaFS.mkfs()
    h = compacted(fs, rng, "/a", chunks)
    before = fs.snapshot()
    fs.hot.classify = lambda ino, now: cls
    assert fs.bgres_list() == [h.ino]
    assert fs.run_bgres() == restored
    assert (fs.bgres_list() == []) == bool(restored)
    assert fs.snapshot() == before
    assert fs.fsck().clean
    fs.crash_and_recover()
    assert fs.snapshot() == before


def test_bgres_unlinks_middle_of_list():
    rng = np.random.default_rng(9)
    fs = DeltaFS.mkfs()
    a, b, c = (compacted(fs, rng, p, 5) for p in ("/a", "/b", "/c"))
    assert fs.bgres_list() == [c.ino, b.ino, a.ino]
    fs.hot.classify = lambda ino, now: (HotnessClass.ReadHotWriteHot if ino == b.ino
                                        else HotnessClass.ReadColdWriteHot)
    assert fs.run_bgres() == 1
    assert fs.bgres_list() == [c.ino, a.ino]
    fs.crash_and_recover()
    assert fs.bgres_list() == [c.ino, a.ino]
    assert fs.fsck().clean


def test_fsck_flags_corrupt_crc():
    rng = np.random.default_rng(10)
    fs = DeltaFS.mkfs()
    h, _ = new_file(fs, "/a", 2, rng)
    assert fs.fsck().clean
    lba = fs.inode_lba(h.ino)
    raw = bytearray(fs.device.peek(lba))
    raw[50] ^= 1
    fs.device.blocks[lba] = bytes(raw)
    rep = fs.fsck()
    assert not rep.clean and "checksum" in str(rep)


def test_fsck_flags_dangling_mid():
    rng = np.random.default_rng(11)
    fs = DeltaFS.mkfs()
    h = compacted(fs, rng, "/a", 5)
    mid = fs.inodes[h.ino].mid
    fs.device.invalidate(mid)
    rep = fs.fsck()
    assert any("dangling MID" in v for v in rep.violations)


def test_delete_frees_blocks():
    rng = np.random.default_rng(12)
    fs = DeltaFS.mkfs()
    h = compacted(fs, rng, "/a", 5)
    fs.delete(h)
    assert fs.listdir() == [] and fs.bgres_list() == []
    dev = fs.device
    assert not (dev.state[dev.first_log_lba:] == 1).any()
    assert fs.fsck().clean
    fs.crash_and_recover()
    assert fs.listdir() == []


def test_cleaning_patches_offsets():
    rng = np.random.default_rng(13)
    fs = DeltaFS.mkfs(small_config())
    h, pages = new_file(fs, "/a", 20, rng)
    latest = list(pages)
    for _ in range(6):
        for i in range(0, 20, 2):
            latest[i] = rand_page(rng)
            fs.write_page(h, i, latest[i])
        fs.fsync(h)
    while fs.device.counts()[1]:
        fs.clean()
    assert fs.device.relocations > 0
    assert fs.fsck().clean
    fs.crash_and_recover()
    h = fs.open("/a")
    assert [fs.read_page(h, i) for i in range(20)] == latest


def test_unflushed_create_is_absent_after_crash():
    fs = DeltaFS.mkfs()
    fs.create("/ghost")
    rep = fs.crash_and_recover()
    assert fs.listdir() == [] and rep.lost_files == []


def check_recovery(fs, report, durable, expected, history):
    assert report.ok, report.unrecoverable
    now = fs.snapshot()
    for key in durable:
        assert now[key] == expected[key], key
    for key, data in now.items():
        assert data in history.get(key, [data]), key
    rep = fs.fsck()
    assert rep.clean, str(rep)


@pytest.mark.parametrize("seed", range(8))
def test_crash_scenarios(seed):
    fs, crashes = run_scenario(seed, steps=250, check=check_recovery)
    fs.flush_all()
    before = fs.snapshot()
    assert fs.crash_and_recover().ok
    assert fs.snapshot() == before
