"""Seeded mixed-operation scenarios with crash points, shared by several tests."""

import numpy as np

from deltafs.fs import DeltaFS, FSConfig
from deltafs.inline import LatencyModel

PAGE = 4096


def small_config(**kw):
    base = dict(segment_count=24, blocks_per_segment=32, max_inodes=16, cache_pages=24,
                hcluster_window=400, bgres_budget=4, gc_free_segments=3)
    base.update(kw)
    return FSConfig(**base)


def tweak(page, rng, nbytes):
    arr = np.frombuffer(page, np.uint8).copy()
    start = int(rng.integers(0, PAGE - nbytes + 1))
    arr[start:start + nbytes] ^= rng.integers(1, 256, nbytes, dtype=np.uint8)
    return arr.tobytes()


def durable_pages(fs):
    """Pages whose current bytes must survive a crash."""
    out = set()
    for ino, path in fs.paths.items():
        inode = fs.inodes[ino]
        pend = {e.page_index for e in fs.pending.get(ino, ())}
        for idx in range(len(inode.offsets)):
            if fs.cache.is_dirty((ino, idx)) or idx in pend:
                continue
            if inode.dirty and inode.lookup_delta(idx) is not None:
                continue
            out.add((path, idx))
    return out


def run_scenario(seed, steps=300, files=3, check=None):
    """Drive one scenario; ``check(fs, report, durable, expected, history)`` runs per crash."""
    rng = np.random.default_rng(seed)
    fs = DeltaFS.mkfs(small_config(seed=seed))
    history = {}
    handles = {}
    crashes = 0
    made = 0
    for step in range(steps):
        fs.now += int(rng.integers(1, 30))
        r = rng.random()
        if len(handles) < files and (not handles or r < 0.05):
            path = f"/s{made}"
            made += 1
            h = handles[path] = fs.create(path)
            for idx in range(int(rng.integers(120, 160)) if made == 1 else int(rng.integers(8, 40))):
                data = rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
                fs.write_page(h, idx, data)
                history.setdefault((path, idx), []).append(data)
            fs.fsync(h)
            continue
        names = sorted(handles)
        # the oldest file takes most writes and few reads: a main-area candidate
        w = np.ones(len(names))
        w[0] = 4.0 if r < 0.55 else 0.1
        path = names[int(rng.choice(len(names), p=w / w.sum()))]
        h = handles[path]
        n = fs.page_count(h.ino)
        if r < 0.55 or n == 0:
            if n == 0 or (rng.random() < 0.1 and n < 180):
                idx, data = n, rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
            else:
                idx = int(rng.integers(n))
                cur = fs.snapshot()[(path, idx)]
                if rng.random() < 0.1:
                    data = rng.integers(0, 256, PAGE, dtype=np.uint8).tobytes()
                else:
                    lo = 150 if path == names[0] else 1
                    data = tweak(cur, rng, int(rng.integers(lo, 240)))
            fs.write_page(h, idx, data)
            history.setdefault((path, idx), []).append(data)
        elif r < 0.7:
            fs.read_page(h, int(rng.integers(n)))
        elif r < 0.74:
            fs.fsync(h)
        elif r < 0.76:
            fs.flush_all()
        elif r < 0.84:
            fs.idle()
        elif r < 0.96:
            fs.clean() if fs.device.counts()[1] else None
        else:
            if rng.random() < 0.5:
                fs.flush_all()
            expected = fs.snapshot()
            durable = durable_pages(fs)
            report = fs.crash_and_recover()
            crashes += 1
            handles = {p: fs.open(p) for p in fs.listdir()}
            # pages lost with their unflushed append are forgotten
            history = {k: v for k, v in history.items()
                       if k[0] in handles and k[1] < fs.page_count(handles[k[0]].ino)}
            if check:
                check(fs, report, durable, expected, history)
    return fs, crashes
