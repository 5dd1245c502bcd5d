"""Line-oriented trace records and a seeded synthetic trace generator.

One record per line::

    tick op path index payload_kind payload...

``payload_kind`` is ``hex`` followed by 8192 uppercase hex digits, ``gen`` followed
by ``seed similarity [offset]``, or ``-`` for ops without data.  A ``gen``
payload rewrites a contiguous run of ``round((1 - similarity) * 4096)`` bytes
of the page's previous content, starting at ``offset`` (drawn from the seed
when absent); every byte in the run is XORed with a value in 1..255 so it
really changes.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import TraceParse

PAGE_SIZE = 4096
OPS = ("create", "write", "read", "fsync", "delete", "idle")


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    op: str
    path: str = "-"
    index: int = 0
    kind: str = "-"
    args: tuple = ()

    def to_line(self):
        parts = [str(self.tick), self.op, self.path, str(self.index), self.kind, *map(str, self.args)]
        return " ".join(parts)


def parse_line(line, lineno=0):
    parts = line.split()
    if len(parts) < 5:
        raise TraceParse(lineno, f"expected at least 5 fields, got {len(parts)}")
    tick, op, path, index, kind, *args = parts
    if op not in OPS:
        raise TraceParse(lineno, f"unknown op {op!r}")
    try:
        tick, index = int(tick), int(index)
    except ValueError:
        raise TraceParse(lineno, "tick and index must be integers") from None
    if tick < 0 or index < 0:
        raise TraceParse(lineno, "tick and index must be non-negative")
    if op == "write":
        if kind == "hex":
            if len(args) != 1 or len(args[0]) != 2 * PAGE_SIZE or args[0] != args[0].upper():
                raise TraceParse(lineno, "hex payload must be 8192 uppercase hex digits")
            try:
                bytes.fromhex(args[0])
            except ValueError:
                raise TraceParse(lineno, "malformed hex payload") from None
            args = (args[0],)
        elif kind == "gen":
            if len(args) not in (2, 3):
                raise TraceParse(lineno, "gen payload takes seed similarity [offset]")
            try:
                seed, sim = int(args[0]), float(args[1])
                off = (int(args[2]),) if len(args) == 3 else ()
            except ValueError:
                raise TraceParse(lineno, "malformed gen payload") from None
            if not 0.0 <= sim <= 1.0:
                raise TraceParse(lineno, "similarity must lie in [0, 1]")
            args = (seed, sim, *off)
        else:
            raise TraceParse(lineno, f"write needs a hex or gen payload, got {kind!r}")
    return TraceRecord(tick, op, path, index, kind, tuple(args))


def parse(lines):
    records = []
    last = -1
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rec = parse_line(line, lineno)
        if rec.tick < last:
            raise TraceParse(lineno, f"tick {rec.tick} goes backwards")
        last = rec.tick
        records.append(rec)
    return records


def load(path):
    with open(path) as fh:
        return parse(fh)


def dump(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_line() + "\n")


def run_length(similarity):
    return int(round((1.0 - similarity) * PAGE_SIZE))


def resolve_payload(rec, prior):
    """Materialize a write record's page given the page's previous bytes (or None)."""
    if rec.kind == "hex":
        return bytes.fromhex(rec.args[0])
    seed, sim = rec.args[0], rec.args[1]
    rng = np.random.default_rng(seed)
    page = np.frombuffer(prior if prior is not None else bytes(PAGE_SIZE), dtype=np.uint8).copy()
    n = run_length(sim)
    start = rec.args[2] if len(rec.args) == 3 else int(rng.integers(0, PAGE_SIZE - n + 1))
    start = min(start, PAGE_SIZE - n)
    page[start:start + n] ^= rng.integers(1, 256, size=n, dtype=np.uint8)
    return page.tobytes()


# Per-app update profiles averaged over each app's scenarios; rw is the write
# share of all I/O and small the share of small files.
PRESETS = {
    "gmail": dict(ur=0.755, ud=0.280, rw=0.961, small=0.950),
    "polish": dict(ur=0.652, ud=0.018, rw=0.948, small=0.999),
    "spotify": dict(ur=0.777, ud=0.084, rw=0.987, small=1.000),
    "telegram": dict(ur=0.89, ud=0.035, rw=0.656, small=0.658),
    "twitter": dict(ur=0.786, ud=0.148, rw=0.618, small=0.998),
    "wechat": dict(ur=0.672, ud=0.165, rw=0.755, small=0.934),
    "zoom": dict(ur=0.925, ud=0.131, rw=0.727, small=0.820),
}


@dataclass
class TraceConfig:
    ur: float = 0.89
    ud: float = 0.035
    rw: float = 0.656
    small: float = 0.9
    files: int = 24
    ops: int = 10_000
    small_pages: tuple = (1, 16)
    large_pages: tuple = (48, 160)
    fsync_prob: float = 0.04
    idle_every: int = 1000
    tick_step: tuple = (1, 20)
    zipf: float = 1.1
    seed: int = 0

    @classmethod
    def preset(cls, name, **overrides):
        if name not in PRESETS:
            raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})


def env_seed(seed):
    """DELTAFS_SEED, when set, overrides the requested seed."""
    raw = os.environ.get("DELTAFS_SEED")
    return int(raw) if raw not in (None, "") else seed


def _zipf_weights(n, s, rng):
    w = 1.0 / np.arange(1, n + 1) ** s
    return rng.permutation(w / w.sum())


def gen_trace(cfg):
    """Deterministic record list for ``cfg``.

    ``ops`` counts write and read records; create, fsync and idle records come
    on top.  A ``ur`` share of writes overwrite an existing page, the rest
    append.  Each overwrite changes one contiguous run of ``ud * 4096`` bytes
    at a per-page offset fixed at page creation.  File popularity for writes
    and reads follows two independent Zipf permutations, so write-hot and
    read-hot files generally differ.
    """
    for name in ("ur", "ud", "rw", "small"):
        if not 0.0 <= getattr(cfg, name) <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    rng = np.random.default_rng(cfg.seed)
    sim = 1.0 - cfg.ud
    n_run = run_length(sim)
    paths = [f"/f{i:03d}" for i in range(cfg.files)]
    target = [int(rng.integers(*cfg.small_pages)) if rng.random() < cfg.small
              else int(rng.integers(*cfg.large_pages)) for _ in paths]
    w_write = _zipf_weights(cfg.files, cfg.zipf, rng)
    w_read = _zipf_weights(cfg.files, cfg.zipf, rng)
    pages = [0] * cfg.files
    hot_off = [[] for _ in paths]

    out = []
    tick = 0

    def emit(op, f=None, idx=0, kind="-", args=()):
        out.append(TraceRecord(tick, op, paths[f] if f is not None else "-", idx, kind, tuple(args)))

    def append(f):
        if pages[f] == 0:
            emit("create", f)
        hot_off[f].append(int(rng.integers(0, PAGE_SIZE - n_run + 1)))
        emit("write", f, pages[f], "gen", (int(rng.integers(2**31)), 0.0))
        pages[f] += 1

    done = 0
    while done < cfg.ops:
        tick += int(rng.integers(*cfg.tick_step))
        existing = [i for i in range(cfg.files) if pages[i]]
        if existing and rng.random() >= cfg.rw:
            w = w_read[existing] / w_read[existing].sum()
            f = existing[int(rng.choice(len(existing), p=w))]
            emit("read", f, int(rng.integers(pages[f])))
        elif existing and rng.random() < cfg.ur:
            w = w_write[existing] / w_write[existing].sum()
            f = existing[int(rng.choice(len(existing), p=w))]
            idx = int(rng.integers(pages[f]))
            emit("write", f, idx, "gen", (int(rng.integers(2**31)), round(sim, 6), hot_off[f][idx]))
        else:
            growable = [i for i in range(cfg.files) if pages[i] < target[i]]
            if not growable:
                growable = [i for i in range(cfg.files) if pages[i] < cfg.large_pages[1]] or existing
            w = w_write[growable] / w_write[growable].sum()
            f = growable[int(rng.choice(len(growable), p=w))]
            append(f)
        done += 1
        if out[-1].op == "write" and rng.random() < cfg.fsync_prob:
            emit("fsync", paths.index(out[-1].path))
        if cfg.idle_every and done % cfg.idle_every == 0:
            emit("idle")
    return out
