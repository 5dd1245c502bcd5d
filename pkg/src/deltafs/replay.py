"""Deterministic trace replay against a fresh file system, with metrics."""

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .device import BLOCK_SIZE
from .fs import DeltaFS, FSConfig, WriteOutcome
from .hotness import HotnessClass
from .inline import LatencyModel
from .trace import resolve_payload

BUCKET_TICKS = 1000


@dataclass
class MetricsReport:
    flash_writes_blocks: int = 0
    write_volume_bytes: int = 0
    normalized_write_volume: float = 1.0
    baseline_writes_blocks: int = 0
    data_hit_rate: float = 0.0
    base_hit_rate: float = 0.0
    inode_hit_rate: float = 0.0
    inline_delta_count: int = 0
    dcm_delta_count: int = 0
    modeled_total_latency_us: float = 0.0
    delta_eviction_stall_us: dict = field(default_factory=dict)  # rounded stall -> count
    outcomes: dict = field(default_factory=dict)
    compactions: int = 0
    bgres_restored_files: int = 0
    relocations: int = 0
    ops: int = 0
    duration_ticks: int = 0
    buckets: list = field(default_factory=list)

    def to_json_lines(self):
        head = {k: v for k, v in asdict(self).items() if k != "buckets"}
        lines = [json.dumps({"kind": "summary", **head}, sort_keys=True)]
        lines += [json.dumps({"kind": "bucket", **b}, sort_keys=True) for b in self.buckets]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json_lines(cls, text):
        rep, buckets = None, []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("kind")
            if kind == "summary":
                obj["delta_eviction_stall_us"] = {float(k): v for k, v in
                                                  obj["delta_eviction_stall_us"].items()}
                rep = cls(**obj)
            else:
                buckets.append(obj)
        if rep is None:
            raise ValueError("no summary line in report")
        rep.buckets = buckets
        return rep


def config_from_keyvalue(text, base=None):
    """Parse ``key = value`` lines into an FSConfig (``#`` starts a comment)."""
    cfg = base or FSConfig()
    lat = {}
    top = {}
    lat_keys = {"inline_alpha": "alpha", "beta_us": "beta", "gamma_us": "gamma",
                "epsilon_us": "epsilon", "lambda_us": "lam", "delta_miss_us": "delta_miss"}
    ints = {"cache_pages", "hcluster_window_T", "bgres_interval", "dcm_threshold", "segment_count",
            "blocks_per_segment", "max_inodes", "bgres_budget", "gc_free_segments", "seed"}
    bools = {"compression", "dcm", "live_alpha"}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in lat_keys:
            lat[lat_keys[key]] = float(val)
        elif key == "live_alpha":
            lat["live_alpha"] = val.lower() in ("1", "true", "yes", "on")
        elif key in bools:
            top[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in ints:
            top["hcluster_window" if key == "hcluster_window_T" else key] = int(val)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    if lat:
        top["latency"] = replace(cfg.latency, **lat)
    return replace(cfg, **top)


class Replayer:
    """Executes records in order; keeps a shadow copy of every page's bytes."""

    def __init__(self, config=None, bgres_interval=None):
        self.config = config or FSConfig()
        if bgres_interval is None:
            bgres_interval = self.config.bgres_interval
        self.fs = DeltaFS.mkfs(self.config)
        self.shadow = {}
        self.bgres_interval = bgres_interval
        self.last_idle = 0
        self.ops = 0
        self.buckets = {}
        self._mark = (0, 0.0)

    def _bucket(self, tick):
        b = tick // BUCKET_TICKS
        if b not in self.buckets:
            self._close_open_buckets(tick)
            self.buckets[b] = {"tick": b * BUCKET_TICKS, "ops": 0, "flash_writes": 0,
                               "latency_us": 0.0}
        row = self.buckets[b]
        w, lat = self.device_writes(), self.fs.latency_us
        row["flash_writes"] += w - self._mark[0]
        row["latency_us"] += lat - self._mark[1]
        self._mark = (w, lat)
        return row

    def _close_open_buckets(self, tick):
        # file classes as seen at the end of each bucket
        for row in self.buckets.values():
            if "hotness" not in row:
                row["hotness"] = self.fs.hot.histogram(tick)

    def device_writes(self):
        return self.fs.device.write_count

    def step(self, rec):
        fs = self.fs
        fs.now = rec.tick
        if self.bgres_interval and rec.tick - self.last_idle >= self.bgres_interval:
            self.last_idle = rec.tick
            fs.idle()
        result = None
        if rec.op == "create":
            fs.create(rec.path)
        elif rec.op == "write":
            prior = self.shadow.get((rec.path, rec.index))
            payload = resolve_payload(rec, prior)
            result = fs.write_page(fs.open(rec.path), rec.index, payload)
            self.shadow[(rec.path, rec.index)] = payload
        elif rec.op == "read":
            result = fs.read_page(fs.open(rec.path), rec.index)
            if result != self.shadow[(rec.path, rec.index)]:
                raise AssertionError(f"read of {rec.path}[{rec.index}] returned wrong bytes")
        elif rec.op == "fsync":
            result = fs.fsync(fs.open(rec.path))
        elif rec.op == "delete":
            fs.delete(fs.open(rec.path))
            self.shadow = {k: v for k, v in self.shadow.items() if k[0] != rec.path}
        elif rec.op == "idle":
            self.last_idle = rec.tick
            result = fs.idle()
        self.ops += 1
        self._bucket(rec.tick)["ops"] += 1
        return result

    def finish(self, tick):
        self.fs.flush_all()
        self._bucket(tick)
        self._close_open_buckets(tick)


def _run(records, config, bgres_interval=None):
    rp = Replayer(config, bgres_interval)
    outcomes = []
    for rec in records:
        r = rp.step(rec)
        if isinstance(r, WriteOutcome):
            outcomes.append(r)
    rp.finish(records[-1].tick if records else 0)
    return rp, outcomes


def _dense(buckets, last_tick):
    rows, hot = [], {c.short: 0 for c in HotnessClass}
    for b in range(last_tick // BUCKET_TICKS + 1):
        row = buckets.get(b)
        if row is None:  # nothing happened; classes carry over
            row = {"tick": b * BUCKET_TICKS, "ops": 0, "flash_writes": 0, "latency_us": 0.0,
                   "hotness": dict(hot)}
        hot = row["hotness"]
        rows.append(row)
    return rows


def replay(records, config=None, bgres_interval=None, baseline=True):
    """Replay ``records`` on a fresh file system and summarize.

    With ``baseline`` set the trace is replayed a second time with compression
    off; normalized_write_volume is the ratio of the two device write counts.
    Returns (MetricsReport, Replayer) so callers can inspect or save the image.
    """
    config = config or FSConfig()
    rp, _ = _run(records, config, bgres_interval)
    fs = rp.fs
    writes = fs.device.write_count
    base_writes = writes
    if baseline:
        if config.compression:
            plain, _ = _run(records, replace(config, compression=False), bgres_interval)
            base_writes = plain.fs.device.write_count
    stats = fs.cache.stats
    stalls = {}
    for s in fs.stalls:
        key = round(s, 3)
        stalls[key] = stalls.get(key, 0) + 1
    rep = MetricsReport(
        flash_writes_blocks=writes,
        write_volume_bytes=writes * BLOCK_SIZE,
        normalized_write_volume=writes / base_writes if base_writes else 1.0,
        baseline_writes_blocks=base_writes,
        data_hit_rate=stats.hit_rate("data"),
        base_hit_rate=stats.hit_rate("base"),
        inode_hit_rate=stats.hit_rate("inode"),
        inline_delta_count=sum(len(i.deltas) for i in fs.inodes.values()),
        dcm_delta_count=sum(s.count() for s in fs.dcm.values()),
        modeled_total_latency_us=float(fs.latency_us),
        delta_eviction_stall_us=dict(sorted(stalls.items())),
        outcomes={o.value: fs.outcomes.get(o, 0) for o in WriteOutcome},
        compactions=fs.compactions,
        bgres_restored_files=fs.bgres_restored_files,
        relocations=fs.device.relocations,
        ops=rp.ops,
        duration_ticks=records[-1].tick if records else 0,
        buckets=_dense(rp.buckets, records[-1].tick if records else 0),
    )
    return rep, rp


def stall_histogram(stalls, bins=10):
    """(counts, edges) over modeled stall values, for plotting."""
    if not stalls:
        return np.zeros(0, dtype=int), np.zeros(0)
    return np.histogram(np.asarray(stalls, dtype=float), bins=bins)


__all__ = ["MetricsReport", "Replayer", "replay", "config_from_keyvalue", "LatencyModel",
           "stall_histogram"]
