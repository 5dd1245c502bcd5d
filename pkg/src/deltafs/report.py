"""Render a MetricsReport as human text, CSV time series, or JSON lines."""

import csv
import io

FORMATS = ("human", "csv", "json-lines")
CSV_FIELDS = ("tick", "ops", "flash_writes", "latency_us")
HOT_FIELDS = ("RCWC", "RCWH", "RHWC", "RHWH")  # files per hotness class at bucket end


def human(rep):
    out = [
        f"flash writes           {rep.flash_writes_blocks} blocks ({rep.write_volume_bytes} bytes)",
        f"baseline writes        {rep.baseline_writes_blocks} blocks",
        f"normalized_write_volume {rep.normalized_write_volume:.3f}",
        f"cache hit rate         data {rep.data_hit_rate:.3f}  base {rep.base_hit_rate:.3f}"
        f"  inode {rep.inode_hit_rate:.3f}",
        f"live deltas            inline {rep.inline_delta_count}  main {rep.dcm_delta_count}",
        f"modeled latency        {rep.modeled_total_latency_us:.1f} us",
        f"outcomes               " + "  ".join(f"{k} {v}" for k, v in rep.outcomes.items()),
        f"compactions {rep.compactions}  bgres restores {rep.bgres_restored_files}"
        f"  relocations {rep.relocations}",
    ]
    if rep.delta_eviction_stall_us:
        n = sum(rep.delta_eviction_stall_us.values())
        total = sum(k * v for k, v in rep.delta_eviction_stall_us.items())
        out.append(f"eviction stalls        {n} ({total:.1f} us total)")
        for stall, count in sorted(rep.delta_eviction_stall_us.items()):
            out.append(f"  {stall:10.1f} us x {count}")
    return "\n".join(out) + "\n"


def to_csv(rep):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS + HOT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rep.buckets:
        hot = row.get("hotness", {})
        w.writerow({**{k: row[k] for k in CSV_FIELDS}, **{k: hot.get(k, 0) for k in HOT_FIELDS}})
    return buf.getvalue()


def render(rep, fmt="human"):
    if fmt == "human":
        return human(rep)
    if fmt == "csv":
        return to_csv(rep)
    if fmt == "json-lines":
        return rep.to_json_lines()
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
