"""
Replaying a synthetic app trace
===============================

Generate a messaging-app style trace, replay it with and without delta
compression, and compare flash writes over time.
"""

import numpy as np

from deltafs.replay import replay
from deltafs.report import render
from deltafs.trace import TraceConfig, gen_trace

cfg = TraceConfig.preset("telegram", ops=5000, seed=3)
records = gen_trace(cfg)
print(len(records), "records over", records[-1].tick, "ticks")

rep, rp = replay(records)
print(render(rep, "human"))

# %%
# Per-bucket write counts, as a quick text sparkline.
writes = np.array([b["flash_writes"] for b in rep.buckets])
bars = " .:-=+*#%@"
scale = writes.max() or 1
print("".join(bars[int(w / scale * (len(bars) - 1))] for w in writes))

# %%
# Presets with large per-update differences produce deltas too big to
# inline, so their normalized volume sits at 1.0.
for name in ("polish", "gmail", "zoom"):
    r, _ = replay(gen_trace(TraceConfig.preset(name, ops=2000, seed=3)))
    print(f"{name:8s} {r.normalized_write_volume:.3f}")
