"""
Small updates as inline deltas
==============================

Overwrite a few bytes of a flushed page and watch where the bytes go.
"""

import numpy as np

from deltafs import DeltaFS, FSConfig

rng = np.random.default_rng(1)
fs = DeltaFS.mkfs(FSConfig())
h = fs.create("/notes.db")

pages = [rng.integers(0, 256, 4096, dtype=np.uint8).tobytes() for _ in range(8)]
for i, p in enumerate(pages):
    fs.write_page(h, i, p)
print("initial flush wrote", fs.fsync(h), "blocks")

# %%
# Flip a single byte.  The page stays clean in cache; only its XOR delta
# lands in the inode's inline area.
new = bytearray(pages[3])
new[1000] ^= 0x42
print("outcome:", fs.write_page(h, 3, bytes(new)).value)
print("delta bytes:", len(fs.live_delta(h.ino, 3)[1]))
print("inline room left:", fs.inodes[h.ino].free_space())

# %%
# Flushing now costs one inode block instead of data + inode.
print("second flush wrote", fs.fsync(h), "block(s)")

# %%
# Drop the cache: the page comes back from its on-flash base plus the delta.
fs.cache.clear()
assert fs.read_page(h, 3) == bytes(new)
print("rebuilt page matches")

# %%
# A random rewrite does not compress and is written out plainly.
print("outcome:", fs.write_page(h, 5, rng.integers(0, 256, 4096, dtype=np.uint8).tobytes()).value)
print(fs.fsck())
