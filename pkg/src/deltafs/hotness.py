"""File hotness clustering over windowed read/write counts.

Files are points ``(reads, writes)`` counted over the last ``window`` ticks.
k-means++ (k = 4) groups them; each centroid is labelled read-hot when its
read coordinate reaches the mean read count of all files, and likewise for
writes.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import EmptyInput

K = 4
MAX_ITER = 100


class HotnessClass(IntEnum):
    ReadColdWriteCold = 0
    ReadColdWriteHot = 1
    ReadHotWriteCold = 2
    ReadHotWriteHot = 3

    @property
    def read_hot(self):
        return self in (HotnessClass.ReadHotWriteCold, HotnessClass.ReadHotWriteHot)

    @property
    def write_hot(self):
        return self in (HotnessClass.ReadColdWriteHot, HotnessClass.ReadHotWriteHot)

    @property
    def short(self):
        return ("RCWC", "RCWH", "RHWC", "RHWH")[self]


def label(centroid, means):
    return HotnessClass(2 * int(centroid[0] >= means[0]) + int(centroid[1] >= means[1]))


@dataclass
class ClusterState:
    centroids: np.ndarray
    assignments: dict
    labels: list
    tick: int = 0
    inertia: list = field(default_factory=list)  # within-cluster SSE per Lloyd step


def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_pp_seeds(points, k, rng):
    n = len(points)
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = _sq_dists(points, points[chosen]).min(axis=1)
        total = d2.sum()
        if total > 0:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        else:
            chosen.append(int(rng.integers(n)))
    return points[chosen].copy()


def cluster(files, seed=0, k=K, tick=0):
    """k-means++ over ``[(ino, reads, writes), ...]``; deterministic per seed."""
    if not files:
        raise EmptyInput("nothing to cluster")
    inos = [f[0] for f in files]
    points = np.array([[f[1], f[2]] for f in files], dtype=float)
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_seeds(points, k, rng)

    assign = None
    inertia = []
    for _ in range(MAX_ITER):
        d2 = _sq_dists(points, centroids)
        new_assign = d2.argmin(axis=1)  # ties resolve to the lowest cluster id
        inertia.append(float(d2[np.arange(len(points)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    means = points.mean(axis=0)
    labels = [label(c, means) for c in centroids]
    return ClusterState(centroids, dict(zip(inos, assign.tolist())), labels, tick, inertia)


class Hcluster:
    """Windowed access recorder plus a lazily refreshed cluster state."""

    def __init__(self, window=60_000, seed=0):
        self.window = window
        self.seed = seed
        self.events = {}
        self._tally = {}  # ino -> [reads, writes] inside the window
        self.state = None
        self.reclusters = 0

    def record_access(self, ino, op, tick):
        if op not in ("read", "write"):
            raise ValueError(f"unknown access kind {op!r}")
        self.events.setdefault(ino, deque()).append((tick, op))
        self._tally.setdefault(ino, [0, 0])[op == "write"] += 1

    def forget(self, ino):
        self.events.pop(ino, None)
        self._tally.pop(ino, None)
        if self.state is not None:
            self.state.assignments.pop(ino, None)

    def counts(self, ino, now):
        q = self.events.get(ino)
        if not q:
            return 0, 0
        tally = self._tally[ino]
        horizon = now - self.window
        while q and q[0][0] <= horizon:
            tally[q.popleft()[1] == "write"] -= 1
        return tally[0], tally[1]

    def snapshot(self, now):
        return [(ino, *self.counts(ino, now)) for ino in sorted(self.events)]

    def recluster(self, now):
        files = self.snapshot(now)
        self.state = cluster(files, self.seed, tick=now) if files else None
        self.reclusters += 1
        return self.state

    def update_centroids(self, now):
        """Move each centroid to the mean of its members' current counts."""
        st = self.state
        if st is None:
            return
        counts = {ino: self.counts(ino, now) for ino in sorted(self.events)}
        for c in range(len(st.centroids)):
            members = [counts[i] for i, a in st.assignments.items() if a == c and i in counts]
            if members:
                st.centroids[c] = np.mean(np.array(members, dtype=float), axis=0)
        if counts:
            means = np.mean(np.array(list(counts.values()), dtype=float), axis=0)
            st.labels = [label(c, means) for c in st.centroids]

    def nearest(self, point):
        d2 = ((self.state.centroids - np.asarray(point, dtype=float)) ** 2).sum(axis=1)
        return int(d2.argmin())

    def classify(self, ino, now):
        if self.state is None or now - self.state.tick > self.window / 2:
            self.recluster(now)
        else:
            self.update_centroids(now)
        if self.state is None:
            return HotnessClass.ReadColdWriteCold
        cid = self.nearest(self.counts(ino, now))
        self.state.assignments[ino] = cid
        return self.state.labels[cid]

    def histogram(self, now):
        """Per-class file counts, for reporting.  Never changes the live state."""
        hist = {c.short: 0 for c in HotnessClass}
        files = self.snapshot(now)
        if not files:
            return hist
        st = self.state
        if st is None or now - st.tick > self.window / 2:
            st = cluster(files, self.seed, tick=now)
        for ino, r, w in files:
            d2 = ((st.centroids - np.array([r, w], dtype=float)) ** 2).sum(axis=1)
            hist[st.labels[int(d2.argmin())].short] += 1
        return hist
