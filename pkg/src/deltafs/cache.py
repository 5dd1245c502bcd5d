"""Page cache with LRU eviction over clean pages and hit-rate accounting."""

from collections import OrderedDict
from dataclasses import dataclass

from .errors import CachePressure

PAGE_SIZE = 4096
CLEAN, DIRTY = "clean", "dirty"


@dataclass
class CachedPage:
    key: tuple
    payload: bytes
    state: str
    last_access: int


@dataclass
class CacheStats:
    data_hits: int = 0
    data_misses: int = 0
    inode_hits: int = 0
    inode_misses: int = 0
    base_hits: int = 0
    base_misses: int = 0

    @staticmethod
    def _rate(hits, misses, empty):
        total = hits + misses
        return hits / total if total else empty

    def hit_rate(self, kind, empty=0.0):
        return self._rate(getattr(self, f"{kind}_hits"), getattr(self, f"{kind}_misses"), empty)

    @property
    def base_hr(self):
        # no base lookup yet: assume every base must come from flash
        return self.hit_rate("base", 0.0)

    def record(self, kind, hit):
        name = f"{kind}_hits" if hit else f"{kind}_misses"
        setattr(self, name, getattr(self, name) + 1)


class PageCache:
    def __init__(self, capacity=4096):
        if capacity < 2:
            raise ValueError("cache capacity must be at least 2 pages")
        self.capacity = capacity
        self.pages = OrderedDict()
        self._dirty = {}  # key -> None, in the order pages became dirty
        self.stats = CacheStats()
        self.tick = 0

    def __len__(self):
        return len(self.pages)

    def __contains__(self, key):
        return key in self.pages

    def _touch(self, page):
        self.tick += 1
        page.last_access = self.tick
        self.pages.move_to_end(page.key)

    def get(self, key, kind="data"):
        page = self.pages.get(key)
        self.stats.record(kind, page is not None)
        if page is not None:
            self._touch(page)
        return page

    def peek(self, key):
        return self.pages.get(key)

    def is_dirty(self, key):
        return key in self._dirty

    def dirty_count(self):
        return len(self._dirty)

    def insert(self, key, payload, state=CLEAN):
        """Cache a page; returns the keys evicted to stay within capacity.

        Only clean pages are evicted.  A clean page that cannot be admitted
        because every other page is dirty is itself dropped (and reported as
        evicted); a dirty page in that situation raises CachePressure.
        """
        if len(payload) != PAGE_SIZE:
            raise ValueError(f"payload must be {PAGE_SIZE} bytes")
        page = self.pages.get(key)
        if page is None:
            if len(self.pages) >= self.capacity and state == DIRTY and \
                    len(self._dirty) >= self.capacity:
                raise CachePressure("cache full of dirty pages")
            page = CachedPage(key, bytes(payload), state, 0)
            self.pages[key] = page
        else:
            page.payload = bytes(payload)
            page.state = state
        self._touch(page)
        if state == DIRTY:
            self._dirty.setdefault(key, None)
        else:
            self._dirty.pop(key, None)

        evicted = []
        if len(self.pages) > self.capacity:
            for victim in list(self.pages):
                if len(self.pages) <= self.capacity:
                    break
                if victim == key or victim in self._dirty:
                    continue
                del self.pages[victim]
                evicted.append(victim)
        if len(self.pages) > self.capacity:
            if state == DIRTY:
                raise CachePressure("cache full of dirty pages")
            del self.pages[key]
            evicted.append(key)
        return evicted

    def mark_clean(self, key):
        page = self.pages.get(key)
        if page is not None:
            page.state = CLEAN
        self._dirty.pop(key, None)

    def mark_dirty(self, key):
        page = self.pages[key]
        page.state = DIRTY
        self._dirty.setdefault(key, None)

    def dirty_keys(self, ino=None):
        return [k for k in self._dirty if ino is None or k[0] == ino]

    def flush_dirty(self, ino=None):
        """Dirty pages in the order they became dirty; all marked clean."""
        out = []
        for key in self.dirty_keys(ino):
            page = self.pages[key]
            out.append((key, page.payload))
            page.state = CLEAN
            del self._dirty[key]
        return out

    def drop(self, key):
        self.pages.pop(key, None)
        self._dirty.pop(key, None)

    def drop_inode(self, ino):
        for key in [k for k in self.pages if k[0] == ino]:
            self.drop(key)

    def clear(self):
        self.pages.clear()
        self._dirty.clear()
