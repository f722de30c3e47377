"""Cache policies: LRU, uncoded LRS, coded LRS, and coded random eviction.

Policies consume one slot of requests at a time and report a `SlotOutcome`.
Requests arrive as (user, file) pairs so that trace replay, where a slot may
cover only a subset of caches and may repeat a file across caches, uses the
same entry point as synthetic runs.

Least-recently-sent (LRS) order is kept in an ordered dict whose iteration
order always equals sorting by (last_sent, file_id): within a slot, refreshes
and insertions are applied in ascending file id, so equal stamps tie-break to
the smallest id deterministically.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .codec import BitExactEngine
from .formulas import SystemParams, expected_rate

Request = tuple[int, int]  # (user index, file id)


@dataclass
class SlotOutcome:
    """Per-slot accounting record.

    rate:            files sent over the shared link this slot.
    uncached:        Y_t, requested files absent from the relevant cache
                     (distinct files for shared caches, users for LRU).
    served_coded:    users whose request was partially cached (coded policies).
    evicted:         files dropped from the cache this slot.
    inserted:        files added to the cache this slot.
    correct:         X_t, cached files still popular; filled by the runner.
    wrong_evictions: W_t, evicted files that were still popular; runner-filled.
    departure_hit:   U_t, 1 if this slot's departing popular file was cached
                    after the update; runner-filled.
    """

    rate: float
    uncached: int
    served_coded: int = 0
    evicted: tuple[int, ...] = ()
    inserted: tuple[int, ...] = ()
    correct: Optional[int] = None
    wrong_evictions: Optional[int] = None
    departure_hit: Optional[int] = None


class LruPolicy:
    """Per-user caches of whole files with least-recently-used eviction.

    A request hit is served locally at zero link cost and refreshes recency;
    a miss costs one whole file and replaces the user's stalest entry.
    """

    name = "lru"

    def __init__(self, capacity: int, num_users: int) -> None:
        if capacity < 0:
            raise ValueError(f"capacity must be nonnegative, got {capacity}")
        self.capacity = capacity
        self._caches: list[OrderedDict[int, None]] = [OrderedDict() for _ in range(num_users)]

    def step(self, requests: Sequence[Request], t: int) -> SlotOutcome:
        misses = 0
        for user, file_id in requests:
            cache = self._caches[user]
            if file_id in cache:
                cache.move_to_end(file_id)
                continue
            misses += 1
            if self.capacity == 0:
                continue
            if len(cache) >= self.capacity:
                cache.popitem(last=False)
            cache[file_id] = None
        return SlotOutcome(rate=float(misses), uncached=misses)


class UncodedLrsPolicy:
    """One shared whole-file cache, replicated at every user, with
    least-recently-sent eviction.

    Each distinct requested file missing from the cache is broadcast once
    (rate 1 file) and inserted at all users.  By default a cache hit also
    refreshes the file's recency (`refresh_on_hit`), keeping the eviction
    order aligned with demand recency.
    """

    name = "lrs-uncoded"

    def __init__(self, capacity: int, refresh_on_hit: bool = True) -> None:
        if capacity < 0:
            raise ValueError(f"capacity must be nonnegative, got {capacity}")
        self.capacity = capacity
        self.refresh_on_hit = refresh_on_hit
        self._cache: OrderedDict[int, int] = OrderedDict()

    @property
    def cached_files(self) -> Iterable[int]:
        return self._cache.keys()

    def step(self, requests: Sequence[Request], t: int) -> SlotOutcome:
        distinct = sorted({file_id for _, file_id in requests})
        hits = [f for f in distinct if f in self._cache]
        misses = [f for f in distinct if f not in self._cache]
        evicted = []
        if self.refresh_on_hit:
            for f in hits:
                self._cache[f] = t
                self._cache.move_to_end(f)
        if self.capacity > 0:
            for f in misses:
                if len(self._cache) >= self.capacity:
                    victim = next(iter(self._cache))
                    if self._cache[victim] == t:
                        # Only this slot's files remain; ties go to smallest id.
                        victim = min(self._cache)
                    del self._cache[victim]
                    evicted.append(victim)
                self._cache[f] = t
            # Restore (stamp, id) order among files stamped this slot.
            stamped = sorted(misses + (hits if self.refresh_on_hit else []))
            for f in stamped:
                if f in self._cache:
                    self._cache.move_to_end(f)
        return SlotOutcome(
            rate=float(len(misses)),
            uncached=len(misses),
            evicted=tuple(evicted),
            inserted=tuple(misses) if self.capacity > 0 else (),
        )


def coded_delivery_accounting(
    cached: Iterable[int] | set[int] | dict,
    requests: Sequence[Request],
    memory: float,
    partial_list_size: int,
) -> tuple[float, int, int, list[int]]:
    """Analytic-mode delivery cost for a shared partial cache.

    Every requested file missing from the cache set goes out whole (one file
    each); the remaining requests are served by coded delivery at the
    expected rate for that many users.  Returns (rate, uncached_count,
    coded_user_count, sorted uncached files).
    """
    served_coded = sum(1 for _, f in requests if f in cached)
    uncached = sorted({f for _, f in requests if f not in cached})
    rate = expected_rate(memory, partial_list_size, served_coded) + len(uncached)
    return rate, len(uncached), served_coded, uncached


class CodedLrsPolicy:
    """Partial caching of `partial_list_size` files with coded delivery and
    least-recently-sent eviction.

    All users cache the same file list (though not the same bits).  Delivery
    happens first: requested cached files are served by coded multicast,
    uncached ones are sent whole.  Then, for every requested file that was
    not cached, every user evicts the least-recently-sent file and caches a
    random `memory * F / partial_list_size`-bit slice of the new file.

    In analytic mode the rate uses large-file expected subfile sizes; in
    bit-exact mode an engine XORs real bit vectors and the rate is the exact
    number of bits sent divided by F.
    """

    name = "lrs-coded"

    def __init__(
        self,
        memory: float,
        partial_list_size: int,
        initial_files: Sequence[int],
        engine: Optional[BitExactEngine] = None,
    ) -> None:
        if len(initial_files) != partial_list_size:
            raise ValueError(
                f"expected {partial_list_size} initial files, got {len(initial_files)}"
            )
        self.memory = memory
        self.partial_list_size = partial_list_size
        # Stamp 0 for the initial list; ascending id keeps (stamp, id) order.
        self._cache: OrderedDict[int, int] = OrderedDict(
            (f, 0) for f in sorted(initial_files)
        )
        self.engine = engine
        if engine is not None:
            for f in self._cache:
                engine.insert(f)

    @property
    def cached_files(self) -> Iterable[int]:
        return self._cache.keys()

    def step(self, requests: Sequence[Request], t: int) -> SlotOutcome:
        rate, num_uncached, served_coded, uncached = coded_delivery_accounting(
            self._cache, requests, self.memory, self.partial_list_size
        )
        if self.engine is not None:
            bits_sent = self.engine.run_slot(requests)
            rate = bits_sent / self.engine.file_size
        hits = sorted({f for _, f in requests if f in self._cache})
        for f in hits:
            self._cache[f] = t
            self._cache.move_to_end(f)
        evicted = []
        for f in uncached:
            victim, _ = self._cache.popitem(last=False)
            evicted.append(victim)
            self._cache[f] = t
            if self.engine is not None:
                self.engine.drop(victim)
                self.engine.insert(f)
        for f in sorted(hits + uncached):
            self._cache.move_to_end(f)
        return SlotOutcome(
            rate=rate,
            uncached=num_uncached,
            served_coded=served_coded,
            evicted=tuple(evicted),
            inserted=tuple(uncached),
        )


class CodedRandomEvictionPolicy:
    """Coded LRS with the eviction rule replaced by uniform random choice.

    Delivery accounting is identical to coded LRS.  The Y_t victims are drawn
    uniformly without replacement from the cache contents as they stood
    before this slot's insertions, so a file inserted this slot can never be
    evicted in the same slot (a requested, already-cached file can be).
    """

    name = "random-coded"

    def __init__(
        self,
        memory: float,
        partial_list_size: int,
        initial_files: Sequence[int],
        rng: np.random.Generator,
    ) -> None:
        if len(initial_files) != partial_list_size:
            raise ValueError(
                f"expected {partial_list_size} initial files, got {len(initial_files)}"
            )
        self.memory = memory
        self.partial_list_size = partial_list_size
        self._order: list[int] = sorted(initial_files)
        self._pos: dict[int, int] = {f: i for i, f in enumerate(self._order)}
        self._rng = rng

    @property
    def cached_files(self) -> Iterable[int]:
        return self._pos.keys()

    def step(self, requests: Sequence[Request], t: int) -> SlotOutcome:
        rate, num_uncached, served_coded, uncached = coded_delivery_accounting(
            self._pos, requests, self.memory, self.partial_list_size
        )
        evicted: list[int] = []
        if num_uncached:
            victim_idx = self._rng.choice(len(self._order), size=num_uncached, replace=False)
            for idx in sorted((int(i) for i in victim_idx), reverse=True):
                evicted.append(self._remove_at(idx))
            for f in uncached:
                self._pos[f] = len(self._order)
                self._order.append(f)
        return SlotOutcome(
            rate=rate,
            uncached=num_uncached,
            served_coded=served_coded,
            evicted=tuple(evicted),
            inserted=tuple(uncached),
        )

    def _remove_at(self, idx: int) -> int:
        victim = self._order[idx]
        last = self._order.pop()
        if idx < len(self._order):
            self._order[idx] = last
            self._pos[last] = idx
        del self._pos[victim]
        return victim


POLICY_NAMES = ("lru", "lrs-uncoded", "lrs-coded", "random-coded")


def make_policy(
    name: str,
    params: SystemParams,
    *,
    initial_files: Sequence[int] = (),
    placeholder_ids: Sequence[int] = (),
    eviction_rng: Optional[np.random.Generator] = None,
    engine: Optional[BitExactEngine] = None,
):
    """Build a policy in its initial state.

    Whole-file policies start cold.  Coded policies start with the initial
    popular files plus never-requestable placeholder ids filling the list to
    `partial_list_size`, all with last-sent stamp 0.
    """
    if name == "lru":
        return LruPolicy(capacity=int(params.memory), num_users=params.num_users)
    if name == "lrs-uncoded":
        return UncodedLrsPolicy(capacity=int(params.memory))
    if name in ("lrs-coded", "random-coded"):
        n_prime = params.partial_list_size
        needed = n_prime - len(initial_files)
        if len(placeholder_ids) != needed:
            raise ValueError(
                f"coded policies need {needed} placeholder ids to fill the "
                f"cache list, got {len(placeholder_ids)}"
            )
        files = list(initial_files) + list(placeholder_ids)
        if name == "lrs-coded":
            return CodedLrsPolicy(params.memory, n_prime, files, engine=engine)
        if eviction_rng is None:
            raise ValueError("random-coded requires an eviction rng")
        return CodedRandomEvictionPolicy(params.memory, n_prime, files, rng=eviction_rng)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
