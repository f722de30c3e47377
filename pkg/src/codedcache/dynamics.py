"""Popular-set dynamics and demand generation.

The popular set holds exactly N file ids at all times.  Each slot, with
probability p one uniformly chosen member departs and is replaced by a fresh,
never-seen id; fresh ids are allocated from a monotone counter so a departed
file can never reappear.  Users draw K distinct demands uniformly from the
current set.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


class Catalog:
    """The time-varying set of popular files.

    Membership is tracked both as a set (for O(1) lookups) and as a dense
    array (for uniform sampling); a departure replaces the departed id
    in place so the array stays aligned with the set.
    """

    def __init__(self, size: int, arrival_prob: float, first_id: int = 0) -> None:
        if size < 1:
            raise ValueError(f"catalog size must be >= 1, got {size}")
        if not 0.0 <= arrival_prob <= 1.0:
            raise ValueError(f"arrival_prob must lie in [0, 1], got {arrival_prob}")
        self.size = size
        self.arrival_prob = arrival_prob
        self._order = np.arange(first_id, first_id + size, dtype=np.int64)
        self.files: set[int] = set(range(first_id, first_id + size))
        self.next_fresh = first_id + size

    def allocate_fresh(self, count: int) -> list[int]:
        """Reserve `count` fresh ids (e.g. placeholders) outside the catalog."""
        ids = list(range(self.next_fresh, self.next_fresh + count))
        self.next_fresh += count
        return ids

    def advance(self, rng: np.random.Generator) -> tuple[Optional[int], Optional[int]]:
        """One arrival/departure step; returns (departed, arrived) or (None, None)."""
        if rng.random() >= self.arrival_prob:
            return None, None
        idx = int(rng.integers(self.size))
        return self._replace_at(idx)

    def replace_file(self, file_id: int) -> tuple[int, int]:
        """Force a specific member to depart; used by scripted scenarios."""
        idx = int(np.nonzero(self._order == file_id)[0][0])
        departed, arrived = self._replace_at(idx)
        return departed, arrived

    def _replace_at(self, idx: int) -> tuple[int, int]:
        departed = int(self._order[idx])
        arrived = self.next_fresh
        self.next_fresh += 1
        self._order[idx] = arrived
        self.files.discard(departed)
        self.files.add(arrived)
        return departed, arrived

    def draw_demands(self, num_users: int, rng: np.random.Generator) -> list[int]:
        """K distinct demands, uniform over ordered K-subsets of the catalog."""
        if num_users > self.size:
            raise ValueError(
                f"cannot draw {num_users} distinct demands from a catalog of "
                f"{self.size} files (demands are sampled without replacement)"
            )
        picks = rng.choice(self.size, size=num_users, replace=False)
        return self._order[picks].tolist()

    def members(self) -> np.ndarray:
        """Snapshot of the current popular ids (copy; order is internal)."""
        return self._order.copy()
