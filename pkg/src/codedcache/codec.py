"""Bit-exact decentralized coded delivery.

Files are synthetic bit vectors regenerated on demand from (seed, file id).
Each user caches an independent uniform random subset of every cached file's
bits.  A slot's delivery partitions each requested file by the exact set of
users caching each bit, then sends one zero-padded XOR per user subset,
largest subsets first and lexicographic within a size.  Every present user
must be able to reconstruct its requested file bit-for-bit from its cache
plus the transmissions; failure to do so is a hard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Optional, Sequence

import numpy as np

Request = tuple[int, int]  # (user index, file id)


class CodecError(Exception):
    """A user could not reconstruct its requested file: codec bug."""


@dataclass
class Transmission:
    """One zero-padded XOR sent over the shared link for a user subset."""

    subset: tuple[int, ...]
    payload: np.ndarray  # uint8 bits, length = longest participating subfile

    def __len__(self) -> int:
        return len(self.payload)


def draw_placement(rng: np.random.Generator, file_size: int, num_bits: int) -> np.ndarray:
    """Uniform random cached-bit subset for one (user, file) pair.

    Returns a boolean mask of length `file_size` with exactly `num_bits`
    True entries.
    """
    if not 0 <= num_bits <= file_size:
        raise ValueError(f"num_bits must lie in [0, {file_size}], got {num_bits}")
    mask = np.zeros(file_size, dtype=bool)
    if num_bits:
        mask[rng.choice(file_size, size=num_bits, replace=False)] = True
    return mask


def partition_subfiles(
    mask_rows: Optional[np.ndarray], present: Sequence[int], file_size: int
) -> Dict[tuple[int, ...], np.ndarray]:
    """Split a file's bit indices by the exact subset of users caching them.

    `mask_rows` is the (num_users, file_size) boolean placement of one file,
    or None for a file cached nowhere.  Only the `present` users define the
    partition.  Returns subset-tuple -> sorted bit indices; cells partition
    [0, file_size).
    """
    present = tuple(sorted(present))
    if mask_rows is None:
        return {(): np.arange(file_size)}
    sub = mask_rows[list(present)]
    weights = (1 << np.arange(len(present), dtype=np.uint64))[:, None]
    codes = (sub * weights).sum(axis=0)
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    cells: Dict[tuple[int, ...], np.ndarray] = {}
    unique_codes, starts = np.unique(sorted_codes, return_index=True)
    bounds = list(starts) + [len(sorted_codes)]
    for code, lo, hi in zip(unique_codes, bounds[:-1], bounds[1:]):
        subset = tuple(u for bit, u in enumerate(present) if (int(code) >> bit) & 1)
        cells[subset] = np.sort(order[lo:hi])
    return cells


def deliver_slot(
    requests: Sequence[Request],
    partitions: Dict[int, Dict[tuple[int, ...], np.ndarray]],
    contents: Dict[int, np.ndarray],
) -> tuple[list[Transmission], int]:
    """Generate the slot's transmissions; returns (transmissions, total bits).

    For every subset S of the present users, largest first, sends the XOR of
    the subfiles needed by each member and cached exactly at the rest of S,
    zero-padded at the tail to the longest participant.  Empty payloads are
    skipped.
    """
    demand_of = dict(requests)
    present = sorted(demand_of)
    transmissions: list[Transmission] = []
    total_bits = 0
    for size in range(len(present), 0, -1):
        for subset in combinations(present, size):
            parts = []
            length = 0
            for user in subset:
                rest = tuple(u for u in subset if u != user)
                cell = partitions[user].get(rest)
                if cell is not None and len(cell):
                    parts.append((user, cell))
                    length = max(length, len(cell))
            if length == 0:
                continue
            payload = np.zeros(length, dtype=np.uint8)
            for user, cell in parts:
                payload[: len(cell)] ^= contents[demand_of[user]][cell]
            transmissions.append(Transmission(subset=subset, payload=payload))
            total_bits += length
    return transmissions, total_bits


def decode_user(
    user: int,
    requests: Sequence[Request],
    partitions: Dict[int, Dict[tuple[int, ...], np.ndarray]],
    transmissions: Sequence[Transmission],
    masks: Dict[int, np.ndarray],
    contents: Dict[int, np.ndarray],
    file_size: int,
) -> np.ndarray:
    """Reconstruct `user`'s requested file from its cache and the link output.

    For each transmission addressed to a subset containing the user, the
    other members' subfiles are re-read from the user's own cached bits and
    XORed out, leaving the user's missing subfile.  Raises CodecError if any
    bit stays unresolved or a needed bit is not actually cached.
    """
    demand_of = dict(requests)
    wanted = demand_of[user]
    recovered = np.zeros(file_size, dtype=np.uint8)
    resolved = np.zeros(file_size, dtype=bool)
    own_mask = masks.get(wanted)
    if own_mask is not None:
        idx = np.flatnonzero(own_mask[user])
        recovered[idx] = contents[wanted][idx]
        resolved[idx] = True
    for tr in transmissions:
        if user not in tr.subset:
            continue
        own_cell = partitions[user].get(tuple(u for u in tr.subset if u != user))
        if own_cell is None or len(own_cell) == 0:
            continue
        acc = tr.payload.copy()
        for other in tr.subset:
            if other == user:
                continue
            cell = partitions[other].get(tuple(u for u in tr.subset if u != other))
            if cell is None or len(cell) == 0:
                continue
            other_file = demand_of[other]
            other_mask = masks.get(other_file)
            if other_mask is None or not other_mask[user][cell].all():
                raise CodecError(
                    f"user {user} lacks cached bits of file {other_file} needed "
                    f"to strip subset {tr.subset}"
                )
            acc[: len(cell)] ^= contents[other_file][cell]
        recovered[own_cell] = acc[: len(own_cell)]
        resolved[own_cell] = True
    if not resolved.all():
        missing = int((~resolved).sum())
        raise CodecError(f"user {user}: {missing} bits of file {wanted} unresolved")
    return recovered


class BitExactEngine:
    """Placement state and per-slot delivery/decode for one simulation run.

    Holds the (num_users, file_size) placement mask of every currently
    cached file.  File contents are derived from (content_seed, file_id) and
    regenerated as needed, so nothing but masks persists across slots.
    """

    def __init__(
        self,
        num_users: int,
        file_size: int,
        memory: float,
        partial_list_size: int,
        placement_rng: np.random.Generator,
        content_seed: int = 0,
    ) -> None:
        self.num_users = num_users
        self.file_size = file_size
        # floor() keeps each user's total at or below the memory budget.
        self.bits_per_file = math.floor(memory * file_size / partial_list_size)
        if self.bits_per_file > file_size:
            raise ValueError("per-file cached share exceeds the file size")
        self.placement_rng = placement_rng
        self.content_seed = content_seed
        self.masks: Dict[int, np.ndarray] = {}
        self._contents: Dict[int, np.ndarray] = {}
        self.last_transmissions: list[Transmission] = []

    def content(self, file_id: int) -> np.ndarray:
        bits = self._contents.get(file_id)
        if bits is None:
            seq = np.random.SeedSequence((self.content_seed, file_id))
            bits = np.random.default_rng(seq).integers(0, 2, self.file_size, dtype=np.uint8)
            self._contents[file_id] = bits
        return bits

    def insert(self, file_id: int) -> None:
        """Cache a fresh random bit slice of the file at every user."""
        rows = np.zeros((self.num_users, self.file_size), dtype=bool)
        for user in range(self.num_users):
            rows[user] = draw_placement(self.placement_rng, self.file_size, self.bits_per_file)
        self.masks[file_id] = rows

    def drop(self, file_id: int) -> None:
        self.masks.pop(file_id, None)
        self._contents.pop(file_id, None)

    def cached_volume(self, user: int) -> int:
        """Total bits user currently caches across all files."""
        return int(sum(rows[user].sum() for rows in self.masks.values()))

    def run_slot(self, requests: Sequence[Request]) -> int:
        """Deliver this slot's demands, verify every decode, return bits sent."""
        present = [u for u, _ in requests]
        contents = {f: self.content(f) for _, f in requests}
        partitions = {
            user: partition_subfiles(self.masks.get(f), present, self.file_size)
            for user, f in requests
        }
        transmissions, total_bits = deliver_slot(requests, partitions, contents)
        self.last_transmissions = transmissions
        for user, f in requests:
            recovered = decode_user(
                user, requests, partitions, transmissions, self.masks, contents, self.file_size
            )
            if not np.array_equal(recovered, contents[f]):
                raise CodecError(f"user {user} reconstructed file {f} incorrectly")
        return total_bits
