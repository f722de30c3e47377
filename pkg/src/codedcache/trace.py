"""Ratings-log ingestion and canonical demand traces.

A ratings file is delimiter-separated with columns movie_id, user_id,
rating, date (the rating itself is ignored); a release table maps movie_id
to release year.  Filtered records are assigned to caches, queued per cache
in date order, and drained one request per cache per slot.  The resulting
trace serializes to a stable line format: a `K=<int> slots=<int>` header,
then one line per slot of space-separated `cacheIdx:fileId` tokens.
"""

from __future__ import annotations

import datetime as dt
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    movie_id: str
    date: dt.date


@dataclass
class FilterStats:
    kept: int = 0
    dropped_missing_release: int = 0
    dropped_wrong_year: int = 0
    dropped_before_release: int = 0


@dataclass
class DemandTrace:
    """Slots of (cache index, file id) requests plus the id re-encoding."""

    num_caches: int
    slots: list[list[tuple[int, int]]]
    file_ids: dict[str, int] = field(default_factory=dict)  # movie_id -> dense id

    @property
    def num_slots(self) -> int:
        return len(self.slots)


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def read_ratings(path_or_file, delimiter: str = ",") -> list[RatingRecord]:
    """Parse movie_id, user_id, rating, date rows; rating is discarded."""
    if hasattr(path_or_file, "read"):
        return _read_ratings_stream(path_or_file, delimiter)
    with open(path_or_file, "r", encoding="utf-8") as handle:
        return _read_ratings_stream(handle, delimiter)


def _read_ratings_stream(handle: TextIO, delimiter: str) -> list[RatingRecord]:
    records = []
    for line in handle:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        movie_id, user_id, _rating, date = line.split(delimiter)[:4]
        records.append(RatingRecord(user_id.strip(), movie_id.strip(), parse_date(date)))
    return records


def read_release_table(path_or_file, delimiter: str = ",") -> dict[str, int]:
    """Parse movie_id, year, title rows into a movie_id -> year map."""
    if hasattr(path_or_file, "read"):
        handle = path_or_file
        return _read_release_stream(handle, delimiter)
    with open(path_or_file, "r", encoding="utf-8") as handle:
        return _read_release_stream(handle, delimiter)


def _read_release_stream(handle: TextIO, delimiter: str) -> dict[str, int]:
    table = {}
    for line in handle:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(delimiter)
        movie_id, year = parts[0].strip(), parts[1].strip()
        if not year.isdigit():
            continue  # header or malformed year
        table[movie_id] = int(year)
    return table


def filter_ratings(
    records: Iterable[RatingRecord],
    rating_year: int,
    release_years: set[int],
    release_table: Mapping[str, int],
) -> tuple[list[RatingRecord], FilterStats]:
    """Keep records rated in `rating_year` for movies released in `release_years`.

    Records for movies missing from the release table, and records dated
    before their movie's release year, are dropped and counted.  Order is
    preserved.
    """
    stats = FilterStats()
    kept = []
    for record in records:
        if record.date.year != rating_year:
            stats.dropped_wrong_year += 1
            continue
        release = release_table.get(record.movie_id)
        if release is None:
            stats.dropped_missing_release += 1
            continue
        if release not in release_years:
            stats.dropped_wrong_year += 1
            continue
        if record.date.year < release:
            stats.dropped_before_release += 1
            continue
        kept.append(record)
        stats.kept += 1
    return kept, stats


def assign_cache(user_id: str, num_caches: int) -> int:
    """Deterministic cache index for a user (crc32 of the id, mod K)."""
    return zlib.crc32(user_id.encode("utf-8")) % num_caches


def build_trace(
    records: Sequence[RatingRecord],
    num_caches: int,
    assignment: str = "hash",
) -> DemandTrace:
    """Turn date-sorted records into slots of at most one request per cache.

    Each record goes to its user's cache queue ("hash": stable hash of the
    user id; "round_robin": users get caches in first-appearance order).
    Slots then drain the queues: every cache with pending requests
    contributes its oldest one per slot.  Movie ids are re-encoded densely
    in first-appearance order.
    """
    if num_caches <= 0:
        raise ValueError(f"num_caches must be positive, got {num_caches}")
    if assignment not in ("hash", "round_robin"):
        raise ValueError(f"unknown assignment {assignment!r}")
    ordered = sorted(records, key=lambda r: r.date)  # stable: ties keep input order
    file_ids: dict[str, int] = {}
    queues: list[list[int]] = [[] for _ in range(num_caches)]
    rr_users: dict[str, int] = {}
    for record in ordered:
        fid = file_ids.setdefault(record.movie_id, len(file_ids))
        if assignment == "hash":
            cache = assign_cache(record.user_id, num_caches)
        else:
            cache = rr_users.setdefault(record.user_id, len(rr_users) % num_caches)
        queues[cache].append(fid)
    heads = [0] * num_caches
    slots: list[list[tuple[int, int]]] = []
    remaining = len(ordered)
    while remaining:
        slot = []
        for cache in range(num_caches):
            if heads[cache] < len(queues[cache]):
                slot.append((cache, queues[cache][heads[cache]]))
                heads[cache] += 1
                remaining -= 1
        slots.append(slot)
    return DemandTrace(num_caches=num_caches, slots=slots, file_ids=file_ids)


def write_trace(trace: DemandTrace, path_or_file) -> None:
    """Serialize in the canonical line format (byte-stable)."""
    if hasattr(path_or_file, "write"):
        _write_trace_stream(trace, path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as handle:
            _write_trace_stream(trace, handle)


def _write_trace_stream(trace: DemandTrace, handle: TextIO) -> None:
    handle.write(f"K={trace.num_caches} slots={trace.num_slots}\n")
    for slot in trace.slots:
        handle.write(" ".join(f"{cache}:{fid}" for cache, fid in slot))
        handle.write("\n")


def trace_to_text(trace: DemandTrace) -> str:
    import io

    buffer = io.StringIO()
    _write_trace_stream(trace, buffer)
    return buffer.getvalue()


def read_trace(path_or_file) -> DemandTrace:
    if hasattr(path_or_file, "read"):
        return _read_trace_stream(path_or_file)
    with open(path_or_file, "r", encoding="utf-8") as handle:
        return _read_trace_stream(handle)


def _read_trace_stream(handle: TextIO) -> DemandTrace:
    header = handle.readline().strip()
    try:
        k_part, slots_part = header.split()
        num_caches = int(k_part.removeprefix("K="))
        num_slots = int(slots_part.removeprefix("slots="))
    except ValueError as exc:
        raise ValueError(f"malformed trace header: {header!r}") from exc
    slots = []
    for line in handle:
        line = line.strip()
        if not line:
            slots.append([])
            continue
        slot = []
        for token in line.split():
            cache, fid = token.split(":")
            slot.append((int(cache), int(fid)))
        slots.append(slot)
    if len(slots) != num_slots:
        raise ValueError(f"trace header promises {num_slots} slots, found {len(slots)}")
    return DemandTrace(num_caches=num_caches, slots=slots)


def popularity_series(
    records: Sequence[RatingRecord], movie_id: str, bucket: str = "week"
) -> dict[tuple[int, int], int]:
    """Weekly request counts for one movie, zero-filled over the records' span.

    Buckets are ISO (year, week) pairs.  Returns an empty mapping when
    `records` is empty; an unknown movie gets an all-zero series.
    """
    if bucket != "week":
        raise ValueError(f"only weekly buckets are supported, got {bucket!r}")
    if not records:
        return {}
    weeks = [r.date.isocalendar()[:2] for r in records]
    lo, hi = min(weeks), max(weeks)
    series: dict[tuple[int, int], int] = {}
    cursor = dt.date.fromisocalendar(lo[0], lo[1], 1)
    stop = dt.date.fromisocalendar(hi[0], hi[1], 1)
    while cursor <= stop:
        series[cursor.isocalendar()[:2]] = 0
        cursor += dt.timedelta(weeks=1)
    for record, week in zip(records, weeks):
        if record.movie_id == movie_id:
            series[week] += 1
    return series
