"""Bit-exact placement, partitioning, delivery, and decoding."""

from itertools import combinations

import numpy as np
import pytest

from codedcache.codec import (
    BitExactEngine,
    CodecError,
    decode_user,
    deliver_slot,
    draw_placement,
    partition_subfiles,
)
from codedcache.formulas import expected_rate
from codedcache.rng import stream_rngs


def random_instance(rng, num_users, file_size, num_files, cached_bits, uncached=()):
    """Masks and contents for `num_files` files; ids in `uncached` get no mask."""
    masks = {}
    for f in range(num_files):
        if f in uncached:
            continue
        masks[f] = np.vstack(
            [draw_placement(rng, file_size, cached_bits) for _ in range(num_users)]
        )
    contents = {f: rng.integers(0, 2, file_size, dtype=np.uint8) for f in range(num_files)}
    return masks, contents


def deliver_and_decode(requests, masks, contents, file_size):
    present = [u for u, _ in requests]
    partitions = {
        u: partition_subfiles(masks.get(f), present, file_size) for u, f in requests
    }
    transmissions, total_bits = deliver_slot(requests, partitions, contents)
    for user, f in requests:
        recovered = decode_user(
            user, requests, partitions, transmissions, masks, contents, file_size
        )
        assert np.array_equal(recovered, contents[f]), f"user {user} failed on file {f}"
    return transmissions, total_bits


class TestPlacement:
    def test_extremes(self):
        rng = np.random.default_rng(0)
        assert draw_placement(rng, 64, 64).all()
        assert not draw_placement(rng, 64, 0).any()

    def test_rejects_oversized_fraction(self):
        with pytest.raises(ValueError):
            draw_placement(np.random.default_rng(0), 16, 17)

    def test_exact_size_and_uniform_concentration(self):
        # With two users each caching half the bits, the exclusively-at-one-
        # user cell concentrates near (1/2)(1/2) of the file.
        rng = np.random.default_rng(1)
        file_size = 100_000
        mask = np.vstack(
            [draw_placement(rng, file_size, file_size // 2) for _ in range(2)]
        )
        assert mask.sum(axis=1).tolist() == [file_size // 2] * 2
        cells = partition_subfiles(mask, [0, 1], file_size)
        assert len(cells[(0,)]) / file_size == pytest.approx(0.25, abs=0.01)
        assert len(cells[(1,)]) / file_size == pytest.approx(0.25, abs=0.01)
        assert len(cells[(0, 1)]) / file_size == pytest.approx(0.25, abs=0.01)


class TestPartition:
    def test_single_user_has_two_cells(self):
        rng = np.random.default_rng(2)
        mask = draw_placement(rng, 32, 10)[None, :]
        cells = partition_subfiles(mask, [0], 32)
        assert set(cells) == {(), (0,)}
        assert len(cells[()]) == 22 and len(cells[(0,)]) == 10

    def test_uncached_file_is_a_single_cell(self):
        cells = partition_subfiles(None, [0, 1, 2], 17)
        assert list(cells) == [()]
        assert np.array_equal(cells[()], np.arange(17))

    def test_cells_partition_the_file(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            num_users = int(rng.integers(1, 5))
            file_size = int(rng.integers(1, 200))
            cached = int(rng.integers(0, file_size + 1))
            mask = np.vstack(
                [draw_placement(rng, file_size, cached) for _ in range(num_users)]
            )
            cells = partition_subfiles(mask, list(range(num_users)), file_size)
            merged = np.concatenate(list(cells.values()))
            assert len(merged) == file_size
            assert np.array_equal(np.sort(merged), np.arange(file_size))


class TestDelivery:
    def test_two_user_schedule_matches_worked_example(self):
        # Demands (A, B): the link carries A_emptyset, B_emptyset, A_2 xor B_1.
        rng = np.random.default_rng(4)
        file_size = 4096
        masks, contents = random_instance(rng, 2, file_size, 2, file_size // 2)
        requests = [(0, 0), (1, 1)]
        partitions = {
            u: partition_subfiles(masks[f], [0, 1], file_size) for u, f in requests
        }
        transmissions, _ = deliver_slot(requests, partitions, contents)
        assert [t.subset for t in transmissions] == [(0, 1), (0,), (1,)]
        pair = transmissions[0]
        a_at_2 = partitions[0][(1,)]
        b_at_1 = partitions[1][(0,)]
        length = max(len(a_at_2), len(b_at_1))
        want = np.zeros(length, dtype=np.uint8)
        want[: len(a_at_2)] ^= contents[0][a_at_2]
        want[: len(b_at_1)] ^= contents[1][b_at_1]
        assert np.array_equal(pair.payload, want)
        # user 0 holds B_1, so it can strip the XOR down to its missing A_2
        recovered = decode_user(0, requests, partitions, transmissions, masks, contents, file_size)
        assert np.array_equal(recovered[a_at_2], contents[0][a_at_2])

    def test_zero_memory_sends_whole_files(self):
        rng = np.random.default_rng(5)
        file_size = 64
        masks, contents = random_instance(rng, 3, file_size, 3, 0)
        requests = [(0, 0), (1, 1), (2, 2)]
        partitions = {
            u: partition_subfiles(masks[f], [0, 1, 2], file_size) for u, f in requests
        }
        transmissions, total_bits = deliver_slot(requests, partitions, contents)
        assert total_bits == 3 * file_size
        assert all(t.subset in [(0,), (1,), (2,)] for t in transmissions)

    def test_three_user_rate_concentrates(self):
        rng = np.random.default_rng(6)
        file_size = 2**14
        memory, n_prime = 2.0, 6
        cached = int(memory * file_size / n_prime)
        masks, contents = random_instance(rng, 3, file_size, 3, cached)
        requests = [(0, 0), (1, 1), (2, 2)]
        _, total_bits = deliver_and_decode(requests, masks, contents, file_size)
        analytic = expected_rate(memory, n_prime, 3)
        assert total_bits / file_size == pytest.approx(analytic, rel=0.05)


class TestDecode:
    def test_single_user_roundtrip(self):
        rng = np.random.default_rng(7)
        masks, contents = random_instance(rng, 1, 128, 1, 40)
        deliver_and_decode([(0, 0)], masks, contents, 128)

    def test_uncached_request_handled_whole(self):
        rng = np.random.default_rng(8)
        masks, contents = random_instance(rng, 2, 256, 3, 100, uncached=(2,))
        deliver_and_decode([(0, 0), (1, 2)], masks, contents, 256)

    def test_duplicate_demands_decode_independently(self):
        rng = np.random.default_rng(9)
        masks, contents = random_instance(rng, 3, 128, 2, 50)
        deliver_and_decode([(0, 0), (1, 0), (2, 1)], masks, contents, 128)

    def test_exhaustive_tiny_instance(self):
        # Every half-cached placement of two files at two users, every
        # demand pair, decodes exactly.
        file_size, half = 4, 2
        rng = np.random.default_rng(10)
        contents = {f: rng.integers(0, 2, file_size, dtype=np.uint8) for f in range(2)}
        options = [np.isin(np.arange(file_size), c) for c in combinations(range(file_size), half)]
        count = 0
        for a0 in options:
            for a1 in options:
                for b0 in options:
                    for b1 in options:
                        masks = {0: np.vstack([a0, a1]), 1: np.vstack([b0, b1])}
                        for demands in ((0, 1), (1, 0), (0, 0), (1, 1)):
                            requests = list(enumerate(demands))
                            deliver_and_decode(requests, masks, contents, file_size)
                            count += 1
        assert count == 6**4 * 4

    def test_randomized_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            num_users = int(rng.integers(1, 5))
            file_size = int(rng.integers(4, 1025))
            num_files = int(rng.integers(num_users, num_users + 3))
            cached = int(rng.integers(0, file_size + 1))
            skip = tuple(f for f in range(num_files) if rng.random() < 0.2)
            masks, contents = random_instance(
                rng, num_users, file_size, num_files, cached, uncached=skip
            )
            demand = rng.choice(num_files, size=num_users, replace=False)
            requests = list(enumerate(int(d) for d in demand))
            deliver_and_decode(requests, masks, contents, file_size)

    def test_corrupted_cache_is_a_hard_error(self):
        rng = np.random.default_rng(12)
        masks, contents = random_instance(rng, 2, 64, 2, 32)
        requests = [(0, 0), (1, 1)]
        partitions = {
            u: partition_subfiles(masks[f], [0, 1], 64) for u, f in requests
        }
        transmissions, _ = deliver_slot(requests, partitions, contents)
        # User 0 pretends it cached nothing of file 1: stripping must fail.
        broken = dict(masks)
        broken[1] = masks[1].copy()
        broken[1][0, :] = False
        with pytest.raises(CodecError):
            decode_user(0, requests, partitions, transmissions, broken, contents, 64)


class TestEngine:
    def test_memory_budget_respected(self):
        streams = stream_rngs(1)
        engine = BitExactEngine(
            num_users=3, file_size=999, memory=2.0, partial_list_size=7,
            placement_rng=streams["placement"],
        )
        for f in range(7):
            engine.insert(f)
        budget = 2.0 * 999
        for user in range(3):
            assert engine.cached_volume(user) == 7 * engine.bits_per_file
            assert engine.cached_volume(user) <= budget

    def test_slot_rate_and_decode(self):
        streams = stream_rngs(2)
        engine = BitExactEngine(
            num_users=2, file_size=4096, memory=1.0, partial_list_size=3,
            placement_rng=streams["placement"],
        )
        for f in range(3):
            engine.insert(f)
        bits = engine.run_slot([(0, 0), (1, 1)])
        assert bits / 4096 == pytest.approx(expected_rate(1.0, 3, 2), rel=0.05)

    def test_contents_regenerate_deterministically(self):
        streams = stream_rngs(3)
        engine = BitExactEngine(2, 256, 1.0, 3, streams["placement"], content_seed=9)
        first = engine.content(5).copy()
        engine.drop(5)
        assert np.array_equal(engine.content(5), first)
