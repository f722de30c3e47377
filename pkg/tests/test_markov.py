"""Exact chain analysis for the random-eviction cache process."""

import math

import numpy as np
import pytest

from codedcache.formulas import cached_fraction_lower_bound
from codedcache.markov import (
    DEFAULT_GRID,
    build_kernel,
    occupation_frequencies,
    quadratic_smaller_root,
    recurrent_states,
    stationary_distribution,
    stationary_summary,
    tv_distance,
    verify_grid,
    verify_instance,
)


def grid_points():
    for n in DEFAULT_GRID["N"]:
        for k in DEFAULT_GRID["K"]:
            for alpha in DEFAULT_GRID["alpha"]:
                for p in DEFAULT_GRID["p"]:
                    yield n, k, alpha, p


class TestKernel:
    def test_rows_are_distributions(self):
        for n, k, alpha, p in grid_points():
            kernel = build_kernel(n, k, alpha, p)
            assert np.max(np.abs(kernel.sum(axis=1) - 1.0)) <= 1e-12
            assert kernel.min() >= 0.0

    def test_two_state_chain_solved_by_hand(self):
        # One user, one popular file, no overprovisioning: the cache holds
        # the popular file unless the last slot's departure removed it, so
        # both rows are (p, 1-p) and the stationary mean is 1 - p.
        for p in (0.0, 0.25, 0.7, 1.0):
            kernel = build_kernel(1, 1, 1.0, p)
            assert np.allclose(kernel, [[p, 1 - p], [p, 1 - p]], atol=1e-15)
            pi = stationary_distribution(kernel)
            assert pi @ [0, 1] == pytest.approx(1 - p, abs=1e-12)

    def test_no_arrivals_absorbs_at_full_overlap(self):
        pi = stationary_distribution(build_kernel(5, 2, 1.5, 0.0))
        assert pi[-1] == pytest.approx(1.0, abs=1e-12)

    def test_rejects_more_users_than_files(self):
        with pytest.raises(ValueError):
            build_kernel(3, 4, 1.5, 0.1)

    def test_recurrent_class_structure(self):
        # The chain's single ergodic class starts at ceil(K/2) - 1; smaller
        # states are transient.
        for n, k in [(4, 2), (6, 3), (8, 3), (8, 2)]:
            kernel = build_kernel(n, k, 1.5, 0.5)
            expected = set(range(math.ceil(k / 2) - 1, n + 1))
            assert recurrent_states(kernel) == expected


class TestStationary:
    def test_fixed_point_residual(self):
        for n, k, alpha, p in grid_points():
            kernel = build_kernel(n, k, alpha, p)
            pi = stationary_distribution(kernel)
            assert np.max(np.abs(pi @ kernel - pi)) <= 1e-10
            assert pi.sum() == pytest.approx(1.0, abs=1e-12)
            assert pi.min() >= 0.0

    def test_uncached_mean_identity(self):
        # E(Y) equals K(1 - E(X)/N) exactly, by linearity of the
        # hypergeometric mean.
        summary = stationary_summary(6, 3, 1.25, 0.5)
        assert summary["mean_y"] == pytest.approx(
            3 * (1 - summary["mean_x"] / 6), abs=1e-12
        )

    def test_exact_fraction_dominates_closed_form_bound(self):
        summary = stationary_summary(4, 2, 1.5, 0.5)
        bound = cached_fraction_lower_bound(0.5, 4, 2, 1.5)
        assert summary["mean_x"] / 4 >= bound - 1e-12


class TestVerification:
    def test_full_grid_passes(self):
        reports = verify_grid()
        assert len(reports) == 36
        for report in reports:
            assert report["passed"], report

    def test_uncached_bound_slack_strictly_positive(self):
        report = verify_instance(8, 3, 1.5, 0.3)
        assert report["uncached_mean"] < report["uncached_bound"] - 1e-3

    def test_no_arrivals_trivial_balance(self):
        report = verify_instance(6, 2, 1.5, 0.0)
        assert report["mean_u"] == pytest.approx(0.0, abs=1e-12)
        assert report["mean_y"] - report["mean_w"] == pytest.approx(0.0, abs=1e-12)
        assert report["passed"]

    def test_bound_is_variance_independent(self):
        # The closed-form lower bound must sit below the quadratic's smaller
        # root no matter the variance plugged in.
        for n, k, alpha, p in grid_points():
            if p == 0.0:
                continue
            summary = stationary_summary(n, k, alpha, p)
            sigma2 = summary["var_x"] / n**2
            bound = cached_fraction_lower_bound(p, n, k, alpha)
            for scale in (0.0, 0.5, 1.0, 2.0):
                root = quadratic_smaller_root(p, n, k, alpha, scale * sigma2)
                assert root >= bound - 1e-9


class TestOccupation:
    def test_matches_exact_stationary_law(self):
        freq = occupation_frequencies(4, 2, 1.5, 0.5, steps=200_000, seed=7)
        pi = stationary_distribution(build_kernel(4, 2, 1.5, 0.5))
        assert tv_distance(freq, pi) < 0.03

    def test_tv_distance_basics(self):
        assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
