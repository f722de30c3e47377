"""Exact analysis of the correctly-cached-count chain under random eviction.

For small instances the number X_t of still-popular cached files is a Markov
chain on {0, ..., N} whose transition law is fully determined by three
conditionally independent draws per slot: the number of uncached requests
(hypergeometric over the popular set), the number of still-popular victims
(hypergeometric over the cache list), and the cached-departure indicator.
This module builds that kernel exactly, solves for its stationary
distribution, and checks the steady-state identities and bounds against it.
It also drives the actual random-eviction policy to confirm the simulated
occupation measure matches the exact stationary law.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .dynamics import Catalog
from .formulas import (
    cached_fraction_lower_bound,
    partial_list_size,
    uncached_request_bound,
)
from .policies import CodedRandomEvictionPolicy
from .rng import stream_rngs


def build_kernel(N: int, K: int, alpha: float, p: float) -> np.ndarray:
    """Exact one-slot transition matrix of the correctly-cached count.

    State x: of the N popular files, x are in the cache list of size
    ceil(alpha * N).  Each row enumerates uncached-request counts y, wrong
    eviction counts w, and the departure event.
    """
    if K > N:
        raise ValueError(f"need K <= N, got K={K}, N={N}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    n_prime = partial_list_size(N, alpha)
    kernel = np.zeros((N + 1, N + 1))
    denom_y = math.comb(N, K)
    for x in range(N + 1):
        for y in range(max(0, K - x), min(K, N - x) + 1):
            p_y = math.comb(N - x, y) * math.comb(x, K - y) / denom_y
            denom_w = math.comb(n_prime, y)
            for w in range(max(0, y - (n_prime - x)), min(y, x) + 1):
                p_w = math.comb(x, w) * math.comb(n_prime - x, y - w) / denom_w
                updated = x + y - w  # popular cached files after the update
                pr = p_y * p_w
                hit = p * updated / N  # a departure removes a cached popular file
                kernel[x, updated] += pr * (1.0 - hit)
                if updated > 0:
                    kernel[x, updated - 1] += pr * hit
    return kernel


def stationary_distribution(kernel: np.ndarray, residual_tol: float = 1e-10) -> np.ndarray:
    """Unique stationary law pi with pi @ kernel = pi, sum 1, nonnegative."""
    n = kernel.shape[0]
    system = kernel.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(system, rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.max(np.abs(pi @ kernel - pi)))
    if residual > residual_tol:
        raise RuntimeError(
            f"stationary solve residual {residual:.3e} exceeds {residual_tol:.1e}: "
            "kernel construction bug"
        )
    return pi


def recurrent_states(kernel: np.ndarray, tol: float = 1e-15) -> set[int]:
    """States belonging to closed communicating classes."""
    n = kernel.shape[0]
    adj = kernel > tol
    reach = adj | np.eye(n, dtype=bool)
    for _ in range(n):
        new = reach | (reach @ adj)
        if (new == reach).all():
            break
        reach = new
    recurrent: set[int] = set()
    for i in range(n):
        class_i = reach[i] & reach[:, i]
        successors = reach[i]
        if not (successors & ~class_i).any():
            recurrent.add(i)
    return recurrent


def quadratic_smaller_root(p: float, N: int, K: int, alpha: float, sigma2: float) -> float:
    """Smaller root of the stationary balance quadratic for a given variance.

    The stationary cached fraction solves a*z**2 + b*z + c = 0 with
    a = beta*K, b = -(pt + (1+beta)*K), c = (1 + beta*sigma2)*K, where
    beta = 1/alpha and pt = p/(1 - p/N).  Used to confirm the closed-form
    lower bound does not depend on the variance term.
    """
    beta = 1.0 / alpha
    pt = p / (1.0 - p / N)
    a = beta * K
    b = -(pt + (1.0 + beta) * K)
    c = (1.0 + beta * sigma2) * K
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise ValueError(f"no real roots at sigma2={sigma2}")
    return (-b - math.sqrt(disc)) / (2.0 * a)


def stationary_summary(N: int, K: int, alpha: float, p: float) -> dict:
    """Exact stationary moments and per-slot event means for one instance."""
    n_prime = partial_list_size(N, alpha)
    kernel = build_kernel(N, K, alpha, p)
    pi = stationary_distribution(kernel)
    states = np.arange(N + 1)
    mean_x = float(pi @ states)
    var_x = float(pi @ (states - mean_x) ** 2)
    uncached_given_x = K * (1.0 - states / N)
    wrong_given_x = uncached_given_x * states / n_prime
    updated_given_x = states + uncached_given_x - wrong_given_x
    mean_y = float(pi @ uncached_given_x)
    mean_w = float(pi @ wrong_given_x)
    mean_u = float(p / N * (pi @ updated_given_x))
    return {
        "N": N,
        "K": K,
        "alpha": alpha,
        "p": p,
        "n_prime": n_prime,
        "kernel": kernel,
        "pi": pi,
        "mean_x": mean_x,
        "var_x": var_x,
        "mean_y": mean_y,
        "mean_w": mean_w,
        "mean_u": mean_u,
    }


def verify_instance(N: int, K: int, alpha: float, p: float, atol: float = 1e-9) -> dict:
    """Check the steady-state identities and bounds on one exact instance.

    Returns a report with each check's value and verdict; `passed` is the
    conjunction.  Checks: row-stochasticity, stationarity residual, the
    balance of cached departures against net insertions, the departure-rate
    identity, the closed-form bound on mean uncached requests, the lower
    bound on the cached fraction, and the exact stationary quadratic.
    """
    summary = stationary_summary(N, K, alpha, p)
    kernel, pi = summary["kernel"], summary["pi"]
    mean_x, var_x = summary["mean_x"], summary["var_x"]
    mean_y, mean_w, mean_u = summary["mean_y"], summary["mean_w"], summary["mean_u"]
    n_prime = summary["n_prime"]

    row_residual = float(np.max(np.abs(kernel.sum(axis=1) - 1.0)))
    stationary_residual = float(np.max(np.abs(pi @ kernel - pi)))
    balance_gap = abs(mean_u - (mean_y - mean_w))
    pt = p / (1.0 - p / N)
    departure_gap = abs(mean_u - pt * mean_x / N)
    uncached_mean = K * (1.0 - mean_x / N)
    uncached_bound = uncached_request_bound(N, alpha) if alpha > 1.0 else math.inf
    fraction_bound = cached_fraction_lower_bound(p, N, K, alpha) if alpha > 1.0 else -math.inf
    xbar = mean_x / N
    sigma2 = var_x / N**2
    # Stationary quadratic with the cache list's actual size ratio.
    beta_actual = N / n_prime
    quad_residual = abs(
        K * beta_actual * xbar**2
        - (pt + K * (1.0 + beta_actual)) * xbar
        + K * (1.0 + beta_actual * sigma2)
    )

    checks = {
        "rows_stochastic": row_residual <= 1e-12,
        "stationary": stationary_residual <= 1e-10,
        "departure_balance": balance_gap <= atol,
        "departure_rate": departure_gap <= atol,
        "uncached_bound": uncached_mean <= uncached_bound + atol,
        "fraction_bound": xbar >= fraction_bound - atol,
        "stationary_quadratic": quad_residual <= atol,
    }
    return {
        "params": {"N": N, "K": K, "alpha": alpha, "p": p, "n_prime": n_prime},
        "mean_x": mean_x,
        "mean_y": mean_y,
        "mean_w": mean_w,
        "mean_u": mean_u,
        "sigma2": sigma2,
        "uncached_mean": uncached_mean,
        "uncached_bound": uncached_bound,
        "xbar": xbar,
        "fraction_bound": fraction_bound,
        "row_residual": row_residual,
        "stationary_residual": stationary_residual,
        "balance_gap": balance_gap,
        "departure_gap": departure_gap,
        "quad_residual": quad_residual,
        "checks": checks,
        "passed": all(checks.values()),
    }


DEFAULT_GRID = {
    "N": (4, 6, 8),
    "K": (2, 3),
    "alpha": (1.25, 1.5),
    "p": (0.1, 0.5, 0.9),
}


def verify_grid(grid: Optional[dict] = None, atol: float = 1e-9) -> list[dict]:
    """Run verify_instance over a parameter grid; returns one report each."""
    grid = grid or DEFAULT_GRID
    reports = []
    for N in grid["N"]:
        for K in grid["K"]:
            for alpha in grid["alpha"]:
                for p in grid["p"]:
                    reports.append(verify_instance(N, K, alpha, p, atol=atol))
    return reports


def occupation_frequencies(
    N: int,
    K: int,
    alpha: float,
    p: float,
    steps: int,
    seed: int,
    memory: float = 1.0,
    chunk: int = 20_000,
) -> np.ndarray:
    """Empirical occupation measure of X under the real random-eviction policy.

    Runs the policies-module implementation against a live catalog for
    `steps` slots and counts how often each correctly-cached count occurs,
    measured at the start of each slot.
    """
    streams = stream_rngs(seed)
    catalog = Catalog(N, p)
    n_prime = partial_list_size(N, alpha)
    placeholders = catalog.allocate_fresh(n_prime - N)
    policy = CodedRandomEvictionPolicy(
        memory, n_prime, list(range(N)) + placeholders, rng=streams["eviction"]
    )
    demand_rng = streams["demand"]
    catalog_rng = streams["catalog"]
    counts = np.zeros(N + 1, dtype=np.int64)
    users = range(K)
    done = 0
    while done < steps:
        block = min(chunk, steps - done)
        # Uniform ordered K-subsets: prefix of a fresh permutation per slot.
        demand_idx = np.argsort(demand_rng.random((block, N)), axis=1)[:, :K]
        for row in demand_idx:
            x = len(policy._pos.keys() & catalog.files)
            counts[x] += 1
            demands = catalog._order[row].tolist()
            policy.step(list(zip(users, demands)), done)
            catalog.advance(catalog_rng)
            done += 1
    return counts / counts.sum()


def tv_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Total-variation distance between two distributions on the same states."""
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())
