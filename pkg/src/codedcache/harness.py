"""Simulation runner: single runs, memory sweeps, and bound checking.

A run advances the popular-set process (or replays a trace), applies one
policy per slot, and estimates the long-term average rate as the mean
post-burn-in slot rate, with a batch-means standard error.  Sweeps rerun
the same seed for every (policy, memory) pair, so all of them consume the
identical catalog and demand trajectory (common random numbers).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .codec import BitExactEngine
from .dynamics import Catalog
from .formulas import SystemParams, expected_rate
from .policies import POLICY_NAMES, SlotOutcome, make_policy
from .rng import stream_rngs
from .trace import DemandTrace, read_trace

BITEXACT_MAX_USERS = 8


@dataclass
class RunConfig:
    params: SystemParams
    policy: str = "lrs-coded"
    mode: str = "analytic"
    file_size: Optional[int] = None
    horizon: int = 100_000
    burn_in: int = 10_000
    seed: int = 0
    trace_path: Optional[str] = None
    record_outcomes: bool = False
    refresh_on_hit: bool = True

    def __post_init__(self) -> None:
        if self.policy not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICY_NAMES}")
        if self.mode not in ("analytic", "bitexact"):
            raise ValueError(f"mode must be 'analytic' or 'bitexact', got {self.mode!r}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError(
                f"burn_in must lie in [0, horizon), got {self.burn_in} vs {self.horizon}"
            )
        if self.mode == "bitexact":
            if self.policy != "lrs-coded":
                raise ValueError("bit-exact mode is implemented for the coded LRS policy")
            if self.file_size is None:
                raise ValueError("bit-exact mode requires file_size")
            if self.params.num_users > BITEXACT_MAX_USERS:
                raise ValueError(
                    f"bit-exact mode is guarded to num_users <= {BITEXACT_MAX_USERS}"
                )


@dataclass
class RunReport:
    policy: str
    memory: float
    rate: float
    stderr: float
    horizon: int
    seed: int
    mode: str = "analytic"
    series: Optional[np.ndarray] = None
    outcomes: Optional[list[SlotOutcome]] = None
    tallies: dict = field(default_factory=dict)


def batch_means_stderr(series: np.ndarray, num_batches: int = 20) -> float:
    """Standard error of the mean from batch means (guards short series)."""
    n = len(series)
    if n < 2 * num_batches:
        return float(np.std(series, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    usable = (n // num_batches) * num_batches
    batches = series[:usable].reshape(num_batches, -1).mean(axis=1)
    return float(np.std(batches, ddof=1) / np.sqrt(num_batches))


def _init_policy(config: RunConfig, catalog: Optional[Catalog], streams, trace: Optional[DemandTrace]):
    params = config.params
    engine = None
    if config.mode == "bitexact":
        engine = BitExactEngine(
            num_users=params.num_users,
            file_size=config.file_size,
            memory=params.memory,
            partial_list_size=params.partial_list_size,
            placement_rng=streams["placement"],
            content_seed=config.seed,
        )
    if config.policy in ("lrs-coded", "random-coded"):
        if catalog is not None:
            initial = sorted(catalog.files)
            placeholders = catalog.allocate_fresh(params.partial_list_size - len(initial))
        else:
            # Trace replay has no popular set: fill the list with ids no trace
            # file can collide with.
            top = max((fid for slot in trace.slots for _, fid in slot), default=-1)
            initial = []
            placeholders = list(range(top + 1, top + 1 + params.partial_list_size))
        policy = make_policy(
            config.policy,
            params,
            initial_files=initial,
            placeholder_ids=placeholders,
            eviction_rng=streams["eviction"],
            engine=engine,
        )
    else:
        policy = make_policy(config.policy, params)
        if config.policy == "lrs-uncoded":
            policy.refresh_on_hit = config.refresh_on_hit
    return policy


def run(config: RunConfig) -> RunReport:
    """Execute one run and report the average-rate estimate."""
    params = config.params
    streams = stream_rngs(config.seed)
    trace = None
    catalog: Optional[Catalog] = None
    if config.trace_path is not None:
        trace = read_trace(config.trace_path)
        if trace.num_caches != params.num_users:
            raise ValueError(
                f"trace has K={trace.num_caches} caches but params.num_users="
                f"{params.num_users}"
            )
        for slot in trace.slots:
            for cache, _ in slot:
                if not 0 <= cache < trace.num_caches:
                    raise ValueError(f"trace cache index {cache} out of range")
        horizon = min(config.horizon, trace.num_slots)
        if horizon <= config.burn_in:
            raise ValueError(
                f"trace provides {trace.num_slots} slots; burn_in {config.burn_in} "
                "leaves nothing to average"
            )
    else:
        catalog = Catalog(params.catalog_size, params.arrival_prob)
        horizon = config.horizon

    policy = _init_policy(config, catalog, streams, trace)
    track = config.record_outcomes and hasattr(policy, "cached_files")
    users = list(range(params.num_users))
    demand_rng = streams["demand"]
    catalog_rng = streams["catalog"]

    rates = np.empty(horizon)
    outcomes: list[SlotOutcome] = []
    for t in range(1, horizon + 1):
        if trace is not None:
            requests = trace.slots[t - 1]
        else:
            demands = catalog.draw_demands(params.num_users, demand_rng)
            requests = list(zip(users, demands))
        if track and catalog is not None:
            correct = len(set(policy.cached_files) & catalog.files)
        outcome = policy.step(requests, t)
        if track and catalog is not None:
            outcome.correct = correct
            outcome.wrong_evictions = sum(1 for f in outcome.evicted if f in catalog.files)
        if catalog is not None:
            departed, _arrived = catalog.advance(catalog_rng)
            if track:
                outcome.departure_hit = int(
                    departed is not None and departed in policy.cached_files
                )
        rates[t - 1] = outcome.rate
        if config.record_outcomes:
            outcomes.append(outcome)

    tail = rates[config.burn_in :]
    report = RunReport(
        policy=config.policy,
        memory=params.memory,
        rate=float(tail.mean()),
        stderr=batch_means_stderr(tail),
        horizon=horizon,
        seed=config.seed,
        mode=config.mode,
        series=rates if config.record_outcomes else None,
        outcomes=outcomes if config.record_outcomes else None,
    )
    if config.record_outcomes:
        report.tallies = _tally(outcomes, config.burn_in)
    return report


def _tally(outcomes: Sequence[SlotOutcome], burn_in: int) -> dict:
    tail = outcomes[burn_in:]
    tally = {"mean_uncached": float(np.mean([o.uncached for o in tail]))}
    if tail and tail[0].correct is not None:
        tally["mean_correct"] = float(np.mean([o.correct for o in tail]))
        tally["mean_wrong_evictions"] = float(np.mean([o.wrong_evictions for o in tail]))
        tally["mean_departure_hits"] = float(np.mean([o.departure_hit for o in tail]))
    return tally


def sweep(
    config: RunConfig,
    memories: Sequence[float],
    policies: Optional[Sequence[str]] = None,
) -> list[RunReport]:
    """One run per (policy, memory), all on the same seed (common randomness)."""
    policies = list(policies) if policies is not None else [config.policy]
    reports = []
    for policy in policies:
        for memory in memories:
            cfg = replace(
                config,
                policy=policy,
                params=replace(config.params, memory=float(memory)),
            )
            reports.append(run(cfg))
    return reports


def check_bounds(reports: Sequence[RunReport], params: SystemParams) -> list[dict]:
    """Compare measured average rates against the optimal-rate sandwich.

    The upper comparison (rate <= 2R + 6, R at the nominal catalog size)
    applies for catalogs of at least 7 files; both checks allow 3 standard
    errors of simulation noise.
    """
    verdicts = []
    for report in reports:
        rate_ref = expected_rate(report.memory, params.catalog_size, params.num_users)
        upper = 2.0 * rate_ref + 6.0
        lower = rate_ref / 12.0
        slack = 3.0 * report.stderr
        upper_applicable = params.catalog_size >= 7
        upper_ok = (not upper_applicable) or report.rate <= upper + slack
        lower_ok = report.rate >= lower - slack
        verdicts.append(
            {
                "policy": report.policy,
                "memory": report.memory,
                "rate": report.rate,
                "stderr": report.stderr,
                "reference_rate": rate_ref,
                "upper": upper,
                "lower": lower,
                "upper_applicable": upper_applicable,
                "upper_ok": bool(upper_ok),
                "lower_ok": bool(lower_ok),
                "passed": bool(upper_ok and lower_ok),
            }
        )
    return verdicts


CSV_HEADER = "policy,M,rate,stderr,T,seed"


def reports_to_csv(reports: Sequence[RunReport]) -> str:
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(f"{r.policy},{r.memory:g},{r.rate!r},{r.stderr!r},{r.horizon},{r.seed}")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Sequence[RunReport], include_series: bool = False) -> str:
    rows = []
    for r in reports:
        row = {
            "policy": r.policy,
            "M": r.memory,
            "rate": r.rate,
            "stderr": r.stderr,
            "T": r.horizon,
            "seed": r.seed,
        }
        if include_series and r.series is not None:
            row["series"] = [float(x) for x in r.series]
        rows.append(row)
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
