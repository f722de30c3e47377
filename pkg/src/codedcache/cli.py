"""Command-line interface.

Subcommands:
  simulate  one run, one policy
  sweep     runs over a memory grid (and optionally several policies)
  verify    exact-chain grid, codec brute force, and analytic bound checks
  ingest    ratings file -> canonical demand trace
  figures   canned synthetic / trace sweeps as CSV

A config file of `key = value` lines (# comments) may supply any flag's
value; explicit flags win.  Usage errors exit 2; verification failures
exit 3.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import codec, markov
from .formulas import SystemParams, expected_rate, overprovision_penalty
from .harness import (
    RunConfig,
    check_bounds,
    reports_to_csv,
    reports_to_json,
    run,
    sweep,
)
from .policies import POLICY_NAMES
from .trace import build_trace, filter_ratings, read_ratings, read_release_table, write_trace

USAGE_ERROR = 2
VERIFY_ERROR = 3


def parse_memory_grid(spec: str) -> list[float]:
    """Parse '0:1000:50' (inclusive) or a comma list like '250,1000'."""
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        if step <= 0:
            raise ValueError(f"step must be positive in {spec!r}")
        values = []
        v = start
        while v <= stop + 1e-9:
            values.append(round(v, 9))
            v += step
        return values
    return [float(x) for x in spec.split(",")]


def load_config_file(path: str) -> dict[str, str]:
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line must be 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--N", type=int, default=1000, help="popular-set size")
    parser.add_argument("--K", type=int, default=30, help="number of users")
    parser.add_argument(
        "--M", default="250",
        help="cache memory in files; sweep/figures also accept 'start:stop:step' or a comma list",
    )
    parser.add_argument("--p", type=float, default=0.1, help="arrival probability")
    parser.add_argument("--alpha", type=float, default=1.4, help="overprovision factor")
    parser.add_argument("--policy", choices=POLICY_NAMES, default="lrs-coded")
    parser.add_argument("--mode", choices=("analytic", "bitexact"), default="analytic")
    parser.add_argument("--F", type=int, default=None, help="file size in bits (bit-exact)")
    parser.add_argument("--T", type=int, default=100_000, help="horizon in slots")
    parser.add_argument("--burn-in", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trace", default=None, help="demand trace file to replay")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--series", action="store_true", help="include per-slot rates (json)")
    parser.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codedcache")
    parser.add_argument("--config", default=None, help="key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="single run")
    add_run_flags(sim)

    swp = sub.add_parser("sweep", help="runs over a memory grid")
    add_run_flags(swp)
    swp.add_argument("--M-grid", default=None, help="memory grid, 'start:stop:step' or comma list")
    swp.add_argument(
        "--policies", default=None, help="comma list of policies (default: --policy)"
    )
    swp.add_argument(
        "--check-bounds", action="store_true", help="report the optimal-rate sandwich verdicts"
    )

    ver = sub.add_parser("verify", help="exact-chain, codec, and bound verification")
    ver.add_argument("--grid", choices=("small",), default="small")
    ver.add_argument("--mc-steps", type=int, default=1_000_000)
    ver.add_argument("--seed", type=int, default=7)
    ver.add_argument("--format", choices=("text", "json"), default="text")
    ver.add_argument("--out", default=None)

    ing = sub.add_parser("ingest", help="ratings file -> demand trace")
    ing.add_argument("--ratings", required=True)
    ing.add_argument("--releases", required=True)
    ing.add_argument("--rating-year", type=int, default=2005)
    ing.add_argument("--release-years", default="2004,2005")
    ing.add_argument("--K", type=int, default=100)
    ing.add_argument("--assignment", choices=("hash", "round_robin"), default="hash")
    ing.add_argument("--out", required=True)

    fig = sub.add_parser("figures", help="canned sweeps as CSV")
    add_run_flags(fig)
    fig.add_argument("--which", choices=("synthetic", "trace"), default="synthetic")
    fig.add_argument("--M-grid", default="0:1000:50")

    return parser


def make_config(args: argparse.Namespace, memory: float | None = None) -> RunConfig:
    params = SystemParams(
        num_users=args.K,
        catalog_size=args.N,
        memory=float(args.M) if memory is None else memory,
        alpha=args.alpha,
        arrival_prob=args.p,
    )
    return RunConfig(
        params=params,
        policy=args.policy,
        mode=args.mode,
        file_size=args.F,
        horizon=args.T,
        burn_in=args.burn_in,
        seed=args.seed,
        trace_path=args.trace,
        record_outcomes=args.series,
    )


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    report = run(make_config(args))
    if args.format == "json":
        emit(reports_to_json([report], include_series=args.series), args.out)
    else:
        emit(reports_to_csv([report]), args.out)
    return 0


def cmd_sweep(args) -> int:
    memories = parse_memory_grid(args.M_grid if args.M_grid else args.M)
    config = make_config(args, memory=memories[0])
    policies = args.policies.split(",") if args.policies else None
    reports = sweep(config, memories, policies=policies)
    if args.format == "json":
        text = reports_to_json(reports, include_series=args.series)
    else:
        text = reports_to_csv(reports)
    if args.check_bounds:
        verdicts = check_bounds(reports, config.params)
        text += json.dumps(verdicts, indent=2, sort_keys=True) + "\n"
    emit(text, args.out)
    return 0


def _verify_codec(rng: np.random.Generator) -> dict:
    """Small brute-force decode sweep; returns counts (raises on any failure)."""
    decodes = 0
    # Exhaustive at tiny size: every half-cached placement of 2 files at
    # 2 users, every demand pair.
    file_size, half = 4, 2
    from itertools import combinations

    all_masks = [
        np.isin(np.arange(file_size), c) for c in combinations(range(file_size), half)
    ]
    contents = {
        0: rng.integers(0, 2, file_size, dtype=np.uint8),
        1: rng.integers(0, 2, file_size, dtype=np.uint8),
    }
    for m_a0 in all_masks:
        for m_a1 in all_masks:
            for m_b0 in all_masks:
                for m_b1 in all_masks:
                    masks = {0: np.vstack([m_a0, m_a1]), 1: np.vstack([m_b0, m_b1])}
                    for demands in ((0, 1), (1, 0), (0, 0), (1, 1)):
                        requests = list(enumerate(demands))
                        parts = {
                            u: codec.partition_subfiles(masks.get(f), [0, 1], file_size)
                            for u, f in requests
                        }
                        txs, _bits = codec.deliver_slot(requests, parts, contents)
                        for user, f in requests:
                            got = codec.decode_user(
                                user, requests, parts, txs, masks, contents, file_size
                            )
                            if not np.array_equal(got, contents[f]):
                                raise codec.CodecError(f"exhaustive decode mismatch at user {user}")
                            decodes += 1
    # Randomized midsize instances.
    for _ in range(200):
        num_users = int(rng.integers(1, 5))
        file_size = int(rng.integers(8, 257))
        num_files = int(rng.integers(num_users, num_users + 3))
        cached = rng.integers(0, file_size + 1)
        masks = {
            f: np.vstack(
                [codec.draw_placement(rng, file_size, int(cached)) for _ in range(num_users)]
            )
            for f in range(num_files)
        }
        contents = {
            f: rng.integers(0, 2, file_size, dtype=np.uint8) for f in range(num_files)
        }
        demand = rng.choice(num_files, size=num_users, replace=False)
        requests = list(enumerate(int(d) for d in demand))
        parts = {
            u: codec.partition_subfiles(masks.get(f), list(range(num_users)), file_size)
            for u, f in requests
        }
        txs, _bits = codec.deliver_slot(requests, parts, contents)
        for user, f in requests:
            got = codec.decode_user(user, requests, parts, txs, masks, contents, file_size)
            if not np.array_equal(got, contents[f]):
                raise codec.CodecError(f"random decode mismatch at user {user}")
            decodes += 1
    return {"decodes": decodes}


def _verify_penalty_grid(rng: np.random.Generator, points: int = 1000) -> dict:
    worst = -np.inf
    for _ in range(points):
        alpha = float(rng.uniform(1.0, 1.999))
        users = int(rng.integers(1, 64))
        catalog = float(rng.uniform(users, 4000))
        memory = float(rng.uniform(0.0, catalog))
        lhs = expected_rate(memory, alpha * catalog, users)
        rhs = 2.0 * expected_rate(memory, catalog, users) + overprovision_penalty(alpha)
        worst = max(worst, lhs - rhs)
    if worst > 1e-9:
        raise AssertionError(f"overprovision penalty bound violated by {worst}")
    return {"worst_margin": worst}


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = []
    reports = markov.verify_grid()
    for report in reports:
        if not report["passed"]:
            failures.append(report)
    freq = markov.occupation_frequencies(
        N=4, K=2, alpha=1.5, p=0.5, steps=args.mc_steps, seed=args.seed
    )
    pi = markov.stationary_distribution(markov.build_kernel(4, 2, 1.5, 0.5))
    tv = markov.tv_distance(freq, pi)
    codec_stats = _verify_codec(rng)
    penalty_stats = _verify_penalty_grid(rng)
    result = {
        "exact_grid": {
            "instances": len(reports),
            "failures": len(failures),
        },
        "occupation_tv": tv,
        "occupation_ok": tv < 0.02,
        "codec": codec_stats,
        "penalty_grid": penalty_stats,
    }
    ok = not failures and tv < 0.02
    if args.format == "json":
        emit(json.dumps(result, indent=2, sort_keys=True) + "\n", args.out)
    else:
        lines = [
            f"exact grid: {len(reports)} instances, {len(failures)} failures",
            f"occupation TV distance: {tv:.5f} (< 0.02 required)",
            f"codec decodes verified: {codec_stats['decodes']}",
            f"penalty grid worst margin: {penalty_stats['worst_margin']:.3e}",
            "PASS" if ok else "FAIL",
        ]
        emit("\n".join(lines) + "\n", args.out)
    return 0 if ok else VERIFY_ERROR


def cmd_ingest(args) -> int:
    records = read_ratings(args.ratings)
    releases = read_release_table(args.releases)
    years = {int(y) for y in args.release_years.split(",")}
    kept, stats = filter_ratings(records, args.rating_year, years, releases)
    trace = build_trace(kept, args.K, assignment=args.assignment)
    write_trace(trace, args.out)
    sys.stderr.write(
        f"kept {stats.kept} records "
        f"(dropped: {stats.dropped_wrong_year} wrong year, "
        f"{stats.dropped_missing_release} missing release, "
        f"{stats.dropped_before_release} before release); "
        f"{len(trace.file_ids)} unique movies, {trace.num_slots} slots\n"
    )
    return 0


def cmd_figures(args) -> int:
    memories = parse_memory_grid(args.M_grid)
    config = make_config(args, memory=memories[0])
    if args.which == "synthetic":
        policies = ["lru", "lrs-uncoded", "lrs-coded"]
    else:
        if args.trace is None:
            raise ValueError("figures --which trace requires --trace")
        policies = ["lru", "lrs-coded"]
    reports = sweep(config, memories, policies=policies)
    emit(reports_to_csv(reports), args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "ingest": cmd_ingest,
    "figures": cmd_figures,
}


def _inject_config(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Expand --config into flags placed before the user's own flags.

    The file's entries become ordinary flags right after the subcommand, so
    anything passed explicitly on the command line still overrides them.
    """
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    probe, _ = parser.parse_known_args(argv)
    if not probe.config:
        return argv
    try:
        file_values = load_config_file(probe.config)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    injected: list[str] = []
    for key, value in file_values.items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(flag)
        else:
            injected.extend([flag, value])
    for i, token in enumerate(argv):
        if token in COMMANDS:
            return argv[: i + 1] + injected + argv[i + 1 :]
    return argv


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    argv = _inject_config(argv, parser)
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
