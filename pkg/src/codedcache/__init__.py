"""Online coded caching over a shared broadcast link: policies, bit-exact
coded delivery, popular-set dynamics, exact small-instance analysis, trace
ingestion, and a simulation harness."""

from .codec import BitExactEngine, CodecError, Transmission
from .dynamics import Catalog
from .formulas import (
    RateBounds,
    SystemParams,
    cached_fraction_lower_bound,
    expected_rate,
    global_gain,
    optimal_rate_bounds,
    overprovision_penalty,
    partial_list_size,
    uncached_request_bound,
)
from .harness import RunConfig, RunReport, check_bounds, run, sweep
from .policies import (
    CodedLrsPolicy,
    CodedRandomEvictionPolicy,
    LruPolicy,
    SlotOutcome,
    UncodedLrsPolicy,
    make_policy,
)

__all__ = [
    "BitExactEngine",
    "Catalog",
    "CodecError",
    "CodedLrsPolicy",
    "CodedRandomEvictionPolicy",
    "LruPolicy",
    "RateBounds",
    "RunConfig",
    "RunReport",
    "SlotOutcome",
    "SystemParams",
    "Transmission",
    "UncodedLrsPolicy",
    "cached_fraction_lower_bound",
    "check_bounds",
    "expected_rate",
    "global_gain",
    "make_policy",
    "optimal_rate_bounds",
    "overprovision_penalty",
    "partial_list_size",
    "run",
    "sweep",
    "uncached_request_bound",
]

__version__ = "0.1.0"
