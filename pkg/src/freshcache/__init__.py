"""Freshness-optimal cache placement and update-rate allocation for relay caching systems."""

from .errors import (
    AllocationMismatchError,
    DegeneratePopularityError,
    DomainError,
    EmptyDomainError,
    FreshCacheError,
    IncompleteAllocationError,
    InfeasibleError,
    OracleScaleError,
    ScenarioParseError,
    ScenarioValidationError,
    SearchBudgetError,
)
from .freshness import ObjectiveValue, file_freshness, system_freshness, user_freshness
from .model import (
    CacheScheme,
    FileSpec,
    Holding,
    RelaySpec,
    Scenario,
    UserSpec,
    Violation,
    per_user_request_probs,
    validate_scenario,
    validate_scheme,
    with_scaled_rates,
    zipf_popularity,
)
from .rate_alloc import (
    AllocationDiagnostics,
    AllocationEntry,
    AllocationInput,
    KktReport,
    RateAllocation,
    allocate,
    kkt_check,
    weight,
)
from .search import (
    Partition,
    SolveResult,
    enumerate_partitions,
    evaluate_scheme,
    solve_exhaustive,
    solve_sampled,
)
from .oracle import brute_force_assignments, grid_allocate
from .simulator import SimEstimate, SystemSimResult, simulate_file, simulate_system
from .scenario_io import (
    ResultTable,
    build_result_table,
    fixture_path,
    load_scenario,
    parse_scenario,
    serialize_scenario,
    write_result_table,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationDiagnostics",
    "AllocationEntry",
    "AllocationInput",
    "AllocationMismatchError",
    "CacheScheme",
    "DegeneratePopularityError",
    "DomainError",
    "EmptyDomainError",
    "FileSpec",
    "FreshCacheError",
    "Holding",
    "IncompleteAllocationError",
    "InfeasibleError",
    "KktReport",
    "ObjectiveValue",
    "OracleScaleError",
    "Partition",
    "RateAllocation",
    "RelaySpec",
    "ResultTable",
    "Scenario",
    "ScenarioParseError",
    "ScenarioValidationError",
    "SearchBudgetError",
    "SimEstimate",
    "SolveResult",
    "SystemSimResult",
    "UserSpec",
    "Violation",
    "allocate",
    "brute_force_assignments",
    "build_result_table",
    "enumerate_partitions",
    "evaluate_scheme",
    "file_freshness",
    "fixture_path",
    "grid_allocate",
    "kkt_check",
    "load_scenario",
    "parse_scenario",
    "per_user_request_probs",
    "serialize_scenario",
    "simulate_file",
    "simulate_system",
    "solve_exhaustive",
    "solve_sampled",
    "system_freshness",
    "user_freshness",
    "validate_scenario",
    "validate_scheme",
    "weight",
    "with_scaled_rates",
    "write_result_table",
    "write_trace",
    "zipf_popularity",
]
