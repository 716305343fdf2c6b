"""Slow, independent reference implementations used to cross-check the fast paths.

``grid_allocate`` maximizes the relay objective over a discretized budget
simplex by exact dynamic programming, equivalent to enumerating every grid
point.  ``brute_force_assignments`` enumerates raw relay assignments without
any of the search module's enumeration machinery.  Both are deliberately
small-scale and guarded.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DomainError, InfeasibleError, OracleScaleError
from .freshness import ObjectiveValue, system_freshness
from .model import CacheScheme, Scenario
from .rate_alloc import AllocationEntry, AllocationInput, allocate

GRID_MAX_ENTRIES = 4
GRID_MAX_STEPS = 10_000
BRUTE_FORCE_LIMIT = 100_000


def grid_allocate(alloc_input: AllocationInput, steps: int) -> tuple[tuple[float, ...], float]:
    """Best allocation on the grid {0, G/steps, ..., G} per entry, total <= G.

    Returns (rates, objective) with rates ordered like the input entries.
    Exact over the grid: dynamic programming over budget units visits the same
    optimum plain enumeration of all grid points would.
    """
    entries = alloc_input.entries
    n = len(entries)
    if n == 0:
        raise DomainError("grid allocation requires at least one entry")
    if n > GRID_MAX_ENTRIES:
        raise OracleScaleError(f"grid oracle limited to {GRID_MAX_ENTRIES} entries, got {n}")
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps!r}")
    if steps > GRID_MAX_STEPS:
        raise OracleScaleError(f"grid oracle limited to {GRID_MAX_STEPS} steps, got {steps}")
    budget = alloc_input.rate_budget
    if isinstance(budget, bool) or not isinstance(budget, (int, float)) or not math.isfinite(budget) or budget < 0:
        raise DomainError(f"rate budget must be a finite non-negative number, got {budget!r}")
    for e in entries:
        for name, value in (("user_rate", e.user_rate), ("server_rate", e.server_rate)):
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be a finite positive number, got {value!r}")

    grid = budget * np.arange(steps + 1) / steps
    gains = []
    for e in entries:
        mu = e.user_rate / (e.user_rate + e.server_rate)
        gains.append(mu * grid / (grid + e.server_rate))

    # value[b] = best objective of the first j entries using exactly b units
    value = gains[0]
    choice_tables = []
    rows = np.arange(steps + 1)
    spent = rows[:, None] - rows[None, :]         # units left for earlier entries
    feasible = spent >= 0
    spent_clipped = np.where(feasible, spent, 0)
    for g in gains[1:]:
        candidates = np.where(feasible, value[spent_clipped] + g[None, :], -np.inf)
        best = np.argmax(candidates, axis=1)      # units given to this entry
        value = candidates[rows, best]
        choice_tables.append(best)

    units = [0] * n
    b = steps
    for j in range(n - 1, 0, -1):
        used = int(choice_tables[j - 1][b])
        units[j] = used
        b -= used
    units[0] = b

    rates = tuple(budget * u / steps for u in units)
    objective = 0.0
    for e, r in zip(entries, rates):
        mu = e.user_rate / (e.user_rate + e.server_rate)
        objective += mu * r / (r + e.server_rate)
    return rates, objective


def grid_allocate_enumerated(alloc_input: AllocationInput, steps: int) -> tuple[tuple[float, ...], float]:
    """Literal enumeration of every grid point; cross-checks grid_allocate at small sizes."""
    entries = alloc_input.entries
    n = len(entries)
    if n == 0:
        raise DomainError("grid allocation requires at least one entry")
    if (steps + 1) ** n > 2_000_000:
        raise OracleScaleError(f"literal grid enumeration too large: ({steps + 1})**{n}")
    budget = alloc_input.rate_budget
    mus = [e.user_rate / (e.user_rate + e.server_rate) for e in entries]
    best_units: tuple[int, ...] | None = None
    best_val = -math.inf
    for units in itertools.product(range(steps + 1), repeat=n):
        if sum(units) > steps:
            continue
        val = 0.0
        for mu, e, u in zip(mus, entries, units):
            r = budget * u / steps
            val += mu * r / (r + e.server_rate)
        if val > best_val:
            best_val = val
            best_units = units
    assert best_units is not None
    return tuple(budget * u / steps for u in best_units), best_val


def brute_force_assignments(
    scenario: Scenario,
    *,
    allow_empty_relay: bool = False,
    limit: int = BRUTE_FORCE_LIMIT,
):
    """Exhaustively try every raw relay assignment of every holding.

    Enumeration is the plain K**H product in canonical holding order with
    infeasible assignments skipped, so ties resolve to the lexicographically
    smallest assignment vector automatically.  Returns a SolveResult.
    """
    from .search import make_solve_result  # local import: search depends on this module's callers, not vice versa

    pairs = scenario.holding_pairs
    k = scenario.n_relays
    if k == 0 or not pairs:
        raise DomainError("scenario must have at least one relay and one holding")
    raw_total = k ** len(pairs)
    if raw_total > limit:
        raise OracleScaleError(f"{raw_total} raw assignments exceed the oracle limit {limit}")

    capacities = [r.capacity for r in scenario.relays]
    min_count = 0 if allow_empty_relay else 1
    entry_info = []
    for user in scenario.users:
        for h in user.holdings:
            entry_info.append((user.user_id, h.file_id, h.user_rate, scenario.file_by_id[h.file_id].server_rate))

    best_val = -math.inf
    best_vector: tuple[int, ...] | None = None
    trace: list[tuple[int, float]] = []
    evaluated = 0

    for vector in itertools.product(range(k), repeat=len(pairs)):
        counts = [0] * k
        for rel in vector:
            counts[rel] += 1
        if any(c < min_count or c > cap for c, cap in zip(counts, capacities)):
            continue
        evaluated += 1
        scheme = CacheScheme({pair: rel + 1 for pair, rel in zip(pairs, vector)})
        flat: dict[tuple[int, int], float] = {}
        for relay in scenario.relays:
            relay_entries = tuple(
                AllocationEntry((uid, fid), u_rate, s_rate)
                for (uid, fid, u_rate, s_rate), rel in zip(entry_info, vector)
                if rel + 1 == relay.relay_id
            )
            if not relay_entries:
                continue
            flat.update(allocate(AllocationInput(relay_entries, relay.rate_budget)).rates)
        val = system_freshness(scenario, scheme, flat).sum_form
        if val > best_val:
            best_val = val
            best_vector = tuple(rel + 1 for rel in vector)
            trace.append((evaluated, val))
        # exact ties keep the earlier vector, which is lexicographically smaller

    if best_vector is None:
        raise InfeasibleError("no feasible assignment under the capacity constraints")
    return make_solve_result(scenario, best_vector, ObjectiveValue(best_val, best_val / scenario.n_users), trace, evaluated)
