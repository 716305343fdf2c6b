"""Placement search: deduplicated exhaustive enumeration and seeded local search.

Exhaustive search never permutes equal assignments: it enumerates per-relay
holding counts (partitions) and, within each partition, unordered holding
subsets per relay.  Every enumerated assignment is therefore distinct, and
the whole space is visited exactly once.  The sampled mode is a restarting
hill climber that spends an exact evaluation budget.

Both modes score candidates through the same ``waterfill`` routine the public
``allocate`` uses and accumulate the objective in the same order as
``system_freshness``, so reported objective values match a re-evaluation
through the public API bit for bit.
"""

from __future__ import annotations

import itertools
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

from .errors import DomainError, InfeasibleError, SearchBudgetError
from .freshness import ObjectiveValue, system_freshness
from .model import CacheScheme, Scenario
from .rate_alloc import (
    AllocationEntry,
    AllocationInput,
    RateAllocation,
    allocate,
    waterfill,
    weight,
)
from .scenario_io import ResultTable, build_result_table

DEFAULT_ENUMERATION_LIMIT = 10_000_000

# Consecutive non-improving moves before the hill climber restarts.
_PATIENCE = 30


@dataclass(frozen=True)
class Partition:
    """Per-relay holding counts, ordered by relay id."""

    counts: tuple[int, ...]


@dataclass(frozen=True)
class SolveResult:
    best_scheme: CacheScheme
    best_rates: dict[int, RateAllocation]   # keyed by relay id; relays with no holdings omitted
    objective: ObjectiveValue
    trace: tuple[tuple[int, float], ...]    # (evaluation index, best sum_form so far)
    evaluated_count: int
    table: ResultTable


def enumerate_partitions(n: int, capacities: Sequence[int], *, allow_empty_relay: bool = False) -> Iterator[Partition]:
    """Yield every split of ``n`` holdings into per-relay counts, lexicographically.

    Counts respect each relay's capacity and, unless ``allow_empty_relay`` is
    set, must be at least 1.
    """
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise DomainError(f"holding count must be a non-negative integer, got {n!r}")
    caps = list(capacities)
    for c in caps:
        if isinstance(c, bool) or not isinstance(c, int) or c < 0:
            raise DomainError(f"capacities must be non-negative integers, got {c!r}")
    k = len(caps)
    lo = 0 if allow_empty_relay else 1
    suffix_cap = [0] * (k + 1)
    for idx in range(k - 1, -1, -1):
        suffix_cap[idx] = suffix_cap[idx + 1] + caps[idx]

    def rec(idx: int, remaining: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if idx == k:
            if remaining == 0:
                yield prefix
            return
        lo_c = max(lo, remaining - suffix_cap[idx + 1])
        hi_c = min(caps[idx], remaining - lo * (k - idx - 1))
        for c in range(lo_c, hi_c + 1):
            yield from rec(idx + 1, remaining - c, prefix + (c,))

    for counts in rec(0, n, ()):
        yield Partition(counts)


def _partition_size(counts: Sequence[int], n: int) -> int:
    size = 1
    remaining = n
    for c in counts:
        size *= comb(remaining, c)
        remaining -= c
    return size


@dataclass(frozen=True)
class _EvalContext:
    """Scenario data laid out for fast repeated evaluation.

    Holdings are indexed in the canonical allocation processing order
    (ascending mu/s, ties by (user_id, file_id)), so any ascending slice of
    indices is already sorted the way ``allocate`` would sort it.
    """

    n: int
    weights: tuple[float, ...]
    server_rates: tuple[float, ...]
    mus: tuple[float, ...]
    coef: tuple[tuple[float, ...], ...]      # coef[i][k]: request_prob * relay_pref for relay index k
    budgets: tuple[float, ...]
    capacities: tuple[int, ...]
    user_plans: tuple[tuple[int, ...], ...]  # ctx indices per user, in holdings order
    keys: tuple[tuple[int, int], ...]        # ctx index -> (user_id, file_id)
    canon_pos: tuple[int, ...]               # ctx index -> position in canonical holding order


def _build_context(scenario: Scenario) -> _EvalContext:
    raw = []
    position = 0
    for user in scenario.users:
        for h in user.holdings:
            s = scenario.file_by_id[h.file_id].server_rate
            mu = h.user_rate / (h.user_rate + s)
            raw.append(
                (
                    (mu / s, user.user_id, h.file_id),
                    weight(h.user_rate, s),
                    s,
                    mu,
                    tuple(h.request_prob * p for p in user.relay_prefs),
                    (user.user_id, h.file_id),
                    position,
                )
            )
            position += 1
    order = sorted(range(len(raw)), key=lambda i: raw[i][0])
    ctx_of_canon = {raw[i][6]: ctx_i for ctx_i, i in enumerate(order)}
    user_plans = []
    position = 0
    for user in scenario.users:
        plan = []
        for _h in user.holdings:
            plan.append(ctx_of_canon[position])
            position += 1
        user_plans.append(tuple(plan))
    return _EvalContext(
        n=len(raw),
        weights=tuple(raw[i][1] for i in order),
        server_rates=tuple(raw[i][2] for i in order),
        mus=tuple(raw[i][3] for i in order),
        coef=tuple(raw[i][4] for i in order),
        budgets=tuple(r.rate_budget for r in scenario.relays),
        capacities=tuple(r.capacity for r in scenario.relays),
        user_plans=tuple(user_plans),
        keys=tuple(raw[i][5] for i in order),
        canon_pos=tuple(raw[i][6] for i in order),
    )


def _evaluate(ctx: _EvalContext, rel_of: Sequence[int], blocks: Sequence[Sequence[int]]) -> float:
    """sum_form objective for one assignment; bit-identical to the public evaluation."""
    rates = [0.0] * ctx.n
    for k, block in enumerate(blocks):
        if not block:
            continue
        ws = [ctx.weights[i] for i in block]
        ss = [ctx.server_rates[i] for i in block]
        block_rates, _, _, _ = waterfill(ws, ss, ctx.budgets[k])
        for i, r in zip(block, block_rates):
            rates[i] = r
    total = 0.0
    for plan in ctx.user_plans:
        acc = 0.0
        for i in plan:
            r = rates[i]
            fresh = ctx.mus[i] * (r / (r + ctx.server_rates[i]))
            acc += ctx.coef[i][rel_of[i]] * fresh
        total += acc
    return total


def _canonical_vector(ctx: _EvalContext, rel_of: Sequence[int]) -> tuple[int, ...]:
    """Relay ids (1-based) in canonical holding order; the tie-break representation."""
    vec = [0] * ctx.n
    for i in range(ctx.n):
        vec[ctx.canon_pos[i]] = rel_of[i] + 1
    return tuple(vec)


def _iter_block_sets(counts: tuple[int, ...], pool: tuple[int, ...]) -> Iterator[tuple[tuple[int, ...], ...]]:
    if len(counts) == 1:
        yield (pool,)
        return
    head, rest_counts = counts[0], counts[1:]
    for subset in itertools.combinations(pool, head):
        taken = set(subset)
        rest = tuple(i for i in pool if i not in taken)
        for tail in _iter_block_sets(rest_counts, rest):
            yield (subset,) + tail


def _search_partition(ctx: _EvalContext, counts: tuple[int, ...], start_index: int):
    """Best assignment within one partition plus its improvement trace."""
    best_val = -math.inf
    best_vec: tuple[int, ...] | None = None
    improvements: list[tuple[int, float]] = []
    idx = start_index
    pool = tuple(range(ctx.n))
    rel_of = [0] * ctx.n
    for blocks in _iter_block_sets(counts, pool):
        idx += 1
        for k, block in enumerate(blocks):
            for i in block:
                rel_of[i] = k
        val = _evaluate(ctx, rel_of, blocks)
        if val > best_val:
            best_val = val
            best_vec = _canonical_vector(ctx, rel_of)
            improvements.append((idx, val))
        elif val == best_val:
            vec = _canonical_vector(ctx, rel_of)
            if best_vec is None or vec < best_vec:
                best_vec = vec
    return best_val, best_vec, improvements, idx - start_index


_WORKER_CTX: _EvalContext | None = None


def _init_worker(ctx: _EvalContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_search(task: tuple[tuple[int, ...], int]):
    counts, start = task
    assert _WORKER_CTX is not None
    return _search_partition(_WORKER_CTX, counts, start)


def evaluate_scheme(scenario: Scenario, scheme: CacheScheme) -> tuple[ObjectiveValue, dict[int, RateAllocation]]:
    """Allocate each relay's budget over its assigned holdings, then score the placement.

    The scheme must be valid for the scenario.  Relays with no holdings are
    omitted from the returned allocation map.
    """
    per_relay: dict[int, RateAllocation] = {}
    flat: dict[tuple[int, int], float] = {}
    for relay in scenario.relays:
        entries = []
        for user in scenario.users:
            for h in user.holdings:
                if scheme.assignment.get((user.user_id, h.file_id)) == relay.relay_id:
                    entries.append(
                        AllocationEntry((user.user_id, h.file_id), h.user_rate, scenario.file_by_id[h.file_id].server_rate)
                    )
        if not entries:
            continue
        alloc = allocate(AllocationInput(tuple(entries), relay.rate_budget))
        per_relay[relay.relay_id] = alloc
        flat.update(alloc.rates)
    return system_freshness(scenario, scheme, flat), per_relay


def make_solve_result(
    scenario: Scenario,
    vector: tuple[int, ...],
    objective: ObjectiveValue,
    trace: Sequence[tuple[int, float]],
    evaluated_count: int,
) -> SolveResult:
    """Package a winning canonical assignment vector into a full result."""
    scheme = CacheScheme({pair: rel for pair, rel in zip(scenario.holding_pairs, vector)})
    recheck, per_relay = evaluate_scheme(scenario, scheme)
    assert abs(recheck.sum_form - objective.sum_form) <= 1e-12 * max(1.0, abs(objective.sum_form)), (
        "fast-path objective diverged from the public evaluation"
    )
    flat: dict[tuple[int, int], float] = {}
    for alloc in per_relay.values():
        flat.update(alloc.rates)
    table = build_result_table(scenario, scheme, flat, objective)
    return SolveResult(
        best_scheme=scheme,
        best_rates=per_relay,
        objective=objective,
        trace=tuple(trace),
        evaluated_count=evaluated_count,
        table=table,
    )


def solve_exhaustive(
    scenario: Scenario,
    *,
    allow_empty_relay: bool = False,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    threads: int = 1,
) -> SolveResult:
    """Provably optimal placement by deduplicated enumeration.

    Raises SearchBudgetError if the distinct assignment count exceeds
    ``limit`` and InfeasibleError if the capacities admit no placement.
    Results are identical for any ``threads`` value.
    """
    if isinstance(limit, bool) or not isinstance(limit, int) or limit < 1:
        raise DomainError(f"limit must be a positive integer, got {limit!r}")
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise DomainError(f"threads must be a positive integer, got {threads!r}")
    ctx = _build_context(scenario)
    if ctx.n == 0 or not ctx.budgets:
        raise InfeasibleError("scenario has no holdings or no relays to assign them to")

    parts = [p.counts for p in enumerate_partitions(ctx.n, ctx.capacities, allow_empty_relay=allow_empty_relay)]
    if not parts:
        raise InfeasibleError("no feasible cache scheme under the capacity constraints")
    sizes = [_partition_size(c, ctx.n) for c in parts]
    total = sum(sizes)
    if total > limit:
        raise SearchBudgetError(f"distinct assignment count {total} exceeds the enumeration limit {limit}")

    starts = []
    offset = 0
    for size in sizes:
        starts.append(offset)
        offset += size
    tasks = list(zip(parts, starts))

    if threads == 1 or len(tasks) == 1:
        results = [_search_partition(ctx, counts, start) for counts, start in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks)), initializer=_init_worker, initargs=(ctx,)) as pool:
            results = list(pool.map(_worker_search, tasks, chunksize=1))

    merged_val = -math.inf
    merged_vec: tuple[int, ...] | None = None
    trace: list[tuple[int, float]] = []
    for val, vec, improvements, _count in results:
        for i, v in improvements:
            if v > merged_val:
                merged_val = v
                merged_vec = None
                trace.append((i, v))
        if vec is not None and val == merged_val:
            if merged_vec is None or vec < merged_vec:
                merged_vec = vec
    assert merged_vec is not None
    return make_solve_result(scenario, merged_vec, ObjectiveValue(merged_val, merged_val / scenario.n_users), trace, total)


def _random_assignment(ctx: _EvalContext, rng: random.Random, allow_empty_relay: bool):
    k = len(ctx.budgets)
    counts = [0] * k
    rel_of = [0] * ctx.n
    order = list(range(ctx.n))
    rng.shuffle(order)
    rest = order
    if not allow_empty_relay:
        relay_order = list(range(k))
        rng.shuffle(relay_order)
        for relay, i in zip(relay_order, order[:k]):
            rel_of[i] = relay
            counts[relay] = 1
        rest = order[k:]
    for i in rest:
        open_relays = [r for r in range(k) if counts[r] < ctx.capacities[r]]
        relay = open_relays[rng.randrange(len(open_relays))]
        rel_of[i] = relay
        counts[relay] += 1
    return rel_of, counts


def _propose_move(ctx: _EvalContext, rng: random.Random, rel_of: list[int], counts: list[int], min_count: int):
    k = len(ctx.budgets)
    for _attempt in range(8):
        i = rng.randrange(ctx.n)
        src = rel_of[i]
        if counts[src] - 1 < min_count:
            continue
        options = [r for r in range(k) if r != src and counts[r] < ctx.capacities[r]]
        if not options:
            continue
        return i, options[rng.randrange(len(options))]
    return None


def solve_sampled(
    scenario: Scenario,
    budget: int,
    seed: int,
    *,
    allow_empty_relay: bool = False,
) -> SolveResult:
    """Seeded random-restart hill climbing over placements.

    Spends exactly ``budget`` objective evaluations; deterministic for a given
    (scenario, budget, seed) regardless of process or thread count.
    """
    if isinstance(budget, bool) or not isinstance(budget, int) or budget < 1:
        raise DomainError(f"budget must be a positive integer, got {budget!r}")
    ctx = _build_context(scenario)
    k = len(ctx.budgets)
    if ctx.n == 0 or k == 0:
        raise InfeasibleError("scenario has no holdings or no relays to assign them to")
    min_count = 0 if allow_empty_relay else 1
    if sum(ctx.capacities) < ctx.n or (not allow_empty_relay and (k > ctx.n or any(c < 1 for c in ctx.capacities))):
        raise InfeasibleError("no feasible cache scheme under the capacity constraints")

    rng = random.Random(seed)
    best_val = -math.inf
    best_vec: tuple[int, ...] | None = None
    trace: list[tuple[int, float]] = []
    evals = 0

    def consider(val: float, rel_of: list[int]) -> None:
        nonlocal best_val, best_vec
        if val > best_val:
            best_val = val
            best_vec = _canonical_vector(ctx, rel_of)
            trace.append((evals, val))
        elif val == best_val:
            vec = _canonical_vector(ctx, rel_of)
            if best_vec is None or vec < best_vec:
                best_vec = vec

    def evaluate(rel_of: list[int]) -> float:
        blocks: list[list[int]] = [[] for _ in range(k)]
        for i, r in enumerate(rel_of):
            blocks[r].append(i)
        return _evaluate(ctx, rel_of, blocks)

    while evals < budget:
        rel_of, counts = _random_assignment(ctx, rng, allow_empty_relay)
        val = evaluate(rel_of)
        evals += 1
        consider(val, rel_of)
        current = val
        failures = 0
        while failures < _PATIENCE and evals < budget:
            move = _propose_move(ctx, rng, rel_of, counts, min_count)
            if move is None:
                break
            i, dst = move
            src = rel_of[i]
            rel_of[i] = dst
            counts[src] -= 1
            counts[dst] += 1
            val = evaluate(rel_of)
            evals += 1
            consider(val, rel_of)
            if val > current:
                current = val
                failures = 0
            else:
                rel_of[i] = src
                counts[src] += 1
                counts[dst] -= 1
                failures += 1

    assert best_vec is not None and evals == budget
    return make_solve_result(scenario, best_vec, ObjectiveValue(best_val, best_val / scenario.n_users), trace, evals)
