"""Water-filling allocation of a relay's refresh budget across its cached files.

The relay-level objective sum_j mu_j * r_j / (r_j + s_j), with
mu_j = u_j / (u_j + s_j), is separable and strictly concave in the rates
r_j >= 0 under sum_j r_j <= G.  The optimum therefore equalizes marginal
returns at a common water level delta = (alpha/beta)**2 and zeroes out
entries whose marginal return at rate zero is already below that level.
``allocate`` implements the sorted single-pass closed form; ``kkt_check``
verifies first-order optimality residuals independently of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AllocationMismatchError, DomainError

Key = tuple[int, int]


@dataclass(frozen=True)
class AllocationEntry:
    """One cached holding, identified by (user_id, file_id), with its fixed rates."""

    key: Key
    user_rate: float
    server_rate: float


@dataclass(frozen=True)
class AllocationInput:
    entries: tuple[AllocationEntry, ...]
    rate_budget: float


@dataclass(frozen=True)
class AllocationDiagnostics:
    alpha: float                   # sum of weights over surviving entries
    beta: float                    # budget plus server rates of surviving entries
    water_level: float             # (alpha/beta)**2; +inf when nothing survives
    dropped_keys: frozenset[Key]


@dataclass(frozen=True)
class RateAllocation:
    rates: dict[Key, float]
    diagnostics: AllocationDiagnostics


@dataclass(frozen=True)
class KktReport:
    stationarity_residual: float       # max |delta - gradient| over entries with positive rate
    budget_slackness_residual: float   # |sum(rates) - budget| * water level
    drop_slackness_residual: float     # max |(delta - gradient) * rate| over all entries
    tolerance: float
    satisfied: bool


def weight(user_rate: float, server_rate: float) -> float:
    """sqrt(u*s/(u+s)): the square-root weight that sets the water level. Symmetric in u, s."""
    for name, value in (("user_rate", user_rate), ("server_rate", server_rate)):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
            raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return math.sqrt(user_rate * server_rate / (user_rate + server_rate))


def sort_key(entry: AllocationEntry) -> tuple[float, Key]:
    """Canonical processing order: ascending mu/s, ties broken by (user_id, file_id)."""
    mu = entry.user_rate / (entry.user_rate + entry.server_rate)
    return (mu / entry.server_rate, entry.key)


def waterfill(weights: list[float], server_rates: list[float], budget: float):
    """Single sorted pass of the closed-form allocation.

    Inputs must be ordered ascending by mu/s.  Returns
    (rates, dropped_flags, alpha, beta) where alpha and beta are the sums over
    the surviving entries (beta includes the budget).  Every caller that needs
    numerically identical results must funnel through this function.
    """
    alpha = 0.0
    beta = budget
    for w in weights:
        alpha += w
    for s in server_rates:
        beta += s
    n = len(weights)
    rates = [0.0] * n
    dropped = [False] * n
    for j in range(n):
        w = weights[j]
        s = server_rates[j]
        if w * beta <= s * alpha:
            dropped[j] = True
            alpha -= w
            beta -= s
        else:
            rates[j] = beta * w / alpha - s
    if n and all(dropped):
        # Nothing survived (only possible when the budget is zero); clear the
        # float residue so the sums are the exact mathematical zeros.
        alpha = 0.0
        beta = 0.0
    return rates, dropped, alpha, beta


def _validate_input(alloc_input: AllocationInput) -> None:
    if not alloc_input.entries:
        raise DomainError("allocation requires at least one entry")
    budget = alloc_input.rate_budget
    if isinstance(budget, bool) or not isinstance(budget, (int, float)) or not math.isfinite(budget) or budget < 0:
        raise DomainError(f"rate budget must be a finite non-negative number, got {budget!r}")
    keys = [e.key for e in alloc_input.entries]
    if len(set(keys)) != len(keys):
        raise DomainError("allocation entries contain duplicate keys")
    for e in alloc_input.entries:
        weight(e.user_rate, e.server_rate)  # re-uses the positivity checks


def allocate(alloc_input: AllocationInput) -> RateAllocation:
    """Optimal refresh rates for one relay's holdings under its budget.

    The budget is spent exactly whenever any entry survives; entries whose
    marginal return cannot reach the water level receive rate 0 and are
    reported in the diagnostics.
    """
    _validate_input(alloc_input)
    ordered = sorted(alloc_input.entries, key=sort_key)
    ws = [weight(e.user_rate, e.server_rate) for e in ordered]
    ss = [e.server_rate for e in ordered]
    rates_list, dropped_flags, alpha, beta = waterfill(ws, ss, alloc_input.rate_budget)

    # The single pass assigns each surviving rate using the alpha/beta current
    # at its turn; consistency with the final sums is what makes the result a
    # fixed point.  Guard against float-ordering edge cases breaking that.
    for j in range(len(ordered)):
        assert dropped_flags[j] == (ws[j] * beta <= ss[j] * alpha), "water-filling pass did not reach a fixed point"

    rates = {e.key: r for e, r in zip(ordered, rates_list)}
    dropped = frozenset(e.key for e, flag in zip(ordered, dropped_flags) if flag)
    water_level = (alpha / beta) ** 2 if beta > 0 else math.inf
    diag = AllocationDiagnostics(alpha=alpha, beta=beta, water_level=water_level, dropped_keys=dropped)
    return RateAllocation(rates=rates, diagnostics=diag)


def kkt_check(alloc_input: AllocationInput, allocation: RateAllocation, tolerance: float) -> KktReport:
    """First-order optimality residuals for a proposed allocation.

    Stationarity: active entries must sit exactly at the water level.
    Budget slackness: a positive water level forces the budget to be spent.
    Drop slackness: an entry below the water level must carry rate zero.
    """
    if isinstance(tolerance, bool) or not isinstance(tolerance, (int, float)) or not math.isfinite(tolerance) or tolerance <= 0:
        raise DomainError(f"tolerance must be a finite positive number, got {tolerance!r}")
    _validate_input(alloc_input)
    input_keys = {e.key for e in alloc_input.entries}
    if set(allocation.rates) != input_keys:
        raise AllocationMismatchError("allocation keys do not match the input entries")

    delta = allocation.diagnostics.water_level
    stationarity = 0.0
    drop_slack = 0.0
    for e in alloc_input.entries:
        lam = allocation.rates[e.key]
        if lam < 0 or not math.isfinite(lam):
            raise DomainError(f"rate for {e.key} must be finite and non-negative, got {lam!r}")
        mu = e.user_rate / (e.user_rate + e.server_rate)
        gradient = mu * e.server_rate / (lam + e.server_rate) ** 2
        if lam > 0.0:
            stationarity = max(stationarity, abs(delta - gradient))
            drop_slack = max(drop_slack, abs((delta - gradient) * lam))

    total = sum(allocation.rates.values())
    slack = abs(total - alloc_input.rate_budget)
    if slack == 0.0:
        budget_res = 0.0
    elif math.isfinite(delta):
        budget_res = slack * delta
    else:
        budget_res = math.inf

    satisfied = stationarity <= tolerance and budget_res <= tolerance and drop_slack <= tolerance
    return KktReport(
        stationarity_residual=stationarity,
        budget_slackness_residual=budget_res,
        drop_slackness_residual=drop_slack,
        tolerance=tolerance,
        satisfied=satisfied,
    )
