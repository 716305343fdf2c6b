"""Analytic freshness of cached copies and the system-wide objective."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import DomainError, IncompleteAllocationError
from .model import CacheScheme, Scenario

# Flat rate table: (user_id, file_id) -> relay refresh rate for that holding.
RateTable = Mapping[tuple[int, int], float]


@dataclass(frozen=True)
class ObjectiveValue:
    """System objective in both conventions.

    ``sum_form`` adds the per-user freshness values; result tables report this
    form.  ``mean_form`` divides by the user count.  Both rank schemes
    identically.
    """

    sum_form: float
    mean_form: float


def file_freshness(user_rate: float, server_rate: float, relay_rate: float) -> float:
    """Long-run fraction of time the user's copy matches the server's version.

    With independent exponential server-update, relay-request and user-request
    processes the copy is fresh a fraction (u/(u+s)) * (r/(r+s)) of the time.
    A relay that never refreshes (relay_rate 0) yields exactly 0.
    """
    for name, value in (("user_rate", user_rate), ("server_rate", server_rate), ("relay_rate", relay_rate)):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise DomainError(f"{name} must be a finite number, got {value!r}")
    if user_rate <= 0:
        raise DomainError(f"user_rate must be positive, got {user_rate!r}")
    if server_rate <= 0:
        raise DomainError(f"server_rate must be positive, got {server_rate!r}")
    if relay_rate < 0:
        raise DomainError(f"relay_rate must be non-negative, got {relay_rate!r}")
    return (user_rate / (user_rate + server_rate)) * (relay_rate / (relay_rate + server_rate))


def user_freshness(scenario: Scenario, scheme: CacheScheme, rates: RateTable, user_id: int) -> float:
    """Request-weighted freshness of one user's holdings under a placement and rate table."""
    user = scenario.user_by_id.get(user_id)
    if user is None:
        raise DomainError(f"unknown user id {user_id}")
    total = 0.0
    for h in user.holdings:
        key = (user.user_id, h.file_id)
        relay_id = scheme.assignment.get(key)
        if relay_id is None:
            raise IncompleteAllocationError(f"no relay assigned for user {user.user_id}, file {h.file_id}")
        if key not in rates:
            raise IncompleteAllocationError(f"missing refresh rate for user {user.user_id}, file {h.file_id}")
        fresh = file_freshness(h.user_rate, scenario.file_by_id[h.file_id].server_rate, rates[key])
        total += h.request_prob * user.relay_prefs[relay_id - 1] * fresh
    return total


def system_freshness(scenario: Scenario, scheme: CacheScheme, rates: RateTable) -> ObjectiveValue:
    total = 0.0
    for user in scenario.users:
        total += user_freshness(scenario, scheme, rates, user.user_id)
    return ObjectiveValue(sum_form=total, mean_form=total / scenario.n_users)
