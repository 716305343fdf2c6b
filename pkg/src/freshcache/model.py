"""Problem-instance types, feasibility validation, and derived request probabilities.

A scenario describes an update server that keeps N files current, a set of
relays that cache copies subject to a per-relay capacity and a total
refresh-rate budget, and a set of users that each hold a private subset of
the files.  A cache scheme assigns every (user, file) holding to exactly one
relay.  All ids are 1-based and contiguous.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

from .errors import DegeneratePopularityError, DomainError, EmptyDomainError

# Probability vectors (request probabilities, relay preferences) must sum to
# one within this absolute tolerance.
PROB_TOL = 1e-9

# Violation codes whose presence means the instance admits no cache scheme at
# all, as opposed to being merely malformed.
INFEASIBILITY_CODES = frozenset({"capacity-aggregate"})


@dataclass(frozen=True)
class FileSpec:
    """One file kept current at the update server."""

    file_id: int
    server_rate: float  # expected server updates per unit time


@dataclass(frozen=True)
class Holding:
    """One file stored by a user: the user's refresh rate and request probability."""

    file_id: int
    user_rate: float
    request_prob: float


@dataclass(frozen=True)
class UserSpec:
    user_id: int
    holdings: tuple[Holding, ...]
    relay_prefs: tuple[float, ...]  # probability of directing a request to each relay


@dataclass(frozen=True)
class RelaySpec:
    relay_id: int
    capacity: int       # maximum number of holdings the relay may cache
    rate_budget: float  # total refresh rate the relay can spend on its holdings


@dataclass(frozen=True)
class Scenario:
    """A complete problem instance. Immutable; derived lookups are cached."""

    files: tuple[FileSpec, ...]
    users: tuple[UserSpec, ...]
    relays: tuple[RelaySpec, ...]
    popularity_mode: str = "explicit"  # "explicit" or "zipf"
    zipf_exponent: float | None = None

    @property
    def n_files(self) -> int:
        return len(self.files)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_relays(self) -> int:
        return len(self.relays)

    @cached_property
    def file_by_id(self) -> dict[int, FileSpec]:
        return {f.file_id: f for f in self.files}

    @cached_property
    def user_by_id(self) -> dict[int, UserSpec]:
        return {u.user_id: u for u in self.users}

    @cached_property
    def holding_pairs(self) -> tuple[tuple[int, int], ...]:
        """(user_id, file_id) pairs in document order; the canonical assignment order."""
        return tuple((u.user_id, h.file_id) for u in self.users for h in u.holdings)


@dataclass(frozen=True)
class CacheScheme:
    """A placement: maps each (user_id, file_id) holding to one relay id."""

    assignment: dict[tuple[int, int], int]


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def _bad_number(value) -> bool:
    return isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value)


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Check structural and numeric invariants. Empty report means valid."""
    report: list[Violation] = []
    add = report.append

    files, users, relays = scenario.files, scenario.users, scenario.relays
    n, m, k = len(files), len(users), len(relays)
    if n == 0:
        add(Violation("files-empty", "scenario has no files"))
    if m == 0:
        add(Violation("users-empty", "scenario has no users"))
    if k == 0:
        add(Violation("relays-empty", "scenario has no relays"))

    if [f.file_id for f in files] != list(range(1, n + 1)):
        add(Violation("file-ids", "file ids must be 1..N in order"))
    if [u.user_id for u in users] != list(range(1, m + 1)):
        add(Violation("user-ids", "user ids must be 1..M in order"))
    if [r.relay_id for r in relays] != list(range(1, k + 1)):
        add(Violation("relay-ids", "relay ids must be 1..K in order"))

    for f in files:
        if _bad_number(f.server_rate) or f.server_rate <= 0:
            add(Violation("server-rate", f"file {f.file_id}: server_rate must be positive, got {f.server_rate!r}"))

    cap_total = 0
    for r in relays:
        if isinstance(r.capacity, bool) or not isinstance(r.capacity, int) or r.capacity < 0:
            add(Violation("capacity-range", f"relay {r.relay_id}: capacity must be a non-negative integer, got {r.capacity!r}"))
        else:
            cap_total += r.capacity
        if _bad_number(r.rate_budget) or r.rate_budget < 0:
            add(Violation("rate-budget", f"relay {r.relay_id}: rate_budget must be non-negative, got {r.rate_budget!r}"))
    if n > 0 and cap_total < n:
        add(Violation("capacity-aggregate", f"aggregate capacity below file count: {cap_total} < {n}"))

    valid_file_ids = {f.file_id for f in files}
    holder_of: dict[int, int] = {}
    for u in users:
        if not u.holdings:
            add(Violation("holdings-empty", f"user {u.user_id}: holdings are empty"))
        if len(u.relay_prefs) != k:
            add(Violation("relay-prefs-len", f"user {u.user_id}: relay_prefs length {len(u.relay_prefs)} != relay count {k}"))
        else:
            bad_pref = False
            for p in u.relay_prefs:
                if _bad_number(p) or p < 0 or p > 1:
                    add(Violation("relay-prefs-range", f"user {u.user_id}: relay preference {p!r} outside [0, 1]"))
                    bad_pref = True
                    break
            if not bad_pref and abs(math.fsum(u.relay_prefs) - 1.0) > PROB_TOL:
                add(Violation("relay-prefs-sum", f"user {u.user_id}: relay_prefs sum != 1 (got {math.fsum(u.relay_prefs)!r})"))

        seen: set[int] = set()
        prob_ok = bool(u.holdings)
        for h in u.holdings:
            if h.file_id in seen:
                add(Violation("holding-duplicate", f"user {u.user_id}: file {h.file_id} listed twice"))
            seen.add(h.file_id)
            if h.file_id not in valid_file_ids:
                add(Violation("holding-unknown-file", f"user {u.user_id}: holding references unknown file {h.file_id}"))
            if _bad_number(h.user_rate) or h.user_rate <= 0:
                add(Violation("user-rate", f"user {u.user_id}, file {h.file_id}: user_rate must be positive, got {h.user_rate!r}"))
            if _bad_number(h.request_prob) or h.request_prob < 0 or h.request_prob > 1:
                add(Violation("request-prob", f"user {u.user_id}, file {h.file_id}: request_prob {h.request_prob!r} outside [0, 1]"))
                prob_ok = False
        if prob_ok and abs(math.fsum(h.request_prob for h in u.holdings) - 1.0) > PROB_TOL:
            add(Violation("request-prob-sum", f"user {u.user_id}: request probabilities sum != 1"))
        for fid in sorted(seen):
            if fid in holder_of:
                add(Violation("file-shared", f"file {fid} held by users {holder_of[fid]} and {u.user_id}"))
            else:
                holder_of[fid] = u.user_id

    for fid in sorted(valid_file_ids - set(holder_of)):
        add(Violation("file-unheld", f"file {fid} not held by any user"))

    if scenario.popularity_mode not in ("explicit", "zipf"):
        add(Violation("popularity-mode", f"unknown popularity mode {scenario.popularity_mode!r}"))
    if scenario.popularity_mode == "zipf":
        e = scenario.zipf_exponent
        if e is None or _bad_number(e) or e < 0:
            add(Violation("zipf-exponent", f"zipf mode requires a non-negative exponent, got {e!r}"))

    return report


def validate_scheme(scenario: Scenario, scheme: CacheScheme) -> list[Violation]:
    """Check a placement against a scenario. Empty report means valid."""
    report: list[Violation] = []
    add = report.append

    relay_ids = {r.relay_id for r in scenario.relays}
    counts = {rid: 0 for rid in relay_ids}
    expected = scenario.holding_pairs
    expected_set = set(expected)

    for (uid, fid) in expected:
        rid = scheme.assignment.get((uid, fid))
        if rid is None:
            add(Violation("holding-unassigned", f"unassigned holding (user {uid}, file {fid})"))
        elif rid not in relay_ids:
            add(Violation("relay-unknown", f"holding (user {uid}, file {fid}) assigned to unknown relay {rid}"))
        else:
            counts[rid] += 1

    for key in sorted(scheme.assignment):
        if key not in expected_set:
            add(Violation("holding-unknown", f"assignment contains unknown holding (user {key[0]}, file {key[1]})"))

    for r in scenario.relays:
        if counts[r.relay_id] > r.capacity:
            add(Violation("relay-over-capacity", f"relay {r.relay_id} over capacity: {counts[r.relay_id]} > {r.capacity}"))

    # Redundant with the per-holding checks above, but cheap: every holding
    # assigned exactly once means the per-relay counts add up to the total.
    if sum(counts.values()) != len(expected):
        add(Violation("assignment-count", f"assigned holding count {sum(counts.values())} != total holdings {len(expected)}"))

    return report


def zipf_popularity(exponent: float, n: int) -> tuple[float, ...]:
    """Rank-based request probabilities p_i proportional to i**(-exponent), ranks 1..n."""
    if isinstance(n, bool) or not isinstance(n, int):
        raise DomainError(f"file count must be an integer, got {n!r}")
    if n == 0:
        raise EmptyDomainError("popularity distribution over zero files")
    if n < 0:
        raise DomainError(f"file count must be positive, got {n}")
    if _bad_number(exponent) or exponent < 0:
        raise DomainError(f"zipf exponent must be a finite non-negative number, got {exponent!r}")
    weights = [float(rank) ** -exponent for rank in range(1, n + 1)]
    total = math.fsum(weights)
    return tuple(w / total for w in weights)


def per_user_request_probs(popularity: Sequence[float], user: UserSpec) -> tuple[float, ...]:
    """Restrict a global popularity vector to a user's holdings and renormalize.

    ``popularity`` is indexed by file id (entry 0 is file 1).  The result is
    ordered like ``user.holdings``.
    """
    if not user.holdings:
        raise EmptyDomainError(f"user {user.user_id} holds no files")
    restricted = []
    for h in user.holdings:
        idx = h.file_id - 1
        if idx < 0 or idx >= len(popularity):
            raise DomainError(f"popularity vector has no entry for file {h.file_id}")
        p = popularity[idx]
        if _bad_number(p) or p < 0:
            raise DomainError(f"popularity for file {h.file_id} must be a finite non-negative number, got {p!r}")
        restricted.append(float(p))
    total = math.fsum(restricted)
    if total <= 0.0:
        raise DegeneratePopularityError(f"popularity restricted to user {user.user_id}'s files is all zero")
    return tuple(p / total for p in restricted)


def with_scaled_rates(scenario: Scenario, target: str, factor: float) -> Scenario:
    """Return a copy with every user ("user") or server ("server") rate scaled by ``factor``."""
    if target not in ("user", "server"):
        raise DomainError(f"scale target must be 'user' or 'server', got {target!r}")
    if _bad_number(factor) or factor <= 0:
        raise DomainError(f"scale factor must be positive, got {factor!r}")
    if target == "server":
        files = tuple(FileSpec(f.file_id, f.server_rate * factor) for f in scenario.files)
        return dataclasses.replace(scenario, files=files)
    users = tuple(
        UserSpec(
            u.user_id,
            tuple(Holding(h.file_id, h.user_rate * factor, h.request_prob) for h in u.holdings),
            u.relay_prefs,
        )
        for u in scenario.users
    )
    return dataclasses.replace(scenario, users=users)
