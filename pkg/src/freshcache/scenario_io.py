"""Scenario documents, bundled fixtures, and result/trace emission.

Scenario files are YAML mappings with ``files``, ``users``, ``relays`` and an
optional ``popularity`` block.  Request probabilities are given per holding
(explicit mode, the default) or derived from a rank-based popularity law
(zipf mode), never both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping

import yaml

from .errors import IncompleteAllocationError, ScenarioParseError, ScenarioValidationError
from .freshness import ObjectiveValue
from .model import (
    CacheScheme,
    FileSpec,
    Holding,
    RelaySpec,
    Scenario,
    UserSpec,
    per_user_request_probs,
    validate_scenario,
    zipf_popularity,
)

if TYPE_CHECKING:  # pragma: no cover
    from .search import SolveResult

_TOP_KEYS = {"files", "users", "relays", "popularity"}
_FILE_KEYS = {"id", "server_rate"}
_USER_KEYS = {"id", "holdings", "relay_prefs"}
_HOLDING_KEYS = {"file", "user_rate", "request_prob"}
_RELAY_KEYS = {"id", "capacity", "rate_budget"}
_POPULARITY_KEYS = {"mode", "exponent"}


@dataclass(frozen=True)
class TableRow:
    file_index: int
    user_index: int
    user_rate: float
    relay_index: int
    relay_rate: float
    server_rate: float


@dataclass(frozen=True)
class TableFooter:
    user_count: int
    relay_count: int
    file_count: int
    objective_sum: float
    objective_mean: float


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[TableRow, ...]
    footer: TableFooter


def _require_mapping(node, what: str) -> dict:
    if not isinstance(node, dict):
        raise ScenarioParseError(f"{what} must be a mapping, got {type(node).__name__}")
    return node


def _require_list(node, what: str) -> list:
    if not isinstance(node, list):
        raise ScenarioParseError(f"{what} must be a list, got {type(node).__name__}")
    return node


def _check_keys(node: Mapping, allowed: set, what: str) -> None:
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise ScenarioParseError(f"{what}: unknown field '{unknown[0]}'", field=str(unknown[0]))


def _get_number(node: Mapping, key: str, what: str) -> float:
    if key not in node:
        raise ScenarioParseError(f"{what}: missing required field '{key}'", field=key)
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(f"{what}: field '{key}' must be a number, got {value!r}", field=key)
    return float(value)


def _get_int(node: Mapping, key: str, what: str) -> int:
    if key not in node:
        raise ScenarioParseError(f"{what}: missing required field '{key}'", field=key)
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioParseError(f"{what}: field '{key}' must be an integer, got {value!r}", field=key)
    return value


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document; raises on any malformation."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        at = f" at line {line}" if line is not None else ""
        raise ScenarioParseError(f"malformed scenario document{at}: {exc}", line=line) from exc

    doc = _require_mapping(doc, "scenario document")
    _check_keys(doc, _TOP_KEYS, "scenario document")
    for required in ("files", "users", "relays"):
        if required not in doc:
            raise ScenarioParseError(f"scenario document: missing required field '{required}'", field=required)

    mode = "explicit"
    exponent: float | None = None
    if "popularity" in doc:
        pop = _require_mapping(doc["popularity"], "popularity")
        _check_keys(pop, _POPULARITY_KEYS, "popularity")
        if "mode" not in pop:
            raise ScenarioParseError("popularity: missing required field 'mode'", field="mode")
        mode = pop["mode"]
        if mode not in ("explicit", "zipf"):
            raise ScenarioParseError(f"popularity: unknown mode {mode!r}", field="mode")
        if mode == "zipf":
            exponent = _get_number(pop, "exponent", "popularity")
        elif "exponent" in pop:
            raise ScenarioParseError("popularity: field 'exponent' is only valid in zipf mode", field="exponent")

    files = []
    for node in _require_list(doc["files"], "files"):
        node = _require_mapping(node, "file entry")
        _check_keys(node, _FILE_KEYS, "file entry")
        files.append(FileSpec(file_id=_get_int(node, "id", "file entry"), server_rate=_get_number(node, "server_rate", "file entry")))

    users = []
    raw_users = []
    for node in _require_list(doc["users"], "users"):
        node = _require_mapping(node, "user entry")
        _check_keys(node, _USER_KEYS, "user entry")
        uid = _get_int(node, "id", "user entry")
        if "holdings" not in node:
            raise ScenarioParseError(f"user {uid}: missing required field 'holdings'", field="holdings")
        holdings = []
        for h in _require_list(node["holdings"], f"user {uid} holdings"):
            h = _require_mapping(h, f"user {uid} holding")
            _check_keys(h, _HOLDING_KEYS, f"user {uid} holding")
            fid = _get_int(h, "file", f"user {uid} holding")
            user_rate = _get_number(h, "user_rate", f"user {uid} holding")
            if mode == "zipf":
                if "request_prob" in h:
                    raise ScenarioParseError(
                        f"user {uid}, file {fid}: request_prob is not allowed in zipf mode", field="request_prob"
                    )
                prob = 0.0
            else:
                prob = _get_number(h, "request_prob", f"user {uid} holding file {fid}")
            holdings.append(Holding(file_id=fid, user_rate=user_rate, request_prob=prob))
        if "relay_prefs" not in node:
            raise ScenarioParseError(f"user {uid}: missing required field 'relay_prefs'", field="relay_prefs")
        prefs = []
        for p in _require_list(node["relay_prefs"], f"user {uid} relay_prefs"):
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise ScenarioParseError(f"user {uid}: relay_prefs entries must be numbers, got {p!r}", field="relay_prefs")
            prefs.append(float(p))
        raw_users.append((uid, tuple(holdings), tuple(prefs)))

    relays = []
    for node in _require_list(doc["relays"], "relays"):
        node = _require_mapping(node, "relay entry")
        _check_keys(node, _RELAY_KEYS, "relay entry")
        relays.append(
            RelaySpec(
                relay_id=_get_int(node, "id", "relay entry"),
                capacity=_get_int(node, "capacity", "relay entry"),
                rate_budget=_get_number(node, "rate_budget", "relay entry"),
            )
        )

    if mode == "zipf":
        if exponent is None or isinstance(exponent, bool) or not math.isfinite(exponent) or exponent < 0:
            raise ScenarioParseError(f"popularity: zipf exponent must be finite and non-negative, got {exponent!r}", field="exponent")
        popularity = zipf_popularity(exponent, len(files))
        for uid, holdings, prefs in raw_users:
            probs = per_user_request_probs(popularity, UserSpec(uid, holdings, prefs))
            users.append(UserSpec(uid, tuple(Holding(h.file_id, h.user_rate, p) for h, p in zip(holdings, probs)), prefs))
    else:
        users = [UserSpec(uid, holdings, prefs) for uid, holdings, prefs in raw_users]

    scenario = Scenario(
        files=tuple(files),
        users=tuple(users),
        relays=tuple(relays),
        popularity_mode=mode,
        zipf_exponent=exponent,
    )
    report = validate_scenario(scenario)
    if report:
        summary = "; ".join(v.message for v in report[:4])
        if len(report) > 4:
            summary += f"; and {len(report) - 4} more"
        raise ScenarioValidationError(f"scenario failed validation: {summary}", report=report)
    return scenario


def serialize_scenario(scenario: Scenario) -> str:
    """Inverse of parse_scenario: parse(serialize(s)) reconstructs s exactly."""
    doc: dict = {
        "files": [{"id": f.file_id, "server_rate": f.server_rate} for f in scenario.files],
        "users": [],
        "relays": [
            {"id": r.relay_id, "capacity": r.capacity, "rate_budget": r.rate_budget} for r in scenario.relays
        ],
    }
    explicit = scenario.popularity_mode == "explicit"
    for u in scenario.users:
        holdings = []
        for h in u.holdings:
            node = {"file": h.file_id, "user_rate": h.user_rate}
            if explicit:
                node["request_prob"] = h.request_prob
            holdings.append(node)
        doc["users"].append({"id": u.user_id, "holdings": holdings, "relay_prefs": list(u.relay_prefs)})
    if not explicit:
        doc["popularity"] = {"mode": scenario.popularity_mode, "exponent": scenario.zipf_exponent}
    return yaml.safe_dump(doc, sort_keys=False)


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled scenario fixture, by stem name."""
    base = resources.files(__package__) / "fixtures" / f"{name}.yaml"
    path = Path(str(base))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario from a file path, falling back to a bundled fixture stem."""
    p = Path(path)
    if not p.is_file():
        p = fixture_path(Path(path).stem)
    return parse_scenario(p.read_text())


def parse_scheme(text: str) -> CacheScheme:
    """Parse a placement document: {assignment: [{user, file, relay}, ...]}."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"malformed scheme document: {exc}") from exc
    doc = _require_mapping(doc, "scheme document")
    _check_keys(doc, {"assignment"}, "scheme document")
    if "assignment" not in doc:
        raise ScenarioParseError("scheme document: missing required field 'assignment'", field="assignment")
    assignment: dict[tuple[int, int], int] = {}
    for node in _require_list(doc["assignment"], "assignment"):
        node = _require_mapping(node, "assignment entry")
        _check_keys(node, {"user", "file", "relay"}, "assignment entry")
        key = (_get_int(node, "user", "assignment entry"), _get_int(node, "file", "assignment entry"))
        if key in assignment:
            raise ScenarioParseError(f"assignment entry: duplicate holding (user {key[0]}, file {key[1]})")
        assignment[key] = _get_int(node, "relay", "assignment entry")
    return CacheScheme(assignment)


def serialize_scheme(scheme: CacheScheme) -> str:
    entries = [
        {"user": uid, "file": fid, "relay": relay}
        for (uid, fid), relay in sorted(scheme.assignment.items())
    ]
    return yaml.safe_dump({"assignment": entries}, sort_keys=False)


def parse_rates(text: str) -> dict[tuple[int, int], float]:
    """Parse a rate table document: {rates: [{user, file, rate}, ...]}."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"malformed rates document: {exc}") from exc
    doc = _require_mapping(doc, "rates document")
    _check_keys(doc, {"rates"}, "rates document")
    if "rates" not in doc:
        raise ScenarioParseError("rates document: missing required field 'rates'", field="rates")
    rates: dict[tuple[int, int], float] = {}
    for node in _require_list(doc["rates"], "rates"):
        node = _require_mapping(node, "rate entry")
        _check_keys(node, {"user", "file", "rate"}, "rate entry")
        key = (_get_int(node, "user", "rate entry"), _get_int(node, "file", "rate entry"))
        rates[key] = _get_number(node, "rate", "rate entry")
    return rates


def serialize_rates(rates: Mapping[tuple[int, int], float]) -> str:
    entries = [{"user": uid, "file": fid, "rate": float(rate)} for (uid, fid), rate in sorted(rates.items())]
    return yaml.safe_dump({"rates": entries}, sort_keys=False)


def build_result_table(
    scenario: Scenario,
    scheme: CacheScheme,
    rates: Mapping[tuple[int, int], float],
    objective: ObjectiveValue,
) -> ResultTable:
    """One row per holding, sorted by file index, plus an objective footer."""
    rows = []
    for user in scenario.users:
        for h in user.holdings:
            key = (user.user_id, h.file_id)
            relay_id = scheme.assignment.get(key)
            if relay_id is None:
                raise IncompleteAllocationError(f"no relay assigned for user {user.user_id}, file {h.file_id}")
            if key not in rates:
                raise IncompleteAllocationError(f"missing refresh rate for user {user.user_id}, file {h.file_id}")
            rows.append(
                TableRow(
                    file_index=h.file_id,
                    user_index=user.user_id,
                    user_rate=h.user_rate,
                    relay_index=relay_id,
                    relay_rate=rates[key],
                    server_rate=scenario.file_by_id[h.file_id].server_rate,
                )
            )
    rows.sort(key=lambda r: (r.file_index, r.user_index))
    footer = TableFooter(
        user_count=scenario.n_users,
        relay_count=scenario.n_relays,
        file_count=scenario.n_files,
        objective_sum=objective.sum_form,
        objective_mean=objective.mean_form,
    )
    return ResultTable(rows=tuple(rows), footer=footer)


def _plain_number(x: float) -> str:
    return f"{x:.6g}"


_TABLE_HEADER = ("file_index", "user_index", "user_rate", "relay_index", "relay_rate", "server_rate")


def _table_cells(table: ResultTable) -> list[list[str]]:
    return [
        [
            str(r.file_index),
            str(r.user_index),
            _plain_number(r.user_rate),
            str(r.relay_index),
            f"{r.relay_rate:.4f}",
            _plain_number(r.server_rate),
        ]
        for r in table.rows
    ]


def _footer_lines(footer: TableFooter, sep: str) -> list[str]:
    return [
        sep.join([f"users={footer.user_count}", f"relays={footer.relay_count}", f"files={footer.file_count}"]),
        f"objective_sum={footer.objective_sum:.6f}",
        f"objective_mean={footer.objective_mean:.6f}",
    ]


def write_result_table(result: "SolveResult", fmt: str = "csv") -> str:
    """Render a solve result as CSV or an aligned text table."""
    table = result.table
    cells = _table_cells(table)
    if fmt == "csv":
        lines = [",".join(_TABLE_HEADER)]
        lines.extend(",".join(row) for row in cells)
        lines.extend(_footer_lines(table.footer, ","))
    elif fmt == "table":
        widths = [len(h) for h in _TABLE_HEADER]
        for row in cells:
            widths = [max(w, len(c)) for w, c in zip(widths, row)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(_TABLE_HEADER, widths))]
        lines.extend("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)
        lines.extend(_footer_lines(table.footer, "  "))
    else:
        raise ScenarioParseError(f"unknown table format {fmt!r}")
    return "\n".join(lines) + "\n"


def write_trace(result: "SolveResult") -> str:
    """Improvement trace as CSV: evaluation index and best objective so far.

    Values print with shortest round-trip precision, so the last row parses
    back to exactly the result's objective.
    """
    lines = ["iteration,best_objective_sum"]
    lines.extend(f"{i},{v!r}" for i, v in result.trace)
    return "\n".join(lines) + "\n"
