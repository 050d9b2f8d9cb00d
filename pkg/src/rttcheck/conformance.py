"""Conformance checking: recorded traces against tables, systems against tables.

Three entry points share the token semantics from the automaton module:

* ``monitor`` replays independently recorded runs, one per trace, and
  searches for an alignment (a global binding plus per-step pause choices)
  under which the table accepts the combined play.
* ``check_weak`` plays the table against live systems: an adversary picks
  the global binding once, then free inputs every step; the systems answer
  deterministically.  The table holds if no reachable play violates an
  output constraint.
* ``check_strict`` additionally rejects systems that can stall the table
  forever: a reachable cycle of configurations in which no explanation
  sits on a forever row is a counterexample lasso.

Traces never pause unless the table declares a pause column for them.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from . import expr as ex
from .automaton import (
    TableAutomaton,
    TokenSet,
    compile_table,
    has_omega_token,
    initial_tokens,
    step_tokens,
)
from .system import ProductSystem, ReactiveSystem, augment, product
from .table import PAUSE_VAR, RelationalTable, referenced_variables

ColKey = tuple[str, str]
Valuation = dict[ColKey, ex.Value]
FrozenVal = tuple[tuple[ColKey, ex.Value], ...]


class ConformanceError(Exception):
    """Table, systems and recordings do not fit together."""


def _freeze(val: Mapping[ColKey, ex.Value]) -> FrozenVal:
    return tuple(sorted(val.items()))


def _bindings(table: RelationalTable) -> Iterator[dict[str, ex.Value]]:
    names = sorted(table.globals)
    domains = [ex.domain_values(table.globals[n]) for n in names]
    for combo in itertools.product(*domains):
        yield dict(zip(names, combo))


# ---------------------------------------------------------------------------
# Recorded traces

Recording = dict[str, list[dict[str, ex.Value]]]


def parse_value(text: str) -> ex.Value:
    if text == "TRUE":
        return True
    if text == "FALSE":
        return False
    try:
        return int(text)
    except ValueError:
        return ex.Sym(text)


def load_recordings(text: str) -> Recording:
    """Parse per-trace recordings.

    Format: a ``trace <name>`` header starts a section; each following
    non-empty line is one cycle of ``var=value`` pairs.  ``#`` comments.
    """
    recordings: Recording = {}
    current: list[dict[str, ex.Value]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("trace "):
            name = line[len("trace "):].strip()
            if not name or name in recordings:
                raise ConformanceError(f"line {lineno}: bad trace header")
            current = []
            recordings[name] = current
            continue
        if current is None:
            raise ConformanceError(f"line {lineno}: cycle before any 'trace' header")
        cycle: dict[str, ex.Value] = {}
        for pair in line.split():
            var, eq, value = pair.partition("=")
            if not eq or not var:
                raise ConformanceError(f"line {lineno}: expected var=value, got {pair!r}")
            cycle[var] = parse_value(value)
        current.append(cycle)
    if not recordings:
        raise ConformanceError("no trace sections found")
    return recordings


# ---------------------------------------------------------------------------
# Play records shared by monitor and checker results


@dataclass(frozen=True)
class StepRecord:
    """One super-step of a play: pause choices and the full valuation."""

    stutter: tuple[tuple[str, bool], ...]
    valuation: FrozenVal

    def value_map(self) -> Valuation:
        return dict(self.valuation)


@dataclass
class Counterexample:
    kind: str  # "violation" | "stall"
    binding: dict[str, ex.Value]
    steps: list[StepRecord]
    failed_columns: tuple[ColKey, ...] = ()
    failed_rows: tuple[int, ...] = ()
    loop_start: int | None = None

    @property
    def violation_step(self) -> int:
        return len(self.steps) - 1


@dataclass
class CheckResult:
    holds: bool | None
    mode: str
    counterexample: Counterexample | None = None
    bindings_checked: int = 0
    states_explored: int = 0
    reason: str | None = None


@dataclass
class MonitorResult:
    verdict: str  # "conforms" | "violation" | "not_covered" | "inconclusive"
    weak_only: bool = False
    binding: dict[str, ex.Value] | None = None
    steps: list[StepRecord] = field(default_factory=list)
    failed_columns: tuple[ColKey, ...] = ()
    reason: str | None = None

    @property
    def violation_step(self) -> int | None:
        if self.verdict != "violation":
            return None
        return len(self.steps) - 1


# ---------------------------------------------------------------------------
# Monitoring


def _check_recordings(table: RelationalTable, recordings: Recording) -> None:
    if set(recordings) != set(table.traces):
        raise ConformanceError(
            f"recordings cover {sorted(recordings)}, table needs {sorted(table.traces)}"
        )
    needed = referenced_variables(table)
    for trace, cycles in recordings.items():
        for idx, cycle in enumerate(cycles):
            missing = needed[trace] - set(cycle)
            if missing:
                raise ConformanceError(
                    f"trace {trace!r} cycle {idx} misses {sorted(missing)}"
                )
    for col in table.data_columns():
        for idx, cycle in enumerate(recordings[col.trace]):
            if not ex.value_in_domain(cycle[col.var], col.typ):
                raise ConformanceError(
                    f"trace {col.trace!r} cycle {idx}: {col.var}="
                    f"{cycle[col.var]!r} is outside the column domain"
                )


@dataclass(frozen=True)
class _MonitorNode:
    positions: tuple[int, ...]
    tokens: TokenSet
    window_key: tuple[FrozenVal, ...]


def monitor(
    table: RelationalTable,
    recordings: Recording,
    max_nodes: int = 200_000,
) -> MonitorResult:
    """Judge recorded runs against the table.

    Conformance is existential: the recordings conform if some global
    binding and some pause alignment produce an accepted play that consumes
    every recorded cycle (or ends the table early with no explanation left
    open).  A run that ends inside a forever row conforms weakly: the
    recordings ran out, not the obligation.
    """
    table.require_valid()
    _check_recordings(table, recordings)
    auto = compile_table(table)
    traces = table.traces
    pause_traces = set(table.pause_traces())
    lengths = [len(recordings[t]) for t in traces]
    depth = table.history_bound

    if all(n == 0 for n in lengths):
        if auto.skippable:
            return MonitorResult("conforms")
        return MonitorResult("inconclusive", reason="empty recordings")

    weak_conform: MonitorResult | None = None
    violation: MonitorResult | None = None
    saw_inconclusive = False
    saw_uncovered = False

    for binding in _bindings(table):
        start_tokens = initial_tokens(auto)
        start = _MonitorNode(tuple(0 for _ in traces), start_tokens, ())
        parents: dict[_MonitorNode, tuple[_MonitorNode, StepRecord] | None] = {start: None}
        windows: dict[_MonitorNode, tuple[Valuation, ...]] = {start: ()}
        queue: deque[_MonitorNode] = deque([start])
        explored = 0

        while queue:
            node = queue.popleft()
            explored += 1
            if explored > max_nodes:
                return MonitorResult(
                    "inconclusive", reason=f"node budget ({max_nodes}) exhausted"
                )
            options: list[list[bool]] = []
            for tidx, trace in enumerate(traces):
                pos = node.positions[tidx]
                opts: list[bool] = []
                if pos < lengths[tidx]:
                    opts.append(False)
                if trace in pause_traces and pos >= 1:
                    opts.append(True)
                options.append(opts)
            for choice in itertools.product(*options):
                positions = list(node.positions)
                valuation: Valuation = {}
                for tidx, trace in enumerate(traces):
                    if choice[tidx]:
                        cycle = recordings[trace][positions[tidx] - 1]
                    else:
                        cycle = recordings[trace][positions[tidx]]
                        positions[tidx] += 1
                    for var, value in cycle.items():
                        valuation[(trace, var)] = value
                    if trace in pause_traces:
                        valuation[(trace, PAUSE_VAR)] = choice[tidx]
                window = windows[node] + (valuation,)
                window = window[-(depth + 1):]
                result = step_tokens(auto, node.tokens, window, binding)
                record = StepRecord(
                    tuple(zip(traces, choice)), _freeze(valuation)
                )
                consumed = all(p == n for p, n in zip(positions, lengths))
                if result.verdict == "accept_end" or (result.any_accept and consumed):
                    steps = _chain(parents, node) + [record]
                    return MonitorResult(
                        "conforms", binding=dict(binding), steps=steps
                    )
                if result.verdict == "violation":
                    if violation is None:
                        steps = _chain(parents, node) + [record]
                        cols: list[ColKey] = []
                        for _, failed in result.violated:
                            cols.extend(failed)
                        violation = MonitorResult(
                            "violation",
                            binding=dict(binding),
                            steps=steps,
                            failed_columns=tuple(dict.fromkeys(cols)),
                        )
                    continue
                if result.verdict == "uncovered":
                    saw_uncovered = True
                    continue
                child = _MonitorNode(
                    tuple(positions), result.next_tokens, tuple(map(_freeze, window))
                )
                if consumed:
                    if has_omega_token(auto, result.next_tokens):
                        if weak_conform is None:
                            steps = _chain(parents, node) + [record]
                            weak_conform = MonitorResult(
                                "conforms",
                                weak_only=True,
                                binding=dict(binding),
                                steps=steps,
                            )
                    else:
                        saw_inconclusive = True
                if child not in parents:
                    parents[child] = (node, record)
                    windows[child] = window
                    queue.append(child)

    if weak_conform is not None:
        return weak_conform
    if saw_inconclusive:
        return MonitorResult(
            "inconclusive",
            reason="recordings end while the table still expects steps",
        )
    if violation is not None:
        return violation
    reason = (
        "no alignment covers the recorded inputs"
        if saw_uncovered
        else "no alignment fits the recordings"
    )
    return MonitorResult("not_covered", reason=reason)


def _chain(
    parents: Mapping,
    node,
) -> list[StepRecord]:
    steps: list[StepRecord] = []
    while True:
        entry = parents[node]
        if entry is None:
            break
        node, record = entry
        steps.append(record)
    steps.reverse()
    return steps


# ---------------------------------------------------------------------------
# System checking


def build_product(
    table: RelationalTable, systems: Mapping[str, ReactiveSystem]
) -> ProductSystem:
    """Wire systems to the table's traces, adding pause inputs where declared."""
    table.require_valid()
    if set(systems) != set(table.traces):
        raise ConformanceError(
            f"systems cover {sorted(systems)}, table needs {sorted(table.traces)}"
        )
    pause_traces = set(table.pause_traces())
    needed = referenced_variables(table)
    parts: dict[str, ReactiveSystem] = {}
    for trace in table.traces:
        system = systems[trace]
        decls = {d.name: d for d in system.decls}
        for col in table.data_columns():
            if col.trace != trace:
                continue
            decl = decls.get(col.var)
            if decl is None:
                raise ConformanceError(
                    f"system {system.name!r} has no variable {col.var!r} "
                    f"for column {trace}::{col.var}"
                )
            if col.kind == "in" and decl.kind != "input":
                raise ConformanceError(
                    f"column {trace}::{col.var} is an input column but "
                    f"{col.var!r} is a {decl.kind} of {system.name!r}"
                )
            if col.kind == "out" and decl.kind == "input":
                raise ConformanceError(
                    f"column {trace}::{col.var} is an output column but "
                    f"{col.var!r} is an input of {system.name!r}"
                )
            if not ex.same_type(decl.typ, col.typ):
                raise ConformanceError(
                    f"column {trace}::{col.var} : {col.typ} does not match "
                    f"{system.name!r}'s {decl.typ}"
                )
        for var in needed[trace]:
            if var not in decls:
                raise ConformanceError(
                    f"table references {trace}::{var}, unknown in {system.name!r}"
                )
        parts[trace] = augment(system) if trace in pause_traces else system
    return product(parts)


@dataclass(frozen=True)
class _Config:
    state: FrozenVal
    tokens: TokenSet
    window_key: tuple[FrozenVal, ...]


def _explore(
    table: RelationalTable,
    prod: ProductSystem,
    auto: TableAutomaton,
    binding: dict[str, ex.Value],
    max_states: int | None,
    want_graph: bool,
):
    """Breadth-first play exploration for one binding.

    Returns (counterexample, explored, graph, accepting, start, parents)
    where the counterexample is a violation or None.  The graph is only
    populated when ``want_graph`` (strict checking needs the edges).
    """
    depth = table.history_bound
    init = prod.initial_state()
    start = _Config(_freeze(init), initial_tokens(auto), ())
    parents: dict[_Config, tuple[_Config, StepRecord] | None] = {start: None}
    windows: dict[_Config, tuple[Valuation, ...]] = {start: ()}
    graph: dict[_Config, list[_Config]] = {}
    accepting: set[_Config] = set()
    queue: deque[_Config] = deque([start])
    explored = 0

    # A paused trace replays its previous cycle, so its fresh inputs are
    # irrelevant; keep one canonical representative per pause pattern.
    pause_set = set(table.pause_traces())
    pause_list = [t for t in table.traces if t in pause_set]
    canon: dict[ColKey, ex.Value] = {}
    frozen_keys: dict[str, list[ColKey]] = {t: [] for t in pause_list}
    for trace, decl in prod.input_decls():
        if trace in frozen_keys and decl.name != PAUSE_VAR:
            key = (trace, decl.name)
            canon[key] = ex.domain_values(decl.typ)[0]
            frozen_keys[trace].append(key)
    moves = []
    for move in prod.input_valuations():
        redundant = False
        for t in pause_list:
            if move[(t, PAUSE_VAR)] and any(
                move[k] != canon[k] for k in frozen_keys[t]
            ):
                redundant = True
                break
        if not redundant:
            moves.append(move)

    while queue:
        cfg = queue.popleft()
        explored += 1
        if max_states is not None and explored > max_states:
            return None, explored, graph, accepting, start, parents, True
        if want_graph:
            graph.setdefault(cfg, [])
        state = dict(cfg.state)
        prev = windows[cfg][-1] if windows[cfg] else None
        for move in moves:
            paused = [t for t in pause_list if move[(t, PAUSE_VAR)]]
            if paused and prev is None:
                continue  # nothing to freeze before the first cycle
            new_state = prod.step(state, move)
            valuation: Valuation = {}
            valuation.update(move)
            valuation.update(new_state)
            for t in paused:
                for key, value in prev.items():
                    if key[0] == t and key[1] != PAUSE_VAR:
                        valuation[key] = value
            window = windows[cfg] + (valuation,)
            window = window[-(depth + 1):]
            result = step_tokens(auto, cfg.tokens, window, binding)
            if result.verdict in ("accept_end", "uncovered"):
                continue
            record = StepRecord(
                tuple(
                    (t, bool(move.get((t, PAUSE_VAR), False))) for t in table.traces
                ),
                _freeze(valuation),
            )
            if result.verdict == "violation":
                cols: list[ColKey] = []
                rows: list[int] = []
                for sid, failed in result.violated:
                    cols.extend(failed)
                    rows.append(auto.states[sid].row_index)
                cex = Counterexample(
                    kind="violation",
                    binding=dict(binding),
                    steps=_chain(parents, cfg) + [record],
                    failed_columns=tuple(dict.fromkeys(cols)),
                    failed_rows=tuple(dict.fromkeys(rows)),
                )
                return cex, explored, graph, accepting, start, parents, False
            child = _Config(
                _freeze(new_state), result.next_tokens, tuple(map(_freeze, window))
            )
            if want_graph:
                graph.setdefault(cfg, []).append(child)
            if child not in parents:
                parents[child] = (cfg, record)
                windows[child] = window
                if has_omega_token(auto, child.tokens):
                    accepting.add(child)
                queue.append(child)

    return None, explored, graph, accepting, start, parents, False


def check_weak(
    table: RelationalTable,
    systems: Mapping[str, ReactiveSystem],
    max_states: int | None = None,
) -> CheckResult:
    """Exhaustive weak conformance over every global binding."""
    prod = build_product(table, systems)
    auto = compile_table(table)
    total = 0
    bindings = 0
    for binding in _bindings(table):
        bindings += 1
        cex, explored, _, _, _, _, capped = _explore(
            table, prod, auto, binding, max_states, want_graph=False
        )
        total += explored
        if capped:
            return CheckResult(
                None, "weak", bindings_checked=bindings, states_explored=total,
                reason=f"state budget ({max_states}) exhausted",
            )
        if cex is not None:
            return CheckResult(
                False, "weak", counterexample=cex,
                bindings_checked=bindings, states_explored=total,
            )
    return CheckResult(
        True, "weak", bindings_checked=bindings, states_explored=total
    )


def _find_stall(
    graph: dict[_Config, list[_Config]],
    accepting: set[_Config],
    start: _Config,
) -> list[_Config] | None:
    """A reachable cycle through non-accepting configurations, if any."""
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[_Config, int] = {}
    stack: list[tuple[_Config, Iterator[_Config]]] = []
    path: list[_Config] = []

    for root in graph:
        if color.get(root, WHITE) != WHITE or root in accepting:
            continue
        color[root] = GREY
        stack.append((root, iter(graph.get(root, []))))
        path.append(root)
        while stack:
            node, children = stack[-1]
            advanced = False
            for child in children:
                if child in accepting:
                    continue
                c = color.get(child, WHITE)
                if c == GREY:
                    idx = path.index(child)
                    return path[idx:]
                if c == WHITE:
                    color[child] = GREY
                    stack.append((child, iter(graph.get(child, []))))
                    path.append(child)
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
                path.pop()
    return None


def check_strict(
    table: RelationalTable,
    systems: Mapping[str, ReactiveSystem],
    max_states: int | None = None,
) -> CheckResult:
    """Weak conformance plus progress: the systems cannot stall the table.

    A configuration counts as accepting when some explanation sits on a
    forever row; a reachable cycle avoiding all accepting configurations
    lets the adversary keep the play unaccepted forever and is returned as
    a lasso counterexample.
    """
    prod = build_product(table, systems)
    auto = compile_table(table)
    total = 0
    bindings = 0
    for binding in _bindings(table):
        bindings += 1
        cex, explored, graph, accepting, start, parents, capped = _explore(
            table, prod, auto, binding, max_states, want_graph=True
        )
        total += explored
        if capped:
            return CheckResult(
                None, "strict", bindings_checked=bindings, states_explored=total,
                reason=f"state budget ({max_states}) exhausted",
            )
        if cex is not None:
            cex.kind = "violation"
            return CheckResult(
                False, "strict", counterexample=cex,
                bindings_checked=bindings, states_explored=total,
            )
        cycle = _find_stall(graph, accepting, start)
        if cycle is not None:
            steps = _chain(parents, cycle[0])
            loop_start = len(steps)
            node = cycle[0]
            for nxt in cycle[1:] + [cycle[0]]:
                record = _edge_record(parents, graph, node, nxt)
                steps.append(record)
                node = nxt
            stall = Counterexample(
                kind="stall",
                binding=dict(binding),
                steps=steps,
                loop_start=loop_start,
            )
            return CheckResult(
                False, "strict", counterexample=stall,
                bindings_checked=bindings, states_explored=total,
            )
    return CheckResult(
        True, "strict", bindings_checked=bindings, states_explored=total
    )


def _edge_record(
    parents: Mapping[_Config, tuple[_Config, StepRecord] | None],
    graph: dict[_Config, list[_Config]],
    src: _Config,
    dst: _Config,
) -> StepRecord:
    # The BFS only kept parent records; recover the step for this edge from
    # the child's parent entry when it matches, else replay is simple: the
    # record is fully determined by dst's stored valuation suffix.
    entry = parents.get(dst)
    if entry is not None and entry[0] == src:
        return entry[1]
    # dst was first reached another way; its window's newest valuation
    # still describes this edge's step because dst fixes it uniquely.
    newest = dict(dst.window_key[-1]) if dst.window_key else {}
    stutter = tuple(
        (key[0], bool(value))
        for key, value in sorted(newest.items())
        if key[1] == PAUSE_VAR
    )
    return StepRecord(stutter, _freeze(newest))


# ---------------------------------------------------------------------------
# Counterexample export


def counterexample_recordings(
    table: RelationalTable, cex: Counterexample
) -> Recording:
    """Project a play back to per-trace recordings for the monitor."""
    pause_traces = set(table.pause_traces())
    out: Recording = {t: [] for t in table.traces}
    for step in cex.steps:
        stutter = dict(step.stutter)
        values = step.value_map()
        for trace in table.traces:
            if stutter.get(trace, False):
                continue
            cycle = {
                key[1]: value
                for key, value in values.items()
                if key[0] == trace and key[1] != PAUSE_VAR
            }
            out[trace].append(cycle)
    return out


def _value_text(value: ex.Value) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    return str(value)


def render_counterexample(table: RelationalTable, cex: Counterexample) -> str:
    lines: list[str] = []
    if cex.binding:
        pairs = ", ".join(f"{k}={_value_text(v)}" for k, v in sorted(cex.binding.items()))
        lines.append(f"binding: {pairs}")
    for idx, step in enumerate(cex.steps):
        marks = []
        if cex.kind == "stall" and cex.loop_start == idx:
            marks.append("loop starts here")
        if cex.kind == "violation" and idx == len(cex.steps) - 1:
            marks.append("violation")
        stutter = dict(step.stutter)
        parts: list[str] = []
        for trace in table.traces:
            if stutter.get(trace, False):
                parts.append(f"{trace}: paused")
                continue
            vals = ", ".join(
                f"{key[1]}={_value_text(v)}"
                for key, v in step.valuation
                if key[0] == trace and key[1] != PAUSE_VAR
            )
            parts.append(f"{trace}: {vals}")
        suffix = f"   <- {'; '.join(marks)}" if marks else ""
        lines.append(f"step {idx}:  " + "  |  ".join(parts) + suffix)
    if cex.kind == "violation" and cex.failed_columns:
        cols = ", ".join(f"{t}::{v}" for t, v in cex.failed_columns)
        rows = ", ".join(str(r) for r in cex.failed_rows)
        lines.append(f"failed columns: {cols} (row {rows})")
    if cex.kind == "stall":
        lines.append("the play can repeat the loop forever without acceptance")
    return "\n".join(lines) + "\n"


def _json_value(value: ex.Value):
    if isinstance(value, ex.Sym):
        return value.name
    return value


def counterexample_json(table: RelationalTable, cex: Counterexample) -> str:
    doc = {
        "kind": cex.kind,
        "binding": {k: _json_value(v) for k, v in cex.binding.items()},
        "loop_start": cex.loop_start,
        "failed_columns": [f"{t}::{v}" for t, v in cex.failed_columns],
        "failed_rows": list(cex.failed_rows),
        "steps": [
            {
                "stutter": {t: s for t, s in step.stutter},
                "values": {
                    f"{key[0]}::{key[1]}": _json_value(v)
                    for key, v in step.valuation
                },
            }
            for step in cex.steps
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
