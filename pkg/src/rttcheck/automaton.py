"""Compile a table's nested rows into a nondeterministic step automaton.

Each state stands for "this step is consumed by row r".  A row with an
upper duration bound n becomes a chain of n copies; an open-ended row gets
a self-loop on its last required copy.  Groups splice their body copies in
sequence, with back edges for repetition.  Edges within one row are *stay*
edges, all others are *forward* edges; the distinction drives the progress
semantics, where lingering on a flagged row is only legitimate while no
forward alternative could take over.

Checking walks sets of tokens over these states.  Per step, a token reads
the current valuation (newest entry of the history window): if the row's
input-side constraints miss, the token dies uncovered; if inputs hold but
an output constraint fails, it dies in violation; otherwise it survives
and spawns a successor along every outgoing edge.  A token surviving on an
exit state signals that the table may end at this step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import expr as ex
from .table import PAUSE_VAR, Group, RelationalTable, Row

ACCEPT = -1  # pseudo-target: "the table could have ended instead"

ColKey = tuple[str, str]
GuardList = tuple[tuple[ColKey, ex.Expr], ...]


@dataclass(frozen=True)
class State:
    sid: int
    row_index: int
    copy: int
    omega: bool
    progress: bool


@dataclass(frozen=True)
class _Fragment:
    entries: tuple[int, ...]
    exits: tuple[int, ...]
    skippable: bool


@dataclass
class TableAutomaton:
    table: RelationalTable
    states: tuple[State, ...]
    stay: dict[int, tuple[int, ...]]
    forward: dict[int, tuple[int, ...]]
    initial: tuple[int, ...]
    exits: frozenset[int]
    skippable: bool
    input_guards: dict[int, GuardList] = field(default_factory=dict)
    output_guards: dict[int, GuardList] = field(default_factory=dict)

    def state(self, sid: int) -> State:
        return self.states[sid]

    def alternatives(self, sid: int) -> frozenset[int]:
        """Forward options from ``sid``, including the end-of-table pseudo-target."""
        alts = frozenset(self.forward.get(sid, ()))
        if sid in self.exits:
            alts |= {ACCEPT}
        return alts


def _dedupe(seq: Iterable[int]) -> tuple[int, ...]:
    seen: set[int] = set()
    out: list[int] = []
    for x in seq:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return tuple(out)


def compile_table(table: RelationalTable) -> TableAutomaton:
    table.require_valid()
    states: list[State] = []
    stay: dict[int, list[int]] = {}
    forward: dict[int, list[int]] = {}

    def new_state(row: Row, copy: int, omega: bool) -> int:
        sid = len(states)
        states.append(State(sid, row.index, copy, omega, row.duration.progress))
        stay[sid] = []
        forward[sid] = []
        return sid

    def build_row(row: Row, omega_ctx: bool) -> _Fragment:
        d = row.duration
        if d.omega:
            sid = new_state(row, 0, True)
            stay[sid].append(sid)
            return _Fragment((sid,), (), False)
        copies = max(d.lo, 1) if d.hi is None else d.hi
        if copies == 0:
            return _Fragment((), (), True)
        sids = [new_state(row, k, omega_ctx) for k in range(copies)]
        for a, b in zip(sids, sids[1:]):
            stay[a].append(b)
        if d.hi is None:
            stay[sids[-1]].append(sids[-1])
        exits = tuple(sids[max(d.lo, 1) - 1:])
        return _Fragment((sids[0],), exits, d.lo == 0)

    def sequence(frags: list[_Fragment]) -> _Fragment:
        entries: list[int] = []
        for frag in frags:
            entries.extend(frag.entries)
            if not frag.skippable:
                break
        suffix_skip = [True] * (len(frags) + 1)
        for i in range(len(frags) - 1, -1, -1):
            suffix_skip[i] = suffix_skip[i + 1] and frags[i].skippable
        exits: list[int] = []
        for i, frag in enumerate(frags):
            if suffix_skip[i + 1]:
                exits.extend(frag.exits)
        for i, frag in enumerate(frags):
            for j in range(i + 1, len(frags)):
                for a in frag.exits:
                    forward[a].extend(frags[j].entries)
                if not frags[j].skippable:
                    break
        return _Fragment(_dedupe(entries), _dedupe(exits), suffix_skip[0])

    def build_group(group: Group, omega_ctx: bool) -> _Fragment:
        d = group.duration
        ctx = omega_ctx or d.omega
        if d.omega:
            body = sequence([build(c, ctx) for c in group.children])
            for a in body.exits:
                forward[a].extend(body.entries)
            return _Fragment(body.entries, (), False)
        copies = max(d.lo, 1) if d.hi is None else d.hi
        if copies == 0:
            return _Fragment((), (), True)
        bodies = [
            sequence([build(c, ctx) for c in group.children]) for _ in range(copies)
        ]
        whole = sequence(bodies)
        if d.hi is None:
            last = bodies[-1]
            for a in last.exits:
                forward[a].extend(last.entries)
            exits = whole.exits
        else:
            early: list[int] = list(whole.exits)
            for k in range(max(d.lo, 1) - 1, copies - 1):
                early.extend(bodies[k].exits)
            exits = _dedupe(early)
        return _Fragment(whole.entries, exits, d.lo == 0 or whole.skippable)

    def build(node: Row | Group, omega_ctx: bool) -> _Fragment:
        if isinstance(node, Row):
            return build_row(node, omega_ctx)
        return build_group(node, omega_ctx)

    root = build(table.body, False)

    input_guards: dict[int, GuardList] = {}
    output_guards: dict[int, GuardList] = {}
    for row in table.rows:
        ins: list[tuple[ColKey, ex.Expr]] = []
        outs: list[tuple[ColKey, ex.Expr]] = []
        for col in table.columns:
            constraint = table.constraints.get((row.index, col.key))
            if col.kind == "pause":
                if constraint is None:
                    # A blank pause cell keeps the trace running this step.
                    constraint = ex.BinOp(
                        "=", ex.VarRef(col.trace, PAUSE_VAR, 0), ex.BoolLit(False)
                    )
                ins.append((col.key, constraint))
            elif constraint is None:
                continue
            elif col.kind == "in":
                ins.append((col.key, constraint))
            else:
                outs.append((col.key, constraint))
        input_guards[row.index] = tuple(ins)
        output_guards[row.index] = tuple(outs)

    return TableAutomaton(
        table=table,
        states=tuple(states),
        stay={sid: _dedupe(ts) for sid, ts in stay.items()},
        forward={sid: _dedupe(ts) for sid, ts in forward.items()},
        initial=root.entries,
        exits=frozenset(root.exits),
        skippable=root.skippable,
        input_guards=input_guards,
        output_guards=output_guards,
    )


# ---------------------------------------------------------------------------
# Token semantics


@dataclass(frozen=True)
class Token:
    """A live explanation: the play is currently consuming ``sid``'s row.

    ``families`` records how the token got here.  Each family lists the
    forward alternatives that were available when a progress row chose to
    linger; the arrival was legitimate only while none of them could fire.
    A token whose every family has a firing alternative is dropped.  An
    empty family marks an arrival with no progress obligation.
    """

    sid: int
    families: frozenset[frozenset[int]]

    def sort_key(self) -> tuple:
        fams = tuple(sorted(tuple(sorted(f)) for f in self.families))
        return (self.sid, fams)


TokenSet = frozenset[Token]

_NO_OBLIGATION: frozenset[frozenset[int]] = frozenset({frozenset()})


def initial_tokens(auto: TableAutomaton) -> TokenSet:
    return frozenset(Token(sid, _NO_OBLIGATION) for sid in auto.initial)


@dataclass
class StepResult:
    next_tokens: TokenSet
    any_accept: bool
    pruned_accept: bool
    covered: bool
    survivors: tuple[int, ...]
    uncovered: tuple[int, ...]
    violated: tuple[tuple[int, tuple[ColKey, ...]], ...]

    @property
    def verdict(self) -> str:
        """Classify the step: continue, accept_end, violation or uncovered."""
        if self.pruned_accept:
            return "accept_end"
        if self.next_tokens:
            return "continue"
        if self.any_accept:
            return "accept_end"
        if self.violated:
            return "violation"
        return "uncovered"


def input_fires(
    auto: TableAutomaton,
    sid: int,
    history: Sequence[ex.Valuation],
    binding: Mapping[str, ex.Value],
) -> bool:
    row = auto.states[sid].row_index
    return all(
        ex.evaluate(e, history, binding) for _, e in auto.input_guards[row]
    )


def step_tokens(
    auto: TableAutomaton,
    tokens: TokenSet,
    history: Sequence[ex.Valuation],
    binding: Mapping[str, ex.Value],
) -> StepResult:
    """Advance every token over the newest valuation in ``history``."""
    fired: dict[int, bool] = {}

    def alt_fires(alt: int) -> bool:
        if alt == ACCEPT:
            return True
        if alt not in fired:
            fired[alt] = input_fires(auto, alt, history, binding)
        return fired[alt]

    live: list[Token] = []
    for tok in sorted(tokens, key=Token.sort_key):
        dropped = bool(tok.families) and all(
            any(alt_fires(a) for a in fam) for fam in tok.families
        )
        if not dropped:
            live.append(tok)
    if tokens and not live:
        # Every explanation lingered past an available end of the table;
        # the play already conformed at the previous step.
        return StepResult(frozenset(), False, True, False, (), (), ())

    spawned: dict[int, set[frozenset[int]]] = {}
    any_accept = False
    covered = False
    survivors: list[int] = []
    uncovered: list[int] = []
    violated: list[tuple[int, tuple[ColKey, ...]]] = []
    for tok in live:
        row = auto.states[tok.sid].row_index
        in_fail = [
            key
            for key, e in auto.input_guards[row]
            if not ex.evaluate(e, history, binding)
        ]
        if in_fail:
            uncovered.append(tok.sid)
            continue
        covered = True
        out_fail = [
            key
            for key, e in auto.output_guards[row]
            if not ex.evaluate(e, history, binding)
        ]
        if out_fail:
            violated.append((tok.sid, tuple(out_fail)))
            continue
        survivors.append(tok.sid)
        if tok.sid in auto.exits:
            any_accept = True
        alts = auto.alternatives(tok.sid)
        progress = auto.states[tok.sid].progress
        for target in auto.forward.get(tok.sid, ()):
            spawned.setdefault(target, set()).add(frozenset())
        for target in auto.stay.get(tok.sid, ()):
            family = alts if progress else frozenset()
            spawned.setdefault(target, set()).add(family)

    next_tokens = frozenset(
        Token(sid, frozenset(fams)) for sid, fams in spawned.items()
    )
    return StepResult(
        next_tokens=next_tokens,
        any_accept=any_accept,
        pruned_accept=False,
        covered=covered,
        survivors=tuple(survivors),
        uncovered=tuple(uncovered),
        violated=tuple(violated),
    )


def has_omega_token(auto: TableAutomaton, tokens: TokenSet) -> bool:
    return any(auto.states[t.sid].omega for t in tokens)


def describe(auto: TableAutomaton) -> str:
    """Readable dump of states and edges, for the CLI and for debugging."""
    lines = [f"automaton for table {auto.table.name}"]
    lines.append(
        "initial: " + ", ".join(f"s{d}" for d in auto.initial)
        + ("  (empty play accepted)" if auto.skippable else "")
    )
    lines.append("exits: " + ", ".join(f"s{d}" for d in sorted(auto.exits)))
    for st in auto.states:
        flags = []
        if st.omega:
            flags.append("omega")
        if st.progress:
            flags.append("progress")
        stays = ", ".join(f"s{t}" for t in auto.stay.get(st.sid, ()))
        fwds = ", ".join(f"s{t}" for t in auto.forward.get(st.sid, ()))
        lines.append(
            f"s{st.sid}: row {st.row_index} copy {st.copy}"
            + (" [" + " ".join(flags) + "]" if flags else "")
            + (f" stay -> {stays}" if stays else "")
            + (f" forward -> {fwds}" if fwds else "")
        )
    return "\n".join(lines) + "\n"
