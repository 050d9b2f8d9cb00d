"""Relational test tables: data model, text format, instance operations.

A table constrains a fixed set of traces over a sequence of steps.  Rows
carry one constraint cell per column and a duration saying how many
consecutive steps the row may cover.  Rows nest into groups which can
repeat as a block.  The text format is line-oriented:

    table <name>
    traces <t1> <t2> ...
    gvar <name> : int[<lo>,<hi>]
    history <n>
    enum <Name> { <C1>, <C2>, ... }
    column pause <trace>
    column in <trace>::<var> : <type>
    column out <trace>::<var> : <type>
    group [<duration>] {
      row <duration> { <trace>::<var> = "<cell>"; pause(<trace>) = "<cell>"; }
    }

Durations: ``3`` exact, ``[m,n]`` bounded, ``[m,-]`` at least m, ``>=m``
the same, ``-`` any finite count, ``omega`` forever.  A ``p`` suffix marks
the row as progressing: it may not linger once the next row's input
constraints are satisfied.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

from . import expr as ex
from .lex import LexError, TokenStream, tokenize

PAUSE_VAR = "stutt"


class TableParseError(Exception):
    def __init__(self, errors: list[str] | str):
        if isinstance(errors, str):
            errors = [errors]
        super().__init__("; ".join(errors))
        self.errors = errors


class TableError(Exception):
    """A table failed validation; ``diagnostics`` lists every finding."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class InstantiateError(Exception):
    pass


class InstanceError(Exception):
    """The two tables cannot be compared (column sets differ, etc.)."""


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class Duration:
    lo: int = 1
    hi: int | None = 1  # None = unbounded
    omega: bool = False
    progress: bool = False

    def __str__(self) -> str:
        if self.omega:
            return "omega"
        suffix = "p" if self.progress else ""
        if self.hi is None:
            if self.lo == 0:
                return "-" + suffix
            return f"[{self.lo},-]{suffix}"
        if self.lo == self.hi:
            return f"{self.lo}{suffix}"
        return f"[{self.lo},{self.hi}]{suffix}"


@dataclass(frozen=True)
class ColumnDecl:
    trace: str
    var: str
    kind: str  # "in" | "out" | "pause"
    typ: ex.Type

    @property
    def key(self) -> tuple[str, str]:
        return (self.trace, self.var)


@dataclass(frozen=True)
class Cell:
    text: str
    raw: ex.CellItems


@dataclass(frozen=True)
class Row:
    uid: str
    index: int  # document order, 0-based
    duration: Duration
    cells: tuple[tuple[tuple[str, str], Cell], ...]  # ordered (trace, var) -> cell

    def cell_map(self) -> dict[tuple[str, str], Cell]:
        return dict(self.cells)


@dataclass(frozen=True)
class Group:
    uid: str
    duration: Duration
    children: tuple["Row | Group", ...]


@dataclass
class RelationalTable:
    name: str
    traces: tuple[str, ...]
    globals: dict[str, ex.IntType]
    enums: dict[str, ex.EnumType]
    declared_history: int | None
    columns: list[ColumnDecl]
    body: Group

    # Filled by validate(); rows in document order.
    rows: list[Row] = field(default_factory=list)
    constraints: dict[tuple[int, tuple[str, str]], ex.Expr] = field(default_factory=dict)
    history_bound: int = 0

    def __post_init__(self) -> None:
        self.rows = sorted(_collect_rows(self.body), key=lambda r: r.index)

    def symbols(self) -> ex.SymbolTable:
        variables = {
            c.key: c.typ for c in self.columns if c.kind != "pause"
        }
        for trace in self.traces:
            variables[(trace, PAUSE_VAR)] = ex.BOOL
        return ex.SymbolTable(
            traces=self.traces,
            variables=variables,
            globals=dict(self.globals),
            enums=dict(self.enums),
        )

    def column(self, key: tuple[str, str]) -> ColumnDecl | None:
        for c in self.columns:
            if c.key == key:
                return c
        return None

    def pause_traces(self) -> tuple[str, ...]:
        return tuple(c.trace for c in self.columns if c.kind == "pause")

    def data_columns(self) -> list[ColumnDecl]:
        return [c for c in self.columns if c.kind != "pause"]

    def require_valid(self) -> "RelationalTable":
        diags = validate(self)
        if diags:
            raise TableError(diags)
        return self


def _collect_rows(node: Row | Group) -> list[Row]:
    if isinstance(node, Row):
        return [node]
    rows: list[Row] = []
    for child in node.children:
        rows.extend(_collect_rows(child))
    return rows


def _walk_groups(node: Row | Group) -> Iterator[Group]:
    if isinstance(node, Group):
        yield node
        for child in node.children:
            yield from _walk_groups(child)


def contains_omega(node: Row | Group) -> bool:
    if isinstance(node, Row):
        return node.duration.omega
    if node.duration.omega:
        return True
    return any(contains_omega(c) for c in node.children)


# ---------------------------------------------------------------------------
# Parsing


def _parse_int(ts: TokenStream, what: str) -> int:
    neg = ts.accept_punct("-")
    tok = ts.advance()
    if tok.kind != "int":
        raise TableParseError(f"line {tok.line}: expected {what}")
    return -int(tok.text) if neg else int(tok.text)


def _parse_duration(ts: TokenStream) -> Duration:
    tok = ts.current
    if tok.is_punct("{"):
        return Duration(1, 1)
    if tok.is_ident("omega"):
        ts.advance()
        return Duration(1, None, omega=True)
    if tok.is_punct("-"):
        ts.advance()
        return _with_progress(ts, Duration(0, None))
    if tok.is_punct(">="):
        ts.advance()
        lo = _parse_int(ts, "duration lower bound")
        return _with_progress(ts, Duration(lo, None))
    if tok.kind == "int":
        ts.advance()
        n = int(tok.text)
        return _with_progress(ts, Duration(n, n))
    if tok.is_punct("["):
        ts.advance()
        lo = _parse_int(ts, "duration lower bound")
        if not ts.accept_punct(","):
            raise TableParseError(f"line {tok.line}: expected ',' in duration")
        if ts.accept_punct("-"):
            hi: int | None = None
        else:
            hi = _parse_int(ts, "duration upper bound")
        if not ts.accept_punct("]"):
            raise TableParseError(f"line {tok.line}: expected ']' in duration")
        return _with_progress(ts, Duration(lo, hi))
    raise TableParseError(f"line {tok.line}: expected duration or '{{'")


def _with_progress(ts: TokenStream, dur: Duration) -> Duration:
    if ts.accept_ident("p"):
        return replace(dur, progress=True)
    return dur


def _parse_type(ts: TokenStream, enums: dict[str, ex.EnumType]) -> ex.Type:
    tok = ts.advance()
    if tok.is_ident("bool"):
        return ex.BOOL
    if tok.is_ident("int"):
        if not ts.accept_punct("["):
            raise TableParseError(f"line {tok.line}: expected int range like int[0,5]")
        lo = _parse_int(ts, "range lower bound")
        if not ts.accept_punct(","):
            raise TableParseError(f"line {tok.line}: expected ',' in int range")
        hi = _parse_int(ts, "range upper bound")
        if not ts.accept_punct("]"):
            raise TableParseError(f"line {tok.line}: expected ']' in int range")
        if lo > hi:
            raise TableParseError(f"line {tok.line}: empty int range [{lo},{hi}]")
        return ex.IntType(lo, hi)
    if tok.kind == "ident" and tok.text in enums:
        return enums[tok.text]
    raise TableParseError(f"line {tok.line}: unknown type {tok.text!r}")


class _BodyParser:
    def __init__(self, ts: TokenStream, table_columns: dict[tuple[str, str], ColumnDecl],
                 traces: tuple[str, ...], errors: list[str]):
        self.ts = ts
        self.columns = table_columns
        self.traces = traces
        self.errors = errors
        self.row_counter = 0
        self.group_counter = 1  # g0 is reserved for the root

    def parse_item(self) -> Row | Group:
        tok = self.ts.advance()
        if tok.is_ident("row"):
            return self._parse_row(tok.line)
        if tok.is_ident("group"):
            return self._parse_group(tok.line)
        raise TableParseError(f"line {tok.line}: expected 'row' or 'group'")

    def _parse_group(self, line: int) -> Group:
        uid = f"g{self.group_counter}"
        self.group_counter += 1
        duration = _parse_duration(self.ts)
        if not self.ts.accept_punct("{"):
            raise TableParseError(f"line {line}: expected '{{' after group")
        children: list[Row | Group] = []
        while not self.ts.current.is_punct("}"):
            if self.ts.at_end():
                raise TableParseError(f"line {line}: unterminated group")
            children.append(self.parse_item())
        self.ts.advance()
        return Group(uid, duration, tuple(children))

    def _parse_row(self, line: int) -> Row:
        uid = f"r{self.row_counter}"
        index = self.row_counter
        self.row_counter += 1
        duration = _parse_duration(self.ts)
        if not self.ts.accept_punct("{"):
            raise TableParseError(f"line {line}: expected '{{' after row")
        cells: list[tuple[tuple[str, str], Cell]] = []
        seen: set[tuple[str, str]] = set()
        while not self.ts.current.is_punct("}"):
            if self.ts.at_end():
                raise TableParseError(f"line {line}: unterminated row")
            key = self._parse_cell_target()
            eq = self.ts.advance()
            if not eq.is_punct("="):
                raise TableParseError(f"line {eq.line}: expected '=' after cell target")
            text_tok = self.ts.advance()
            if text_tok.kind != "string":
                raise TableParseError(f"line {text_tok.line}: cell text must be quoted")
            if not self.ts.accept_punct(";"):
                raise TableParseError(f"line {text_tok.line}: expected ';' after cell")
            if key in seen:
                self.errors.append(
                    f"line {text_tok.line}: duplicate cell for {key[0]}::{key[1]}"
                )
                continue
            seen.add(key)
            try:
                raw = ex.parse_cell(text_tok.text)
            except ex.ExprError as err:
                self.errors.append(f"line {text_tok.line}: bad cell {text_tok.text!r}: {err}")
                continue
            cells.append((key, Cell(text_tok.text, raw)))
        self.ts.advance()
        return Row(uid, index, duration, tuple(cells))

    def _parse_cell_target(self) -> tuple[str, str]:
        tok = self.ts.advance()
        if tok.is_ident("pause"):
            if not self.ts.accept_punct("("):
                raise TableParseError(f"line {tok.line}: expected 'pause(<trace>)'")
            trace = self.ts.advance()
            if trace.kind != "ident" or not self.ts.accept_punct(")"):
                raise TableParseError(f"line {tok.line}: expected 'pause(<trace>)'")
            key = (trace.text, PAUSE_VAR)
            if key not in self.columns:
                raise TableParseError(
                    f"line {tok.line}: no pause column declared for trace {trace.text!r}"
                )
            return key
        if tok.kind != "ident":
            raise TableParseError(f"line {tok.line}: expected a column reference")
        if not self.ts.accept_punct("::"):
            raise TableParseError(f"line {tok.line}: expected '::' in column reference")
        var = self.ts.advance()
        if var.kind != "ident":
            raise TableParseError(f"line {tok.line}: expected variable after '::'")
        key = (tok.text, var.text)
        if key not in self.columns:
            raise TableParseError(
                f"line {tok.line}: {tok.text}::{var.text} is not a declared column"
            )
        return key


def parse_table(text: str) -> RelationalTable:
    """Parse the table text format.  Raises TableParseError on bad syntax."""
    try:
        ts = TokenStream(tokenize(text))
    except LexError as err:
        raise TableParseError(str(err)) from None

    errors: list[str] = []
    if not ts.accept_ident("table"):
        raise TableParseError(f"line {ts.current.line}: file must start with 'table <name>'")
    name_tok = ts.advance()
    if name_tok.kind != "ident":
        raise TableParseError(f"line {name_tok.line}: expected table name")

    if not ts.accept_ident("traces"):
        raise TableParseError(f"line {ts.current.line}: expected 'traces' declaration")
    traces: list[str] = []
    while ts.current.kind == "ident" and ts.current.text not in (
        "gvar", "history", "enum", "column", "group", "row",
    ):
        traces.append(ts.advance().text)
    if not traces:
        raise TableParseError(f"line {ts.current.line}: at least one trace is required")
    if len(set(traces)) != len(traces):
        raise TableParseError("duplicate trace names")

    globals_: dict[str, ex.IntType] = {}
    enums: dict[str, ex.EnumType] = {}
    declared_history: int | None = None
    columns: dict[tuple[str, str], ColumnDecl] = {}
    column_order: list[ColumnDecl] = []

    def add_column(decl: ColumnDecl, line: int) -> None:
        if decl.key in columns:
            raise TableParseError(
                f"line {line}: duplicate column {decl.trace}::{decl.var}"
            )
        columns[decl.key] = decl
        column_order.append(decl)

    while True:
        tok = ts.current
        if tok.is_ident("gvar"):
            ts.advance()
            gname = ts.advance()
            if gname.kind != "ident" or not ts.accept_punct(":"):
                raise TableParseError(f"line {gname.line}: expected 'gvar <name> : int[lo,hi]'")
            typ = _parse_type(ts, enums)
            if not isinstance(typ, ex.IntType) or typ.lo is None:
                raise TableParseError(
                    f"line {gname.line}: globals need a bounded int domain"
                )
            if gname.text in globals_:
                raise TableParseError(f"line {gname.line}: duplicate global {gname.text!r}")
            globals_[gname.text] = typ
        elif tok.is_ident("history"):
            ts.advance()
            declared_history = _parse_int(ts, "history bound")
            if declared_history < 0:
                raise TableParseError(f"line {tok.line}: history bound must be >= 0")
        elif tok.is_ident("enum"):
            ts.advance()
            ename = ts.advance()
            if ename.kind != "ident" or not ts.accept_punct("{"):
                raise TableParseError(f"line {ename.line}: expected 'enum <Name> {{ ... }}'")
            consts: list[str] = []
            while not ts.current.is_punct("}"):
                c = ts.advance()
                if c.kind != "ident":
                    raise TableParseError(f"line {c.line}: expected enum constant")
                consts.append(c.text)
                if not ts.accept_punct(","):
                    break
            if not ts.accept_punct("}"):
                raise TableParseError(f"line {ename.line}: unterminated enum")
            if not consts or len(set(consts)) != len(consts):
                raise TableParseError(f"line {ename.line}: bad constant list for {ename.text}")
            if ename.text in enums:
                raise TableParseError(f"line {ename.line}: duplicate enum {ename.text!r}")
            enums[ename.text] = ex.EnumType(ename.text, tuple(consts))
        elif tok.is_ident("column"):
            ts.advance()
            kind_tok = ts.advance()
            if kind_tok.is_ident("pause"):
                trace_tok = ts.advance()
                if trace_tok.kind != "ident":
                    raise TableParseError(f"line {kind_tok.line}: expected trace after 'pause'")
                if trace_tok.text not in traces:
                    raise TableParseError(
                        f"line {trace_tok.line}: unknown trace {trace_tok.text!r}"
                    )
                add_column(
                    ColumnDecl(trace_tok.text, PAUSE_VAR, "pause", ex.BOOL),
                    kind_tok.line,
                )
                continue
            if not (kind_tok.is_ident("in") or kind_tok.is_ident("out")):
                raise TableParseError(
                    f"line {kind_tok.line}: column kind must be pause, in or out"
                )
            trace_tok = ts.advance()
            if trace_tok.kind != "ident" or not ts.accept_punct("::"):
                raise TableParseError(f"line {kind_tok.line}: expected '<trace>::<var>'")
            var_tok = ts.advance()
            if var_tok.kind != "ident" or not ts.accept_punct(":"):
                raise TableParseError(f"line {kind_tok.line}: expected '<trace>::<var> : <type>'")
            if trace_tok.text not in traces:
                raise TableParseError(f"line {trace_tok.line}: unknown trace {trace_tok.text!r}")
            typ = _parse_type(ts, enums)
            add_column(
                ColumnDecl(trace_tok.text, var_tok.text, kind_tok.text, typ),
                kind_tok.line,
            )
        else:
            break

    body_parser = _BodyParser(ts, columns, tuple(traces), errors)
    items: list[Row | Group] = []
    while not ts.at_end():
        items.append(body_parser.parse_item())
    if not items:
        raise TableParseError("table has no rows")
    if len(items) == 1 and isinstance(items[0], Group):
        body = items[0]
        body = Group("g0", body.duration, body.children)
    else:
        body = Group("g0", Duration(1, 1), tuple(items))
    if errors:
        raise TableParseError(errors)
    return RelationalTable(
        name=name_tok.text,
        traces=tuple(traces),
        globals=globals_,
        enums=enums,
        declared_history=declared_history,
        columns=column_order,
        body=body,
    )


# ---------------------------------------------------------------------------
# Validation


def validate(table: RelationalTable) -> list[str]:
    """Return diagnostics; empty means the table is well-formed.

    On success the desugared cell constraints and the history bound are
    cached on the table for the compiler and checkers.
    """
    diags: list[str] = []
    syms = table.symbols()

    for gname in table.globals:
        if any(key[1] == gname for key in syms.variables):
            diags.append(f"global {gname!r} collides with a column variable")
        if syms.enum_types_of(gname):
            diags.append(f"global {gname!r} collides with an enum constant")
    all_consts: list[str] = []
    for etype in table.enums.values():
        all_consts.extend(etype.constants)
    for const in all_consts:
        if all_consts.count(const) > 1:
            diags.append(f"enum constant {const!r} declared more than once")
            break

    for group in _walk_groups(table.body):
        d = group.duration
        if not group.children:
            diags.append(f"group {group.uid} is empty")
        if not d.omega and d.hi is not None and d.lo > d.hi:
            diags.append(f"group {group.uid}: duration lower bound exceeds upper")
        if d.omega and d.progress:
            diags.append(f"group {group.uid}: omega duration excludes the progress flag")
        for idx, child in enumerate(group.children):
            if contains_omega(child) and idx != len(group.children) - 1:
                diags.append(
                    f"group {group.uid}: nothing may follow an omega row or group"
                )
        if d.omega or d.hi is None:
            for child in group.children:
                if contains_omega(child):
                    diags.append(
                        f"group {group.uid}: repeating group cannot contain omega"
                    )
                    break

    constraints: dict[tuple[int, tuple[str, str]], ex.Expr] = {}
    deepest = 0
    for row in table.rows:
        d = row.duration
        if d.lo < 0:
            diags.append(f"row {row.index}: negative duration bound")
        if not d.omega and d.hi is not None and d.lo > d.hi:
            diags.append(f"row {row.index}: duration lower bound exceeds upper")
        if d.omega and d.progress:
            diags.append(f"row {row.index}: omega duration excludes the progress flag")
        for key, cell in row.cells:
            col = table.column(key)
            assert col is not None
            ctx = ex.ColumnContext(col.trace, col.var, col.kind, syms)
            try:
                constraint = ex.desugar(cell.raw, ctx)
                ctype = ex.typecheck(constraint, syms)
            except ex.ExprError as err:
                diags.append(
                    f"row {row.index}, {col.trace}::{col.var}: {err}"
                )
                continue
            if not isinstance(ctype, ex.BoolType):
                diags.append(
                    f"row {row.index}, {col.trace}::{col.var}: "
                    f"cell is {ctype}, not a constraint"
                )
                continue
            deepest = max(deepest, ex.max_backref_depth(constraint))
            constraints[(row.index, key)] = constraint

    pause_traces = set(table.pause_traces())
    flagged: set[str] = set()
    for (ridx, _), constraint in constraints.items():
        for trace, var in ex.referenced_vars(constraint):
            if var == PAUSE_VAR and trace not in pause_traces and trace not in flagged:
                flagged.add(trace)
                diags.append(
                    f"row {ridx}: references the pause flag of trace {trace!r}, "
                    "which has no pause column"
                )

    if table.declared_history is not None and deepest > table.declared_history:
        diags.append(
            f"history bound {table.declared_history} is shallower than the "
            f"deepest back-reference ({deepest})"
        )

    if not diags:
        table.constraints = constraints
        table.history_bound = (
            table.declared_history if table.declared_history is not None else deepest
        )
    return diags


def referenced_variables(table: RelationalTable) -> dict[str, set[str]]:
    """Variables each trace must provide: declared columns plus references."""
    needed: dict[str, set[str]] = {t: set() for t in table.traces}
    for col in table.columns:
        if col.kind != "pause":
            needed[col.trace].add(col.var)
    for constraint in table.constraints.values():
        for trace, var in ex.referenced_vars(constraint):
            if var != PAUSE_VAR and trace in needed:
                needed[trace].add(var)
    return needed


# ---------------------------------------------------------------------------
# Concrete tables


@dataclass(frozen=True)
class ConcreteRow:
    values: tuple[tuple[tuple[str, str], ex.Value], ...]
    count: int

    def valuation(self) -> dict[tuple[str, str], ex.Value]:
        return dict(self.values)


@dataclass
class ConcreteTable:
    name: str
    traces: tuple[str, ...]
    columns: list[ColumnDecl]
    rows: list[ConcreteRow]

    def cycles(self) -> list[dict[tuple[str, str], ex.Value]]:
        out: list[dict[tuple[str, str], ex.Value]] = []
        for row in self.rows:
            for _ in range(row.count):
                out.append(row.valuation())
        return out


def _literal_value(node: ex.Expr) -> ex.Value | None:
    if isinstance(node, ex.IntLit):
        return node.value
    if isinstance(node, ex.BoolLit):
        return node.value
    if isinstance(node, ex.EnumLit):
        return ex.Sym(node.constant)
    if isinstance(node, ex.Unary) and node.op == "-" and isinstance(node.operand, ex.IntLit):
        return -node.operand.value
    return None


def to_concrete(table: RelationalTable) -> ConcreteTable:
    """Reinterpret a fully literal table as a concrete one.

    Every column needs a literal cell in every row and every duration must
    be an exact count.
    """
    diags = validate(table)
    if diags:
        raise TableError(diags)
    for group in _walk_groups(table.body):
        if group.duration != Duration(1, 1):
            raise InstantiateError(
                f"concrete tables cannot use repeating groups ({group.uid})"
            )
    rows: list[ConcreteRow] = []
    for row in table.rows:
        d = row.duration
        if d.omega or d.hi is None or d.lo != d.hi or d.progress:
            raise InstantiateError(
                f"row {row.index}: concrete tables need exact durations"
            )
        values: list[tuple[tuple[str, str], ex.Value]] = []
        for col in table.columns:
            constraint = table.constraints.get((row.index, col.key))
            if constraint is None:
                if col.kind == "pause":
                    values.append((col.key, False))
                    continue
                raise InstantiateError(
                    f"row {row.index}: missing value for {col.trace}::{col.var}"
                )
            value = None
            if (
                isinstance(constraint, ex.BinOp)
                and constraint.op == "="
                and constraint.left == ex.VarRef(col.trace, col.var, 0)
            ):
                value = _literal_value(constraint.right)
            if value is None:
                raise InstantiateError(
                    f"row {row.index}: cell for {col.trace}::{col.var} is not a literal"
                )
            if not ex.value_in_domain(value, col.typ):
                raise InstantiateError(
                    f"row {row.index}: {value} outside the domain of "
                    f"{col.trace}::{col.var}"
                )
            values.append((col.key, value))
        rows.append(ConcreteRow(tuple(values), d.lo))
    return ConcreteTable(table.name, table.traces, list(table.columns), rows)


# ---------------------------------------------------------------------------
# Instantiation


def _node_count(node: Row | Group, counts: Mapping[str, int]) -> int:
    d = node.duration
    if d.omega:
        raise InstantiateError(f"{node.uid}: omega durations are not instantiable")
    count = counts.get(node.uid, d.lo)
    if count < d.lo or (d.hi is not None and count > d.hi):
        raise InstantiateError(
            f"{node.uid}: count {count} outside duration {d}"
        )
    return count


def _unwind(node: Row | Group, counts: Mapping[str, int]) -> list[Row]:
    count = _node_count(node, counts)
    if isinstance(node, Row):
        return [node] * count
    one_pass: list[Row] = []
    for child in node.children:
        one_pass.extend(_unwind(child, counts))
    return one_pass * count


def instantiate(
    table: RelationalTable,
    binding: Mapping[str, ex.Value],
    counts: Mapping[str, int] | None = None,
) -> tuple[ConcreteTable, list[int]]:
    """Produce one concrete member of the table's family.

    ``counts`` picks a repetition count per row/group uid (defaults to each
    lower bound).  Cell values are chosen deterministically: the smallest
    domain value satisfying the cell, resolving columns left to right with
    inputs before outputs.  Cells that constrain nothing take the smallest
    domain value.  Returns the concrete table and the row index per cycle.
    """
    table.require_valid()
    for gname, typ in table.globals.items():
        if gname not in binding:
            raise InstantiateError(f"binding misses global {gname!r}")
        if not ex.value_in_domain(binding[gname], typ):
            raise InstantiateError(f"binding for {gname!r} outside its domain")
    unwound = _unwind(table.body, counts or {})
    order = sorted(
        table.columns,
        key=lambda c: ({"pause": 0, "in": 1, "out": 2}[c.kind],),
    )
    history: list[dict[tuple[str, str], ex.Value]] = []
    concrete_rows: list[ConcreteRow] = []
    for cycle_idx, row in enumerate(unwound):
        current: dict[tuple[str, str], ex.Value] = {}
        history.append(current)
        for col in order:
            constraint = table.constraints.get((row.index, col.key))
            if constraint is None:
                if col.kind == "pause":
                    constraint = ex.BinOp(
                        "=", ex.VarRef(col.trace, col.var, 0), ex.BoolLit(False)
                    )
                else:
                    constraint = ex.BoolLit(True)
            chosen = None
            for candidate in ex.domain_values(col.typ):
                current[col.key] = candidate
                try:
                    ok = ex.evaluate(constraint, history, binding)
                except ex.EvalError:
                    del current[col.key]
                    raise InstantiateError(
                        f"cycle {cycle_idx}, {col.trace}::{col.var}: cell depends "
                        "on a column that is resolved later"
                    ) from None
                if ok:
                    chosen = candidate
                    break
            if chosen is None:
                del current[col.key]
                raise InstantiateError(
                    f"cycle {cycle_idx}, {col.trace}::{col.var}: no domain value "
                    "satisfies the cell"
                )
            current[col.key] = chosen
        ordered = tuple((c.key, current[c.key]) for c in table.columns)
        concrete_rows.append(ConcreteRow(ordered, 1))
    concrete = ConcreteTable(
        f"{table.name}_instance", table.traces, list(table.columns), concrete_rows
    )
    return concrete, [row.index for row in unwound]


# ---------------------------------------------------------------------------
# Instance check


@dataclass
class InstanceResult:
    ok: bool
    binding: dict[str, ex.Value] | None = None
    rows: list[int] | None = None
    reason: str | None = None


def _bindings(table: RelationalTable) -> Iterator[dict[str, ex.Value]]:
    names = sorted(table.globals)
    domains = [ex.domain_values(table.globals[n]) for n in names]
    for combo in itertools.product(*domains):
        yield dict(zip(names, combo))


def is_instance(concrete: ConcreteTable, table: RelationalTable) -> InstanceResult:
    """Check whether the concrete table belongs to the table's family.

    Searches global bindings in ascending order and matches the concrete
    cycles against the nested row structure, respecting every duration
    bound and evaluating cells with history drawn from the concrete cycles
    themselves.
    """
    table.require_valid()
    mine = {(c.key, c.kind) for c in table.columns}
    theirs = {(c.key, c.kind) for c in concrete.columns}
    if mine != theirs:
        missing = sorted(k for k, _ in mine - theirs)
        extra = sorted(k for k, _ in theirs - mine)
        raise InstanceError(
            f"column sets differ (missing {missing}, unexpected {extra})"
        )
    for col in table.columns:
        other = next(c for c in concrete.columns if c.key == col.key)
        if not ex.same_type(col.typ, other.typ):
            raise InstanceError(
                f"column {col.trace}::{col.var} has incompatible types"
            )

    cycles = concrete.cycles()
    total = len(cycles)
    last_reason: str | None = "no unwinding matches"

    for binding in _bindings(table):
        row_ok_cache: dict[tuple[int, int], bool] = {}

        def row_ok(row: Row, k: int) -> bool:
            key = (row.index, k)
            if key not in row_ok_cache:
                result = True
                for col_key, _ in row.cells:
                    constraint = table.constraints[(row.index, col_key)]
                    if not ex.evaluate(constraint, cycles[: k + 1], binding):
                        nonlocal last_reason
                        last_reason = (
                            f"cycle {k}: cell {col_key[0]}::{col_key[1]} of row "
                            f"{row.index} is not satisfied"
                        )
                        result = False
                        break
                row_ok_cache[key] = result
            return row_ok_cache[key]

        def gen_row(row: Row, i: int) -> Iterator[tuple[int, tuple[int, ...]]]:
            d = row.duration
            if d.omega:
                return
            if d.lo == 0:
                yield (i, ())
            reps = 0
            k = i
            seq: list[int] = []
            while (d.hi is None or reps < d.hi) and k < total and row_ok(row, k):
                seq.append(row.index)
                reps += 1
                k += 1
                if reps >= max(d.lo, 1):
                    yield (k, tuple(seq))

        def gen_seq(
            children: tuple[Row | Group, ...], i: int
        ) -> Iterator[tuple[int, tuple[int, ...]]]:
            if not children:
                yield (i, ())
                return
            head, rest = children[0], children[1:]
            for j, s1 in gen_node(head, i):
                for k, s2 in gen_seq(rest, j):
                    yield (k, s1 + s2)

        def gen_group(group: Group, i: int) -> Iterator[tuple[int, tuple[int, ...]]]:
            d = group.duration
            if d.omega:
                return
            if d.lo == 0:
                yield (i, ())

            def iter_reps(
                start: int, rep: int, seq: tuple[int, ...]
            ) -> Iterator[tuple[int, tuple[int, ...]]]:
                if d.hi is not None and rep >= d.hi:
                    return
                for j, s in gen_seq(group.children, start):
                    if j == start:
                        # A pass that consumes nothing can repeat freely, so
                        # the lower bound is met without progress.
                        yield (j, seq)
                        continue
                    if rep + 1 >= d.lo:
                        yield (j, seq + s)
                    yield from iter_reps(j, rep + 1, seq + s)

            yield from iter_reps(i, 0, ())

        def gen_node(
            node: Row | Group, i: int
        ) -> Iterator[tuple[int, tuple[int, ...]]]:
            if isinstance(node, Row):
                yield from gen_row(node, i)
            else:
                yield from gen_group(node, i)

        for end, rows in gen_node(table.body, 0):
            if end == total:
                return InstanceResult(True, dict(binding), list(rows))

    return InstanceResult(False, reason=last_reason)


# ---------------------------------------------------------------------------
# Canonical text form


def to_text(table: RelationalTable) -> str:
    lines: list[str] = [f"table {table.name}"]
    lines.append("traces " + " ".join(table.traces))
    for name, typ in table.globals.items():
        lines.append(f"gvar {name} : {typ}")
    if table.declared_history is not None:
        lines.append(f"history {table.declared_history}")
    for ename, etype in table.enums.items():
        lines.append(f"enum {ename} {{ " + ", ".join(etype.constants) + " }")
    for col in table.columns:
        if col.kind == "pause":
            lines.append(f"column pause {col.trace}")
        else:
            lines.append(f"column {col.kind} {col.trace}::{col.var} : {col.typ}")

    def emit(node: Row | Group, indent: int) -> None:
        pad = "  " * indent
        if isinstance(node, Row):
            lines.append(f"{pad}row {node.duration} {{")
            for (trace, var), cell in node.cells:
                if var == PAUSE_VAR:
                    lines.append(f'{pad}  pause({trace}) = "{cell.text}";')
                else:
                    lines.append(f'{pad}  {trace}::{var} = "{cell.text}";')
            lines.append(f"{pad}}}")
        else:
            lines.append(f"{pad}group {node.duration} {{")
            for child in node.children:
                emit(child, indent + 1)
            lines.append(f"{pad}}}")

    emit(table.body, 0)
    return "\n".join(lines) + "\n"
