"""Cell constraint language: parsing, shorthand expansion, typing, evaluation.

Table cells are written in a compact constraint notation.  A cell is a
comma-separated list of items, each of which is one of

* ``-``                    unconstrained (always satisfied)
* ``[lo, hi]``             interval membership for the column variable
* ``<e`` ``<=e`` ``>e`` ``>=e`` ``=e`` ``!=e``
                           comparison of the column variable against ``e``
* a bare expression        shorthand for equality with the column variable,
                           unless the expression is already a constraint
                           (its root is a comparison or logical operator)

Expressions may reference the cell's own column, other columns of the same
trace, columns of a named trace (``old::X``), or the opposite trace in a
two-trace table (``::X``, or ``::`` for the same variable).  A ``[-n]``
suffix reads the value n steps in the past.  Bare identifiers may also
resolve to table-level global variables or enum constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .lex import LexError, Token, TokenStream, tokenize


class ExprError(Exception):
    """Syntax, resolution or type error in a cell or expression."""


class EvalError(Exception):
    """Raised when evaluation hits a state the type checker cannot rule out."""


class MissingHistory(Exception):
    """A back-reference reached before the start of the recorded history."""


class DivisionByZero(Exception):
    """Integer division or remainder with zero divisor."""


# ---------------------------------------------------------------------------
# Values and types


@dataclass(frozen=True, order=True)
class Sym:
    """Runtime value of an enum constant."""

    name: str

    def __str__(self) -> str:
        return self.name


Value = int | bool | Sym


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class IntType:
    lo: int | None = None
    hi: int | None = None

    def __str__(self) -> str:
        if self.lo is None:
            return "int"
        return f"int[{self.lo},{self.hi}]"


@dataclass(frozen=True)
class EnumType:
    name: str
    constants: tuple[str, ...]

    def __str__(self) -> str:
        return self.name


Type = BoolType | IntType | EnumType

BOOL = BoolType()
INT = IntType()


def same_type(a: Type, b: Type) -> bool:
    """Type compatibility: ints regardless of range, enums by constant set."""
    if isinstance(a, BoolType) and isinstance(b, BoolType):
        return True
    if isinstance(a, IntType) and isinstance(b, IntType):
        return True
    if isinstance(a, EnumType) and isinstance(b, EnumType):
        return frozenset(a.constants) == frozenset(b.constants)
    return False


def value_in_domain(value: Value, typ: Type) -> bool:
    if isinstance(typ, BoolType):
        return isinstance(value, bool)
    if isinstance(typ, IntType):
        if isinstance(value, bool) or not isinstance(value, int):
            return False
        lo_ok = typ.lo is None or value >= typ.lo
        hi_ok = typ.hi is None or value <= typ.hi
        return lo_ok and hi_ok
    return isinstance(value, Sym) and value.name in typ.constants


def domain_values(typ: Type) -> list[Value]:
    """Enumerate a finite domain in canonical order."""
    if isinstance(typ, BoolType):
        return [False, True]
    if isinstance(typ, IntType):
        if typ.lo is None or typ.hi is None:
            raise EvalError("cannot enumerate an unbounded integer domain")
        return list(range(typ.lo, typ.hi + 1))
    return [Sym(c) for c in typ.constants]


# ---------------------------------------------------------------------------
# Syntax tree


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class EnumLit:
    constant: str
    etype: str | None = None


@dataclass(frozen=True)
class VarRef:
    """Resolved reference to a trace variable, ``offset`` steps in the past."""

    trace: str | None
    var: str
    offset: int = 0


@dataclass(frozen=True)
class GlobalRef:
    name: str


@dataclass(frozen=True)
class RawRef:
    """Unresolved reference as written: trace and variable may be implicit."""

    trace: str | None
    var: str | None
    offset: int
    other_trace: bool


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "!"
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / % & | = != < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class DontCare:
    pass


@dataclass(frozen=True)
class Interval:
    lo: "Expr"
    hi: "Expr"


@dataclass(frozen=True)
class Prefix:
    op: str  # = != < <= > >=
    operand: "Expr"


@dataclass(frozen=True)
class CellItems:
    """A raw cell: the comma-separated items before shorthand expansion."""

    items: tuple["Expr", ...]


Expr = (
    IntLit | BoolLit | EnumLit | VarRef | GlobalRef | RawRef
    | Unary | BinOp | DontCare | Interval | Prefix | CellItems
)

_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")
_LOGIC_OPS = ("&", "|")


# ---------------------------------------------------------------------------
# Symbol table and column context


@dataclass
class SymbolTable:
    """Names visible to table cells: trace variables, globals, enums."""

    traces: tuple[str, ...] = ()
    variables: dict[tuple[str, str], Type] = field(default_factory=dict)
    globals: dict[str, Type] = field(default_factory=dict)
    enums: dict[str, EnumType] = field(default_factory=dict)

    def enum_types_of(self, constant: str) -> list[EnumType]:
        return [e for e in self.enums.values() if constant in e.constants]

    def lookup_variable(self, trace: str, var: str) -> Type | None:
        typ = self.variables.get((trace, var))
        if typ is not None:
            return typ
        # A variable declared for one trace is referencable, with the same
        # type, under any other trace of the table.
        for other in self.traces:
            typ = self.variables.get((other, var))
            if typ is not None:
                return typ
        return None


@dataclass
class ColumnContext:
    """Identifies the column a cell belongs to, plus the table's symbols."""

    trace: str
    variable: str
    kind: str  # "in" | "out" | "pause"
    symbols: SymbolTable


# ---------------------------------------------------------------------------
# Parsing

_PREFIX_STARTERS = {"=", "!=", "<", "<=", ">", ">="}


def _parse_offset(ts: TokenStream) -> int:
    """Parse an optional ``[-n]`` suffix; returns 0 when absent."""
    if not (ts.current.is_punct("[") and ts.peek().is_punct("-")):
        return 0
    ts.advance()
    ts.advance()
    tok = ts.advance()
    if tok.kind != "int":
        raise ExprError(f"col {tok.col}: expected step count after '[-'")
    if not ts.accept_punct("]"):
        raise ExprError(f"col {ts.current.col}: expected ']' to close back-reference")
    depth = int(tok.text)
    if depth == 0:
        raise ExprError(f"col {tok.col}: back-reference offset must be positive")
    return -depth


def _parse_atom(ts: TokenStream) -> Expr:
    tok = ts.current
    if tok.kind == "int":
        ts.advance()
        return IntLit(int(tok.text))
    if tok.is_ident("TRUE"):
        ts.advance()
        return BoolLit(True)
    if tok.is_ident("FALSE"):
        ts.advance()
        return BoolLit(False)
    if tok.is_punct("("):
        ts.advance()
        inner = _parse_expr(ts)
        if not ts.accept_punct(")"):
            raise ExprError(f"col {ts.current.col}: expected ')'")
        return inner
    if tok.is_punct("::"):
        ts.advance()
        var = None
        if ts.current.kind == "ident":
            var = ts.advance().text
        return RawRef(None, var, _parse_offset(ts), other_trace=True)
    if tok.kind == "ident":
        ts.advance()
        if ts.current.is_punct("."):
            ts.advance()
            const = ts.advance()
            if const.kind != "ident":
                raise ExprError(f"col {const.col}: expected enum constant after '.'")
            return EnumLit(const.text, etype=tok.text)
        if ts.current.is_punct("::"):
            ts.advance()
            var = None
            if ts.current.kind == "ident":
                var = ts.advance().text
            return RawRef(tok.text, var, _parse_offset(ts), other_trace=False)
        return RawRef(None, tok.text, _parse_offset(ts), other_trace=False)
    raise ExprError(f"col {tok.col}: unexpected {tok.text!r}" if tok.text else "unexpected end of cell")


def _parse_unary(ts: TokenStream) -> Expr:
    if ts.accept_punct("-"):
        return Unary("-", _parse_unary(ts))
    if ts.accept_punct("!"):
        return Unary("!", _parse_unary(ts))
    return _parse_atom(ts)


def _parse_term(ts: TokenStream) -> Expr:
    node = _parse_unary(ts)
    while ts.current.kind == "punct" and ts.current.text in ("*", "/", "%"):
        op = ts.advance().text
        node = BinOp(op, node, _parse_unary(ts))
    return node


def _parse_sum(ts: TokenStream) -> Expr:
    node = _parse_term(ts)
    while ts.current.kind == "punct" and ts.current.text in ("+", "-"):
        op = ts.advance().text
        node = BinOp(op, node, _parse_term(ts))
    return node


def _parse_cmp(ts: TokenStream) -> Expr:
    node = _parse_sum(ts)
    if ts.current.kind == "punct" and ts.current.text in _CMP_OPS:
        op = ts.advance().text
        node = BinOp(op, node, _parse_sum(ts))
        if ts.current.kind == "punct" and ts.current.text in _CMP_OPS:
            raise ExprError(f"col {ts.current.col}: comparisons do not chain")
    return node


def _parse_and(ts: TokenStream) -> Expr:
    node = _parse_cmp(ts)
    while ts.accept_punct("&"):
        node = BinOp("&", node, _parse_cmp(ts))
    return node


def _parse_expr(ts: TokenStream) -> Expr:
    node = _parse_and(ts)
    while ts.accept_punct("|"):
        node = BinOp("|", node, _parse_and(ts))
    return node


def _parse_item(ts: TokenStream) -> Expr:
    tok = ts.current
    if tok.is_punct("-") and (ts.peek().is_punct(",") or ts.peek().kind == "eof"):
        ts.advance()
        return DontCare()
    if tok.is_punct("["):
        # An interval, unless it is a leading back-reference like "[-1]"
        # (which cannot start an item anyway: offsets follow a reference).
        ts.advance()
        lo = _parse_expr(ts)
        if not ts.accept_punct(","):
            raise ExprError(f"col {ts.current.col}: expected ',' inside interval")
        if ts.current.is_punct("-") and ts.peek().is_punct("]"):
            raise ExprError(
                f"col {ts.current.col}: open-ended '[m,-]' is a duration form; "
                "use '>=m' in a cell"
            )
        hi = _parse_expr(ts)
        if not ts.accept_punct("]"):
            raise ExprError(f"col {ts.current.col}: expected ']' to close interval")
        return Interval(lo, hi)
    if tok.kind == "punct" and tok.text in _PREFIX_STARTERS:
        ts.advance()
        return Prefix(tok.text, _parse_expr(ts))
    return _parse_expr(ts)


def parse_cell(text: str, ctx: ColumnContext | None = None) -> CellItems:
    """Parse a cell into its raw item list.  Shorthand stays unexpanded."""
    try:
        ts = TokenStream(tokenize(text))
    except LexError as exc:
        raise ExprError(str(exc)) from None
    stripped = text.strip()
    if not stripped:
        raise ExprError("empty cell (omit the assignment instead)")
    items = [_parse_item(ts)]
    while ts.accept_punct(","):
        items.append(_parse_item(ts))
    if not ts.at_end():
        tok = ts.current
        raise ExprError(f"col {tok.col}: trailing {tok.text!r} after cell")
    return CellItems(tuple(items))


def parse_expression(text: str) -> Expr:
    """Parse a plain expression (no cell shorthand).  Used by other grammars."""
    try:
        ts = TokenStream(tokenize(text))
    except LexError as exc:
        raise ExprError(str(exc)) from None
    node = _parse_expr(ts)
    if not ts.at_end():
        tok = ts.current
        raise ExprError(f"col {tok.col}: trailing {tok.text!r} after expression")
    return node


# ---------------------------------------------------------------------------
# Shorthand expansion


def _other_trace(ctx: ColumnContext) -> str:
    traces = ctx.symbols.traces
    if len(traces) != 2:
        raise ExprError(
            "'::' references need a two-trace table "
            f"(this table has {len(traces)})"
        )
    return traces[1] if ctx.trace == traces[0] else traces[0]


def _resolve(node: Expr, ctx: ColumnContext) -> Expr:
    syms = ctx.symbols
    if isinstance(node, RawRef):
        if node.other_trace:
            trace = _other_trace(ctx)
            var = node.var if node.var is not None else ctx.variable
            return VarRef(trace, var, node.offset)
        if node.trace is not None:
            if node.trace not in syms.traces:
                raise ExprError(f"unknown trace {node.trace!r}")
            var = node.var if node.var is not None else ctx.variable
            return VarRef(node.trace, var, node.offset)
        # Bare name: trace variable, global, or enum constant.
        name = node.var
        assert name is not None
        is_var = syms.lookup_variable(ctx.trace, name) is not None
        is_global = name in syms.globals
        enum_hits = syms.enum_types_of(name)
        matches = int(is_var) + int(is_global) + int(bool(enum_hits))
        if matches > 1:
            raise ExprError(f"{name!r} is ambiguous; qualify the reference")
        if is_var:
            return VarRef(ctx.trace, name, node.offset)
        if is_global:
            if node.offset != 0:
                raise ExprError(f"global {name!r} cannot be back-referenced")
            return GlobalRef(name)
        if enum_hits:
            if node.offset != 0:
                raise ExprError(f"enum constant {name!r} cannot be back-referenced")
            if len(enum_hits) > 1:
                names = ", ".join(sorted(e.name for e in enum_hits))
                raise ExprError(
                    f"enum constant {name!r} is declared by {names}; "
                    "qualify it as Type.Constant"
                )
            return EnumLit(name, enum_hits[0].name)
        raise ExprError(f"unknown name {name!r}")
    if isinstance(node, EnumLit):
        if node.etype is not None:
            etype = syms.enums.get(node.etype)
            if etype is None:
                raise ExprError(f"unknown enum type {node.etype!r}")
            if node.constant not in etype.constants:
                raise ExprError(
                    f"{node.etype}.{node.constant} is not a declared constant"
                )
        return node
    if isinstance(node, Unary):
        return Unary(node.op, _resolve(node.operand, ctx))
    if isinstance(node, BinOp):
        return BinOp(node.op, _resolve(node.left, ctx), _resolve(node.right, ctx))
    if isinstance(node, (IntLit, BoolLit, VarRef, GlobalRef)):
        return node
    raise ExprError(f"nested {type(node).__name__} is not allowed inside an item")


def _is_constraint_root(node: Expr) -> bool:
    if isinstance(node, BinOp) and node.op in _CMP_OPS + _LOGIC_OPS:
        return True
    return isinstance(node, Unary) and node.op == "!"


def _conjoin(parts: Iterable[Expr]) -> Expr:
    result: Expr | None = None
    for part in parts:
        result = part if result is None else BinOp("&", result, part)
    return result if result is not None else BoolLit(True)


def desugar(cell: Expr, ctx: ColumnContext) -> Expr:
    """Expand cell shorthand into a plain Boolean constraint.

    Idempotent: anything that is not a raw parsed cell is returned as-is.
    Pause cells always constrain the trace's stutter flag, so a bare
    expression there becomes ``stutt = e`` rather than a free constraint.
    """
    if not isinstance(cell, CellItems):
        return cell
    col = VarRef(ctx.trace, ctx.variable, 0)
    parts: list[Expr] = []
    for item in cell.items:
        if isinstance(item, DontCare):
            parts.append(BoolLit(True))
            continue
        if isinstance(item, Interval):
            lo = _resolve(item.lo, ctx)
            hi = _resolve(item.hi, ctx)
            parts.append(BinOp("&", BinOp(">=", col, lo), BinOp("<=", col, hi)))
            continue
        if isinstance(item, Prefix):
            parts.append(BinOp(item.op, col, _resolve(item.operand, ctx)))
            continue
        resolved = _resolve(item, ctx)
        if ctx.kind == "pause":
            parts.append(BinOp("=", col, resolved))
        elif _is_constraint_root(resolved):
            parts.append(resolved)
        else:
            parts.append(BinOp("=", col, resolved))
    return _conjoin(parts)


# ---------------------------------------------------------------------------
# Type checking


def infer_type(node: Expr, leaf_type: Callable[[Expr], Type]) -> Type:
    """Compute the type of a resolved expression.

    ``leaf_type`` supplies types for VarRef and GlobalRef leaves, letting the
    table and the reactive-system language share the operator rules.
    """
    if isinstance(node, IntLit):
        return INT
    if isinstance(node, BoolLit):
        return BOOL
    if isinstance(node, (VarRef, GlobalRef)):
        return leaf_type(node)
    if isinstance(node, EnumLit):
        return leaf_type(node)
    if isinstance(node, Unary):
        inner = infer_type(node.operand, leaf_type)
        if node.op == "-":
            if not isinstance(inner, IntType):
                raise ExprError(f"unary '-' needs an integer, got {inner}")
            return INT
        if not isinstance(inner, BoolType):
            raise ExprError(f"'!' needs a Boolean, got {inner}")
        return BOOL
    if isinstance(node, BinOp):
        left = infer_type(node.left, leaf_type)
        right = infer_type(node.right, leaf_type)
        if node.op in ("+", "-", "*", "/", "%"):
            if not isinstance(left, IntType) or not isinstance(right, IntType):
                raise ExprError(f"'{node.op}' needs integers, got {left} and {right}")
            return INT
        if node.op in ("<", "<=", ">", ">="):
            if not isinstance(left, IntType) or not isinstance(right, IntType):
                raise ExprError(f"'{node.op}' orders integers, got {left} and {right}")
            return BOOL
        if node.op in ("=", "!="):
            if not same_type(left, right):
                raise ExprError(f"cannot compare {left} with {right}")
            return BOOL
        if node.op in _LOGIC_OPS:
            if not isinstance(left, BoolType) or not isinstance(right, BoolType):
                raise ExprError(f"'{node.op}' needs Booleans, got {left} and {right}")
            return BOOL
    raise ExprError(f"cannot type {type(node).__name__} before desugaring")


def typecheck(node: Expr, symbols: SymbolTable) -> Type:
    """Type a desugared cell constraint against the table's symbols."""

    def leaf(ref: Expr) -> Type:
        if isinstance(ref, VarRef):
            assert ref.trace is not None
            typ = symbols.lookup_variable(ref.trace, ref.var)
            if typ is None:
                raise ExprError(f"unknown variable {ref.trace}::{ref.var}")
            return typ
        if isinstance(ref, GlobalRef):
            typ = symbols.globals.get(ref.name)
            if typ is None:
                raise ExprError(f"unknown global {ref.name!r}")
            return typ
        if isinstance(ref, EnumLit):
            if ref.etype is not None:
                etype = symbols.enums.get(ref.etype)
                if etype is None or ref.constant not in etype.constants:
                    raise ExprError(f"unknown enum constant {ref.etype}.{ref.constant}")
                return etype
            hits = symbols.enum_types_of(ref.constant)
            if not hits:
                raise ExprError(f"unknown enum constant {ref.constant!r}")
            if len(hits) > 1:
                raise ExprError(
                    f"enum constant {ref.constant!r} is ambiguous; "
                    "qualify it as Type.Constant"
                )
            return hits[0]
        raise ExprError(f"unresolved reference {ref!r}")

    return infer_type(node, leaf)


# ---------------------------------------------------------------------------
# Evaluation

RefReader = Callable[[VarRef], Value]
GlobalReader = Callable[[str], Value]


def _int_div(a: int, b: int) -> int:
    # Truncate toward zero, matching the SMV backend's semantics.
    if b == 0:
        raise DivisionByZero()
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _int_mod(a: int, b: int) -> int:
    if b == 0:
        raise DivisionByZero()
    return a - b * _int_div(a, b)


def eval_node(node: Expr, read_ref: RefReader, read_global: GlobalReader) -> Value:
    """Strict evaluation; MissingHistory and DivisionByZero propagate."""
    if isinstance(node, IntLit):
        return node.value
    if isinstance(node, BoolLit):
        return node.value
    if isinstance(node, EnumLit):
        return Sym(node.constant)
    if isinstance(node, VarRef):
        return read_ref(node)
    if isinstance(node, GlobalRef):
        return read_global(node.name)
    if isinstance(node, Unary):
        inner = eval_node(node.operand, read_ref, read_global)
        if node.op == "-":
            assert isinstance(inner, int)
            return -inner
        assert isinstance(inner, bool)
        return not inner
    if isinstance(node, BinOp):
        op = node.op
        if op in _LOGIC_OPS:
            left = eval_constraint(node.left, read_ref, read_global)
            if op == "&":
                return left and eval_constraint(node.right, read_ref, read_global)
            return left or eval_constraint(node.right, read_ref, read_global)
        left = eval_node(node.left, read_ref, read_global)
        right = eval_node(node.right, read_ref, read_global)
        if op == "+":
            return left + right  # type: ignore[operator]
        if op == "-":
            return left - right  # type: ignore[operator]
        if op == "*":
            return left * right  # type: ignore[operator]
        if op == "/":
            return _int_div(left, right)  # type: ignore[arg-type]
        if op == "%":
            return _int_mod(left, right)  # type: ignore[arg-type]
        if op == "=":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right  # type: ignore[operator]
        if op == "<=":
            return left <= right  # type: ignore[operator]
        if op == ">":
            return left > right  # type: ignore[operator]
        if op == ">=":
            return left >= right  # type: ignore[operator]
    raise EvalError(f"cannot evaluate {type(node).__name__}")


def eval_constraint(
    node: Expr,
    read_ref: RefReader,
    read_global: GlobalReader,
    diagnostics: list[str] | None = None,
) -> bool:
    """Evaluate a Boolean constraint.

    An atom whose evaluation under-runs the history window, or divides by
    zero, is false rather than an error; the logical structure above it is
    unaffected.  ``diagnostics`` collects a note for each such atom.
    """
    if isinstance(node, BinOp) and node.op in _LOGIC_OPS:
        left = eval_constraint(node.left, read_ref, read_global, diagnostics)
        if node.op == "&":
            return left and eval_constraint(node.right, read_ref, read_global, diagnostics)
        return left or eval_constraint(node.right, read_ref, read_global, diagnostics)
    if isinstance(node, Unary) and node.op == "!":
        return not eval_constraint(node.operand, read_ref, read_global, diagnostics)
    try:
        result = eval_node(node, read_ref, read_global)
    except MissingHistory:
        if diagnostics is not None:
            diagnostics.append("back-reference before start of history")
        return False
    except DivisionByZero:
        if diagnostics is not None:
            diagnostics.append("division by zero")
        return False
    if not isinstance(result, bool):
        raise EvalError(f"constraint evaluated to non-Boolean {result!r}")
    return result


Valuation = Mapping[tuple[str, str], Value]


def history_reader(history: Sequence[Valuation]) -> RefReader:
    """Reader over a per-step valuation list, newest last."""

    def read(ref: VarRef) -> Value:
        index = len(history) - 1 + ref.offset
        if index < 0:
            raise MissingHistory()
        step = history[index]
        key = (ref.trace or "", ref.var)
        if key not in step:
            raise EvalError(f"valuation has no value for {ref.trace}::{ref.var}")
        return step[key]

    return read


def evaluate(
    node: Expr,
    history: Sequence[Valuation],
    globals_: Mapping[str, Value],
    diagnostics: list[str] | None = None,
) -> bool:
    """Evaluate a desugared cell constraint over a history of valuations."""

    def read_global(name: str) -> Value:
        if name not in globals_:
            raise EvalError(f"unbound global {name!r}")
        return globals_[name]

    return eval_constraint(node, history_reader(history), read_global, diagnostics)


# ---------------------------------------------------------------------------
# Misc helpers shared with other modules


def walk(node: Expr) -> Iterable[Expr]:
    yield node
    if isinstance(node, Unary):
        yield from walk(node.operand)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, CellItems):
        for item in node.items:
            yield from walk(item)
    elif isinstance(node, Interval):
        yield from walk(node.lo)
        yield from walk(node.hi)
    elif isinstance(node, Prefix):
        yield from walk(node.operand)


def max_backref_depth(node: Expr) -> int:
    depth = 0
    for sub in walk(node):
        if isinstance(sub, (VarRef, RawRef)) and sub.offset < 0:
            depth = max(depth, -sub.offset)
    return depth


def referenced_vars(node: Expr) -> set[tuple[str, str]]:
    refs: set[tuple[str, str]] = set()
    for sub in walk(node):
        if isinstance(sub, VarRef) and sub.trace is not None:
            refs.add((sub.trace, sub.var))
    return refs


def format_expr(node: Expr) -> str:
    """Render a resolved expression back to cell syntax (for reports)."""
    if isinstance(node, IntLit):
        return str(node.value)
    if isinstance(node, BoolLit):
        return "TRUE" if node.value else "FALSE"
    if isinstance(node, EnumLit):
        return node.constant
    if isinstance(node, VarRef):
        base = f"{node.trace}::{node.var}" if node.trace else node.var
        return f"{base}[{node.offset}]" if node.offset else base
    if isinstance(node, GlobalRef):
        return node.name
    if isinstance(node, Unary):
        return f"{node.op}{format_expr(node.operand)}"
    if isinstance(node, BinOp):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, DontCare):
        return "-"
    return repr(node)
