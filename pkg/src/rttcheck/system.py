"""Deterministic reactive systems: a small synchronous step language.

A system declares typed inputs, outputs and state variables, then a
``step`` block run once per cycle:

    system counter
    input reset : bool
    output n : int[0,15] = 0
    step {
      if (reset) { n := 0; } else { n := n + 1; }
    }

Assignments run top to bottom and see earlier writes of the same step.
Outputs and state variables latch: a path that skips the assignment keeps
the previous value.  Each variable may be assigned at most once per path,
inputs never.  Initializers are optional; a missing one defaults to the
smallest domain value (FALSE, the range minimum, the first constant).

``augment`` adds a Boolean ``stutt`` input that freezes the whole system
for a step, and ``product`` composes several systems side by side under
trace names, which is the shape the conformance checkers and the model
checker backend consume.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping

from . import expr as ex
from .lex import LexError, TokenStream, tokenize


class SystemParseError(Exception):
    pass


class StepError(Exception):
    """A step computed a value outside a variable's domain, or divided by zero."""


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str  # "input" | "output" | "state"
    typ: ex.Type
    init: ex.Value | None = None

    def initial(self) -> ex.Value:
        if self.init is not None:
            return self.init
        return ex.domain_values(self.typ)[0]


@dataclass(frozen=True)
class Assign:
    var: str
    value: ex.Expr


@dataclass(frozen=True)
class Branch:
    cond: ex.Expr | None  # None on the else arm
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class IfChain:
    branches: tuple[Branch, ...]


Stmt = Assign | IfChain


@dataclass
class ReactiveSystem:
    name: str
    decls: tuple[VarDecl, ...]
    body: tuple[Stmt, ...]
    enums: dict[str, ex.EnumType]

    @property
    def inputs(self) -> tuple[VarDecl, ...]:
        return tuple(d for d in self.decls if d.kind == "input")

    @property
    def outputs(self) -> tuple[VarDecl, ...]:
        return tuple(d for d in self.decls if d.kind == "output")

    @property
    def memory(self) -> tuple[VarDecl, ...]:
        """Variables that persist across steps: outputs and state."""
        return tuple(d for d in self.decls if d.kind != "input")

    def decl(self, name: str) -> VarDecl:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)

    def initial_state(self) -> dict[str, ex.Value]:
        return {d.name: d.initial() for d in self.memory}

    def step(self, state: Mapping[str, ex.Value], inputs: Mapping[str, ex.Value]) -> dict[str, ex.Value]:
        env: dict[str, ex.Value] = dict(state)
        for d in self.inputs:
            if d.name not in inputs:
                raise StepError(f"{self.name}: missing input {d.name!r}")
            if not ex.value_in_domain(inputs[d.name], d.typ):
                raise StepError(
                    f"{self.name}: input {d.name}={inputs[d.name]!r} outside its domain"
                )
            env[d.name] = inputs[d.name]

        def read(ref: ex.VarRef) -> ex.Value:
            return env[ref.var]

        def no_globals(name: str) -> ex.Value:
            raise ex.EvalError(f"no global {name!r} in a system")

        def run(stmts: tuple[Stmt, ...]) -> None:
            for st in stmts:
                if isinstance(st, Assign):
                    try:
                        value = ex.eval_node(st.value, read, no_globals)
                    except ex.DivisionByZero:
                        raise StepError(
                            f"{self.name}: division by zero assigning {st.var!r}"
                        ) from None
                    typ = self.decl(st.var).typ
                    if not ex.value_in_domain(value, typ):
                        raise StepError(
                            f"{self.name}: {st.var} := {value!r} leaves {typ}"
                        )
                    env[st.var] = value
                else:
                    for branch in st.branches:
                        if branch.cond is None or ex.eval_node(
                            branch.cond, read, no_globals
                        ):
                            run(branch.body)
                            break

        run(self.body)
        return {d.name: env[d.name] for d in self.memory}

    def input_valuations(self) -> Iterator[dict[str, ex.Value]]:
        """All input combinations, smallest values first."""
        names = [d.name for d in self.inputs]
        domains = [ex.domain_values(d.typ) for d in self.inputs]
        for combo in itertools.product(*domains):
            yield dict(zip(names, combo))


# ---------------------------------------------------------------------------
# Parsing


def _parse_int(ts: TokenStream) -> int:
    neg = ts.accept_punct("-")
    tok = ts.advance()
    if tok.kind != "int":
        raise SystemParseError(f"line {tok.line}: expected an integer")
    return -int(tok.text) if neg else int(tok.text)


def _parse_type(ts: TokenStream, var: str, enums: dict[str, ex.EnumType]) -> ex.Type:
    tok = ts.advance()
    if tok.is_ident("bool"):
        return ex.BOOL
    if tok.is_ident("int"):
        if not ts.accept_punct("["):
            raise SystemParseError(f"line {tok.line}: expected int range like int[0,5]")
        lo = _parse_int(ts)
        if not ts.accept_punct(","):
            raise SystemParseError(f"line {tok.line}: expected ',' in int range")
        hi = _parse_int(ts)
        if not ts.accept_punct("]") or lo > hi:
            raise SystemParseError(f"line {tok.line}: bad int range")
        return ex.IntType(lo, hi)
    if tok.is_ident("enum"):
        if not ts.accept_punct("{"):
            raise SystemParseError(f"line {tok.line}: expected '{{' after enum")
        consts: list[str] = []
        while not ts.current.is_punct("}"):
            c = ts.advance()
            if c.kind != "ident":
                raise SystemParseError(f"line {c.line}: expected enum constant")
            consts.append(c.text)
            if not ts.accept_punct(","):
                break
        if not ts.accept_punct("}") or not consts or len(set(consts)) != len(consts):
            raise SystemParseError(f"line {tok.line}: bad enum for {var!r}")
        etype = ex.EnumType(f"enum_{var}", tuple(consts))
        enums[etype.name] = etype
        return etype
    raise SystemParseError(f"line {tok.line}: unknown type {tok.text!r}")


def _parse_literal(ts: TokenStream, typ: ex.Type) -> ex.Value:
    tok = ts.current
    if tok.is_ident("TRUE"):
        ts.advance()
        return True
    if tok.is_ident("FALSE"):
        ts.advance()
        return False
    if tok.kind == "int" or tok.is_punct("-"):
        return _parse_int(ts)
    if tok.kind == "ident" and isinstance(typ, ex.EnumType):
        ts.advance()
        return ex.Sym(tok.text)
    raise SystemParseError(f"line {tok.line}: expected a literal initializer")


class _Parser:
    def __init__(self, ts: TokenStream):
        self.ts = ts
        self.decls: list[VarDecl] = []
        self.enums: dict[str, ex.EnumType] = {}

    def decl_map(self) -> dict[str, VarDecl]:
        return {d.name: d for d in self.decls}

    def parse(self) -> ReactiveSystem:
        ts = self.ts
        if not ts.accept_ident("system"):
            raise SystemParseError(
                f"line {ts.current.line}: file must start with 'system <name>'"
            )
        name_tok = ts.advance()
        if name_tok.kind != "ident":
            raise SystemParseError(f"line {name_tok.line}: expected system name")
        while ts.current.kind == "ident" and ts.current.text in (
            "input", "output", "state",
        ):
            self._parse_decl()
        if not ts.accept_ident("step") or not ts.accept_punct("{"):
            raise SystemParseError(
                f"line {ts.current.line}: expected 'step {{ ... }}'"
            )
        body = self._parse_stmts()
        if not ts.at_end():
            raise SystemParseError(
                f"line {ts.current.line}: trailing input after step block"
            )
        system = ReactiveSystem(name_tok.text, tuple(self.decls), body, self.enums)
        _check(system)
        return system

    def _parse_decl(self) -> None:
        ts = self.ts
        kind = ts.advance().text
        name_tok = ts.advance()
        if name_tok.kind != "ident" or not ts.accept_punct(":"):
            raise SystemParseError(f"line {name_tok.line}: expected '<name> : <type>'")
        if any(d.name == name_tok.text for d in self.decls):
            raise SystemParseError(
                f"line {name_tok.line}: duplicate variable {name_tok.text!r}"
            )
        typ = _parse_type(ts, name_tok.text, self.enums)
        init: ex.Value | None = None
        if ts.accept_punct("="):
            if kind == "input":
                raise SystemParseError(
                    f"line {name_tok.line}: inputs cannot take initializers"
                )
            init = _parse_literal(ts, typ)
            if not ex.value_in_domain(init, typ):
                raise SystemParseError(
                    f"line {name_tok.line}: initializer for {name_tok.text!r} "
                    "is outside its domain"
                )
        self.decls.append(VarDecl(name_tok.text, kind, typ, init))

    def _parse_stmts(self) -> tuple[Stmt, ...]:
        ts = self.ts
        stmts: list[Stmt] = []
        while not ts.current.is_punct("}"):
            if ts.at_end():
                raise SystemParseError("unterminated block")
            stmts.append(self._parse_stmt())
        ts.advance()
        return tuple(stmts)

    def _parse_stmt(self) -> Stmt:
        ts = self.ts
        if ts.accept_ident("if"):
            return self._parse_if()
        var_tok = ts.advance()
        if var_tok.kind != "ident":
            raise SystemParseError(f"line {var_tok.line}: expected a statement")
        if not ts.accept_punct(":="):
            raise SystemParseError(f"line {var_tok.line}: expected ':=' in assignment")
        value = self._parse_expr_until((";",))
        if not ts.accept_punct(";"):
            raise SystemParseError(f"line {var_tok.line}: expected ';' after assignment")
        return Assign(var_tok.text, value)

    def _parse_if(self) -> IfChain:
        ts = self.ts
        branches: list[Branch] = []
        while True:
            if not ts.accept_punct("("):
                raise SystemParseError(f"line {ts.current.line}: expected '(' after if")
            cond = self._parse_expr_until((")",))
            if not ts.accept_punct(")") or not ts.accept_punct("{"):
                raise SystemParseError(
                    f"line {ts.current.line}: expected '(cond) {{ ... }}'"
                )
            branches.append(Branch(cond, self._parse_stmts()))
            if ts.accept_ident("elif"):
                continue
            if ts.accept_ident("else"):
                if not ts.accept_punct("{"):
                    raise SystemParseError(
                        f"line {ts.current.line}: expected '{{' after else"
                    )
                branches.append(Branch(None, self._parse_stmts()))
            break
        return IfChain(tuple(branches))

    def _parse_expr_until(self, stop: tuple[str, ...]) -> ex.Expr:
        # Collect the token span and reuse the shared expression parser.
        ts = self.ts
        depth = 0
        parts: list[str] = []
        line = ts.current.line
        while True:
            tok = ts.current
            if ts.at_end():
                raise SystemParseError(f"line {line}: unterminated expression")
            if depth == 0 and tok.kind == "punct" and tok.text in stop:
                break
            if tok.is_punct("("):
                depth += 1
            elif tok.is_punct(")"):
                if depth == 0:
                    break
                depth -= 1
            parts.append(tok.text)
            ts.advance()
        try:
            raw = ex.parse_expression(" ".join(parts))
        except ex.ExprError as err:
            raise SystemParseError(f"line {line}: {err}") from None
        return _resolve(raw, self.decl_map(), self.enums, line)


def _resolve(
    node: ex.Expr,
    decls: Mapping[str, VarDecl],
    enums: Mapping[str, ex.EnumType],
    line: int,
) -> ex.Expr:
    if isinstance(node, ex.RawRef):
        if node.other_trace or node.trace is not None:
            raise SystemParseError(
                f"line {line}: trace references do not exist inside a system"
            )
        if node.offset != 0:
            raise SystemParseError(
                f"line {line}: back-references do not exist inside a system"
            )
        name = node.var
        assert name is not None
        if name in decls:
            return ex.VarRef(None, name, 0)
        hits = [e for e in enums.values() if name in e.constants]
        if len(hits) == 1:
            return ex.EnumLit(name, hits[0].name)
        if len(hits) > 1:
            raise SystemParseError(f"line {line}: enum constant {name!r} is ambiguous")
        raise SystemParseError(f"line {line}: unknown name {name!r}")
    if isinstance(node, ex.Unary):
        return ex.Unary(node.op, _resolve(node.operand, decls, enums, line))
    if isinstance(node, ex.BinOp):
        return ex.BinOp(
            node.op,
            _resolve(node.left, decls, enums, line),
            _resolve(node.right, decls, enums, line),
        )
    if isinstance(node, (ex.IntLit, ex.BoolLit, ex.EnumLit)):
        return node
    raise SystemParseError(f"line {line}: unsupported expression form")


def parse_system(text: str) -> ReactiveSystem:
    try:
        ts = TokenStream(tokenize(text))
    except LexError as err:
        raise SystemParseError(str(err)) from None
    return _Parser(ts).parse()


# ---------------------------------------------------------------------------
# Static checks


def _check(system: ReactiveSystem) -> None:
    decls = {d.name: d for d in system.decls}

    def leaf(ref: ex.Expr) -> ex.Type:
        if isinstance(ref, ex.VarRef):
            return decls[ref.var].typ
        if isinstance(ref, ex.EnumLit):
            assert ref.etype is not None
            return system.enums[ref.etype]
        raise ex.ExprError(f"unexpected reference {ref!r}")

    def check_stmts(stmts: tuple[Stmt, ...], written: set[str]) -> set[str]:
        done = set(written)
        for st in stmts:
            if isinstance(st, Assign):
                decl = decls.get(st.var)
                if decl is None:
                    raise SystemParseError(f"assignment to unknown variable {st.var!r}")
                if decl.kind == "input":
                    raise SystemParseError(f"cannot assign to input {st.var!r}")
                if st.var in done:
                    raise SystemParseError(
                        f"{st.var!r} is assigned twice on one path"
                    )
                vtype = ex.infer_type(st.value, leaf)
                if not ex.same_type(vtype, decl.typ):
                    raise SystemParseError(
                        f"{st.var} : {decl.typ} cannot take a {vtype} value"
                    )
                done.add(st.var)
            else:
                branch_writes: list[set[str]] = []
                for branch in st.branches:
                    if branch.cond is not None:
                        ctype = ex.infer_type(branch.cond, leaf)
                        if not isinstance(ctype, ex.BoolType):
                            raise SystemParseError(
                                f"if condition has type {ctype}, not bool"
                            )
                    branch_writes.append(check_stmts(branch.body, done))
                for writes in branch_writes:
                    done |= writes
        return done - written

    check_stmts(system.body, set())


# ---------------------------------------------------------------------------
# Stutter augmentation and composition

STUTTER_INPUT = "stutt"


def augment(system: ReactiveSystem) -> ReactiveSystem:
    """Add a ``stutt`` input that freezes state and outputs for a step."""
    if any(d.name == STUTTER_INPUT for d in system.decls):
        raise SystemParseError(
            f"{system.name}: variable {STUTTER_INPUT!r} collides with the "
            "stutter input"
        )
    decls = (VarDecl(STUTTER_INPUT, "input", ex.BOOL),) + system.decls
    hold = ex.Unary("!", ex.VarRef(None, STUTTER_INPUT, 0))
    body: tuple[Stmt, ...] = (IfChain((Branch(hold, system.body),)),)
    return ReactiveSystem(system.name, decls, body, dict(system.enums))


@dataclass
class ProductSystem:
    """Several systems stepping in lockstep, one per trace name."""

    parts: dict[str, ReactiveSystem]

    @property
    def traces(self) -> tuple[str, ...]:
        return tuple(self.parts)

    def input_decls(self) -> list[tuple[str, VarDecl]]:
        return [(t, d) for t, s in self.parts.items() for d in s.inputs]

    def memory_decls(self) -> list[tuple[str, VarDecl]]:
        return [(t, d) for t, s in self.parts.items() for d in s.memory]

    def initial_state(self) -> dict[tuple[str, str], ex.Value]:
        return {
            (t, name): v
            for t, s in self.parts.items()
            for name, v in s.initial_state().items()
        }

    def step(
        self,
        state: Mapping[tuple[str, str], ex.Value],
        inputs: Mapping[tuple[str, str], ex.Value],
    ) -> dict[tuple[str, str], ex.Value]:
        out: dict[tuple[str, str], ex.Value] = {}
        for trace, system in self.parts.items():
            local_state = {
                d.name: state[(trace, d.name)] for d in system.memory
            }
            local_inputs = {
                d.name: inputs[(trace, d.name)] for d in system.inputs
            }
            for name, value in system.step(local_state, local_inputs).items():
                out[(trace, name)] = value
        return out

    def input_valuations(self) -> Iterator[dict[tuple[str, str], ex.Value]]:
        keyed = self.input_decls()
        domains = [ex.domain_values(d.typ) for _, d in keyed]
        for combo in itertools.product(*domains):
            yield {
                (trace, d.name): value
                for (trace, d), value in zip(keyed, combo)
            }


def product(parts: Mapping[str, ReactiveSystem]) -> ProductSystem:
    if not parts:
        raise SystemParseError("a product needs at least one trace")
    return ProductSystem(dict(parts))
