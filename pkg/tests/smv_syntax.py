"""A small syntax checker for the SMV dialect the package emits.

Covers exactly the constructs emit_smv produces: one module,
IVAR/VAR/FROZENVAR declarations over boolean, integer-range and
symbolic-enum types, DEFINE bodies, init/next ASSIGN pairs, TRANS, one
INVARSPEC and one LTLSPEC.  Identifier resolution is included so a
golden file with a dangling reference fails loudly.
"""

from __future__ import annotations

import re

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|\.\.|<=|>=|!=|<->|->|[(){}:;,=<>!&|+*/-]))"
)

_SECTIONS = {
    "IVAR", "VAR", "FROZENVAR", "DEFINE", "ASSIGN", "TRANS", "INVARSPEC",
    "LTLSPEC",
}
_LTL_PREFIX = {"F", "G", "X"}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    for raw in text.splitlines():
        line = raw.split("--", 1)[0]
        pos = 0
        while pos < len(line):
            m = _TOKEN.match(line, pos)
            if m is None:
                if line[pos:].strip():
                    raise SyntaxError(f"bad character {line[pos:].strip()[0]!r}")
                break
            pos = m.end()
            for kind in ("num", "id", "op"):
                if m.group(kind) is not None:
                    tokens.append((kind, m.group(kind)))
                    break
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], names: set[str]):
        self.tokens = tokens
        self.pos = 0
        self.names = names
        self.ltl = False

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise SyntaxError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.advance()
        if tok[1] != text:
            raise SyntaxError(f"expected {text!r}, got {tok[1]!r}")

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[1] == text

    # precedence climbing: | over & over ! over comparison over +- over */
    def expr(self):
        left = self.and_()
        while self.at("|"):
            self.advance()
            self.and_()

    def and_(self):
        self.unary()
        while self.at("&"):
            self.advance()
            self.unary()

    def unary(self):
        if self.at("!"):
            self.advance()
            self.unary()
            return
        if self.ltl:
            tok = self.peek()
            if tok is not None and tok[1] in _LTL_PREFIX:
                self.advance()
                self.unary()
                return
        self.comparison()
        if self.ltl and self.at("U"):
            self.advance()
            self.unary()

    def comparison(self):
        self.sum_()
        tok = self.peek()
        if tok is not None and tok[1] in ("=", "!=", "<", "<=", ">", ">="):
            self.advance()
            self.sum_()

    def sum_(self):
        self.term()
        while True:
            tok = self.peek()
            if tok is None or tok[1] not in ("+", "-"):
                return
            self.advance()
            self.term()

    def term(self):
        self.atom()
        while True:
            tok = self.peek()
            if tok is None or tok[1] not in ("*", "/", "mod"):
                return
            self.advance()
            self.atom()

    def atom(self):
        tok = self.advance()
        kind, text = tok
        if text == "(":
            self.expr()
            self.expect(")")
            return
        if text == "-":
            self.atom()
            return
        if text == "case":
            while not self.at("esac"):
                self.expr()
                self.expect(":")
                self.expr()
                self.expect(";")
            self.expect("esac")
            return
        if kind == "num":
            return
        if kind == "id":
            if text in ("TRUE", "FALSE"):
                return
            if text not in self.names:
                raise SyntaxError(f"undeclared identifier {text!r}")
            return
        raise SyntaxError(f"unexpected token {text!r}")


def _parse_type(p: _Parser) -> list[str]:
    """Returns enum constants declared by the type, if any."""
    tok = p.advance()
    if tok[1] == "boolean":
        return []
    if tok[0] == "num":
        p.expect("..")
        hi = p.advance()
        if hi[0] != "num":
            raise SyntaxError("range bound must be a number")
        return []
    if tok[1] == "{":
        consts = []
        while True:
            c = p.advance()
            if c[0] != "id":
                raise SyntaxError("enum constant expected")
            consts.append(c[1])
            nxt = p.advance()
            if nxt[1] == "}":
                return consts
            if nxt[1] != ",":
                raise SyntaxError("expected ',' or '}' in enum type")
    raise SyntaxError(f"unknown type starting with {tok[1]!r}")


def check_smv(text: str) -> list[str]:
    """Return diagnostics; an empty list means the model parses."""
    try:
        tokens = _tokenize(text)
    except SyntaxError as err:
        return [str(err)]

    index = {}
    for i, (_, t) in enumerate(tokens):
        if t in _SECTIONS or t == "MODULE":
            index.setdefault(i, t)

    if not tokens or tokens[0][1] != "MODULE":
        return ["model must start with MODULE"]

    # First pass: collect declared names without parsing expressions.
    names: set[str] = set()
    diags: list[str] = []
    p = _Parser(tokens, names)
    p.expect("MODULE")
    mod = p.advance()
    if mod[0] != "id":
        return ["MODULE needs a name"]

    sections: list[tuple[str, int, int]] = []
    bounds = sorted(i for i in index if i >= p.pos)
    for n, start in enumerate(bounds):
        end = bounds[n + 1] if n + 1 < len(bounds) else len(tokens)
        sections.append((tokens[start][1], start + 1, end))

    seen_assign_targets: set[str] = set()
    var_names: set[str] = set()
    for label, start, end in sections:
        q = _Parser(tokens[start:end], names)
        try:
            if label in ("IVAR", "VAR", "FROZENVAR"):
                while q.peek() is not None:
                    name = q.advance()
                    if name[0] != "id":
                        raise SyntaxError("declaration needs a name")
                    if name[1] in names:
                        raise SyntaxError(f"duplicate declaration {name[1]!r}")
                    q.expect(":")
                    for const in _parse_type(q):
                        names.add(const)
                    q.expect(";")
                    names.add(name[1])
                    if label == "VAR":
                        var_names.add(name[1])
            elif label == "DEFINE":
                while q.peek() is not None:
                    name = q.advance()
                    if name[0] != "id":
                        raise SyntaxError("DEFINE needs a name")
                    names.add(name[1])
                    q.expect(":=")
                    depth = 0
                    while q.peek() is not None:
                        tok = q.advance()
                        if tok[1] == "case":
                            depth += 1
                        elif tok[1] == "esac":
                            depth -= 1
                        elif tok[1] == ";" and depth == 0:
                            break
        except SyntaxError as err:
            diags.append(f"{label}: {err}")

    # Second pass: parse bodies now that every name is known.
    for label, start, end in sections:
        q = _Parser(tokens[start:end], names)
        try:
            if label == "DEFINE":
                while q.peek() is not None:
                    q.advance()
                    q.expect(":=")
                    q.expr()
                    q.expect(";")
            elif label == "ASSIGN":
                while q.peek() is not None:
                    head = q.advance()
                    if head[1] not in ("init", "next"):
                        raise SyntaxError("ASSIGN entries are init()/next()")
                    q.expect("(")
                    target = q.advance()
                    if target[1] not in var_names:
                        raise SyntaxError(
                            f"{head[1]} target {target[1]!r} is not a VAR"
                        )
                    q.expect(")")
                    q.expect(":=")
                    q.expr()
                    q.expect(";")
                    seen_assign_targets.add(target[1])
            elif label == "TRANS":
                q.expr()
                if q.peek() is not None:
                    raise SyntaxError("trailing tokens")
            elif label == "INVARSPEC":
                q.expr()
                if q.peek() is not None:
                    raise SyntaxError("trailing tokens")
            elif label == "LTLSPEC":
                q.ltl = True
                q.expr()
                if q.peek() is not None:
                    raise SyntaxError("trailing tokens")
        except SyntaxError as err:
            diags.append(f"{label}: {err}")

    for name in sorted(var_names - seen_assign_targets):
        diags.append(f"VAR {name!r} has no init/next assignment")
    return diags
