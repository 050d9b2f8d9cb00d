"""Seeded generator for small table/system pairs.

Each instance carries two independent faces: rendered .rtt/.rsl sources
for the package under test, and guard lambdas plus a transition
dictionary for the oracle in oracles.py.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from oracles import (
    EPS, DictMachine, OracleRow, Sym, cat, opt, repeat,
)

BOOL_DOM = (False, True)
INT_DOM = (0, 1, 2)

DURATIONS = [
    ("1", 1, 1),
    ("[0,1]", 0, 1),
    ("[1,2]", 1, 2),
    ("[1,-]", 1, None),
]


@dataclass
class Instance:
    seed: int
    table_text: str
    system_text: str
    rows: list[OracleRow]
    term: object
    machine: DictMachine
    global_domain: tuple | None
    uses_history: bool


def _bool_pool(var: str):
    return [
        ("-", lambda c, p, g: True, False),
        ("-", lambda c, p, g: True, False),
        ("TRUE", lambda c, p, g: c[var] is True, False),
        ("FALSE", lambda c, p, g: c[var] is False, False),
        (f"={var}[-1]",
         lambda c, p, g: p is not None and c[var] == p[var], True),
        # The bare negated atom is true when history under-runs.
        (f"!{var}[-1]",
         lambda c, p, g: p is None or p[var] is False, True),
    ]


def _int_pool(var: str, with_global: bool):
    pool = [
        ("-", lambda c, p, g: True, False),
        ("-", lambda c, p, g: True, False),
        ("0", lambda c, p, g: c[var] == 0, False),
        ("2", lambda c, p, g: c[var] == 2, False),
        ("<=1", lambda c, p, g: c[var] <= 1, False),
        (">=1", lambda c, p, g: c[var] >= 1, False),
        ("!=1", lambda c, p, g: c[var] != 1, False),
        ("[0,1]", lambda c, p, g: 0 <= c[var] <= 1, False),
        (f"={var}[-1]",
         lambda c, p, g: p is not None and c[var] == p[var], True),
        (f">{var}[-1]",
         lambda c, p, g: p is not None and c[var] > p[var], True),
    ]
    if with_global:
        pool += [
            ("g", lambda c, p, g: c[var] == g, False),
            ("<=g", lambda c, p, g: c[var] <= g, False),
        ]
    return pool


def _value_text(value) -> str:
    if value is True:
        return "TRUE"
    if value is False:
        return "FALSE"
    return str(value)


def generate(seed: int) -> Instance:
    rng = random.Random(seed)

    n_in = rng.choice((1, 1, 2))
    n_out = rng.choice((1, 1, 2))
    in_cols = [(f"i{k}", rng.choice((BOOL_DOM, INT_DOM))) for k in range(n_in)]
    out_cols = [(f"o{k}", rng.choice((BOOL_DOM, INT_DOM))) for k in range(n_out)]

    has_global = rng.random() < 0.4
    global_domain = tuple(range(rng.randint(1, 3))) if has_global else None

    n_rows = rng.randint(1, 3)
    durations = [rng.choice(DURATIONS) for _ in range(n_rows)]

    group = None
    if n_rows >= 2 and rng.random() < 0.5:
        i = rng.randrange(n_rows)
        j = rng.randrange(n_rows)
        group = (min(i, j), max(i, j), rng.choice(DURATIONS))

    uses_history = False
    used_global = False
    cells: list[dict[str, tuple[str, object]]] = []
    rows: list[OracleRow] = []
    for _ in range(n_rows):
        chosen: dict[str, tuple[str, object]] = {}
        in_guards = []
        out_guards = []
        for var, dom in in_cols + out_cols:
            if dom is BOOL_DOM:
                text, fn, hist = rng.choice(_bool_pool(var))
            else:
                text, fn, hist = rng.choice(_int_pool(var, has_global))
            chosen[var] = (text, fn)
            uses_history = uses_history or hist
            used_global = used_global or text in ("g", "<=g")
            if any(var == v for v, _ in in_cols):
                in_guards.append(fn)
            else:
                out_guards.append(fn)
        cells.append(chosen)
        rows.append(OracleRow(
            in_guard=lambda c, p, g, fns=tuple(in_guards): all(
                f(c, p, g) for f in fns
            ),
            out_guard=lambda c, p, g, fns=tuple(out_guards): all(
                f(c, p, g) for f in fns
            ),
        ))
    if not used_global:
        global_domain = None

    # Row structure as a term, honoring the optional group.
    def row_term(k: int):
        _, lo, hi = durations[k]
        return repeat(Sym(k), lo, hi)

    term = EPS
    if group is None:
        for k in range(n_rows):
            term = cat(term, row_term(k))
    else:
        gi, gj, (_, glo, ghi) = group
        for k in range(gi):
            term = cat(term, row_term(k))
        body = EPS
        for k in range(gi, gj + 1):
            body = cat(body, row_term(k))
        term = cat(term, repeat(body, glo, ghi))
        for k in range(gj + 1, n_rows):
            term = cat(term, row_term(k))

    # Rendered table.
    def type_text(dom) -> str:
        return "bool" if dom is BOOL_DOM else "int[0,2]"

    lines = [f"table fam{seed}", "traces t"]
    if global_domain is not None:
        lines.append(f"gvar g : int[0,{len(global_domain) - 1}]")
    for var, dom in in_cols:
        lines.append(f"column in t::{var} : {type_text(dom)}")
    for var, dom in out_cols:
        lines.append(f"column out t::{var} : {type_text(dom)}")

    def row_lines(k: int, indent: str) -> list[str]:
        dtext = durations[k][0]
        parts = " ".join(
            f't::{var} = "{cells[k][var][0]}";'
            for var, _ in in_cols + out_cols
        )
        return [f"{indent}row {dtext} {{ {parts} }}"]

    body_lines: list[str] = []
    if group is None:
        for k in range(n_rows):
            body_lines += row_lines(k, "")
    else:
        gi, gj, (gdur, _, _) = group
        for k in range(gi):
            body_lines += row_lines(k, "")
        body_lines.append(f"group {gdur} {{")
        for k in range(gi, gj + 1):
            body_lines += row_lines(k, "  ")
        body_lines.append("}")
        for k in range(gj + 1, n_rows):
            body_lines += row_lines(k, "")
    table_text = "\n".join(lines + body_lines) + "\n"

    # Random Mealy machine over the same variables.
    has_state = rng.random() < 0.6
    state_dom = rng.choice((BOOL_DOM, INT_DOM)) if has_state else None
    init_state = (state_dom[0],) if has_state else ()

    in_names = [v for v, _ in in_cols]
    in_domains = {v: dom for v, dom in in_cols}
    table_dict = {}
    combos = []
    state_values = [(s,) for s in state_dom] if has_state else [()]
    for st in state_values:
        for combo in itertools.product(*(in_domains[n] for n in in_names)):
            move = dict(zip(in_names, combo))
            outs = {v: rng.choice(dom) for v, dom in out_cols}
            nxt = (rng.choice(state_dom),) if has_state else ()
            table_dict[(st, tuple(sorted(move.items())))] = (nxt, outs)
            combos.append((st, move, outs, nxt))
    machine = DictMachine(
        input_domains=in_domains,
        init_state=init_state,
        table=table_dict,
    )

    # Rendered program: one branch per (state, inputs) combination.
    sys_lines = [f"system sys{seed}"]
    for var, dom in in_cols:
        sys_lines.append(f"input {var} : {type_text(dom)}")
    for var, dom in out_cols:
        sys_lines.append(
            f"output {var} : {type_text(dom)} = {_value_text(dom[0])}"
        )
    if has_state:
        sys_lines.append(
            f"state m : {type_text(state_dom)} = {_value_text(state_dom[0])}"
        )
    sys_lines.append("step {")
    for idx, (st, move, outs, nxt) in enumerate(combos):
        conds = []
        if has_state:
            conds.append(f"m = {_value_text(st[0])}")
        conds += [f"{v} = {_value_text(move[v])}" for v in in_names]
        cond = " & ".join(conds)
        assigns = " ".join(
            f"{v} := {_value_text(val)};" for v, val in sorted(outs.items())
        )
        if has_state:
            assigns += f" m := {_value_text(nxt[0])};"
        if idx == 0:
            sys_lines.append(f"  if ({cond}) {{ {assigns} }}")
        elif idx == len(combos) - 1:
            sys_lines.append(f"  else {{ {assigns} }}")
        else:
            sys_lines.append(f"  elif ({cond}) {{ {assigns} }}")
    sys_lines.append("}")
    system_text = "\n".join(sys_lines) + "\n"

    return Instance(
        seed=seed,
        table_text=table_text,
        system_text=system_text,
        rows=rows,
        term=term,
        machine=machine,
        global_domain=global_domain,
        uses_history=uses_history,
    )
