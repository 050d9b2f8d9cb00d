"""Model-checker backend: emit a table-vs-systems model as SMV text.

The encoding keeps play step k inside SMV time k: inputs are IVARs, the
post-step values of outputs and state variables are DEFINEd symbolically
(``<trace>_<var>_now``), and the latched VAR copy of each such variable
then holds the previous step's value for free.  Deeper back-references go
through shift registers, guarded by a saturating ``age`` counter so that a
reference past the start of the play makes its atom false instead of
reading register garbage.

Tokens of the table automaton become one-hot booleans.  States reachable
by lingering on a progress row carry a shadow bit; a shadowed token is
discounted while one of the recorded forward alternatives could fire.
Three monotone latches classify finished plays: ``done`` (the table ended
and accepted), ``uncov`` (an input escaped the table), ``err`` (an output
constraint killed every explanation).  Weak conformance is the invariant
``!err``; the progress-sensitive variant adds an LTL spec requiring every
infinite play to end, escape, or keep touching forever rows.

Output is byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from . import expr as ex
from .automaton import ACCEPT, TableAutomaton, compile_table
from .conformance import build_product
from .system import Assign, IfChain, ProductSystem, ReactiveSystem
from .table import PAUSE_VAR, RelationalTable

_KEYWORDS = {
    "MODULE", "DEFINE", "MDEFINE", "CONSTANTS", "VAR", "IVAR", "FROZENVAR",
    "INIT", "TRANS", "INVAR", "SPEC", "CTLSPEC", "LTLSPEC", "PSLSPEC",
    "INVARSPEC", "FAIRNESS", "JUSTICE", "COMPASSION", "ASSIGN", "ISA",
    "COMPUTE", "NAME", "PRED", "MIRROR", "process", "array", "of",
    "boolean", "integer", "real", "word", "word1", "bool", "signed",
    "unsigned", "extend", "resize", "sizeof", "uwconst", "swconst",
    "next", "init", "self", "union", "in", "case", "esac", "mod",
    "TRUE", "FALSE", "xor", "xnor", "count", "abs", "max", "min",
}


class SmvError(Exception):
    pass


@dataclass
class SmvModel:
    text: str
    manifest: dict


class _Names:
    """Deterministic identifier registry with collision detection."""

    def __init__(self) -> None:
        self.taken: dict[str, str] = {}

    def claim(self, name: str, what: str) -> str:
        if name in _KEYWORDS:
            raise SmvError(f"{what} maps to reserved word {name!r}; rename it")
        owner = self.taken.get(name)
        if owner is not None and owner != what:
            raise SmvError(
                f"identifier collision: {what} and {owner} both map to {name!r}"
            )
        self.taken[name] = what
        return name


def _type_text(typ: ex.Type) -> str:
    if isinstance(typ, ex.BoolType):
        return "boolean"
    if isinstance(typ, ex.IntType):
        if typ.lo is None or typ.hi is None:
            raise SmvError("unbounded integers cannot be model checked")
        return f"{typ.lo}..{typ.hi}"
    return "{" + ", ".join(typ.constants) + "}"


def _type_bits(typ: ex.Type) -> int:
    if isinstance(typ, ex.BoolType):
        return 1
    if isinstance(typ, ex.IntType):
        assert typ.lo is not None and typ.hi is not None
        span = typ.hi - typ.lo + 1
        return max(1, (span - 1).bit_length())
    return max(1, (len(typ.constants) - 1).bit_length())


def _value_text(value: ex.Value) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, ex.Sym):
        return value.name
    return str(value)


# ---------------------------------------------------------------------------
# Expression translation


def _binop_text(op: str, left: str, right: str) -> str:
    smv_op = {"%": "mod", "=": "="}.get(op, op)
    return f"({left} {smv_op} {right})"


def _system_expr(node: ex.Expr, env: Mapping[str, str]) -> str:
    """Translate a system-side expression; variables resolve through env."""
    if isinstance(node, ex.IntLit):
        return str(node.value)
    if isinstance(node, ex.BoolLit):
        return "TRUE" if node.value else "FALSE"
    if isinstance(node, ex.EnumLit):
        return node.constant
    if isinstance(node, ex.VarRef):
        return env[node.var]
    if isinstance(node, ex.Unary):
        inner = _system_expr(node.operand, env)
        return f"(-{inner})" if node.op == "-" else f"(!{inner})"
    if isinstance(node, ex.BinOp):
        return _binop_text(
            node.op,
            _system_expr(node.left, env),
            _system_expr(node.right, env),
        )
    raise SmvError(f"cannot translate {type(node).__name__}")


def _symbolic_step(system: ReactiveSystem, base: Mapping[str, str]) -> dict[str, str]:
    """Post-step expression for each memory variable, over time-k names."""

    def run(stmts, env: dict[str, str]) -> dict[str, str]:
        env = dict(env)
        for st in stmts:
            if isinstance(st, Assign):
                env[st.var] = _system_expr(st.value, env)
            else:
                assert isinstance(st, IfChain)
                conds: list[str] = []
                branch_envs: list[dict[str, str]] = []
                has_else = False
                for branch in st.branches:
                    if branch.cond is not None:
                        conds.append(_system_expr(branch.cond, env))
                    else:
                        has_else = True
                    branch_envs.append(run(branch.body, env))
                changed = [
                    d.name
                    for d in system.decls
                    if any(benv[d.name] != env[d.name] for benv in branch_envs)
                ]
                for name in changed:
                    arms: list[str] = []
                    for idx, benv in enumerate(branch_envs):
                        guard = "TRUE" if idx >= len(conds) else conds[idx]
                        arms.append(f"{guard} : {benv[name]};")
                    if not has_else:
                        arms.append(f"TRUE : {env[name]};")
                    env[name] = "case " + " ".join(arms) + " esac"
        return env

    final = run(system.body, dict(base))
    return {d.name: final[d.name] for d in system.memory}


class _GuardTranslator:
    """Table constraints to SMV, with age and division protection per atom."""

    def __init__(self, emitter: "_Emitter"):
        self.em = emitter

    def constraint(self, node: ex.Expr) -> str:
        if isinstance(node, ex.BinOp) and node.op in ("&", "|"):
            return _binop_text(
                node.op, self.constraint(node.left), self.constraint(node.right)
            )
        if isinstance(node, ex.Unary) and node.op == "!":
            return f"(!{self.constraint(node.operand)})"
        return self._atom(node)

    def _atom(self, node: ex.Expr) -> str:
        base = self._expr(node)
        guards: list[str] = []
        depth = ex.max_backref_depth(node)
        if depth > 0:
            guards.append(f"age >= {depth}")
        for sub in ex.walk(node):
            if isinstance(sub, ex.BinOp) and sub.op in ("/", "%"):
                guards.append(f"{self._expr(sub.right)} != 0")
        if not guards:
            return base
        arms = "".join(f"!({g}) : FALSE; " for g in reversed(guards))
        return f"(case {arms}TRUE : {base}; esac)"

    def _expr(self, node: ex.Expr) -> str:
        if isinstance(node, ex.IntLit):
            return str(node.value)
        if isinstance(node, ex.BoolLit):
            return "TRUE" if node.value else "FALSE"
        if isinstance(node, ex.EnumLit):
            return node.constant
        if isinstance(node, ex.GlobalRef):
            return self.em.global_names[node.name]
        if isinstance(node, ex.VarRef):
            assert node.trace is not None
            return self.em.reference(node.trace, node.var, -node.offset)
        if isinstance(node, ex.Unary):
            inner = self._expr(node.operand)
            return f"(-{inner})" if node.op == "-" else f"(!{inner})"
        if isinstance(node, ex.BinOp):
            return _binop_text(
                node.op, self._expr(node.left), self._expr(node.right)
            )
        raise SmvError(f"cannot translate {type(node).__name__}")


# ---------------------------------------------------------------------------
# Emitter


class _Emitter:
    def __init__(self, table: RelationalTable, prod: ProductSystem):
        self.table = table
        self.prod = prod
        self.names = _Names()
        self.auto: TableAutomaton = compile_table(table)
        self.depth = table.history_bound

        pause_set = set(table.pause_traces())
        self.pause_traces = [t for t in table.traces if t in pause_set]
        # Pausing replays the previous cycle, so even history-free tables
        # need one tick of clock to rule out a pause before the first cycle.
        self.clock = max(self.depth, 1) if self.pause_traces else self.depth

        self.var_name: dict[tuple[str, str], str] = {}
        self.kind_of: dict[tuple[str, str], str] = {}
        self.global_names: dict[str, str] = {}
        self.reg_name: dict[tuple[str, str, int], str] = {}
        self.need_depth: dict[tuple[str, str], int] = {}
        self.eff_name: dict[tuple[str, str], str] = {}
        self.state_bits = 0

        for trace, sys_ in prod.parts.items():
            for decl in sys_.decls:
                name = self.names.claim(
                    f"{trace}_{decl.name}", f"variable {trace}::{decl.name}"
                )
                self.var_name[(trace, decl.name)] = name
                self.kind_of[(trace, decl.name)] = (
                    "input" if decl.kind == "input" else "memory"
                )
                if isinstance(decl.typ, ex.EnumType):
                    for const in decl.typ.constants:
                        self.names.claim(const, f"enum constant {const}")
        for gname in table.globals:
            self.global_names[gname] = self.names.claim(gname, f"global {gname}")

        fixed = [
            "age", "done", "uncov", "err", "halted", "any_tok", "any_etok",
            "any_viol", "acc_now", "any_spawn", "omega_now", "pruned_now",
            "accept_end",
        ]
        for name in fixed:
            self.names.claim(name, "model bookkeeping")
        for st in self.auto.states:
            for prefix in ("tok", "sh", "etok", "cov", "pass", "viol", "spawn"):
                self.names.claim(f"{prefix}_{st.sid}", "model bookkeeping")
        for row in table.rows:
            self.names.claim(f"inp_r{row.index}", "model bookkeeping")
            self.names.claim(f"out_r{row.index}", "model bookkeeping")

        referenced: set[tuple[str, str]] = set()
        for constraint in table.constraints.values():
            for sub in ex.walk(constraint):
                if isinstance(sub, ex.VarRef):
                    key = (sub.trace or "", sub.var)
                    referenced.add(key)
                    if sub.offset < 0 and self.need_depth.get(key, 0) < -sub.offset:
                        self.need_depth[key] = -sub.offset

        # Inputs of a pausable trace need an effective-value define: while
        # the trace pauses, the play shows the previous cycle, not the IVAR.
        for key in sorted(referenced):
            trace, var = key
            if (
                trace in pause_set
                and var != PAUSE_VAR
                and self.kind_of.get(key) == "input"
            ):
                self.eff_name[key] = self.names.claim(
                    f"{self.var_name[key]}_eff", f"frozen view of {trace}::{var}"
                )
                if self.need_depth.get(key, 0) < 1:
                    self.need_depth[key] = 1

    def reference(self, trace: str, var: str, depth: int) -> str:
        """SMV expression for trace::var as of ``depth`` steps ago."""
        key = (trace, var)
        base = self.var_name[key]
        if self.kind_of[key] == "input":
            if depth == 0:
                return self.eff_name.get(key, base)
            return self.reg_name[(trace, var, depth)]
        if depth == 0:
            return f"{base}_now"
        if depth == 1:
            return base
        return self.reg_name[(trace, var, depth)]

    def emit(self) -> SmvModel:
        table, prod, auto = self.table, self.prod, self.auto
        lines: list[str] = []
        add = lines.append

        add(f"-- rttcheck model: table {table.name} vs "
            + ", ".join(f"{t}={prod.parts[t].name}" for t in prod.parts))
        add("MODULE main")

        # Inputs
        if prod.input_decls():
            add("IVAR")
            for trace, decl in prod.input_decls():
                add(f"  {self.var_name[(trace, decl.name)]} : {_type_text(decl.typ)};")

        # Rigid table globals
        if table.globals:
            add("FROZENVAR")
            for gname, typ in table.globals.items():
                add(f"  {self.global_names[gname]} : {_type_text(typ)};")
                self.state_bits += _type_bits(typ)

        add("VAR")
        for trace, decl in prod.memory_decls():
            add(f"  {self.var_name[(trace, decl.name)]} : {_type_text(decl.typ)};")
            self.state_bits += _type_bits(decl.typ)

        # History registers
        reg_lines: list[str] = []
        reg_updates: list[tuple[str, str, str]] = []
        for (trace, var), depth in sorted(self.need_depth.items()):
            key = (trace, var)
            if key not in self.var_name:
                raise SmvError(f"referenced variable {trace}::{var} has no source")
            decl = next(
                d for d in self.prod.parts[trace].decls if d.name == var
            )
            first = 1 if self.kind_of[key] == "input" else 2
            prev = self.eff_name.get(key, self.var_name[key])
            for j in range(first, depth + 1):
                reg = self.names.claim(
                    f"{self.var_name[key]}_p{j}", f"register {trace}::{var}[-{j}]"
                )
                self.reg_name[(trace, var, j)] = reg
                reg_lines.append(f"  {reg} : {_type_text(decl.typ)};")
                reg_updates.append((reg, _value_text(decl.initial()), prev))
                self.state_bits += _type_bits(decl.typ)
                prev = reg
        lines.extend(reg_lines)

        if self.clock > 0:
            add(f"  age : 0..{self.clock};")
            self.state_bits += _type_bits(ex.IntType(0, self.clock))

        shadow_of: dict[int, tuple[int, ...]] = {}
        shadow_srcs: dict[int, list[int]] = {}
        plain_srcs: dict[int, list[int]] = {}
        stay_preds: dict[int, list[int]] = {s.sid: [] for s in auto.states}
        fwd_preds: dict[int, list[int]] = {s.sid: [] for s in auto.states}
        for src, targets in auto.stay.items():
            for t in targets:
                stay_preds[t].append(src)
        for src, targets in auto.forward.items():
            for t in targets:
                fwd_preds[t].append(src)
        for st in auto.states:
            shadowing = [
                p
                for p in stay_preds[st.sid]
                if auto.states[p].progress and auto.alternatives(p)
            ]
            others = [
                p for p in stay_preds[st.sid] if p not in shadowing
            ] + fwd_preds[st.sid]
            if shadowing:
                alt_sets = {auto.alternatives(p) for p in shadowing}
                if len(alt_sets) != 1:
                    raise SmvError(
                        "conflicting progress obligations on one state"
                    )
                shadow_of[st.sid] = tuple(sorted(alt_sets.pop()))
                shadow_srcs[st.sid] = shadowing
                plain_srcs[st.sid] = others

        for st in auto.states:
            add(f"  tok_{st.sid} : boolean;")
            self.state_bits += 1
        for sid in sorted(shadow_of):
            add(f"  sh_{sid} : boolean;")
            self.state_bits += 1
        add("  done : boolean;")
        add("  uncov : boolean;")
        add("  err : boolean;")
        self.state_bits += 3

        # Definitions
        add("DEFINE")
        for trace, sys_ in prod.parts.items():
            base = {d.name: self.var_name[(trace, d.name)] for d in sys_.decls}
            stepped = _symbolic_step(sys_, base)
            for decl in sys_.memory:
                add(f"  {self.names.claim(f'{base[decl.name]}_now', f'step of {trace}::{decl.name}')}"
                    f" := {stepped[decl.name]};")
        for key in sorted(self.eff_name):
            trace, var = key
            stutt = self.var_name[(trace, PAUSE_VAR)]
            add(f"  {self.eff_name[key]} := case {stutt} : "
                f"{self.reg_name[(trace, var, 1)]}; TRUE : {self.var_name[key]}; esac;")

        tr = _GuardTranslator(self)
        for row in table.rows:
            ins = [tr.constraint(e) for _, e in auto.input_guards[row.index]]
            outs = [tr.constraint(e) for _, e in auto.output_guards[row.index]]
            add(f"  inp_r{row.index} := {' & '.join(ins) if ins else 'TRUE'};")
            add(f"  out_r{row.index} := {' & '.join(outs) if outs else 'TRUE'};")

        for st in auto.states:
            if st.sid in shadow_of:
                alts = shadow_of[st.sid]
                fires = [
                    "TRUE" if a == ACCEPT else f"inp_r{auto.states[a].row_index}"
                    for a in alts
                ]
                add(
                    f"  etok_{st.sid} := tok_{st.sid} & "
                    f"!(sh_{st.sid} & ({' | '.join(fires)}));"
                )
            else:
                add(f"  etok_{st.sid} := tok_{st.sid};")
        for st in auto.states:
            r = st.row_index
            add(f"  cov_{st.sid} := etok_{st.sid} & inp_r{r};")
            add(f"  pass_{st.sid} := cov_{st.sid} & out_r{r};")
            add(f"  viol_{st.sid} := cov_{st.sid} & !out_r{r};")
        add("  any_tok := " + _disj([f"tok_{s.sid}" for s in auto.states]) + ";")
        add("  any_etok := " + _disj([f"etok_{s.sid}" for s in auto.states]) + ";")
        add("  any_viol := " + _disj([f"viol_{s.sid}" for s in auto.states]) + ";")
        add("  acc_now := " + _disj([f"pass_{sid}" for sid in sorted(auto.exits)]) + ";")
        spawns: dict[int, list[str]] = {s.sid: [] for s in auto.states}
        for src in (s.sid for s in auto.states):
            for t in auto.stay.get(src, ()):
                spawns[t].append(f"pass_{src}")
            for t in auto.forward.get(src, ()):
                spawns[t].append(f"pass_{src}")
        for st in auto.states:
            add(f"  spawn_{st.sid} := " + _disj(spawns[st.sid]) + ";")
        add("  any_spawn := " + _disj([f"spawn_{s.sid}" for s in auto.states]) + ";")
        omega_sids = [s.sid for s in auto.states if s.omega]
        add("  omega_now := " + _disj([f"tok_{sid}" for sid in omega_sids]) + ";")
        add("  pruned_now := any_tok & !any_etok;")
        add("  halted := done | uncov | err;")
        add("  accept_end := pruned_now | (acc_now & !any_spawn);")

        # Transitions
        add("ASSIGN")
        for trace, sys_ in prod.parts.items():
            for decl in sys_.memory:
                name = self.var_name[(trace, decl.name)]
                add(f"  init({name}) := {_value_text(decl.initial())};")
                add(f"  next({name}) := {name}_now;")
        for reg, init_text, prev in reg_updates:
            add(f"  init({reg}) := {init_text};")
            add(f"  next({reg}) := {prev};")
        if self.clock > 0:
            add("  init(age) := 0;")
            add(f"  next(age) := case age < {self.clock} : age + 1; "
                "TRUE : age; esac;")
        initial = set(self.auto.initial)
        for st in auto.states:
            add(f"  init(tok_{st.sid}) := {'TRUE' if st.sid in initial else 'FALSE'};")
            add(f"  next(tok_{st.sid}) := spawn_{st.sid};")
        for sid in sorted(shadow_of):
            shadow_term = _disj([f"pass_{p}" for p in shadow_srcs[sid]])
            plain_term = _disj([f"pass_{p}" for p in plain_srcs[sid]])
            add(f"  init(sh_{sid}) := FALSE;")
            add(f"  next(sh_{sid}) := ({shadow_term}) & !({plain_term});")
        add("  init(done) := FALSE;")
        add("  next(done) := done | (!halted & accept_end);")
        add("  init(uncov) := FALSE;")
        add("  next(uncov) := uncov | "
            "(!halted & any_etok & !any_spawn & !acc_now & !any_viol);")
        add("  init(err) := FALSE;")
        add("  next(err) := err | (!halted & any_viol & !any_spawn & !acc_now);")

        if self.pause_traces:
            flags = " | ".join(
                self.var_name[(t, PAUSE_VAR)] for t in self.pause_traces
            )
            add(f"TRANS !(age = 0 & ({flags}))")

        add("INVARSPEC !err")
        add("LTLSPEC (F (done | uncov)) | (G (F omega_now))")

        text = "\n".join(lines) + "\n"
        manifest = {
            "format": 1,
            "table": table.name,
            "systems": {t: prod.parts[t].name for t in prod.parts},
            "traces": list(table.traces),
            "states": len(auto.states),
            "shadowed_states": len(shadow_of),
            "history_depth": self.depth,
            "pause_traces": list(self.pause_traces),
            "state_bits": self.state_bits,
            "empty_play_accepted": auto.skippable,
            "specs": {
                "weak": "INVARSPEC !err",
                "progress": "LTLSPEC (F (done | uncov)) | (G (F omega_now))",
            },
        }
        return SmvModel(text=text, manifest=manifest)


def _disj(terms: list[str]) -> str:
    if not terms:
        return "FALSE"
    return " | ".join(terms)


def emit_smv(
    table: RelationalTable, systems: Mapping[str, ReactiveSystem]
) -> SmvModel:
    """Emit the SMV model for checking the systems against the table."""
    prod = build_product(table, systems)
    return _Emitter(table, prod).emit()


def manifest_text(model: SmvModel) -> str:
    return json.dumps(model.manifest, indent=2, sort_keys=True) + "\n"
