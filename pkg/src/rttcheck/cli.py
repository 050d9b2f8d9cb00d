"""Command line front end.

Exit codes: 0 the property holds (or the artifact is fine), 1 it does not,
2 the inputs are malformed or wired up wrong, 3 the recordings never covered
the table's inputs, 4 inconclusive or unknown (budget, short recordings,
internal failure).  Wall time goes to stderr so stdout stays parseable.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import automaton, conformance, smv, table as table_mod
from . import expr as ex
from .system import ReactiveSystem, SystemParseError, parse_system

OK, FAIL, BAD_INPUT, NOT_COVERED, UNKNOWN = 0, 1, 2, 3, 4


class _InputError(Exception):
    pass


def _load_table(path: str) -> table_mod.RelationalTable:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise _InputError(f"cannot read {path}: {err}") from None
    try:
        tbl = table_mod.parse_table(text)
    except table_mod.TableParseError as err:
        raise _InputError(f"{path}: {err}") from None
    diags = table_mod.validate(tbl)
    if diags:
        raise _InputError(f"{path}:\n  " + "\n  ".join(diags))
    return tbl


def _load_systems(pairs: list[str]) -> dict[str, ReactiveSystem]:
    systems: dict[str, ReactiveSystem] = {}
    for pair in pairs:
        trace, eq, path = pair.partition("=")
        if not eq or not trace or not path:
            raise _InputError(f"--system wants trace=path, got {pair!r}")
        if trace in systems:
            raise _InputError(f"trace {trace!r} given twice")
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise _InputError(f"cannot read {path}: {err}") from None
        try:
            systems[trace] = parse_system(text)
        except SystemParseError as err:
            raise _InputError(f"{path}: {err}") from None
    return systems


def _parse_binding(pairs: list[str]) -> dict[str, ex.Value]:
    binding: dict[str, ex.Value] = {}
    for pair in pairs:
        name, eq, value = pair.partition("=")
        if not eq:
            raise _InputError(f"--bind wants name=value, got {pair!r}")
        binding[name] = conformance.parse_value(value)
    return binding


def _parse_counts(pairs: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for pair in pairs:
        uid, eq, value = pair.partition("=")
        if not eq or not value.isdigit():
            raise _InputError(f"--count wants uid=N, got {pair!r}")
        counts[uid] = int(value)
    return counts


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_validate(args: argparse.Namespace) -> int:
    tbl = _load_table(args.table)
    auto = automaton.compile_table(tbl)
    print(f"{tbl.name}: {len(tbl.rows)} rows, {len(auto.states)} automaton states, ok")
    if args.dump_automaton:
        print(automaton.describe(auto), end="")
    return OK


def _cmd_monitor(args: argparse.Namespace) -> int:
    tbl = _load_table(args.table)
    try:
        recordings = conformance.load_recordings(Path(args.recording).read_text())
        result = conformance.monitor(tbl, recordings, max_nodes=args.max_nodes)
    except OSError as err:
        raise _InputError(f"cannot read {args.recording}: {err}") from None
    except conformance.ConformanceError as err:
        raise _InputError(str(err)) from None
    if args.format == "json":
        doc = {
            "verdict": result.verdict,
            "weak_only": result.weak_only,
            "binding": {
                k: conformance._json_value(v) for k, v in (result.binding or {}).items()
            },
            "violation_step": result.violation_step,
            "failed_columns": [f"{t}::{v}" for t, v in result.failed_columns],
            "reason": result.reason,
        }
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        qualifier = " (weak: recordings end inside a forever row)" if result.weak_only else ""
        print(f"verdict: {result.verdict}{qualifier}")
        if result.binding:
            pairs = ", ".join(f"{k}={v}" for k, v in sorted(result.binding.items()))
            print(f"binding: {pairs}")
        if result.verdict == "violation":
            cols = ", ".join(f"{t}::{v}" for t, v in result.failed_columns)
            print(f"violated at super-step {result.violation_step}: {cols}")
        if result.reason:
            print(f"note: {result.reason}")
    if result.verdict == "conforms":
        return OK
    if result.verdict == "not_covered":
        return NOT_COVERED
    if result.verdict == "inconclusive":
        return UNKNOWN
    return FAIL


def _cmd_verify(args: argparse.Namespace) -> int:
    tbl = _load_table(args.table)
    systems = _load_systems(args.system)
    check = conformance.check_strict if args.mode == "strict" else conformance.check_weak
    try:
        result = check(tbl, systems, max_states=args.max_states)
    except conformance.ConformanceError as err:
        raise _InputError(str(err)) from None
    if args.format == "json":
        doc = {
            "mode": result.mode,
            "holds": result.holds,
            "bindings_checked": result.bindings_checked,
            "states_explored": result.states_explored,
            "reason": result.reason,
        }
        if result.counterexample is not None:
            doc["counterexample"] = json.loads(
                conformance.counterexample_json(tbl, result.counterexample)
            )
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(
            f"{result.mode} conformance: "
            + {True: "holds", False: "fails", None: "unknown"}[result.holds]
            + f" ({result.states_explored} configurations, "
            f"{result.bindings_checked} bindings)"
        )
        if result.reason:
            print(f"note: {result.reason}")
        if result.counterexample is not None:
            print(conformance.render_counterexample(tbl, result.counterexample), end="")
    if result.holds is True:
        return OK
    if result.holds is False:
        return FAIL
    return UNKNOWN


def _cmd_emit_smv(args: argparse.Namespace) -> int:
    tbl = _load_table(args.table)
    systems = _load_systems(args.system)
    try:
        model = smv.emit_smv(tbl, systems)
    except (conformance.ConformanceError, smv.SmvError) as err:
        raise _InputError(str(err)) from None
    if args.output:
        Path(args.output).write_text(model.text)
        manifest_path = args.manifest or str(
            Path(args.output).with_suffix(".manifest.json")
        )
        Path(manifest_path).write_text(smv.manifest_text(model))
        print(f"wrote {args.output} ({model.manifest['state_bits']} state bits)")
    else:
        print(model.text, end="")
    return OK


def _cmd_instance(args: argparse.Namespace) -> int:
    concrete_tbl = _load_table(args.concrete)
    family = _load_table(args.family)
    try:
        concrete = table_mod.to_concrete(concrete_tbl)
        result = table_mod.is_instance(concrete, family)
    except (table_mod.InstantiateError, table_mod.InstanceError) as err:
        raise _InputError(str(err)) from None
    if result.ok:
        pairs = ", ".join(f"{k}={v}" for k, v in sorted((result.binding or {}).items()))
        rows = " ".join(str(r) for r in (result.rows or []))
        print("instance: yes")
        if pairs:
            print(f"binding: {pairs}")
        print(f"rows: {rows}")
        return OK
    print("instance: no")
    if result.reason:
        print(f"reason: {result.reason}")
    return FAIL


def _cmd_instantiate(args: argparse.Namespace) -> int:
    family = _load_table(args.family)
    binding = _parse_binding(args.bind)
    counts = _parse_counts(args.count)
    try:
        concrete, rows = table_mod.instantiate(family, binding, counts)
    except table_mod.InstantiateError as err:
        raise _InputError(str(err)) from None
    lines = [f"table {concrete.name}"]
    lines.append("traces " + " ".join(concrete.traces))
    for col in concrete.columns:
        if col.kind == "pause":
            lines.append(f"column pause {col.trace}")
        else:
            lines.append(f"column {col.kind} {col.trace}::{col.var} : {col.typ}")
    for row in concrete.rows:
        cells = []
        for (trace, var), value in row.values:
            if var == table_mod.PAUSE_VAR:
                cells.append(f'pause({trace}) = "{_cell_text(value)}";')
            else:
                cells.append(f'{trace}::{var} = "{_cell_text(value)}";')
        lines.append(f"row {row.count} {{ " + " ".join(cells) + " }")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output} ({len(concrete.rows)} cycles, rows: "
              + " ".join(str(r) for r in rows) + ")")
    else:
        print(text, end="")
    return OK


def _cell_text(value: ex.Value) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    return str(value)


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rttcheck",
        description="Relational test tables: validate, monitor, verify, export",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a table")
    p.add_argument("table")
    p.add_argument("--dump-automaton", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("monitor", help="judge recorded trace runs against a table")
    p.add_argument("table")
    p.add_argument("recording")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--max-nodes", type=int, default=200_000)
    p.set_defaults(func=_cmd_monitor)

    p = sub.add_parser("verify", help="check systems against a table exhaustively")
    p.add_argument("table")
    p.add_argument(
        "--system", action="append", default=[], metavar="TRACE=FILE", required=True
    )
    p.add_argument("--mode", choices=("weak", "strict"), default="weak")
    p.add_argument("--max-states", type=int, default=None)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("emit-smv", help="emit an SMV model for the check")
    p.add_argument("table")
    p.add_argument(
        "--system", action="append", default=[], metavar="TRACE=FILE", required=True
    )
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_emit_smv)

    p = sub.add_parser("instance", help="is a concrete table a member of a family?")
    p.add_argument("concrete")
    p.add_argument("family")
    p.set_defaults(func=_cmd_instance)

    p = sub.add_parser("instantiate", help="produce one concrete family member")
    p.add_argument("family")
    p.add_argument("--bind", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--count", action="append", default=[], metavar="UID=N")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_instantiate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        code = args.func(args)
    except _InputError as err:
        print(f"error: {err}", file=sys.stderr)
        code = BAD_INPUT
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {err!r}", file=sys.stderr)
        code = UNKNOWN
    finally:
        elapsed = time.monotonic() - started
        print(f"elapsed: {elapsed:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
