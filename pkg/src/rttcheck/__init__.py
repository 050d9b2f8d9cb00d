"""Relational test tables for reactive systems.

Tables constrain several traces at once, step by step, with durations,
back-references and cross-trace comparisons.  This package parses them,
validates them, replays recorded runs against them, plays them against
small reactive systems exhaustively, and exports the same check as an SMV
model.
"""

from .automaton import compile_table
from .conformance import (
    CheckResult,
    ConformanceError,
    MonitorResult,
    check_strict,
    check_weak,
    load_recordings,
    monitor,
)
from .system import ReactiveSystem, SystemParseError, augment, parse_system, product
from .table import (
    ConcreteTable,
    InstanceError,
    InstantiateError,
    RelationalTable,
    TableError,
    TableParseError,
    instantiate,
    is_instance,
    parse_table,
    to_concrete,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "ConcreteTable",
    "ConformanceError",
    "InstanceError",
    "InstantiateError",
    "MonitorResult",
    "ReactiveSystem",
    "RelationalTable",
    "SystemParseError",
    "TableError",
    "TableParseError",
    "augment",
    "check_strict",
    "check_weak",
    "compile_table",
    "instantiate",
    "is_instance",
    "load_recordings",
    "monitor",
    "parse_system",
    "parse_table",
    "product",
    "to_concrete",
    "validate",
    "__version__",
]
