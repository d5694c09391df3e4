"""deductdb: stratified rule programs with aggregates, compiled to SQL and
evaluated to fixpoint directly on an embedded relational backend."""

from .ast import (
    AggregateAtom,
    Atom,
    BuiltinAtom,
    ConnectionSpec,
    Diagnostic,
    DirectiveSet,
    Literal,
    OutputDirective,
    Program,
    ProgramError,
    Rule,
    SourceSpan,
    SqlType,
    SymbolicSet,
    TableDef,
    Term,
)
from .analysis import (
    DependencyGraph,
    StratificationError,
    StratumPlan,
    build_dependency_graph,
    optimize,
    standardize_aggregates,
    stratify,
)
from .backend import (
    BackendError,
    BackendProfile,
    EvaluationTimeout,
    SqliteBackend,
    bind_tables,
    read_fact_csv,
)
from .engine import EvaluationResult, extensions, prepare, run
from .parser import parse_directives, parse_program
from .translate import (
    ProgramPlan,
    RelationBinding,
    RulePlan,
    SqlStatement,
    render_statement,
    translate_program,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateAtom",
    "Atom",
    "BackendError",
    "BackendProfile",
    "BuiltinAtom",
    "ConnectionSpec",
    "DependencyGraph",
    "Diagnostic",
    "DirectiveSet",
    "EvaluationResult",
    "EvaluationTimeout",
    "Literal",
    "OutputDirective",
    "Program",
    "ProgramError",
    "ProgramPlan",
    "RelationBinding",
    "Rule",
    "RulePlan",
    "SourceSpan",
    "SqliteBackend",
    "SqlStatement",
    "SqlType",
    "StratificationError",
    "StratumPlan",
    "SymbolicSet",
    "TableDef",
    "Term",
    "bind_tables",
    "build_dependency_graph",
    "extensions",
    "optimize",
    "parse_directives",
    "parse_program",
    "prepare",
    "read_fact_csv",
    "render_statement",
    "run",
    "standardize_aggregates",
    "stratify",
    "translate_program",
]
