"""Abstract syntax for rule programs and for the table-mapping directive language.

Every other module consumes these types.  All nodes are immutable; source
spans are carried for diagnostics but excluded from equality, so two parses
of the same text compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")
ARITHMETIC_OPS = ("+", "*")
AGGREGATE_FUNCS = ("#count", "#sum", "#min", "#max", "#avg")

#: complement used to push `not` through a comparison at parse time
COMPLEMENT_OP = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}

#: predicate-name prefix reserved for generated auxiliary predicates
RESERVED_PREFIX = "aux__"


@dataclass(frozen=True)
class SourceSpan:
    """Position of a construct in its source file (1-based line/column)."""

    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Term:
    """A variable, integer constant, or string constant.

    Variable names begin with an uppercase letter; constants never do.
    The anonymous variable is desugared by the parser, so it never
    appears here.
    """

    kind: str  # "var" | "int" | "str"
    value: Union[str, int]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_var(self) -> bool:
        return self.kind == "var"

    @property
    def is_const(self) -> bool:
        return self.kind != "var"

    def __str__(self) -> str:
        if self.kind == "str" and not _is_bare_constant(str(self.value)):
            escaped = str(self.value).replace('"', '\\"')
            return f'"{escaped}"'
        return str(self.value)


def var(name: str) -> Term:
    return Term("var", name)


def integer(value: int) -> Term:
    return Term("int", value)


def string(value: str) -> Term:
    return Term("str", value)


def _is_bare_constant(s: str) -> bool:
    return s != "" and (s[0].islower() and all(c.isalnum() or c == "_" for c in s))


@dataclass(frozen=True)
class Atom:
    """A standard atom: predicate applied to an ordered tuple of terms."""

    pred: str
    args: tuple[Term, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return all(t.is_const for t in self.args)

    def variables(self) -> list[str]:
        return [str(t.value) for t in self.args if t.is_var]

    def __str__(self) -> str:
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(str(t) for t in self.args)})"


@dataclass(frozen=True)
class BuiltinAtom:
    """Comparison (2 args) or relational arithmetic (3 args: op(A,B,C) means A op B = C)."""

    op: str
    args: tuple[Term, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_comparison(self) -> bool:
        return self.op in COMPARISON_OPS

    @property
    def is_arithmetic(self) -> bool:
        return self.op in ARITHMETIC_OPS

    def variables(self) -> list[str]:
        return [str(t.value) for t in self.args if t.is_var]

    def __str__(self) -> str:
        if self.is_comparison:
            return f"{self.args[0]} {self.op} {self.args[1]}"
        return f"{self.op}({', '.join(str(t) for t in self.args)})"


@dataclass(frozen=True)
class SymbolicSet:
    """The ``{Vars : Conj}`` term of an aggregate atom."""

    vars: tuple[Term, ...]
    conj: tuple[Atom, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        vars_s = ", ".join(str(v) for v in self.vars)
        conj_s = ", ".join(str(a) for a in self.conj)
        return f"{{{vars_s} : {conj_s}}}"


@dataclass(frozen=True)
class AggregateAtom:
    """``f{Vars : Conj} cmp guard`` with f one of the aggregate functions."""

    func: str
    sset: SymbolicSet
    cmp: str
    guard: Term
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return f"{self.func}{self.sset} {self.cmp} {self.guard}"


Payload = Union[Atom, BuiltinAtom, AggregateAtom]


@dataclass(frozen=True)
class Literal:
    """A possibly negated atom.

    Negative builtins never occur: the parser rewrites ``not A < B`` to the
    complementary positive comparison.
    """

    payload: Payload
    negated: bool = False
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_standard(self) -> bool:
        return isinstance(self.payload, Atom)

    @property
    def is_builtin(self) -> bool:
        return isinstance(self.payload, BuiltinAtom)

    @property
    def is_aggregate(self) -> bool:
        return isinstance(self.payload, AggregateAtom)

    def __str__(self) -> str:
        return f"not {self.payload}" if self.negated else str(self.payload)


@dataclass(frozen=True)
class Rule:
    """One rule.  An empty body makes it a fact, whose head must be ground."""

    head: Atom
    body: tuple[Literal, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_fact(self) -> bool:
        return not self.body

    def body_atoms(self, *, negated: Optional[bool] = None) -> list[Atom]:
        """Standard body atoms, optionally filtered by polarity."""
        out = []
        for lit in self.body:
            if lit.is_standard and (negated is None or lit.negated == negated):
                out.append(lit.payload)
        return out

    def aggregate_literals(self) -> list[Literal]:
        return [lit for lit in self.body if lit.is_aggregate]

    def global_variables(self) -> list[str]:
        """Variables appearing in a standard atom of the rule, in order of appearance."""
        seen: dict[str, None] = {}
        for atom in [self.head] + self.body_atoms():
            for v in atom.variables():
                seen.setdefault(v, None)
        return list(seen)

    def __str__(self) -> str:
        if self.is_fact:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(l) for l in self.body)}."


@dataclass(frozen=True)
class Program:
    """A parsed program: rules, ground facts, and the admissible integer bound."""

    rules: tuple[Rule, ...] = ()
    facts: tuple[Atom, ...] = ()
    maxint: int = 0

    def predicates(self) -> list[str]:
        """All predicate names in first-appearance order."""
        seen: dict[str, None] = {}
        for fact in self.facts:
            seen.setdefault(fact.pred, None)
        for rule in self.rules:
            seen.setdefault(rule.head.pred, None)
            for lit in rule.body:
                if lit.is_standard:
                    seen.setdefault(lit.payload.pred, None)
                elif lit.is_aggregate:
                    for atom in lit.payload.sset.conj:
                        seen.setdefault(atom.pred, None)
        return list(seen)

    def arities(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for atom in self.all_atoms():
            out.setdefault(atom.pred, atom.arity)
        return out

    def all_atoms(self) -> list[Atom]:
        atoms: list[Atom] = list(self.facts)
        for rule in self.rules:
            atoms.append(rule.head)
            for lit in rule.body:
                if lit.is_standard:
                    atoms.append(lit.payload)
                elif lit.is_aggregate:
                    atoms.extend(lit.payload.sset.conj)
        return atoms

    def __str__(self) -> str:
        lines = []
        if self.maxint:
            lines.append(f"#maxint={self.maxint}.")
        lines.extend(str(Rule(f)) for f in self.facts)
        lines.extend(str(r) for r in self.rules)
        return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Directive language
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectionSpec:
    """``name:user:password`` connection triple; empty user/password select
    a credential-free embedded database file."""

    database: str
    user: str = ""
    password: str = ""

    def __str__(self) -> str:
        return f"{_quote_name(self.database)}:{self.user}:{self.password}"


@dataclass(frozen=True)
class SqlType:
    base: str  # "integer" | "varchar"
    size: Optional[int] = None  # varchar length, >= 1

    def __str__(self) -> str:
        return f"varchar({self.size})" if self.base == "varchar" else "integer"


INTEGER = SqlType("integer")
VARCHAR255 = SqlType("varchar", 255)


@dataclass(frozen=True)
class TableDef:
    """One USE or CREATE table definition."""

    mode: str  # "USE" | "CREATE"
    table: str
    attrs: tuple[str, ...] = ()
    as_query: Optional[str] = None
    from_db: Optional[ConnectionSpec] = None
    mapto_pred: Optional[str] = None
    mapto_types: tuple[SqlType, ...] = ()
    keep: bool = False
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def predicate(self) -> str:
        """Mapped predicate; an unmapped table maps to the same-named predicate."""
        return self.mapto_pred if self.mapto_pred else self.table

    def __str__(self) -> str:
        parts = [self.mode, _quote_name(self.table)]
        if self.attrs:
            parts.append(f"({', '.join(self.attrs)})")
        if self.as_query is not None:
            parts.append(f"AS ({self.as_query})")
        if self.from_db is not None:
            parts.append(f"FROM {self.from_db}")
        if self.mapto_pred is not None:
            parts.append(f"MAPTO {self.mapto_pred}")
            if self.mapto_types:
                parts.append(f"({', '.join(str(t) for t in self.mapto_types)})")
        if self.keep:
            parts.append("KEEP_AFTER_EXECUTION")
        return " ".join(parts) + "."


@dataclass(frozen=True)
class OutputDirective:
    """A final-section entry: OUTPUT of one predicate or DBOUTPUT of all."""

    kind: str  # "OUTPUT" | "DBOUTPUT"
    mode: str = "OVERWRITE"  # "APPEND" | "OVERWRITE"
    pred: Optional[str] = None
    alias: Optional[str] = None
    target: Optional[ConnectionSpec] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        if self.kind == "DBOUTPUT":
            return f"DBOUTPUT {self.target}."
        parts = ["OUTPUT"]
        if self.mode != "OVERWRITE":
            parts.append(self.mode)
        parts.append(self.pred or "")
        if self.alias:
            parts.append(f"AS {self.alias}")
        if self.target is not None:
            parts.append(f"IN {self.target}")
        return " ".join(p for p in parts if p) + "."


@dataclass(frozen=True)
class DirectiveSet:
    """Parsed auxiliary directives: working database, table mappings,
    optional query table, and output sections."""

    working_db: ConnectionSpec
    like: Optional[str] = None
    tables: tuple[TableDef, ...] = ()
    query: Optional[str] = None
    outputs: tuple[OutputDirective, ...] = ()

    def table_for(self, pred: str) -> Optional[TableDef]:
        for td in self.tables:
            if td.predicate == pred:
                return td
        return None

    def __str__(self) -> str:
        lines = [f"USEDB {self.working_db}" + (f" LIKE {self.like}" if self.like else "") + "."]
        lines.extend(str(td) for td in self.tables)
        if self.query:
            lines.append(f"QUERY {_quote_name(self.query)}.")
        lines.extend(str(o) for o in self.outputs)
        return "\n".join(lines) + "\n"


def _quote_name(name: str) -> str:
    if name and all(c.isalnum() or c == "_" for c in name):
        return name
    return f'"{name}"'


# ---------------------------------------------------------------------------
# Diagnostics and program-level checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        return f"{self.span}: {self.message}" if self.span else self.message


class ProgramError(Exception):
    """Raised for any parse, arity, safety, or stratification failure."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def arity_check(program: Program) -> list[Diagnostic]:
    """Each predicate must be used with a single arity everywhere."""
    seen: dict[str, int] = {}
    diags = []
    for atom in program.all_atoms():
        prev = seen.setdefault(atom.pred, atom.arity)
        if prev != atom.arity:
            diags.append(
                Diagnostic(
                    f"predicate '{atom.pred}' used with conflicting arities {prev} and {atom.arity}",
                    atom.span,
                )
            )
    return diags


def safety_check(rule: Rule, maxint: int = 0) -> list[Diagnostic]:
    """Safety conditions for one rule.

    (i) every global variable occurs in a positive standard body atom —
        variables occurring only in builtins are admitted when a positive
        ``maxint`` bounds their range;
    (ii) every variable listed in a symbolic set occurs in its conjunction
        and is not also global;
    (iii) every aggregate guard is a constant or a global variable.
    Facts must be ground; negated aggregate literals are not supported.
    """
    diags = []
    if rule.is_fact:
        if not rule.head.is_ground:
            diags.append(Diagnostic(f"fact '{rule.head}' is not ground", rule.span))
        return diags

    positive_vars = set()
    for atom in rule.body_atoms(negated=False):
        positive_vars.update(atom.variables())
    builtin_vars = set()
    for lit in rule.body:
        if lit.is_builtin:
            builtin_vars.update(lit.payload.variables())

    global_vars = set(rule.global_variables())
    for v in sorted(global_vars | builtin_vars):
        if v in positive_vars:
            continue
        if v in builtin_vars and maxint > 0:
            continue  # range-bounded during translation
        where = "a builtin" if v in builtin_vars else "the head or a negated atom"
        hint = "; set #maxint to bound it" if v in builtin_vars else ""
        diags.append(
            Diagnostic(
                f"unsafe variable '{v}': occurs in {where} but in no positive body atom{hint}",
                rule.span,
            )
        )

    for lit in rule.body:
        if not lit.is_aggregate:
            continue
        agg = lit.payload
        if lit.negated:
            diags.append(
                Diagnostic("negated aggregate literals are not supported", lit.span or rule.span)
            )
        conj_vars = set()
        for atom in agg.sset.conj:
            conj_vars.update(atom.variables())
        for t in agg.sset.vars:
            name = str(t.value)
            if name not in conj_vars:
                diags.append(
                    Diagnostic(
                        f"set variable '{name}' does not occur in the set conjunction",
                        agg.span or rule.span,
                    )
                )
            if name in global_vars:
                diags.append(
                    Diagnostic(
                        f"set variable '{name}' is also a global variable of the rule",
                        agg.span or rule.span,
                    )
                )
        if agg.guard.is_var and str(agg.guard.value) not in global_vars:
            diags.append(
                Diagnostic(
                    f"aggregate guard '{agg.guard}' must be a constant or a global variable",
                    agg.span or rule.span,
                )
            )
    return diags


def check_program(program: Program) -> list[Diagnostic]:
    """All arity and safety diagnostics for a program."""
    diags = arity_check(program)
    for rule in program.rules:
        diags.extend(safety_check(rule, program.maxint))
    for fact in program.facts:
        diags.extend(safety_check(Rule(fact), program.maxint))
    return diags
