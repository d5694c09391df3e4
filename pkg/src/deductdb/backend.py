"""The working database: table lifecycle, fact loading, statement execution,
and directive-driven data movement.

The default engine is embedded SQLite, so a connection triple with empty
user/password resolves to a database file and "external databases" are
simply other database files reached through ATTACH.  All evaluation happens
through SQL statements executed here; no program data is ever materialized
in Python beyond cursor buffers.
"""

from __future__ import annotations

import csv
import logging
import sqlite3
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .ast import ConnectionSpec, DirectiveSet, Program, SqlType, INTEGER, VARCHAR255
from .translate import (
    DELTA_PREFIX,
    PREV_DELTA_PREFIX,
    RANGE_TABLE,
    ProgramPlan,
    RelationBinding,
    SqlStatement,
    default_attrs,
    render_statement,
)

log = logging.getLogger(__name__)


class BackendError(Exception):
    pass


class EvaluationTimeout(Exception):
    pass


@dataclass(frozen=True)
class BackendProfile:
    dialect: str = "generic"  # generic | no-except
    quote_char: str = '"'
    max_identifier_length: int = 63


def profile_for(like: Optional[str]) -> BackendProfile:
    # only the EXCEPT capability differs among the recognized systems
    if like == "MYSQL":
        return BackendProfile(dialect="no-except", quote_char="`")
    return BackendProfile()


def resolve_database_path(spec: ConnectionSpec, base_dir: Union[str, Path] = ".") -> str:
    """Map a connection triple to a database file; explicit paths pass through."""
    name = spec.database
    if name == ":memory:":
        return name
    if any(sep in name for sep in "/\\") or name.endswith((".sqlite", ".sqlite3", ".db")):
        return str(Path(name))
    return str(Path(base_dir) / f"{name}.sqlite")


def _sql_type(t: SqlType) -> str:
    return "INTEGER" if t.base == "integer" else f"VARCHAR({t.size or 255})"


class SqliteBackend:
    """One evaluation's handle on the working database."""

    def __init__(
        self,
        path: Union[str, Path],
        profile: BackendProfile = BackendProfile(),
        timeout_seconds: Optional[float] = None,
        debug: bool = False,
    ):
        self.path = str(path)
        self.profile = profile
        self.debug = debug
        self.con = sqlite3.connect(self.path, isolation_level=None)
        self._deadline: Optional[float] = None
        if timeout_seconds is not None:
            self.set_deadline(timeout_seconds)

    def set_deadline(self, seconds_from_now: float):
        self._deadline = time.monotonic() + seconds_from_now
        self.con.set_progress_handler(self._check_deadline, 100_000)

    def _check_deadline(self):
        return 1 if self._deadline and time.monotonic() > self._deadline else 0

    def close(self):
        self.con.close()

    # -- statement execution -------------------------------------------------

    def execute(self, statement: Union[SqlStatement, str], params: Sequence = ()) -> int:
        """Run one statement; returns the affected row count for inserts."""
        sql = (
            render_statement(statement, self.profile.dialect)
            if isinstance(statement, SqlStatement)
            else statement
        )
        if self._deadline and time.monotonic() > self._deadline:
            raise EvaluationTimeout(f"evaluation deadline passed before: {sql}")
        try:
            cur = self.con.execute(sql, params)
        except sqlite3.OperationalError as e:
            if "interrupt" in str(e).lower():
                raise EvaluationTimeout(f"statement exceeded the evaluation deadline: {sql}")
            raise BackendError(f"{e} -- while executing: {sql}") from e
        except sqlite3.Error as e:
            raise BackendError(f"{e} -- while executing: {sql}") from e
        return max(cur.rowcount, 0)

    def fetch(self, sql: str, params: Sequence = ()) -> list[tuple]:
        try:
            return [tuple(r) for r in self.con.execute(sql, params).fetchall()]
        except sqlite3.OperationalError as e:
            if "interrupt" in str(e).lower():
                raise EvaluationTimeout(f"query exceeded the evaluation deadline: {sql}")
            raise BackendError(f"{e} -- while executing: {sql}") from e

    def count(self, table: str) -> int:
        return self.fetch(f"SELECT COUNT(*) FROM {table}")[0][0]

    def rows(self, table: str) -> set[tuple]:
        return set(self.fetch(f"SELECT * FROM {table}"))

    # -- table lifecycle -----------------------------------------------------

    def table_exists(self, name: str) -> bool:
        return bool(
            self.fetch(
                "SELECT 1 FROM sqlite_master WHERE name = ? AND type IN ('table','view')", (name,)
            )
        )

    def columns(self, table: str) -> list[str]:
        return [r[1] for r in self.fetch(f"PRAGMA table_info({table})")]

    def column_types(self, table: str) -> list[SqlType]:
        out = []
        for r in self.fetch(f"PRAGMA table_info({table})"):
            decl = (r[2] or "").upper()
            if "INT" in decl:
                out.append(INTEGER)
            elif "VARCHAR" in decl or "CHAR" in decl or "TEXT" in decl:
                out.append(VARCHAR255)
            else:
                out.append(VARCHAR255)
        return out

    def create_table(self, name: str, attrs: Sequence[str], types: Sequence[SqlType]):
        cols = ", ".join(f"{a} {_sql_type(t)}" for a, t in zip(attrs, types))
        self.execute(f"CREATE TABLE {name} ({cols})")

    def drop(self, name: str, kind: str = "TABLE"):
        try:
            self.execute(f"DROP {kind} IF EXISTS {name}")
        except BackendError as e:
            log.warning("cleanup failed for %s %s: %s", kind.lower(), name, e)

    def load_rows(self, table: str, rows: Iterable[tuple], chunk_size: int = 50_000):
        """Bulk insert; consumes the iterable in chunks so arbitrarily large
        fact streams never materialize in memory."""
        it = iter(rows)
        first = next(it, None)
        if first is None:
            return
        placeholders = ", ".join("?" * len(first))
        sql = f"INSERT INTO {table} VALUES ({placeholders})"
        self.con.execute("BEGIN")
        try:
            chunk = [first]
            for row in it:
                chunk.append(row)
                if len(chunk) >= chunk_size:
                    self.con.executemany(sql, chunk)
                    chunk = []
            if chunk:
                self.con.executemany(sql, chunk)
            self.con.execute("COMMIT")
        except sqlite3.Error as e:
            self.con.execute("ROLLBACK")
            raise BackendError(f"bulk load into {table} failed: {e}") from e

    def deduplicate(self, table: str, attrs: Sequence[str]):
        group = ", ".join(attrs)
        self.execute(
            f"DELETE FROM {table} WHERE rowid NOT IN (SELECT MIN(rowid) FROM {table} GROUP BY {group})"
        )

    # -- cross-database movement ----------------------------------------------

    def copy_from(self, src_path: str, src_table: str, dst_table: str):
        self.execute("ATTACH DATABASE ? AS src", (src_path,))
        try:
            self.execute(f"INSERT INTO {dst_table} SELECT * FROM src.{src_table}")
        finally:
            self.execute("DETACH DATABASE src")

    def materialize_query(self, query: str, dst_table: str, src_path: Optional[str] = None):
        if src_path is None:
            self.execute(f"INSERT INTO {dst_table} {query}")
            return
        self.execute("ATTACH DATABASE ? AS src", (src_path,))
        try:
            rewritten = _qualify_tables(query, self._attached_tables("src"))
            self.execute(f"INSERT INTO {dst_table} {rewritten}")
        finally:
            self.execute("DETACH DATABASE src")

    def _attached_tables(self, schema: str) -> list[str]:
        return [
            r[0]
            for r in self.fetch(
                f"SELECT name FROM {schema}.sqlite_master WHERE type IN ('table','view')"
            )
        ]

    def copy_to(
        self,
        dst_path: str,
        src_table: str,
        dst_table: str,
        attrs: Sequence[str],
        types: Sequence[SqlType],
        append: bool,
    ):
        self.execute("ATTACH DATABASE ? AS dst", (dst_path,))
        try:
            exists = bool(
                self.fetch(
                    "SELECT 1 FROM dst.sqlite_master WHERE name = ? AND type = 'table'",
                    (dst_table,),
                )
            )
            if exists and not append:
                self.execute(f"DROP TABLE dst.{dst_table}")
                exists = False
            if not exists:
                cols = ", ".join(f"{a} {_sql_type(t)}" for a, t in zip(attrs, types))
                self.execute(f"CREATE TABLE dst.{dst_table} ({cols})")
            self.execute(f"INSERT INTO dst.{dst_table} SELECT * FROM {src_table}")
        finally:
            self.execute("DETACH DATABASE dst")


def _qualify_tables(query: str, tables: list[str]) -> str:
    """Prefix bare table names in an AS (...) query with the attached schema.

    Token-level rewrite: an identifier matching an attached table name that is
    not already qualified and not a column reference gets the src. prefix.
    """
    import re

    names = {t.lower() for t in tables}

    def sub(m):
        word = m.group(0)
        start = m.start()
        if word.lower() in names and (start == 0 or query[start - 1] != "."):
            end = m.end()
            if end < len(query) and query[end] == ".":
                return f"src.{word}"
            return f"src.{word}"
        return word

    return re.sub(r"[A-Za-z_][A-Za-z0-9_]*", sub, query)


# ---------------------------------------------------------------------------
# Table binding
# ---------------------------------------------------------------------------


def _arith_positions(program: Program) -> set[tuple[str, int]]:
    """(predicate, position) pairs holding a variable that feeds an arithmetic
    builtin or a summed/averaged set variable; these must be integers."""
    marked: set[tuple[str, int]] = set()
    for rule in program.rules:
        int_vars: set[str] = set()
        for lit in rule.body:
            if lit.is_builtin and lit.payload.is_arithmetic:
                int_vars.update(lit.payload.variables())
            if lit.is_aggregate and lit.payload.func in ("#sum", "#avg"):
                first = lit.payload.sset.vars[0]
                if first.is_var:
                    int_vars.add(str(first.value))
        if not int_vars:
            continue
        atoms = [rule.head] + rule.body_atoms()
        for lit in rule.body:
            if lit.is_aggregate:
                atoms.extend(lit.payload.sset.conj)
        for atom in atoms:
            for i, t in enumerate(atom.args):
                if t.is_var and str(t.value) in int_vars:
                    marked.add((atom.pred, i))
    return marked


_UNKNOWN, _INT, _TEXT = 0, 1, 2  # inference lattice: unknown < int < text


def infer_types(
    program: Program, fixed: dict[str, tuple[SqlType, ...]]
) -> dict[str, tuple[SqlType, ...]]:
    """Column types for predicates without declarations.

    Types flow from facts, constants, declared columns, and arithmetic
    through head variables to a fixpoint; a position fed only by integers
    becomes INTEGER, anything reached by a string stays VARCHAR.  Set
    operators in the storage engine compare values without affinity
    coercion, so derived tables must carry the types of the values that
    actually flow into them.
    """
    arities = program.arities()
    arith = _arith_positions(program)
    state: dict[str, list[int]] = {}
    for pred, arity in arities.items():
        if pred in fixed:
            state[pred] = [
                _INT if t.base == "integer" else _TEXT for t in fixed[pred]
            ]
        else:
            state[pred] = [_UNKNOWN] * arity

    def merge(pred: str, i: int, value: int) -> bool:
        if pred in fixed or value <= state[pred][i]:
            return False
        state[pred][i] = max(state[pred][i], value)
        return True

    def term_source(t, rule) -> int:
        if t.kind == "int":
            return _INT
        if t.kind == "str":
            return _TEXT
        name = str(t.value)
        for atom in rule.body_atoms(negated=False):
            for j, arg in enumerate(atom.args):
                if arg.is_var and str(arg.value) == name:
                    return state[atom.pred][j]
        return _INT  # bound only by builtins: an expression or the range table

    changed = True
    while changed:
        changed = False
        for fact in program.facts:
            for i, t in enumerate(fact.args):
                changed |= merge(fact.pred, i, _INT if t.kind == "int" else _TEXT)
        for rule in program.rules:
            if rule.is_fact:
                continue
            for i, t in enumerate(rule.head.args):
                changed |= merge(rule.head.pred, i, term_source(t, rule))

    out: dict[str, tuple[SqlType, ...]] = {}
    for pred, arity in arities.items():
        if pred in fixed:
            out[pred] = fixed[pred]
            continue
        types = []
        for i in range(arity):
            if state[pred][i] == _INT or (pred, i) in arith:
                types.append(INTEGER)
            else:
                types.append(VARCHAR255)
        out[pred] = tuple(types)
    return out


def bind_tables(
    program: Program,
    directives: DirectiveSet,
    backend: SqliteBackend,
    internal_preds: frozenset[str] = frozenset(),
) -> dict[str, RelationBinding]:
    """Resolve the predicate/table correspondence.

    Explicit USE/CREATE definitions are honored; an unmapped predicate whose
    name matches an arity-compatible working table gets an implicit USE, and
    any other unmapped predicate gets an implicit CREATE.
    """
    arities = program.arities()
    declared = {td.predicate: td for td in directives.tables}

    # phase 1: collect the positions whose types are already pinned down
    fixed: dict[str, tuple[SqlType, ...]] = {}
    probed_working: dict[str, tuple[str, ...]] = {}
    for pred, arity in arities.items():
        td = declared.get(pred)
        if td is not None:
            if td.mapto_types and len(td.mapto_types) != arity:
                raise BackendError(
                    f"MAPTO for '{pred}' declares {len(td.mapto_types)} types but the "
                    f"predicate has arity {arity}"
                )
            if td.attrs and len(td.attrs) != arity:
                raise BackendError(
                    f"table '{td.table}' declares {len(td.attrs)} attributes but predicate "
                    f"'{pred}' has arity {arity}"
                )
            if td.mode == "USE" and td.as_query is None and td.from_db is None:
                if not backend.table_exists(td.table):
                    raise BackendError(
                        f"USE table '{td.table}' does not exist in the working database"
                    )
                cols = backend.columns(td.table)
                if len(cols) != arity:
                    raise BackendError(
                        f"USE table '{td.table}' has {len(cols)} columns but predicate "
                        f"'{pred}' has arity {arity}"
                    )
                probed_working[pred] = tuple(cols)
                fixed[pred] = td.mapto_types or tuple(backend.column_types(td.table))
            elif td.mapto_types:
                fixed[pred] = td.mapto_types
        elif backend.table_exists(pred):
            cols = backend.columns(pred)
            if len(cols) != arity:
                raise BackendError(
                    f"working table '{pred}' has {len(cols)} columns but predicate "
                    f"'{pred}' has arity {arity}"
                )
            probed_working[pred] = tuple(cols)
            fixed[pred] = tuple(backend.column_types(pred))

    types_for = infer_types(program, fixed)

    # phase 2: build the bindings
    bindings: dict[str, RelationBinding] = {}
    for pred, arity in arities.items():
        td = declared.get(pred)
        types = types_for[pred]
        if td is None:
            internal = pred in internal_preds or pred.startswith("aux__")
            if pred in probed_working:
                bindings[pred] = RelationBinding(
                    pred, pred, probed_working[pred], types, "use-working", internal=internal
                )
            else:
                bindings[pred] = RelationBinding(
                    pred, pred, default_attrs(arity), types, "created", internal=internal
                )
            continue
        attrs = td.attrs or probed_working.get(pred) or default_attrs(arity)
        if td.mode == "CREATE":
            bindings[pred] = RelationBinding(
                pred, td.table, attrs, types, "created", keep=td.keep
            )
        elif td.as_query is not None:
            bindings[pred] = RelationBinding(
                pred, td.table, attrs, types, "as-query", from_db=td.from_db,
                as_query=td.as_query,
            )
        elif td.from_db is not None:
            bindings[pred] = RelationBinding(
                pred, td.table, attrs, types, "use-external", from_db=td.from_db
            )
        else:
            bindings[pred] = RelationBinding(
                pred, td.table, probed_working[pred], types, "use-working"
            )

    for pred in declared:
        if pred not in arities:
            log.debug("directive maps predicate '%s' which the program never uses", pred)
    return bindings


# ---------------------------------------------------------------------------
# Staging, export, cleanup
# ---------------------------------------------------------------------------


def read_fact_csv(path: Union[str, Path], arity: Optional[int] = None) -> list[tuple]:
    """One row per tuple, no header, comma-separated, quotes optional.
    Digit-only fields load as integers; empty fields are rejected (the
    relational model here is null-free)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record:
                continue
            if arity is None:
                arity = len(record)
            if len(record) != arity:
                raise BackendError(
                    f"{path}:{lineno}: row has {len(record)} fields, expected {arity}"
                )
            row = []
            for value in record:
                if value == "":
                    raise BackendError(f"{path}:{lineno}: empty field (nulls are not allowed)")
                row.append(int(value) if _is_int(value) else value)
            rows.append(tuple(row))
    return rows


def _is_int(s: str) -> bool:
    return s.isdigit() or (s.startswith("-") and s[1:].isdigit())


def stage_inputs(
    plan: ProgramPlan,
    program: Program,
    backend: SqliteBackend,
    base_dir: Union[str, Path] = ".",
    extra_facts: Optional[dict[str, Iterable[tuple]]] = None,
):
    """Materialize every input the evaluation reads: created tables, external
    copies, AS-query views, program facts, bulk fact rows, the integer range
    table, and the per-predicate delta tables."""
    bindings = plan.bindings
    for binding in bindings.values():
        if binding.source in ("created", "as-query", "use-external"):
            backend.drop(binding.table)
            backend.create_table(binding.table, binding.attrs, binding.types)
        if binding.source == "use-external":
            src = resolve_database_path(binding.from_db, base_dir)
            backend.copy_from(src, binding.table, binding.table)
        elif binding.source == "as-query":
            src = (
                resolve_database_path(binding.from_db, base_dir) if binding.from_db else None
            )
            backend.materialize_query(binding.as_query, binding.table, src)

    loaded: set[str] = set()
    by_pred: dict[str, list[tuple]] = {}
    for fact in program.facts:
        by_pred.setdefault(fact.pred, []).append(tuple(t.value for t in fact.args))
    for pred, rows in (extra_facts or {}).items():
        by_pred.setdefault(pred, []).extend(tuple(r) for r in rows)
    for pred, rows in by_pred.items():
        binding = bindings.get(pred)
        if binding is None:
            raise BackendError(f"no table binding for fact predicate '{pred}'")
        if rows and len(rows[0]) != binding.arity:
            raise BackendError(
                f"facts for '{pred}' have arity {len(rows[0])}, table expects {binding.arity}"
            )
        backend.load_rows(binding.table, rows)
        loaded.add(pred)

    # inputs are sets: collapse duplicates from user tables or repeated facts
    for binding in bindings.values():
        if binding.source == "view":
            continue
        if binding.pred in loaded or binding.source.startswith("use"):
            backend.deduplicate(binding.table, binding.attrs)

    if plan.uses_range_table:
        backend.drop(RANGE_TABLE)
        backend.create_table(RANGE_TABLE, ("att_1",), (INTEGER,))
        backend.load_rows(RANGE_TABLE, [(i,) for i in range(plan.maxint + 1)])

    for cp in plan.component_plans:
        for binding in plan.recursive_tables(cp.component):
            for prefix in (DELTA_PREFIX, PREV_DELTA_PREFIX):
                backend.drop(prefix + binding.table)
                backend.create_table(prefix + binding.table, binding.attrs, binding.types)


def export_outputs(
    directives: DirectiveSet,
    bindings: dict[str, RelationBinding],
    backend: SqliteBackend,
    base_dir: Union[str, Path] = ".",
):
    for out in directives.outputs:
        if out.kind == "DBOUTPUT":
            path = resolve_database_path(out.target, base_dir)
            for binding in bindings.values():
                if binding.internal or binding.source == "view":
                    continue
                backend.copy_to(
                    path, binding.table, binding.table, binding.attrs, binding.types,
                    append=out.mode == "APPEND",
                )
            continue
        binding = bindings.get(out.pred)
        if binding is None:
            raise BackendError(f"OUTPUT names unknown predicate '{out.pred}'")
        target_table = out.alias or out.pred
        if out.target is None:
            # no IN clause: the copy lands in the working database itself
            if out.mode != "APPEND" or not backend.table_exists(target_table):
                backend.drop(target_table)
                backend.create_table(target_table, binding.attrs, binding.types)
            backend.execute(f"INSERT INTO {target_table} SELECT * FROM {binding.table}")
        else:
            path = resolve_database_path(out.target, base_dir)
            backend.copy_to(
                path, binding.table, target_table, binding.attrs, binding.types,
                append=out.mode == "APPEND",
            )


def cleanup(plan: ProgramPlan, backend: SqliteBackend, keep_temp: bool = False):
    """Drop evaluation temporaries; best-effort, never raises."""
    for cp in plan.component_plans:
        for stmt in cp.views:
            backend.drop(stmt.target, kind="VIEW")
    for cp in plan.component_plans:
        for binding in plan.recursive_tables(cp.component):
            backend.drop(DELTA_PREFIX + binding.table)
            backend.drop(PREV_DELTA_PREFIX + binding.table)
    if plan.uses_range_table:
        backend.drop(RANGE_TABLE)
    if keep_temp:
        return
    for binding in plan.bindings.values():
        if binding.source == "created" and not binding.keep:
            backend.drop(binding.table)
