"""Rule-to-SQL translation.

Every rule becomes one non-recursive INSERT ... SELECT statement.  Recursive
rules become a single INSERT into the head's delta table whose body is the
union of 2^r - 1 branches, where r is the number of body occurrences of
same-component predicates: branch i substitutes occurrence j with the
previous-iteration delta table when bit j of i is set and with the
accumulated table otherwise.  Every branch subtracts the statement's target,
and delta statements additionally subtract the accumulated table and the
previous delta, so executing a statement never re-derives a known tuple.

Statements are built structurally and rendered per backend profile: the
generic profile uses EXCEPT (compound set operators associate left, which
gives each branch's subtraction exactly per-branch scope), the no-except
profile folds every subtraction into NOT EXISTS conjuncts under SELECT
DISTINCT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .analysis import Component, StratumPlan
from .ast import (
    Atom,
    BuiltinAtom,
    ConnectionSpec,
    Literal,
    Program,
    Rule,
    SqlType,
    Term,
    INTEGER,
    VARCHAR255,
)

RANGE_TABLE = "aux__intrange"
DELTA_PREFIX = "d_"
PREV_DELTA_PREFIX = "d1_"


class CodegenError(Exception):
    pass


@dataclass(frozen=True)
class RelationBinding:
    """Positional correspondence between one predicate and one table."""

    pred: str
    table: str
    attrs: tuple[str, ...]
    types: tuple[SqlType, ...]
    source: str  # use-working | use-external | as-query | created | view
    keep: bool = False
    from_db: Optional[ConnectionSpec] = None
    as_query: Optional[str] = None
    internal: bool = False

    @property
    def arity(self) -> int:
        return len(self.attrs)


def default_attrs(arity: int) -> tuple[str, ...]:
    return tuple(f"att_{i + 1}" for i in range(arity))


def sql_literal(t: Term) -> str:
    if t.kind == "int":
        return str(t.value)
    s = str(t.value).replace("'", "''")
    return f"'{s}'"


@dataclass
class SelectBranch:
    select: list[str]
    from_items: list[tuple[str, Optional[str]]]  # (table, alias or None)
    where: list[str]
    except_tables: list[str]
    select_types: list[SqlType] = field(default_factory=list)

    def core_sql(self) -> str:
        parts = [f"SELECT {', '.join(self.select)}"]
        if self.from_items:
            rendered = [t if a is None else f"{t} AS {a}" for t, a in self.from_items]
            parts.append(f"FROM {', '.join(rendered)}")
        if self.where:
            parts.append(f"WHERE {' AND '.join(self.where)}")
        return " ".join(parts)


@dataclass
class SqlStatement:
    kind: str  # insert-select | create-view
    target: str
    role: str  # exit-rule | delta-rule | aggregate-view
    branches: list[SelectBranch] = field(default_factory=list)
    trailing_excepts: list[str] = field(default_factory=list)
    except_columns: dict[str, tuple[str, ...]] = field(default_factory=dict)
    view_select: list[str] = field(default_factory=list)  # create-view only
    view_from: str = ""
    view_group_by: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return render_statement(self)


def render_statement(stmt: SqlStatement, dialect: str = "generic") -> str:
    if stmt.kind == "create-view":
        sql = f"CREATE VIEW {stmt.target} AS SELECT {', '.join(stmt.view_select)} FROM {stmt.view_from}"
        if stmt.view_group_by:
            sql += f" GROUP BY {', '.join(stmt.view_group_by)}"
        return sql
    if dialect == "no-except":
        return _render_not_exists(stmt)
    pieces = []
    for i, br in enumerate(stmt.branches):
        if i:
            pieces.append("UNION")
        pieces.append(br.core_sql())
        for t in br.except_tables:
            pieces.append(f"EXCEPT SELECT * FROM {t}")
    for t in stmt.trailing_excepts:
        pieces.append(f"EXCEPT SELECT * FROM {t}")
    return f"INSERT INTO {stmt.target} " + " ".join(pieces)


def _render_not_exists(stmt: SqlStatement) -> str:
    pieces = []
    for i, br in enumerate(stmt.branches):
        if i:
            pieces.append("UNION")
        conds = list(br.where)
        for t in dict.fromkeys(br.except_tables + stmt.trailing_excepts):
            # the subtracted table may also appear in the branch FROM list, so
            # the correlated subquery needs its own alias to avoid shadowing
            cols = stmt.except_columns[t]
            eqs = " AND ".join(f"excl__.{c} = {e}" for c, e in zip(cols, br.select))
            conds.append(f"NOT EXISTS (SELECT 1 FROM {t} AS excl__ WHERE {eqs})")
        parts = [f"SELECT DISTINCT {', '.join(br.select)}"]
        if br.from_items:
            rendered = [t if a is None else f"{t} AS {a}" for t, a in br.from_items]
            parts.append(f"FROM {', '.join(rendered)}")
        if conds:
            parts.append(f"WHERE {' AND '.join(conds)}")
        pieces.append(" ".join(parts))
    return f"INSERT INTO {stmt.target} " + " ".join(pieces)


# ---------------------------------------------------------------------------
# Aggregate views
# ---------------------------------------------------------------------------

_AGG_SQL = {"#count": "COUNT", "#sum": "SUM", "#min": "MIN", "#max": "MAX"}


@dataclass(frozen=True)
class AvgGuard:
    """Exact-rational average comparison: SUM cmp guard * COUNT."""

    sum_var: str
    count_var: str
    cmp: str
    guard: Term


def rewrite_aggregates(
    rule: Rule,
    bindings: dict[str, RelationBinding],
    view_registry: Optional[dict] = None,
) -> tuple[list[SqlStatement], dict[str, RelationBinding], Rule, list[AvgGuard]]:
    """Turn each (standardized) aggregate literal into a support view plus a
    plain atom over it, guarded by a comparison on the view's aggregate
    column.  Returns the view statements, bindings for the view tables, the
    rewritten rule, and any average guards that need custom conditions.

    ``view_registry`` deduplicates views across rules: the same (relation,
    function, grouping) combination reuses one view, a different aggregation
    over the same relation gets a distinct name.
    """
    views: list[SqlStatement] = []
    view_bindings: dict[str, RelationBinding] = {}
    avg_guards: list[AvgGuard] = []
    new_body: list[Literal] = []
    registry = view_registry if view_registry is not None else {}
    fresh = 0
    for lit in rule.body:
        if not lit.is_aggregate:
            new_body.append(lit)
            continue
        agg = lit.payload
        if len(agg.sset.conj) != 1:
            raise CodegenError("aggregate not standardized: conjunction is not a single atom")
        aux = agg.sset.conj[0]
        aux_binding = bindings[aux.pred]
        set_var_names = [str(t.value) for t in agg.sset.vars]
        group_vars = [v for v in aux.variables() if v not in set_var_names]
        aggr_var = set_var_names[0]

        def attr_of(var: str) -> str:
            idx = [str(t.value) for t in aux.args].index(var)
            return f"{aux_binding.table}.{aux_binding.attrs[idx]}"

        def type_of(var: str) -> SqlType:
            idx = [str(t.value) for t in aux.args].index(var)
            return aux_binding.types[idx]

        signature = (
            aux_binding.table,
            agg.func,
            tuple(attr_of(v) for v in group_vars),
            attr_of(aggr_var),
        )
        existing = registry.get(signature)
        if existing is not None:
            view_name, emit_view = existing, False
        else:
            base = f"{aux_binding.table}_supp"
            taken = set(registry.values())
            view_name = base
            n = 2
            while view_name in taken:
                view_name = f"{base}_{n}"
                n += 1
            registry[signature] = view_name
            emit_view = True
        n_group = len(group_vars)
        col_types = [type_of(v) for v in group_vars]
        if agg.func == "#avg":
            n_cols = n_group + 2
            cols = default_attrs(n_cols)
            select = [f"{attr_of(v)} AS {cols[i]}" for i, v in enumerate(group_vars)]
            select.append(f"SUM({attr_of(aggr_var)}) AS {cols[n_group]}")
            select.append(f"COUNT({attr_of(aggr_var)}) AS {cols[n_group + 1]}")
            col_types += [INTEGER, INTEGER]
        else:
            n_cols = n_group + 1
            cols = default_attrs(n_cols)
            select = [f"{attr_of(v)} AS {cols[i]}" for i, v in enumerate(group_vars)]
            select.append(f"{_AGG_SQL[agg.func]}({attr_of(aggr_var)}) AS {cols[n_group]}")
            # count and sum are numeric; min and max keep the column's type
            col_types.append(INTEGER if agg.func in ("#count", "#sum") else type_of(aggr_var))
        if emit_view:
            # a grand total over an empty table would still yield one row, but
            # an absent group must yield none: grouping by a constant arranges
            # that
            group_by = [attr_of(v) for v in group_vars] or ["'all'"]
            views.append(
                SqlStatement(
                    kind="create-view",
                    target=view_name,
                    role="aggregate-view",
                    view_select=select,
                    view_from=aux_binding.table,
                    view_group_by=group_by,
                )
            )
        view_bindings[view_name] = RelationBinding(
            pred=view_name,
            table=view_name,
            attrs=cols,
            types=tuple(col_types),
            source="view",
            internal=True,
        )

        fresh += 1
        if agg.func == "#avg":
            sum_var = f"_aggsum_{fresh}"
            count_var = f"_aggcount_{fresh}"
            supp_args = tuple(Term("var", v) for v in group_vars) + (
                Term("var", sum_var),
                Term("var", count_var),
            )
            new_body.append(Literal(Atom(view_name, supp_args)))
            avg_guards.append(AvgGuard(sum_var, count_var, agg.cmp, agg.guard))
        else:
            agg_var = f"_aggval_{fresh}"
            supp_args = tuple(Term("var", v) for v in group_vars) + (Term("var", agg_var),)
            new_body.append(Literal(Atom(view_name, supp_args)))
            new_body.append(Literal(BuiltinAtom(agg.cmp, (Term("var", agg_var), agg.guard))))
    return views, view_bindings, Rule(rule.head, tuple(new_body), rule.span), avg_guards


# ---------------------------------------------------------------------------
# Branch construction
# ---------------------------------------------------------------------------


class _BranchBuilder:
    def __init__(
        self,
        rule: Rule,
        bindings: dict[str, RelationBinding],
        maxint: int,
        table_overrides: Optional[dict[int, str]] = None,
        avg_guards: tuple[AvgGuard, ...] = (),
    ):
        self.rule = rule
        self.bindings = bindings
        self.maxint = maxint
        self.overrides = table_overrides or {}
        self.avg_guards = avg_guards
        self.from_items: list[tuple[str, Optional[str]]] = []
        self.where: list[str] = []
        self.var_expr: dict[str, str] = {}
        self.var_type: dict[str, SqlType] = {}
        self._table_counts: dict[str, int] = {}
        self._expr_builtins: set[int] = set()

    def _add_table(self, table: str) -> str:
        n = self._table_counts.get(table, 0)
        self._table_counts[table] = n + 1
        alias = None if n == 0 else f"{table}_{n}"
        self.from_items.append((table, alias))
        return alias or table

    def build(self) -> SelectBranch:
        rule = self.rule
        positives = [
            (idx, lit.payload)
            for idx, lit in enumerate(rule.body)
            if lit.is_standard and not lit.negated
        ]
        for idx, atom in positives:
            binding = self.bindings[atom.pred]
            table = self.overrides.get(idx, binding.table)
            ref = self._add_table(table)
            for i, t in enumerate(atom.args):
                col = f"{ref}.{binding.attrs[i]}"
                if t.is_const:
                    self.where.append(f"{col} = {sql_literal(t)}")
                else:
                    name = str(t.value)
                    if name in self.var_expr:
                        self.where.append(f"{self.var_expr[name]} = {col}")
                    else:
                        self.var_expr[name] = col
                        self.var_type[name] = binding.types[i]

        self._bind_builtin_vars()

        for lit in rule.body:
            if lit.is_builtin:
                self._builtin_condition(lit.payload)
            elif lit.is_standard and lit.negated:
                self._negation_condition(lit.payload)
            elif lit.is_aggregate:
                raise CodegenError("aggregate literal reached branch builder unrewritten")

        for g in self.avg_guards:
            guard = self._value(g.guard)
            self.where.append(
                f"{self.var_expr[g.sum_var]} {_sql_op(g.cmp)} {guard} * {self.var_expr[g.count_var]}"
            )

        select, select_types = [], []
        for t in rule.head.args:
            if t.is_const:
                select.append(sql_literal(t))
                select_types.append(INTEGER if t.kind == "int" else VARCHAR255)
            elif str(t.value) in self.var_expr:
                select.append(self.var_expr[str(t.value)])
                select_types.append(self.var_type.get(str(t.value), VARCHAR255))
            else:
                raise CodegenError(f"unbound head variable '{t.value}' in rule {rule}")
        if not select:
            raise CodegenError("zero-arity heads cannot be stored relationally")
        return SelectBranch(select, self.from_items, self.where, [], select_types)

    def _bind_builtin_vars(self):
        # pass 1: arithmetic results become expressions over bound operands
        changed = True
        while changed:
            changed = False
            for lit in self.rule.body:
                if not (lit.is_builtin and lit.payload.is_arithmetic):
                    continue
                a, b, c = lit.payload.args
                if (
                    c.is_var
                    and str(c.value) not in self.var_expr
                    and self._is_bound(a)
                    and self._is_bound(b)
                ):
                    if self.maxint <= 0:
                        raise CodegenError(
                            f"variable '{c.value}' needs #maxint bounding but #maxint is 0"
                        )
                    expr = f"{self._operand(a)} {lit.payload.op} {self._operand(b)}"
                    self.var_expr[str(c.value)] = expr
                    self.var_type[str(c.value)] = INTEGER
                    self.where.append(f"{expr} <= {self.maxint}")
                    self.where.append(f"{expr} >= 0")
                    self._expr_builtins.add(id(lit.payload))
                    changed = True
        # pass 2: anything still unbound ranges over the admissible integers
        for lit in self.rule.body:
            if not lit.is_builtin:
                continue
            for t in lit.payload.args:
                if t.is_var and str(t.value) not in self.var_expr:
                    if self.maxint <= 0:
                        raise CodegenError(
                            f"variable '{t.value}' needs #maxint bounding but #maxint is 0"
                        )
                    ref = self._add_table(RANGE_TABLE)
                    self.var_expr[str(t.value)] = f"{ref}.att_1"
                    self.var_type[str(t.value)] = INTEGER

    def _is_bound(self, t: Term) -> bool:
        return t.is_const or str(t.value) in self.var_expr

    def _operand(self, t: Term, for_arith: bool = True) -> str:
        if t.is_const:
            if for_arith and t.kind != "int":
                raise CodegenError(f"arithmetic over non-integer constant {t.value!r}")
            return sql_literal(t)
        name = str(t.value)
        if for_arith and self.var_type.get(name, INTEGER).base != "integer":
            raise CodegenError(f"arithmetic over varchar attribute bound to '{name}'")
        expr = self.var_expr[name]
        return f"({expr})" if " " in expr else expr

    def _value(self, t: Term) -> str:
        return sql_literal(t) if t.is_const else self.var_expr[str(t.value)]

    def _builtin_condition(self, b: BuiltinAtom):
        if b.is_comparison:
            lhs, rhs = self._value(b.args[0]), self._value(b.args[1])
            if b.op == "=" and lhs == rhs:
                return  # trivially true
            self.where.append(f"{lhs} {_sql_op(b.op)} {rhs}")
            return
        if id(b) in self._expr_builtins:
            return  # relation holds by expression substitution
        a, b_, c = b.args
        self.where.append(f"{self._operand(a)} {b.op} {self._operand(b_)} = {self._operand(c)}")

    def _negation_condition(self, atom: Atom):
        binding = self.bindings[atom.pred]
        table = binding.table
        sub_where = []
        lhs, sub_select = [], []
        for i, t in enumerate(atom.args):
            col = f"{table}.{binding.attrs[i]}"
            if t.is_const:
                sub_where.append(f"{col} = {sql_literal(t)}")
            else:
                lhs.append(self.var_expr[str(t.value)])
                sub_select.append(col)
        if not lhs:
            cond = f"SELECT 1 FROM {table}"
            if sub_where:
                cond += f" WHERE {' AND '.join(sub_where)}"
            self.where.append(f"NOT EXISTS ({cond})")
            return
        sub = f"SELECT {', '.join(sub_select)} FROM {table}"
        if sub_where:
            sub += f" WHERE {' AND '.join(sub_where)}"
        if len(lhs) == 1:
            self.where.append(f"{lhs[0]} NOT IN ({sub})")
        else:
            self.where.append(f"({', '.join(lhs)}) NOT IN ({sub})")


def _sql_op(op: str) -> str:
    return "<>" if op == "!=" else op


def _sql_type_name(t: SqlType) -> str:
    return "INTEGER" if t.base == "integer" else f"VARCHAR({t.size or 255})"


def _apply_casts(branch: SelectBranch, target_types: tuple[SqlType, ...]):
    """Set operators compare stored values without affinity coercion, so a
    select expression whose source type differs from the target column's
    type is cast explicitly, keeping subtraction sound."""
    for i, (expr, src) in enumerate(zip(branch.select, branch.select_types)):
        if i < len(target_types) and src.base != target_types[i].base:
            branch.select[i] = f"CAST({expr} AS {_sql_type_name(target_types[i])})"
            branch.select_types[i] = target_types[i]


# ---------------------------------------------------------------------------
# Rule and component translation
# ---------------------------------------------------------------------------


def translate_nonrecursive(
    rule: Rule,
    bindings: dict[str, RelationBinding],
    maxint: int = 0,
    avg_guards: tuple[AvgGuard, ...] = (),
) -> SqlStatement:
    """One INSERT statement for a non-recursive rule (positive atoms,
    negation, builtins; aggregates must have been rewritten first)."""
    head_binding = bindings[rule.head.pred]
    target = head_binding.table
    branch = _BranchBuilder(rule, bindings, maxint, avg_guards=avg_guards).build()
    _apply_casts(branch, head_binding.types)
    branch.except_tables = [target]
    return SqlStatement(
        kind="insert-select",
        target=target,
        role="exit-rule",
        branches=[branch],
        except_columns={target: head_binding.attrs},
    )


def translate_recursive(
    rule: Rule,
    bindings: dict[str, RelationBinding],
    component_preds: frozenset[str],
    maxint: int = 0,
    avg_guards: tuple[AvgGuard, ...] = (),
) -> SqlStatement:
    """The differential statement: 2^r - 1 branches into the head's delta."""
    rec_positions = [
        idx
        for idx, lit in enumerate(rule.body)
        if lit.is_standard and not lit.negated and lit.payload.pred in component_preds
    ]
    r = len(rec_positions)
    if r == 0:
        raise CodegenError("rule is not recursive in its component")

    head_binding = bindings[rule.head.pred]
    base = head_binding.table
    d_table = DELTA_PREFIX + base
    d1_table = PREV_DELTA_PREFIX + base

    branches = []
    except_columns = {d_table: head_binding.attrs, d1_table: head_binding.attrs, base: head_binding.attrs}
    for i in range(1, 2**r):
        overrides = {}
        for j, idx in enumerate(rec_positions):
            atom = rule.body[idx].payload
            occ_base = bindings[atom.pred].table
            use_delta = (i >> j) & 1
            overrides[idx] = PREV_DELTA_PREFIX + occ_base if use_delta else occ_base
        branch = _BranchBuilder(
            rule, bindings, maxint, table_overrides=overrides, avg_guards=avg_guards
        ).build()
        _apply_casts(branch, head_binding.types)
        branch.except_tables = [d_table]
        branches.append(branch)

    return SqlStatement(
        kind="insert-select",
        target=d_table,
        role="delta-rule",
        branches=branches,
        trailing_excepts=[d1_table, base],
        except_columns=except_columns,
    )


@dataclass
class RulePlan:
    """Execution-ordered statements for one component."""

    component: Component
    views: list[SqlStatement] = field(default_factory=list)
    exit_statements: list[SqlStatement] = field(default_factory=list)
    delta_statements: list[SqlStatement] = field(default_factory=list)

    def all_statements(self) -> list[SqlStatement]:
        return self.views + self.exit_statements + self.delta_statements


@dataclass
class ProgramPlan:
    component_plans: list[RulePlan]
    bindings: dict[str, RelationBinding]
    maxint: int
    uses_range_table: bool = False

    def recursive_tables(self, component: Component) -> list[RelationBinding]:
        out = []
        for pred in component.predicates:
            if any(r.head.pred == pred for r in component.recursive_rules):
                out.append(self.bindings[pred])
        return out

    def describe(self, dialect: str = "generic") -> str:
        lines = []
        for i, cp in enumerate(self.component_plans):
            lines.append(f"-- component {i}: {{{', '.join(cp.component.predicates)}}}")
            for stmt in cp.all_statements():
                lines.append(render_statement(stmt, dialect) + ";")
        return "\n".join(lines)


def translate_component(
    component: Component,
    bindings: dict[str, RelationBinding],
    maxint: int = 0,
    view_registry: Optional[dict] = None,
) -> RulePlan:
    plan = RulePlan(component)
    comp_preds = frozenset(component.predicates)

    def prepared(rule: Rule) -> tuple[Rule, tuple[AvgGuard, ...]]:
        if not rule.aggregate_literals():
            return rule, ()
        views, view_bindings, rewritten, avg_list = rewrite_aggregates(
            rule, bindings, view_registry
        )
        plan.views.extend(views)
        bindings.update(view_bindings)
        return rewritten, tuple(avg_list)

    for rule in component.exit_rules:
        work_rule, avg_guards = prepared(rule)
        plan.exit_statements.append(translate_nonrecursive(work_rule, bindings, maxint, avg_guards))
    for rule in component.recursive_rules:
        work_rule, avg_guards = prepared(rule)
        plan.delta_statements.append(
            translate_recursive(work_rule, bindings, comp_preds, maxint, avg_guards)
        )
    return plan


def translate_program(
    plan: StratumPlan, bindings: dict[str, RelationBinding], maxint: int = 0
) -> ProgramPlan:
    view_registry: dict = {}
    component_plans = [
        translate_component(c, bindings, maxint, view_registry) for c in plan.components
    ]
    uses_range = any(
        item[0] == RANGE_TABLE
        for cp in component_plans
        for stmt in cp.all_statements()
        for br in stmt.branches
        for item in br.from_items
    )
    return ProgramPlan(component_plans, bindings, maxint, uses_range)
