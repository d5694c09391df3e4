"""Drives the differential semi-naive fixpoint over the storage backend.

Per component, in dependency order: exit-rule statements run once into the
accumulated tables; for a recursive component the previous-delta tables are
initialized as copies of the accumulated tables and the delta statements are
iterated.  One pass runs every delta statement (each already subtracts the
accumulated table, the previous delta, and the rows inserted so far), records
the new-delta counts, then rotates: accumulated += previous delta, previous
delta := new delta, new delta := empty.  The fixpoint is reached when every
new delta is empty.

All delta statements of a pass read only accumulated and previous-delta
tables, so mutually recursive rules observe one consistent snapshot and their
order within a pass is irrelevant; source order is used for determinism.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from pathlib import Path

from .analysis import (
    StratumPlan,
    build_dependency_graph,
    optimize,
    standardize_aggregates,
    stratify,
)
from .ast import Diagnostic, DirectiveSet, Program, ProgramError
from .backend import (
    BackendError,
    SqliteBackend,
    bind_tables,
    cleanup,
    export_outputs,
    profile_for,
    resolve_database_path,
    stage_inputs,
)
from .translate import DELTA_PREFIX, PREV_DELTA_PREFIX, ProgramPlan, translate_program

DEFAULT_PASS_BUDGET = 10**6


class FixpointBudgetExceeded(Exception):
    """Stratified evaluation always terminates; hitting the budget means the
    generated statements are wrong, not the program."""


@dataclass
class EvaluationResult:
    sizes: dict[str, int] = field(default_factory=dict)
    inserted: dict[str, int] = field(default_factory=dict)
    iterations: dict[int, int] = field(default_factory=dict)
    delta_history: dict[str, list[int]] = field(default_factory=dict)
    phase_millis: dict[str, float] = field(default_factory=dict)
    statements_executed: int = 0
    query_table: Optional[str] = None
    query_rows: Optional[int] = None
    baseline_rss_bytes: Optional[int] = None
    peak_rss_bytes: Optional[int] = None

    @property
    def rss_growth_bytes(self) -> Optional[int]:
        if self.baseline_rss_bytes is None or self.peak_rss_bytes is None:
            return None
        return max(self.peak_rss_bytes - self.baseline_rss_bytes, 0)

    def machine_rows(self) -> list[tuple[str, int, int, float]]:
        """(predicate, size, iterations-of-its-component, total millis)."""
        total = sum(self.phase_millis.values())
        iters = {}
        for pred, history in self.delta_history.items():
            iters[pred] = len(history)
        return [
            (pred, size, iters.get(pred, 1), round(total, 3))
            for pred, size in sorted(self.sizes.items())
        ]

    def render(self) -> str:
        lines = ["predicate            size  iterations"]
        for pred, size, iters, _ in self.machine_rows():
            lines.append(f"{pred:<20} {size:>5}  {iters:>10}")
        if self.query_table is not None:
            lines.append(f"query table {self.query_table}: {self.query_rows} rows")
        for phase, ms in self.phase_millis.items():
            lines.append(f"{phase}: {ms:.1f} ms")
        return "\n".join(lines)


@dataclass
class PreparedRun:
    program: Program  # after standardization and optimization
    stratum_plan: StratumPlan
    plan: ProgramPlan
    query_pred: Optional[str]


def resolve_query_pred(program: Program, directives: DirectiveSet) -> Optional[str]:
    """The QUERY directive names a table; map it back to its predicate."""
    if not directives.query:
        return None
    for td in directives.tables:
        if td.table == directives.query:
            return td.predicate
    if directives.query in program.arities():
        return directives.query
    raise ProgramError(
        [Diagnostic(f"QUERY names table '{directives.query}' which no predicate maps to")]
    )


def prepare(
    program: Program,
    directives: DirectiveSet,
    backend: SqliteBackend,
    optimize_bound_queries: bool = True,
) -> PreparedRun:
    for pred, arity in program.arities().items():
        if arity == 0:
            raise ProgramError(
                [Diagnostic(f"predicate '{pred}' has arity 0; relational storage needs columns")]
            )
    original_preds = set(program.predicates())
    query_pred = resolve_query_pred(program, directives)

    transformed = standardize_aggregates(program)
    if optimize_bound_queries and query_pred:
        protected = {o.pred for o in directives.outputs if o.pred}
        if any(o.kind == "DBOUTPUT" for o in directives.outputs):
            protected |= original_preds
        transformed = optimize(transformed, query_pred, frozenset(protected))

    stratum_plan = stratify(build_dependency_graph(transformed), transformed)
    internal = frozenset(set(transformed.predicates()) - original_preds)
    bindings = bind_tables(transformed, directives, backend, internal)
    plan = translate_program(stratum_plan, bindings, transformed.maxint)
    return PreparedRun(transformed, stratum_plan, plan, query_pred)


def _assert_disjoint(backend: SqliteBackend, a: str, b: str):
    n = backend.fetch(f"SELECT COUNT(*) FROM (SELECT * FROM {a} INTERSECT SELECT * FROM {b})")[0][0]
    if n:
        raise FixpointBudgetExceeded(f"delta disjointness violated: |{a} ∩ {b}| = {n}")


def execute_plan(
    plan: ProgramPlan,
    backend: SqliteBackend,
    result: EvaluationResult,
    pass_budget: int = DEFAULT_PASS_BUDGET,
    rss_probe=None,
):
    for comp_index, cp in enumerate(plan.component_plans):
        for view in cp.views:
            backend.drop(view.target, kind="VIEW")
            backend.execute(view)
            result.statements_executed += 1
        for stmt in cp.exit_statements:
            pred = _pred_of_table(plan, stmt.target)
            n = backend.execute(stmt)
            result.statements_executed += 1
            result.inserted[pred] = result.inserted.get(pred, 0) + n
        recs = plan.recursive_tables(cp.component)
        if not recs:
            continue

        for b in recs:
            backend.execute(f"INSERT INTO {PREV_DELTA_PREFIX}{b.table} SELECT * FROM {b.table}")
            result.delta_history.setdefault(b.pred, [])
        passes = 0
        while True:
            passes += 1
            if passes > pass_budget:
                raise FixpointBudgetExceeded(
                    f"component {comp_index} exceeded {pass_budget} passes"
                )
            for stmt in cp.delta_statements:
                backend.execute(stmt)
                result.statements_executed += 1
            counts = {}
            for b in recs:
                counts[b.pred] = backend.count(DELTA_PREFIX + b.table)
                result.delta_history[b.pred].append(counts[b.pred])
                result.inserted[b.pred] = result.inserted.get(b.pred, 0) + counts[b.pred]
                if backend.debug:
                    _assert_disjoint(backend, DELTA_PREFIX + b.table, b.table)
                    _assert_disjoint(
                        backend, DELTA_PREFIX + b.table, PREV_DELTA_PREFIX + b.table
                    )
            for b in recs:
                d, d1 = DELTA_PREFIX + b.table, PREV_DELTA_PREFIX + b.table
                if passes > 1:  # on the first pass the previous delta IS the table
                    backend.execute(f"INSERT INTO {b.table} SELECT * FROM {d1}")
                backend.execute(f"DELETE FROM {d1}")
                backend.execute(f"INSERT INTO {d1} SELECT * FROM {d}")
                backend.execute(f"DELETE FROM {d}")
            if rss_probe:
                rss_probe(result)
            if all(n == 0 for n in counts.values()):
                break
        result.iterations[comp_index] = passes


def _pred_of_table(plan: ProgramPlan, table: str) -> str:
    for b in plan.bindings.values():
        if b.table == table:
            return b.pred
    return table


def run(
    program: Program,
    directives: DirectiveSet,
    base_dir: Union[str, Path] = ".",
    facts: Optional[dict[str, Iterable[tuple]]] = None,
    timeout_seconds: Optional[float] = None,
    keep_temp: bool = False,
    debug: bool = False,
    optimize_bound_queries: bool = True,
    pass_budget: int = DEFAULT_PASS_BUDGET,
    track_memory: bool = False,
) -> EvaluationResult:
    """Full pipeline: bind, stage, evaluate to fixpoint, export, clean up."""
    profile = profile_for(directives.like)
    backend = SqliteBackend(
        resolve_database_path(directives.working_db, base_dir),
        profile,
        timeout_seconds=timeout_seconds,
        debug=debug,
    )
    result = EvaluationResult()
    rss_probe = None
    if track_memory:
        try:
            import psutil

            proc = psutil.Process()

            def rss_probe(res: EvaluationResult):
                rss = proc.memory_info().rss
                if res.baseline_rss_bytes is None:
                    res.baseline_rss_bytes = rss
                res.peak_rss_bytes = max(res.peak_rss_bytes or 0, rss)

            rss_probe(result)
        except ImportError:
            pass

    try:
        t0 = time.perf_counter()
        prepared = prepare(program, directives, backend, optimize_bound_queries)
        result.phase_millis["prepare"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        stage_inputs(prepared.plan, prepared.program, backend, base_dir, facts)
        result.phase_millis["stage"] = (time.perf_counter() - t0) * 1000
        if rss_probe:
            rss_probe(result)

        t0 = time.perf_counter()
        execute_plan(prepared.plan, backend, result, pass_budget, rss_probe)
        result.phase_millis["evaluate"] = (time.perf_counter() - t0) * 1000

        for binding in prepared.plan.bindings.values():
            if binding.source != "view":
                result.sizes[binding.pred] = backend.count(binding.table)
        if directives.query:
            result.query_table = directives.query
            result.query_rows = backend.count(directives.query)

        t0 = time.perf_counter()
        export_outputs(directives, prepared.plan.bindings, backend, base_dir)
        result.phase_millis["export"] = (time.perf_counter() - t0) * 1000
        return result
    finally:
        try:
            if "prepared" in locals():
                cleanup(prepared.plan, backend, keep_temp)
        except BackendError:
            pass
        backend.close()


def extensions(
    program: Program,
    directives: DirectiveSet,
    base_dir: Union[str, Path] = ".",
    facts: Optional[dict[str, Iterable[tuple]]] = None,
    **kwargs,
) -> dict[str, set[tuple]]:
    """Evaluate and return the full per-predicate extensions (reads the
    tables back before cleanup; meant for tests and oracle comparison)."""
    profile = profile_for(directives.like)
    backend = SqliteBackend(
        resolve_database_path(directives.working_db, base_dir),
        profile,
        timeout_seconds=kwargs.pop("timeout_seconds", None),
        debug=kwargs.pop("debug", False),
    )
    try:
        prepared = prepare(
            program, directives, backend, kwargs.pop("optimize_bound_queries", True)
        )
        stage_inputs(prepared.plan, prepared.program, backend, base_dir, facts)
        result = EvaluationResult()
        execute_plan(prepared.plan, backend, result, kwargs.pop("pass_budget", DEFAULT_PASS_BUDGET))
        out = {}
        for binding in prepared.plan.bindings.values():
            if binding.source != "view":
                out[binding.pred] = backend.rows(binding.table)
        export_outputs(directives, prepared.plan.bindings, backend, base_dir)
        return out
    finally:
        try:
            if "prepared" in locals():
                cleanup(prepared.plan, backend, kwargs.pop("keep_temp", False))
        except BackendError:
            pass
        backend.close()
