"""Command-line entry point: run programs, check them, drive benchmarks."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench, engine, oracle
from .analysis import StratificationError, build_dependency_graph, stratify
from .ast import ConnectionSpec, DirectiveSet, ProgramError
from .backend import BackendError, EvaluationTimeout, read_fact_csv
from .parser import parse_directives, parse_program

DEFAULT_WORKDB_ENV = "DEDUCTDB_WORKDB"


def _default_directives(workdb: str | None) -> DirectiveSet:
    db = workdb or os.environ.get(DEFAULT_WORKDB_ENV) or "./deductdb_work.sqlite"
    return DirectiveSet(ConnectionSpec(db))


def _load_program(args) -> "Program":
    text = Path(args.program).read_text(encoding="utf-8")
    return parse_program(text, file=args.program, default_maxint=getattr(args, "maxint", 0))


def _load_directives(args) -> DirectiveSet:
    if getattr(args, "directives", None):
        return parse_directives(
            Path(args.directives).read_text(encoding="utf-8"), file=args.directives
        )
    return _default_directives(getattr(args, "workdb", None))


def _parse_facts(fact_args: list[str]) -> dict[str, list[tuple]]:
    facts = {}
    for spec in fact_args or []:
        pred, _, path = spec.partition("=")
        if not path:
            raise BackendError(f"--facts expects pred=file.csv, got {spec!r}")
        facts.setdefault(pred, []).extend(read_fact_csv(path))
    return facts


def cmd_run(args) -> int:
    program = _load_program(args)
    directives = _load_directives(args)
    facts = _parse_facts(args.facts)

    if args.emit_plan:
        plan = stratify(build_dependency_graph(program), program)
        print(plan.describe())
        return 0
    if args.emit_sql:
        from .backend import SqliteBackend, profile_for, resolve_database_path

        backend = SqliteBackend(
            resolve_database_path(directives.working_db, args.base_dir),
            profile_for(directives.like),
        )
        try:
            prepared = engine.prepare(program, directives, backend, not args.no_optimize)
        finally:
            backend.close()
        print(prepared.plan.describe(profile_for(directives.like).dialect))
        return 0

    if args.oracle_check:
        ext = engine.extensions(
            program,
            directives,
            base_dir=args.base_dir,
            facts=facts,
            timeout_seconds=args.timeout,
            keep_temp=args.keep_temp,
            optimize_bound_queries=not args.no_optimize,
        )
        expected = oracle.evaluate(program, facts)
        status = 0
        canon = lambda rows: {tuple(str(v) for v in r) for r in rows}
        for pred in sorted(ext):
            if pred not in expected:
                continue
            verdict = "ok" if canon(ext[pred]) == canon(expected[pred]) else "mismatch"
            if verdict == "mismatch":
                status = 1
            print(f"{pred:<20} {len(ext[pred]):>6}  {verdict}")
        return status

    result = engine.run(
        program,
        directives,
        base_dir=args.base_dir,
        facts=facts,
        timeout_seconds=args.timeout,
        keep_temp=args.keep_temp,
        debug=args.debug,
        optimize_bound_queries=not args.no_optimize,
    )
    print(result.render())
    return 0


def cmd_check(args) -> int:
    try:
        program = _load_program(args)
    except ProgramError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return 1
    try:
        plan = stratify(build_dependency_graph(program), program)
    except StratificationError as e:
        print(e.diagnostics[0], file=sys.stderr)
        print("cycle: " + " -> ".join(e.cycle), file=sys.stderr)
        return 1
    print(f"ok: {len(program.rules)} rules, {len(program.facts)} facts, "
          f"{len(plan.components)} components")
    return 0


def cmd_bench(args) -> int:
    spec = bench.BenchmarkSpec(
        problem=args.problem,
        family=args.family,
        regime=args.regime,
        sizes=[int(s) for s in args.sizes.split(",")] if args.sizes else None,
        density=args.density,
        seed=args.seed,
        timeout_seconds=args.timeout,
        repetitions=args.repetitions,
        linear=args.linear,
        oracle_check=args.oracle_check,
    )
    rows = bench.run_suite(spec, base_dir=args.base_dir)
    print(bench.render_report(rows))
    if any(r.oracle == "mismatch" for r in rows):
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deductdb",
        description="Compile stratified rule programs to SQL and evaluate them "
        "to fixpoint on an embedded relational backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a program")
    p_run.add_argument("program", help="program file (.dlp)")
    p_run.add_argument("--directives", help="auxiliary directive file (.typ)")
    p_run.add_argument("--workdb", help="working database path when no directives are given")
    p_run.add_argument("--base-dir", default=".", help="directory for database files")
    p_run.add_argument("--facts", action="append", metavar="PRED=FILE.CSV",
                       help="bulk facts for one predicate; repeatable")
    p_run.add_argument("--maxint", type=int, default=0,
                       help="admissible integer bound when the program sets none")
    p_run.add_argument("--timeout", type=float, default=None, help="evaluation deadline, seconds")
    p_run.add_argument("--emit-sql", action="store_true",
                       help="print the generated statements and exit without executing")
    p_run.add_argument("--emit-plan", action="store_true",
                       help="print the component evaluation order and exit")
    p_run.add_argument("--keep-temp", action="store_true",
                       help="keep created tables after the run")
    p_run.add_argument("--oracle-check", action="store_true",
                       help="compare every predicate against the in-memory reference evaluator")
    p_run.add_argument("--no-optimize", action="store_true",
                       help="disable the bound-query seed rewrite")
    p_run.add_argument("--debug", action="store_true",
                       help="verify delta disjointness after every pass")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="report safety and stratification verdicts")
    p_check.add_argument("program")
    p_check.add_argument("--maxint", type=int, default=0)
    p_check.set_defaults(func=cmd_check)

    p_bench = sub.add_parser("bench", help="run the benchmark suite")
    p_bench.add_argument("--problem", choices=["reachability", "samegen"], default="reachability")
    p_bench.add_argument("--family", choices=["tree", "a-graph", "c-graph", "cylinder"],
                         default="tree")
    p_bench.add_argument("--regime", choices=["Q0", "Q1", "Q2"], default="Q0")
    p_bench.add_argument("--sizes", help="comma-separated ladder (tree depths, node counts, widths)")
    p_bench.add_argument("--density", type=float, default=0.2)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--timeout", type=float, default=bench.DESK_TIMEOUT_SECONDS)
    p_bench.add_argument("--repetitions", type=int, default=1)
    p_bench.add_argument("--linear", action="store_true",
                         help="linear recursion variant (enables the seed rewrite for Q1/Q2)")
    p_bench.add_argument("--oracle-check", action="store_true")
    p_bench.add_argument("--base-dir", default=".", help="directory for database files")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProgramError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return 1
    except (BackendError, EvaluationTimeout) as e:
        print(e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
