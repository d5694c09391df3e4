"""Naive in-memory bottom-up evaluator.

This is the reference implementation the SQL pipeline is checked against:
it shares the AST and the stratifier but none of the translation or fixpoint
machinery.  Within each stratum it simply re-derives all rules against the
full extensions until nothing changes.

Value semantics mirror the relational backend: integers and strings are
distinct types, order comparisons rank every integer below every string, and
an aggregate atom holds only when its group is non-empty.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Iterable, Optional

from .analysis import build_dependency_graph, stratify
from .ast import Atom, BuiltinAtom, Program, Rule, Term

Row = tuple
Extensions = dict[str, set[Row]]


class OracleError(Exception):
    pass


def _order_key(v):
    if isinstance(v, (int, Fraction)):
        return (0, v, "")
    return (1, 0, str(v))


def _compare(op: str, a, b) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    ka, kb = _order_key(a), _order_key(b)
    if op == "<":
        return ka < kb
    if op == "<=":
        return ka <= kb
    if op == ">":
        return ka > kb
    return ka >= kb


def _term_value(t: Term, sol: dict):
    if t.is_var:
        return sol[str(t.value)]
    return t.value


def _join(solutions: list[dict], atom: Atom, tuples: set[Row]) -> list[dict]:
    if not solutions:
        return []
    bound = set(solutions[0])
    keyed = [
        i for i, t in enumerate(atom.args) if t.is_const or str(t.value) in bound
    ]
    index: dict[tuple, list[Row]] = {}
    for row in tuples:
        index.setdefault(tuple(row[i] for i in keyed), []).append(row)
    out = []
    for sol in solutions:
        key = tuple(
            atom.args[i].value if atom.args[i].is_const else sol[str(atom.args[i].value)]
            for i in keyed
        )
        for row in index.get(key, ()):
            ext = dict(sol)
            ok = True
            for i, t in enumerate(atom.args):
                if not t.is_var:
                    continue
                name = str(t.value)
                if name in ext:
                    if ext[name] != row[i]:
                        ok = False
                        break
                else:
                    ext[name] = row[i]
            if ok:
                out.append(ext)
    return out


def _aggregate_value(func: str, values: list):
    if func == "#count":
        return len(values)
    if func in ("#sum", "#avg") and not all(isinstance(v, int) for v in values):
        raise OracleError(f"{func} over non-integer values")
    if func == "#sum":
        return sum(values)
    if func == "#avg":
        return Fraction(sum(values), len(values))
    if func == "#min":
        return min(values, key=_order_key)
    return max(values, key=_order_key)


def _aggregate_holds(agg, sol: dict, ext: Extensions) -> bool:
    locals_sols = [dict(sol)]
    for atom in agg.sset.conj:
        locals_sols = _join(locals_sols, atom, ext.get(atom.pred, set()))
        if not locals_sols:
            return False
    var_names = [str(t.value) for t in agg.sset.vars]
    tuples = {tuple(s[v] for v in var_names) for s in locals_sols}
    if not tuples:
        return False
    values = [t[0] for t in tuples]
    value = _aggregate_value(agg.func, values)
    guard = _term_value(agg.guard, sol)
    if isinstance(value, Fraction):
        guard = Fraction(guard) if isinstance(guard, int) else guard
        if not isinstance(guard, Fraction):
            raise OracleError("#avg guard must be an integer")
    return _compare(agg.cmp, value, guard)


def _builtin_holds(b: BuiltinAtom, sol: dict) -> bool:
    vals = [_term_value(t, sol) for t in b.args]
    if b.is_comparison:
        return _compare(b.op, vals[0], vals[1])
    if not all(isinstance(v, int) for v in vals):
        return False
    a, b_, c = vals
    return (a + b_ == c) if b.op == "+" else (a * b_ == c)


def _eval_rule(rule: Rule, ext: Extensions, maxint: int) -> set[Row]:
    solutions = [dict()]
    for atom in rule.body_atoms(negated=False):
        solutions = _join(solutions, atom, ext.get(atom.pred, set()))
        if not solutions:
            return set()

    # variables bound only by builtins range over the admissible integers
    bound = set(solutions[0])
    range_vars: list[str] = []
    for lit in rule.body:
        if lit.is_builtin:
            for v in lit.payload.variables():
                if v not in bound and v not in range_vars:
                    range_vars.append(v)
    if range_vars:
        expanded = []
        for sol in solutions:
            for combo in product(range(maxint + 1), repeat=len(range_vars)):
                s = dict(sol)
                s.update(zip(range_vars, combo))
                expanded.append(s)
        solutions = expanded

    for lit in rule.body:
        if not solutions:
            return set()
        if lit.is_builtin:
            solutions = [s for s in solutions if _builtin_holds(lit.payload, s)]
        elif lit.is_aggregate:
            if lit.negated:
                raise OracleError("negated aggregate literals are not supported")
            solutions = [s for s in solutions if _aggregate_holds(lit.payload, s, ext)]
        elif lit.negated:
            atom = lit.payload
            rows = ext.get(atom.pred, set())
            solutions = [
                s
                for s in solutions
                if tuple(_term_value(t, s) for t in atom.args) not in rows
            ]

    return {tuple(_term_value(t, s) for t in rule.head.args) for s in solutions}


def evaluate(
    program: Program, extra_facts: Optional[dict[str, Iterable[Row]]] = None
) -> Extensions:
    """Full per-predicate extensions of a stratified program."""
    plan = stratify(build_dependency_graph(program), program)
    ext: Extensions = {pred: set() for pred in program.predicates()}
    for fact in program.facts:
        ext[fact.pred].add(tuple(t.value for t in fact.args))
    for pred, rows in (extra_facts or {}).items():
        ext.setdefault(pred, set()).update(tuple(r) for r in rows)

    for comp in plan.components:
        rules = list(comp.exit_rules) + list(comp.recursive_rules)
        if not rules:
            continue
        changed = True
        while changed:
            changed = False
            for rule in rules:
                derived = _eval_rule(rule, ext, program.maxint)
                target = ext.setdefault(rule.head.pred, set())
                if not derived <= target:
                    target |= derived
                    changed = True
    return ext


def query(
    program: Program,
    pred: str,
    extra_facts: Optional[dict[str, Iterable[Row]]] = None,
) -> set[Row]:
    return evaluate(program, extra_facts).get(pred, set())
