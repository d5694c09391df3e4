"""How rules become SQL statements.

Every rule turns into exactly one non-recursive INSERT ... SELECT: the head
variables drive the SELECT list, body atoms the FROM list, shared variables
and constants the WHERE conditions, and a trailing EXCEPT keeps the target
duplicate-free.  A recursive rule with r same-component body occurrences
becomes a single insert into the head's delta table with 2^r - 1 branches
that mix the accumulated table and the previous delta.

Run:  python demos/02_translation_walkthrough.py
"""

from deductdb import parse_program, standardize_aggregates, translate_program
from deductdb.analysis import build_dependency_graph, stratify
from deductdb.translate import RelationBinding, default_attrs
from deductdb.ast import VARCHAR255

SAMPLES = {
    "positive join with constants": """
        q0(Ename) :- employee(Ename, 100000, Dep, Boss), department(Dep, rossi).
    """,
    "negation becomes NOT IN": """
        topEmployee(E) :- employee(E, S, D, B), department(D, B), not otherBoss(E, B).
        otherBoss(E, B) :- employee(E, S, D, B), employee(B, S2, D2, B2).
    """,
    "builtin comparison in WHERE": """
        q1(Ename) :- employee(Ename, Salary, Dep, Boss), Salary > 100000.
    """,
    "aggregate: support view + GROUP BY": """
        costlyDep(Dep) :- department(Dep, _),
                          #sum{Salary, Ename : employee(Ename, Salary, Dep, _)} > 100000.
    """,
    "non-linear recursion: 3 branches over delta/accumulated": """
        q2(E1, E2) :- employee(E1, Salary, Dep, E2).
        q2(E1, E3) :- q2(E1, E2), q2(E2, E3).
    """,
}


def show(title, text):
    program = standardize_aggregates(parse_program(text))
    strata = stratify(build_dependency_graph(program), program)
    bindings = {
        pred: RelationBinding(
            pred, pred, default_attrs(arity), tuple([VARCHAR255] * arity), "created"
        )
        for pred, arity in program.arities().items()
    }
    plan = translate_program(strata, bindings)
    print(f"== {title} ==")
    print(plan.describe())
    print()


for title, text in SAMPLES.items():
    show(title, text)
