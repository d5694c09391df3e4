"""A tour of the rule language: facts, rules, negation, builtins, aggregates.

Run:  python demos/01_language_tour.py
"""

from deductdb import ProgramError, parse_program
from deductdb.analysis import build_dependency_graph, stratify

PROGRAM = """
% Facts are ground atoms; constants start lowercase, variables uppercase.
parent(anna, bruno).   parent(anna, carla).
parent(bruno, dora).   parent(bruno, emil).
salary(bruno, 42000).  salary(carla, 55000).

% A rule derives its head wherever the body holds.
sibling(X, Y) :- parent(P, X), parent(P, Y), X != Y.

% Negation is allowed as long as no cycle runs through it.  Every variable
% of a negated atom must occur positively, so existentials are projected
% through a helper predicate first.
has_child(X) :- parent(X, C).
childless(X) :- salary(X, S), not has_child(X).

% Aggregates group a set term and compare it against a guard.
rich_family(P) :- parent(P, _), #sum{S, C : parent(P, C), salary(C, S)} > 40000.
"""

print("parsing the sample program ...")
program = parse_program(PROGRAM)
print(f"  {len(program.rules)} rules, {len(program.facts)} facts")
print()

print("pretty-printed back (parse . print . parse is the identity):")
print(program)

plan = stratify(build_dependency_graph(program), program)
print("evaluation order, one component per line:")
print(plan.describe())
print()

print("safety violations are reported with positions:")
for bad in ["usesY(X) :- not q(X).", "p(100.000)."]:
    try:
        parse_program(bad)
    except ProgramError as e:
        print(f"  {bad!r:<28} -> {e.diagnostics[0]}")
