"""The benchmark harness: data families, query regimes, timing report.

Families: full binary trees, random acyclic and cyclic graphs of a chosen
density, and layered cylinders.  Problems: reachability (transitive closure)
and same generation.  Regimes Q0/Q1/Q2 bind zero, one, or both goal
arguments; with the linear recursion variant, Q1/Q2 trigger the bound-query
seed rewrite.

Run:  python demos/05_benchmarks.py
"""

import tempfile

from deductdb import bench

base = tempfile.mkdtemp(prefix="deductdb_bench_")

print("generator shapes:")
tree = bench.gen_tree(4)
agraph = bench.gen_graph(30, 0.2, cyclic=False, seed=1)
cyl = bench.gen_cylinder(6, 6)
for inst in (tree, agraph, cyl):
    print(f"  {inst.family:<10} params={inst.params} arcs={inst.size} "
          f"probes=({inst.b1}, {inst.b2})")
print()

print("unbound reachability across families:")
rows = []
for family, sizes in [("tree", [4, 6]), ("a-graph", [20, 40]), ("cylinder", [4, 6])]:
    spec = bench.BenchmarkSpec(
        problem="reachability", family=family, regime="Q0", sizes=sizes,
        oracle_check=True,
    )
    rows.extend(bench.run_suite(spec, base_dir=base))
print(bench.render_report(rows))
print()

print("bound queries: the seed rewrite pays off on one-bound-argument goals")
spec = bench.BenchmarkSpec(
    problem="reachability", family="a-graph", regime="Q1", sizes=[60],
    linear=True, oracle_check=True,
)
print(bench.render_report(bench.run_suite(spec, base_dir=base)))
