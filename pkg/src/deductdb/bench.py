"""Benchmark universe: graph generators, problem encodings, query regimes,
and a timing harness, at desk scale.

Families: full binary trees, acyclic graphs and cyclic graphs of a given
density (arcs over possible arcs), and layered cylinders of a given
width/height ratio.  Problems: reachability (transitive closure of the edge
relation) and same generation over a parent relation.  Regimes bind zero,
one, or both goal arguments; encodings are uniform, so only the goal rule
changes with the regime.
"""

from __future__ import annotations

import csv
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import oracle
from .backend import EvaluationTimeout
from .engine import run
from .parser import parse_directives, parse_program

DESK_TIMEOUT_SECONDS = 300.0


@dataclass
class GraphInstance:
    family: str  # tree | a-graph | c-graph | cylinder
    params: dict
    nodes: list[int]
    edges: list[tuple[int, int]]
    b1: int
    b2: int

    @property
    def size(self) -> int:
        return len(self.edges)


def _bfs_distances(nodes: list[int], edges: list[tuple[int, int]], src: int) -> dict[int, int]:
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj.get(u, ()):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def _pick_probes(nodes: list[int], edges: list[tuple[int, int]]) -> tuple[int, int]:
    """b1 is the first node; b2 the farthest node reachable from it
    (ties to the smallest id), a worst-case bound probe."""
    b1 = nodes[0]
    dist = _bfs_distances(nodes, edges, b1)
    candidates = [(d, v) for v, d in dist.items() if v != b1]
    if not candidates:
        return b1, nodes[-1]
    far = max(d for d, _ in candidates)
    b2 = min(v for d, v in candidates if d == far)
    return b1, b2


def is_acyclic(nodes: list[int], edges: list[tuple[int, int]]) -> bool:
    indeg = {v: 0 for v in nodes}
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        indeg[v] += 1
        adj.setdefault(u, []).append(v)
    queue = [v for v in nodes if indeg[v] == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        for v in adj.get(u, ()):
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return seen == len(nodes)


def gen_tree(depth: int, seed: int = 0) -> GraphInstance:
    """Full binary tree with nodes 1 .. 2^(depth+1)-1, parent i to children
    2i and 2i+1.  The structure is regular, so the seed has no effect."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    n = 2 ** (depth + 1) - 1
    nodes = list(range(1, n + 1))
    edges = []
    for i in range(1, 2**depth):
        edges.append((i, 2 * i))
        edges.append((i, 2 * i + 1))
    b1, b2 = _pick_probes(nodes, edges)
    return GraphInstance("tree", {"depth": depth}, nodes, edges, b1, b2)


def gen_graph(n: int, density: float, cyclic: bool, seed: int = 0) -> GraphInstance:
    """Random directed graph with floor(density * n * (n-1)) distinct arcs,
    capped by what the family admits: acyclic graphs only take arcs from
    lower to higher node id."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    nodes = list(range(1, n + 1))
    if cyclic:
        possible = [(i, j) for i in nodes for j in nodes if i != j]
    else:
        possible = [(i, j) for i in nodes for j in nodes if i < j]
    m = min(int(density * n * (n - 1)), len(possible))
    if cyclic and m < 2:
        raise ValueError(f"density {density} infeasible: a cycle needs at least 2 arcs")
    rng = random.Random(seed)
    edges = rng.sample(possible, m)
    if cyclic and is_acyclic(nodes, edges):
        # close a cycle deterministically without changing the arc count
        u, v = edges[0]
        edges = edges[:-1] + [(v, u)]
    family = "c-graph" if cyclic else "a-graph"
    b1, b2 = _pick_probes(nodes, edges)
    return GraphInstance(family, {"n": n, "density": density}, nodes, edges, b1, b2)


def gen_cylinder(width: int, height: int, seed: int = 0) -> GraphInstance:
    """Layered graph: node (i, j) of layer i feeds (i+1, j) and
    (i+1, (j+1) mod width); 2 * width * (height-1) arcs in total."""
    if width < 2 or height < 2:
        raise ValueError("width and height must be >= 2")
    nodes = list(range(1, width * height + 1))

    def node(layer: int, pos: int) -> int:
        return (layer - 1) * width + pos + 1

    edges = []
    for layer in range(1, height):
        for pos in range(width):
            edges.append((node(layer, pos), node(layer + 1, pos)))
            edges.append((node(layer, pos), node(layer + 1, (pos + 1) % width)))
    b1, b2 = _pick_probes(nodes, edges)
    return GraphInstance(
        "cylinder",
        {"width": width, "height": height, "ratio": width / height},
        nodes,
        edges,
        b1,
        b2,
    )


def generate(family: str, size: int, density: float = 0.2, seed: int = 0) -> GraphInstance:
    if family == "tree":
        return gen_tree(size, seed)
    if family == "a-graph":
        return gen_graph(size, density, cyclic=False, seed=seed)
    if family == "c-graph":
        return gen_graph(size, density, cyclic=True, seed=seed)
    if family == "cylinder":
        return gen_cylinder(size, size, seed)
    raise ValueError(f"unknown family {family!r}")


def write_facts_csv(instance: GraphInstance, path: Union[str, Path]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerows(instance.edges)


# ---------------------------------------------------------------------------
# Encodings
# ---------------------------------------------------------------------------

REACHABILITY_RULES = """\
reachable(X, Y) :- edge(X, Y).
reachable(X, Y) :- reachable(X, Z), reachable(Z, Y).
"""

REACHABILITY_RULES_LINEAR = """\
reachable(X, Y) :- edge(X, Y).
reachable(X, Y) :- reachable(X, Z), edge(Z, Y).
"""

SAMEGEN_RULES = """\
samegen(X, Y) :- parent(P, X), parent(P, Y), X != Y.
samegen(X, Y) :- parent(PX, X), parent(PY, Y), samegen(PX, PY).
"""


@dataclass
class Encoding:
    program_text: str
    directive_text: str
    facts: dict[str, list[tuple]]
    goal_pred: str


def encode(
    problem: str,
    regime: str,
    instance: GraphInstance,
    linear: bool = False,
    workdb: str = "bench_work",
) -> Encoding:
    """Program plus directives for one (problem, regime) cell.  The rule
    bodies never change with the bindings; regimes differ only in the goal."""
    if problem == "reachability":
        rules = REACHABILITY_RULES_LINEAR if linear else REACHABILITY_RULES
        input_pred, answer = "edge", "reachable"
    elif problem == "samegen":
        rules = SAMEGEN_RULES
        input_pred, answer = "parent", "samegen"
    else:
        raise ValueError(f"unknown problem {problem!r}")

    directives = [f'USEDB "{workdb}"::.']
    directives.append(
        f"CREATE {input_pred}_rel (att_1, att_2) MAPTO {input_pred} (integer, integer)."
    )
    directives.append(f"CREATE {answer}_rel (att_1, att_2) MAPTO {answer} (integer, integer).")

    if regime == "Q0":
        goal_pred = answer
        directives.append(f"QUERY {answer}_rel.")
    elif regime == "Q1":
        goal_pred = "goal"
        rules += f"goal(Y) :- {answer}({instance.b1}, Y).\n"
        directives.append("CREATE goal_rel (att_1) MAPTO goal (integer).")
        directives.append("QUERY goal_rel.")
    elif regime == "Q2":
        goal_pred = "goal"
        rules += f"goal({instance.b1}, {instance.b2}) :- {answer}({instance.b1}, {instance.b2}).\n"
        directives.append("CREATE goal_rel (att_1, att_2) MAPTO goal (integer, integer).")
        directives.append("QUERY goal_rel.")
    else:
        raise ValueError(f"unknown regime {regime!r}")

    return Encoding(
        rules, "\n".join(directives) + "\n", {input_pred: list(instance.edges)}, goal_pred
    )


# ---------------------------------------------------------------------------
# Suite driver
# ---------------------------------------------------------------------------

DESK_LADDERS = {
    "tree": [7, 10, 14],
    "a-graph": [50, 200, 500],
    "c-graph": [50, 200, 500],
    "cylinder": [8, 16, 32],
}


@dataclass
class BenchmarkSpec:
    problem: str = "reachability"
    family: str = "tree"
    regime: str = "Q0"
    sizes: Optional[list[int]] = None
    density: float = 0.2
    seed: int = 0
    timeout_seconds: float = DESK_TIMEOUT_SECONDS
    repetitions: int = 1
    linear: bool = False
    oracle_check: bool = False
    oracle_limit: int = 2000  # instances up to this many arcs get cross-checked


@dataclass
class ReportRow:
    problem: str
    family: str
    size: int  # input facts
    regime: str
    millis: float
    rows: Optional[int]
    iterations: Optional[int]
    timed_out: bool
    oracle: Optional[str] = None  # ok | mismatch | None when unchecked

    def delimited(self) -> str:
        fields = [
            self.problem,
            self.family,
            str(self.size),
            self.regime,
            f"{self.millis:.1f}",
            "-" if self.rows is None else str(self.rows),
            "-" if self.iterations is None else str(self.iterations),
            "timeout" if self.timed_out else "ok",
            self.oracle or "-",
        ]
        return "|".join(fields)


def oracle_answer(encoding: Encoding) -> set[tuple]:
    program = parse_program(encoding.program_text)
    return oracle.query(program, encoding.goal_pred, encoding.facts)


def run_cell(
    encoding: Encoding,
    base_dir: Union[str, Path],
    timeout_seconds: float,
    oracle_check: bool = False,
) -> ReportRow:
    program = parse_program(encoding.program_text)
    directives = parse_directives(encoding.directive_text)
    size = sum(len(rows) for rows in encoding.facts.values())
    t0 = time.perf_counter()
    try:
        result = run(
            program,
            directives,
            base_dir=base_dir,
            facts=encoding.facts,
            timeout_seconds=timeout_seconds,
        )
    except EvaluationTimeout:
        millis = (time.perf_counter() - t0) * 1000
        return ReportRow("", "", size, "", millis, None, None, True)
    millis = (time.perf_counter() - t0) * 1000
    iterations = max(result.iterations.values()) if result.iterations else 0
    row = ReportRow("", "", size, "", millis, result.query_rows, iterations, False)
    if oracle_check:
        expected = len(oracle_answer(encoding))
        row.oracle = "ok" if expected == result.query_rows else "mismatch"
    return row


def run_suite(spec: BenchmarkSpec, base_dir: Union[str, Path] = ".") -> list[ReportRow]:
    sizes = spec.sizes if spec.sizes is not None else DESK_LADDERS[spec.family]
    rows: list[ReportRow] = []
    for size in sizes:
        instance = generate(spec.family, size, spec.density, spec.seed)
        encoding = encode(spec.problem, spec.regime, instance, spec.linear)
        best: Optional[ReportRow] = None
        for _ in range(max(spec.repetitions, 1)):
            row = run_cell(
                encoding,
                base_dir,
                spec.timeout_seconds,
                spec.oracle_check and instance.size <= spec.oracle_limit,
            )
            if best is None or row.millis < best.millis:
                best = row
        best.problem, best.family, best.regime = spec.problem, spec.family, spec.regime
        rows.append(best)
        if best.timed_out:
            break  # a timed-out cell truncates the ladder for this line
    return rows


def render_report(rows: list[ReportRow]) -> str:
    header = "problem|family|size|regime|millis|rows|iterations|status|oracle"
    return "\n".join([header] + [r.delimited() for r in rows])
