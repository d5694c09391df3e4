"""Program analysis between parsing and SQL generation.

Builds the predicate dependency graph, decomposes it into strongly connected
components with a deterministic topological order, rejects recursion through
negation or aggregates, rewrites aggregate rules into the standard shape the
translator expects, and applies the bound-query seed rewrite when it is
provably answer-preserving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ast import (
    RESERVED_PREFIX,
    Atom,
    Diagnostic,
    Literal,
    Program,
    ProgramError,
    Rule,
    SymbolicSet,
    Term,
)

POSITIVE, NEGATIVE, AGGREGATE = "positive", "negative", "aggregate"


@dataclass(frozen=True)
class Edge:
    src: str  # body predicate
    dst: str  # head predicate
    label: str  # positive | negative | aggregate


@dataclass
class DependencyGraph:
    """Nodes are predicates in first-appearance order; one edge per
    (body predicate, head predicate, label) combination."""

    nodes: list[str] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def add_node(self, pred: str):
        if pred not in self._node_set:
            self._node_set.add(pred)
            self.nodes.append(pred)

    def add_edge(self, src: str, dst: str, label: str):
        self.add_node(src)
        self.add_node(dst)
        e = Edge(src, dst, label)
        if e not in self._edge_set:
            self._edge_set.add(e)
            self.edges.append(e)

    def __post_init__(self):
        self._node_set = set(self.nodes)
        self._edge_set = set(self.edges)

    def successors(self, pred: str) -> list[str]:
        return [e.dst for e in self.edges if e.src == pred]


def build_dependency_graph(program: Program) -> DependencyGraph:
    """Edge from each body predicate to the head predicate of each rule;
    aggregate edges originate from every predicate inside a set conjunction."""
    graph = DependencyGraph()
    for pred in program.predicates():
        graph.add_node(pred)
    for rule in program.rules:
        head = rule.head.pred
        for lit in rule.body:
            if lit.is_standard:
                graph.add_edge(lit.payload.pred, head, NEGATIVE if lit.negated else POSITIVE)
            elif lit.is_aggregate:
                for atom in lit.payload.sset.conj:
                    graph.add_edge(atom.pred, head, AGGREGATE)
    return graph


@dataclass
class Component:
    """One strongly connected component with its rules split into exit rules
    (evaluated once) and recursive rules (iterated to fixpoint)."""

    predicates: tuple[str, ...]
    exit_rules: tuple[Rule, ...] = ()
    recursive_rules: tuple[Rule, ...] = ()

    @property
    def is_recursive(self) -> bool:
        return bool(self.recursive_rules)


@dataclass
class StratumPlan:
    components: tuple[Component, ...]  # topological order, lowest first

    def describe(self) -> str:
        """One component per line, in evaluation order."""
        lines = []
        for i, comp in enumerate(self.components):
            kind = "recursive" if comp.is_recursive else "flat"
            rules = len(comp.exit_rules) + len(comp.recursive_rules)
            lines.append(f"{i}: {{{', '.join(comp.predicates)}}} {kind} rules={rules}")
        return "\n".join(lines)


class StratificationError(ProgramError):
    def __init__(self, message: str, cycle: list[str]):
        self.cycle = cycle
        super().__init__([Diagnostic(message)])


def _tarjan_sccs(nodes: list[str], succ: dict[str, list[str]]) -> list[list[str]]:
    """Iterative Tarjan; components are returned in reverse topological order."""
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = [0]

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, [])))]
        index[root] = lowlink[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, []))))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


def _cycle_through(edge: Edge, members: set[str], succ: dict[str, list[str]]) -> list[str]:
    """A predicate cycle witnessing the offending edge: its tail, its head,
    then the path leading back to the tail inside the component."""
    if edge.dst == edge.src:
        return [edge.src, edge.src]
    parents: dict[str, Optional[str]] = {edge.dst: None}
    queue = [edge.dst]
    while queue:
        v = queue.pop(0)
        if v == edge.src:
            break
        for w in succ.get(v, []):
            if w in members and w not in parents:
                parents[w] = v
                queue.append(w)
    chain = [edge.src]  # edge.src, parent, ..., edge.dst
    v = edge.src
    while parents.get(v) is not None:
        v = parents[v]
        chain.append(v)
    return [edge.src] + list(reversed(chain))


def stratify(graph: DependencyGraph, program: Program) -> StratumPlan:
    """SCC decomposition plus a deterministic topological order.

    Rejects any component containing a negative or aggregate edge: such a
    cycle admits no level mapping, so the program is outside the supported
    fragment.  Topological ties are broken by first appearance of the
    component's earliest predicate in the source.
    """
    succ: dict[str, list[str]] = {}
    for e in graph.edges:
        succ.setdefault(e.src, []).append(e.dst)

    sccs = _tarjan_sccs(graph.nodes, succ)
    comp_index = {pred: i for i, scc in enumerate(sccs) for pred in scc}

    for e in graph.edges:
        if e.label in (NEGATIVE, AGGREGATE) and comp_index[e.src] == comp_index[e.dst]:
            members = set(sccs[comp_index[e.src]])
            cycle = _cycle_through(e, members, succ)
            raise StratificationError(
                f"recursion through {'negation' if e.label == NEGATIVE else 'an aggregate'} "
                f"detected: cycle {' -> '.join(cycle)}",
                cycle,
            )

    # deterministic topological order over the component DAG (Kahn)
    appearance = {pred: i for i, pred in enumerate(graph.nodes)}
    comp_rank = [min(appearance[p] for p in scc) for scc in sccs]
    indegree = [0] * len(sccs)
    comp_succ: dict[int, set[int]] = {}
    for e in graph.edges:
        a, b = comp_index[e.src], comp_index[e.dst]
        if a != b and b not in comp_succ.setdefault(a, set()):
            comp_succ[a].add(b)
            indegree[b] += 1
    ready = sorted((i for i in range(len(sccs)) if indegree[i] == 0), key=lambda i: comp_rank[i])
    order: list[int] = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in sorted(comp_succ.get(i, ()), key=lambda j: comp_rank[j]):
            indegree[j] -= 1
            if indegree[j] == 0:
                ready.append(j)
        ready.sort(key=lambda i: comp_rank[i])

    rules_by_head: dict[str, list[Rule]] = {}
    for rule in program.rules:
        rules_by_head.setdefault(rule.head.pred, []).append(rule)

    components = []
    for i in order:
        members = sorted(sccs[i], key=lambda p: appearance[p])
        member_set = set(members)
        exit_rules, rec_rules = [], []
        for pred in members:
            for rule in rules_by_head.get(pred, []):
                mentioned = {a.pred for a in rule.body_atoms()}
                for lit in rule.aggregate_literals():
                    mentioned.update(a.pred for a in lit.payload.sset.conj)
                (rec_rules if mentioned & member_set else exit_rules).append(rule)
        components.append(Component(tuple(members), tuple(exit_rules), tuple(rec_rules)))
    return StratumPlan(tuple(components))


# ---------------------------------------------------------------------------
# Aggregate standardization
# ---------------------------------------------------------------------------


def standardize_aggregates(program: Program) -> Program:
    """Rewrite every aggregate literal so its set conjunction is a single
    auxiliary atom whose arguments are exactly the set variables plus the
    variables shared with the rest of the rule.

    ``head :- body, f({Vars : Conj}) cmp G`` becomes the pair::

        aux(Vars..., Shared...) :- BindingAtoms, Conj.
        head :- body, f({Vars : aux(Vars..., Shared...)}) cmp G.

    where BindingAtoms are the positive body atoms mentioning a shared
    variable.  Rules whose conjunction already has this shape pass through
    unchanged, making the rewrite idempotent.
    """
    counter = 0
    new_rules: list[Rule] = []
    for rule in program.rules:
        if not rule.aggregate_literals():
            new_rules.append(rule)
            continue
        rule_globals = set(rule.global_variables())
        body_out: list[Literal] = []
        for lit in rule.body:
            if not lit.is_aggregate:
                body_out.append(lit)
                continue
            agg = lit.payload
            set_var_names = [str(t.value) for t in agg.sset.vars]
            conj_vars: list[str] = []
            for atom in agg.sset.conj:
                for v in atom.variables():
                    if v not in conj_vars:
                        conj_vars.append(v)
            shared = [v for v in conj_vars if v in rule_globals and v not in set_var_names]
            needed = list(set_var_names) + shared

            if _already_standard(agg.sset, needed):
                body_out.append(lit)
                continue

            counter += 1
            aux_pred = f"{RESERVED_PREFIX}{rule.head.pred}__{counter}"
            aux_args = tuple(Term("var", v) for v in needed)
            aux_atom = Atom(aux_pred, aux_args)

            binding_atoms = [
                atom
                for atom in rule.body_atoms(negated=False)
                if set(atom.variables()) & set(shared)
            ]
            aux_body = [Literal(a) for a in binding_atoms]
            aux_body += [Literal(a) for a in agg.sset.conj if a not in binding_atoms]
            new_rules.append(Rule(aux_atom, tuple(aux_body), rule.span))

            new_sset = SymbolicSet(agg.sset.vars, (aux_atom,))
            body_out.append(
                Literal(
                    type(agg)(agg.func, new_sset, agg.cmp, agg.guard, agg.span),
                    lit.negated,
                    lit.span,
                )
            )
        new_rules.append(Rule(rule.head, tuple(body_out), rule.span))
    return Program(tuple(new_rules), program.facts, program.maxint)


def _already_standard(sset: SymbolicSet, needed: list[str]) -> bool:
    if len(sset.conj) != 1:
        return False
    atom = sset.conj[0]
    args = [str(t.value) for t in atom.args if t.is_var]
    if len(args) != len(atom.args) or len(set(args)) != len(args):
        return False
    return set(args) == set(needed)


# ---------------------------------------------------------------------------
# Bound-query optimization
# ---------------------------------------------------------------------------


def optimize(
    program: Program,
    query_pred: Optional[str] = None,
    protected: frozenset[str] = frozenset(),
) -> Program:
    """Equivalence-preserving rewrites applied before translation.

    Auxiliary predicates introduced by standardization already carry the
    minimal argument list, so arity reduction has no further work to do here.
    The remaining rewrite is constant filtering: when the query predicate is
    defined by a single rule over one goal atom with constant arguments, and
    the goal's recursion is linear with those argument positions propagated
    unchanged, the recursion is replaced by a seeded one-column-narrower
    predicate and the goal rule by a selection over it.  Anything else is
    returned unchanged.

    ``protected`` predicates (typically OUTPUT targets) are never rewritten
    away.
    """
    if not query_pred:
        return program
    goal_rules = [r for r in program.rules if r.head.pred == query_pred]
    if len(goal_rules) != 1:
        return program
    goal = goal_rules[0]
    if len(goal.body) != 1 or not goal.body[0].is_standard or goal.body[0].negated:
        return program
    target_atom: Atom = goal.body[0].payload
    p = target_atom.pred
    if p == query_pred or p in protected:
        return program
    bound = {i: t for i, t in enumerate(target_atom.args) if t.is_const}
    if not bound:
        return program

    p_rules = [r for r in program.rules if r.head.pred == p]
    if not p_rules:
        return program
    # p must feed nothing but its own recursion and the goal rule, or dropping
    # its full extension is unsound
    for rule in program.rules:
        if rule is goal or rule.head.pred == p:
            continue
        preds = {a.pred for a in rule.body_atoms()}
        for lit in rule.aggregate_literals():
            preds.update(a.pred for a in lit.payload.sset.conj)
        if p in preds:
            return program

    exit_rules, rec_rules = [], []
    for rule in p_rules:
        occurrences = [a for a in rule.body_atoms(negated=False) if a.pred == p]
        if any(a.pred == p for a in rule.body_atoms(negated=True)):
            return program
        if any(
            a.pred == p for lit in rule.aggregate_literals() for a in lit.payload.sset.conj
        ):
            return program
        if not occurrences:
            exit_rules.append(rule)
        elif len(occurrences) == 1:
            rec_rules.append((rule, occurrences[0]))
        else:
            return program  # non-linear recursion: no safe seed rewrite

    # seedable positions: bound positions each recursive rule propagates unchanged
    seedable = []
    for i in sorted(bound):
        ok = True
        for rule, occ in rec_rules:
            head_arg = rule.head.args[i]
            if not (head_arg.is_var and occ.args[i] == head_arg):
                ok = False
                break
        if ok:
            seedable.append(i)
    if not seedable:
        return program

    seed_pred = _fresh_name("reached", set(program.predicates()))
    keep = [i for i in range(target_atom.arity) if i not in seedable]

    def specialize(rule: Rule, occ: Optional[Atom]) -> Optional[Rule]:
        subst: dict[str, Term] = {}
        for i in seedable:
            head_arg = rule.head.args[i]
            if head_arg.is_var:
                name = str(head_arg.value)
                if name in subst and subst[name] != bound[i]:
                    return None  # one variable cannot match two bound values
                subst[name] = bound[i]
            elif head_arg != bound[i]:
                return None  # head constant can never match the bound value
        new_head = Atom(seed_pred, tuple(_subst_term(rule.head.args[i], subst) for i in keep))
        new_body = []
        for lit in rule.body:
            payload = lit.payload
            if isinstance(payload, Atom) and payload is occ:
                payload = Atom(seed_pred, tuple(_subst_term(payload.args[i], subst) for i in keep))
            else:
                payload = _subst_payload(payload, subst)
            new_body.append(Literal(payload, lit.negated, lit.span))
        return Rule(new_head, tuple(new_body), rule.span)

    seeded: list[Rule] = []
    for rule in exit_rules:
        s = specialize(rule, None)
        if s is not None:
            seeded.append(s)
    for rule, occ in rec_rules:
        s = specialize(rule, occ)
        if s is not None:
            seeded.append(s)

    # goal selects from the seeded predicate, filtering leftover bound positions
    seed_args = tuple(target_atom.args[i] for i in keep)
    new_goal = Rule(goal.head, (Literal(Atom(seed_pred, seed_args)),), goal.span)

    out_rules = [r for r in program.rules if r.head.pred != p and r is not goal]
    out_rules.extend(seeded)
    out_rules.append(new_goal)
    facts = [f for f in program.facts if f.pred != p]
    for f in program.facts:
        if f.pred == p and all(f.args[i] == bound[i] for i in seedable):
            facts.append(Atom(seed_pred, tuple(f.args[i] for i in keep), f.span))
    return Program(tuple(out_rules), tuple(facts), program.maxint)


def _fresh_name(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    n = 2
    while f"{base}__{n}" in taken:
        n += 1
    return f"{base}__{n}"


def _subst_term(t: Term, subst: dict[str, Term]) -> Term:
    if t.is_var and str(t.value) in subst:
        return subst[str(t.value)]
    return t


def _subst_payload(payload, subst: dict[str, Term]):
    if isinstance(payload, Atom):
        return Atom(payload.pred, tuple(_subst_term(t, subst) for t in payload.args), payload.span)
    if hasattr(payload, "op"):  # builtin
        return type(payload)(
            payload.op, tuple(_subst_term(t, subst) for t in payload.args), payload.span
        )
    # aggregate: substitute guard and conjunction (set variables are local)
    sset = payload.sset
    new_conj = tuple(
        Atom(a.pred, tuple(_subst_term(t, subst) for t in a.args), a.span) for a in sset.conj
    )
    return type(payload)(
        payload.func,
        SymbolicSet(sset.vars, new_conj, sset.span),
        payload.cmp,
        _subst_term(payload.guard, subst),
        payload.span,
    )
