import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deductdb.analysis import standardize_aggregates
from deductdb.ast import arity_check, check_program, safety_check
from deductdb.parser import parse_program
from deductdb.ast import ProgramError


def diags(text):
    try:
        parse_program(text)
        return []
    except ProgramError as e:
        return e.diagnostics


DESTINATIONS = """
destinations(FromX, ToY, Comp) :- flight(Id, FromX, ToY, Comp).
destinations(FromX, ToY, Comp) :- flight(Id, FromX, ToY, C2), codeshare(C2, Comp, Id).
destinations(FromX, ToY, Comp) :- destinations(FromX, T2, Comp), destinations(T2, ToY, Comp).
"""


class TestArityCheck:
    def test_conflicting_arities_rejected(self):
        msgs = [d.message for d in diags("p(1). p(1,2).")]
        assert any("'p'" in m and "1" in m and "2" in m for m in msgs)

    def test_same_arity_ok(self):
        assert parse_program("p(1). p(2).").facts == parse_program("p(1). p(2).").facts

    def test_destinations_program_ok(self):
        program = parse_program(DESTINATIONS)
        assert arity_check(program) == []


class TestSafetyCheck:
    def test_negated_only_occurrence_unsafe(self):
        assert any("unsafe" in d.message for d in diags("q(X) :- not p(X)."))

    def test_builtin_var_unsafe_without_maxint(self):
        assert any("maxint" in d.message for d in diags("q(X) :- p(X), X > Y."))

    def test_builtin_var_safe_with_maxint(self):
        parse_program("#maxint=5. q(X) :- p(X), X > Y.")

    def test_aggregate_rule_safe(self):
        parse_program("q(X) :- p(X), #count{Y : a(Y,X)} <= 2.")

    def test_guard_must_be_bound(self):
        assert any("guard" in d.message for d in diags("q(X) :- p(X), #count{Y : a(Y,X)} = C."))

    def test_set_var_must_occur_in_conjunction(self):
        assert any(
            "set variable" in d.message for d in diags("q(X) :- p(X), #count{Y : a(X)} <= 2.")
        )

    def test_facts_must_be_ground(self):
        program = parse_program("p(1).")
        rule = program.rules[0] if program.rules else None
        assert rule is None
        bad = diags("p(X).")
        assert any("ground" in d.message or "unsafe" in d.message for d in bad)

    def test_negated_aggregate_rejected(self):
        assert any(
            "negated aggregate" in d.message
            for d in diags("q(X) :- p(X), not #count{Y : a(Y,X)} <= 2.")
        )


# ---------------------------------------------------------------------------
# Round-trip property: printing and reparsing preserves structure
# ---------------------------------------------------------------------------

_ARITIES = {"p": 2, "q": 1, "r": 3, "s": 2, "t": 1}
_VARS = ["X", "Y", "Z"]
_consts = st.one_of(
    st.integers(min_value=0, max_value=9).map(str),
    st.sampled_from(["a", "b", "c"]),
)


@st.composite
def _atom_text(draw, pred, vars_pool):
    args = [draw(st.one_of(st.sampled_from(vars_pool), _consts)) for _ in range(_ARITIES[pred])]
    return f"{pred}({', '.join(args)})", [a for a in args if a in vars_pool]


@st.composite
def _rule_text(draw):
    vars_pool = draw(st.lists(st.sampled_from(_VARS), min_size=1, max_size=3, unique=True))
    anchor_pred = draw(st.sampled_from(["p", "r", "s"]))
    anchor_args = list(vars_pool) + ["a"] * (_ARITIES[anchor_pred] - len(vars_pool))
    if len(anchor_args) > _ARITIES[anchor_pred]:
        anchor_args = anchor_args[: _ARITIES[anchor_pred]]
        vars_pool = [v for v in vars_pool if v in anchor_args]
        if not vars_pool:
            anchor_args[0] = "X"
            vars_pool = ["X"]
    body = [f"{anchor_pred}({', '.join(anchor_args)})"]
    if draw(st.booleans()):
        atom, _ = draw(_atom_text(draw(st.sampled_from(["t", "q"])), vars_pool))
        body.append(f"not {atom}")
    if draw(st.booleans()):
        lhs, rhs = draw(st.sampled_from(vars_pool)), draw(_consts)
        op = draw(st.sampled_from(["=", "!=", "<", "<=", ">", ">="]))
        body.append(f"{lhs} {op} {rhs}")
    if draw(st.booleans()):
        grouped = draw(st.sampled_from(vars_pool))
        guard = draw(st.integers(min_value=0, max_value=5))
        cmp = draw(st.sampled_from(["=", "<", "<=", ">", ">="]))
        body.append(f"#count{{W : s(W, {grouped})}} {cmp} {guard}")
    head_pred = draw(st.sampled_from(["q", "t"]))
    head = f"{head_pred}({draw(st.sampled_from(vars_pool))})"
    return f"{head} :- {', '.join(body)}."


@st.composite
def _program_text(draw):
    facts = draw(
        st.lists(
            st.sampled_from(["p(1, 2).", "q(3).", "s(a, b).", "t(c).", "r(1, a, 2)."]),
            max_size=4,
        )
    )
    rules = draw(st.lists(_rule_text(), min_size=0, max_size=4))
    maxint = draw(st.sampled_from(["", "#maxint=9.\n"]))
    return maxint + "\n".join(facts + rules)


@given(_program_text())
@settings(max_examples=150, deadline=None)
def test_pretty_print_round_trip(text):
    program = parse_program(text)
    assert parse_program(str(program)) == program


@given(_program_text())
@settings(max_examples=60, deadline=None)
def test_standardization_preserves_literal_kinds(text):
    """New auxiliary rules contain only standard atoms; each original rule
    keeps exactly its aggregate literals, now over a single auxiliary atom."""
    program = parse_program(text)
    rewritten = standardize_aggregates(program)
    originals = {r.head.pred for r in program.rules}
    for rule in rewritten.rules:
        if rule.head.pred.startswith("aux__"):
            assert all(lit.is_standard and not lit.negated for lit in rule.body)
        else:
            assert rule.head.pred in originals
    for rule in rewritten.rules:
        for lit in rule.body:
            if lit.is_aggregate:
                assert len(lit.payload.sset.conj) == 1


def test_check_program_reports_all_diagnostics():
    try:
        parse_program("p(1). p(1,2). q(X) :- not p(X, X).")
        assert False, "should have raised"
    except ProgramError as e:
        assert len(e.diagnostics) >= 2
