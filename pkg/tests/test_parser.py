import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deductdb.ast import ProgramError
from deductdb.parser import parse_directives, parse_program

FIG_DIRECTIVES = """
USEDB dlvdb:myname:mypasswd.
USE flight_rel (Id, FromX, ToY, Company) FROM dbAirports:airportUser:airportPasswd
MAPTO flight (integer, varchar(255), varchar(255), varchar(255)).
USE codeshare_rel (Company1, Company2, FlightId) FROM dbCommercial:commUser:commPasswd
MAPTO codeshare (varchar(255), varchar(255), integer).
CREATE destinations_rel (FromX, ToY, Company)
MAPTO destinations (varchar(255), varchar(255), varchar(255)) KEEP_AFTER_EXECUTION.
OUTPUT destinations AS composedCompanyRoutes IN dbTravelAgency:agencyName:agencyPasswd.
"""


class TestProgramParser:
    def test_single_rule(self):
        program = parse_program("destinations(F, T, C) :- flight(I, F, T, C).")
        assert len(program.rules) == 1
        assert program.rules[0].head.arity == 3

    def test_empty_program(self):
        program = parse_program("")
        assert program.rules == () and program.facts == ()

    def test_two_facts(self):
        program = parse_program("edge(1,2). edge(2,3).")
        assert len(program.facts) == 2
        assert all(f.is_ground for f in program.facts)

    def test_comments_and_maxint(self):
        program = parse_program("% header\n#maxint=7. p(1). % trailing\n")
        assert program.maxint == 7 and len(program.facts) == 1

    def test_anonymous_variables_are_distinct(self):
        rule = parse_program("p(X) :- q(X, _), r(_, X).").rules[0]
        names = [str(t.value) for lit in rule.body for t in lit.payload.args if t.is_var]
        anons = [n for n in names if n.startswith("_anon")]
        assert len(anons) == 2 and anons[0] != anons[1]

    def test_negative_builtin_complemented(self):
        rule = parse_program("p(X) :- q(X), not X < 3.").rules[0]
        builtin = rule.body[1].payload
        assert builtin.op == ">=" and not rule.body[1].negated

    def test_syntax_error_has_span(self):
        with pytest.raises(ProgramError) as exc:
            parse_program("p(1)\nq(2).")
        span = exc.value.diagnostics[0].span
        assert span is not None and span.line == 2

    def test_euro_decimal_is_syntax_error(self):
        with pytest.raises(ProgramError):
            parse_program("p(100.000).")

    def test_disjunction_rejected(self):
        with pytest.raises(ProgramError, match="disjunctive"):
            parse_program("a(1) v b(1) :- c(1).")

    def test_reserved_prefix_rejected(self):
        with pytest.raises(ProgramError, match="reserved"):
            parse_program("aux__p(1).")

    def test_identifier_case_preserved(self):
        program = parse_program("p(MixedCase) :- someRelation(MixedCase).")
        rule = program.rules[0]
        assert rule.body[0].payload.pred == "someRelation"
        assert str(rule.head.args[0].value) == "MixedCase"


class TestDirectiveParser:
    def test_full_mapping_file(self):
        ds = parse_directives(FIG_DIRECTIVES)
        assert ds.working_db.database == "dlvdb"
        assert ds.working_db.user == "myname"
        uses = [t for t in ds.tables if t.mode == "USE"]
        creates = [t for t in ds.tables if t.mode == "CREATE"]
        assert len(uses) == 2 and len(creates) == 1
        assert all(t.from_db is not None and t.mapto_pred for t in uses)
        assert creates[0].keep and creates[0].mapto_pred == "destinations"
        assert creates[0].attrs == ("FromX", "ToY", "Company")
        assert len(ds.outputs) == 1
        out = ds.outputs[0]
        assert out.pred == "destinations" and out.alias == "composedCompanyRoutes"
        assert out.target.database == "dbTravelAgency"

    def test_init_section_only(self):
        ds = parse_directives("USEDB w:u:p.")
        assert ds.working_db.database == "w" and ds.tables == () and ds.outputs == ()

    def test_create_with_mapto(self):
        ds = parse_directives("USEDB w:u:p. CREATE t (a,b) MAPTO q (integer, integer).")
        td = ds.tables[0]
        assert td.predicate == "q" and len(td.mapto_types) == 2
        assert all(t.base == "integer" for t in td.mapto_types)

    def test_empty_credentials(self):
        ds = parse_directives("USEDB db::.")
        assert ds.working_db.user == "" and ds.working_db.password == ""

    def test_quoted_path_name(self):
        ds = parse_directives('USEDB "/tmp/x.sqlite"::.')
        assert ds.working_db.database == "/tmp/x.sqlite"

    def test_like_hint(self):
        ds = parse_directives("USEDB w:u:p LIKE postgres.")
        assert ds.like == "POSTGRES"

    def test_as_query_captured_verbatim(self):
        ds = parse_directives(
            "USEDB w::. USE t (a,b) AS (SELECT a, b FROM r WHERE a > 0) MAPTO q (integer, integer)."
        )
        assert ds.tables[0].as_query == "SELECT a, b FROM r WHERE a > 0"

    def test_query_section(self):
        ds = parse_directives("USEDB w::. QUERY results.")
        assert ds.query == "results"

    def test_dboutput(self):
        ds = parse_directives("USEDB w::. DBOUTPUT other:u:p.")
        assert ds.outputs[0].kind == "DBOUTPUT" and ds.outputs[0].target.database == "other"

    def test_output_append_without_target(self):
        ds = parse_directives("USEDB w::. OUTPUT APPEND p AS alias.")
        out = ds.outputs[0]
        assert out.mode == "APPEND" and out.alias == "alias" and out.target is None

    def test_duplicate_mapto_rejected(self):
        with pytest.raises(ProgramError, match="duplicate"):
            parse_directives("USEDB w::. USE a MAPTO p. USE b MAPTO p.")

    def test_duplicate_usedb_rejected(self):
        with pytest.raises(ProgramError, match="USEDB"):
            parse_directives("USEDB w::. USEDB v::.")

    def test_create_from_rejected(self):
        with pytest.raises(ProgramError, match="USE"):
            parse_directives("USEDB w::. CREATE t FROM other:u:p.")

    def test_mapto_type_count_must_match_attrs(self):
        with pytest.raises(ProgramError, match="types"):
            parse_directives("USEDB w::. CREATE t (a, b) MAPTO q (integer).")

    def test_keyword_case_insensitive(self):
        ds = parse_directives("usedb w:u:p. create t (a) mapto q (integer) keep_after_execution.")
        assert ds.tables[0].keep

    def test_directive_comments(self):
        ds = parse_directives("-- intro\nUSEDB w::. -- done\n")
        assert ds.working_db.database == "w"

    def test_round_trip(self):
        ds = parse_directives(FIG_DIRECTIVES)
        assert parse_directives(str(ds)) == ds

    def test_round_trip_with_query_and_as(self):
        text = (
            'USEDB "/tmp/a.db"::. USE t (x, y) AS (SELECT 1, 2 FROM q) MAPTO p (integer, integer). '
            "QUERY t. OUTPUT APPEND p AS alias IN other::."
        )
        ds = parse_directives(text)
        assert parse_directives(str(ds)) == ds


_name = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True)
_conn = st.builds(
    lambda db, u, p: f"{db}:{u}:{p}",
    _name,
    st.one_of(st.just(""), _name),
    st.one_of(st.just(""), _name),
)
_types = st.sampled_from(["integer", "varchar(255)", "varchar(8)"])


@st.composite
def _directive_text(draw):
    lines = [f"USEDB {draw(_conn)}" + draw(st.sampled_from(["", " LIKE POSTGRES", " LIKE mysql"])) + "."]
    n_attrs = draw(st.integers(min_value=1, max_value=3))
    attrs = [f"c{i}" for i in range(n_attrs)]
    for k in range(draw(st.integers(min_value=0, max_value=3))):
        mode = draw(st.sampled_from(["USE", "CREATE"]))
        parts = [mode, f"tab{k}", f"({', '.join(attrs)})"]
        if mode == "USE" and draw(st.booleans()):
            parts.append(f"FROM {draw(_conn)}")
        if draw(st.booleans()):
            parts.append(f"MAPTO pred{k}")
            parts.append(f"({', '.join(draw(_types) for _ in attrs)})")
        if mode == "CREATE" and draw(st.booleans()):
            parts.append("KEEP_AFTER_EXECUTION")
        lines.append(" ".join(parts) + ".")
    if draw(st.booleans()):
        lines.append(f"QUERY {draw(_name)}.")
    for j in range(draw(st.integers(min_value=0, max_value=2))):
        kind = draw(st.sampled_from(["OUTPUT", "DBOUTPUT"]))
        if kind == "DBOUTPUT":
            lines.append(f"DBOUTPUT {draw(_conn)}.")
        else:
            mode = draw(st.sampled_from(["", "APPEND ", "OVERWRITE "]))
            alias = draw(st.sampled_from(["", " AS ali"]))
            target = draw(st.sampled_from(["", " IN tdb::"]))
            lines.append(f"OUTPUT {mode}out{j}{alias}{target}.")
    return "\n".join(lines)


@given(_directive_text())
@settings(max_examples=120, deadline=None)
def test_directive_pretty_print_round_trip(text):
    ds = parse_directives(text)
    assert parse_directives(str(ds)) == ds
