import os

import pytest

from conftest import canon
from deductdb import bench, engine
from deductdb.ast import INTEGER
from deductdb.backend import (
    BackendError,
    SqliteBackend,
    bind_tables,
    profile_for,
    read_fact_csv,
    resolve_database_path,
    stage_inputs,
)
from deductdb.parser import parse_directives, parse_program

FIG_DIRECTIVES = """
USEDB work::.
USE flight_rel (Id, FromX, ToY, Company) FROM dbAirports::
MAPTO flight (integer, varchar(255), varchar(255), varchar(255)).
USE codeshare_rel (Company1, Company2, FlightId) FROM dbCommercial::
MAPTO codeshare (varchar(255), varchar(255), integer).
CREATE destinations_rel (FromX, ToY, Company)
MAPTO destinations (varchar(255), varchar(255), varchar(255)) KEEP_AFTER_EXECUTION.
"""

DESTINATIONS_PROGRAM = """
destinations(F, T, C) :- flight(I, F, T, C).
destinations(F, T, C) :- flight(I, F, T, C2), codeshare(C2, C, I).
destinations(F, T, C) :- destinations(F, M, C), destinations(M, T, C).
"""


class TestResolvePath:
    def test_bare_name_lands_in_base_dir(self, tmp_path):
        from deductdb.ast import ConnectionSpec

        assert resolve_database_path(ConnectionSpec("dbX"), tmp_path) == str(
            tmp_path / "dbX.sqlite"
        )

    def test_explicit_path_passes_through(self):
        from deductdb.ast import ConnectionSpec

        assert resolve_database_path(ConnectionSpec("/tmp/a.db")) == os.path.join(
            "/tmp", "a.db"
        )

    def test_memory_passes_through(self):
        from deductdb.ast import ConnectionSpec

        assert resolve_database_path(ConnectionSpec(":memory:")) == ":memory:"


class TestProfiles:
    def test_mysql_gets_no_except(self):
        assert profile_for("MYSQL").dialect == "no-except"

    def test_others_generic(self):
        for like in (None, "POSTGRES", "ORACLE", "DB2", "SQLSERVER"):
            assert profile_for(like).dialect == "generic"


class TestBindTables:
    def test_declared_mappings(self):
        program = parse_program(DESTINATIONS_PROGRAM)
        directives = parse_directives(FIG_DIRECTIVES)
        backend = SqliteBackend(":memory:")
        try:
            bindings = bind_tables(program, directives, backend)
        finally:
            backend.close()
        assert bindings["flight"].table == "flight_rel"
        assert bindings["flight"].source == "use-external"
        assert bindings["codeshare"].source == "use-external"
        dest = bindings["destinations"]
        assert dest.table == "destinations_rel" and dest.source == "created" and dest.keep

    def test_implicit_use_when_table_exists(self):
        program = parse_program("p(X) :- edge(X, Y).")
        backend = SqliteBackend(":memory:")
        try:
            backend.execute("CREATE TABLE edge (src INTEGER, dst INTEGER)")
            bindings = bind_tables(program, parse_directives("USEDB w::."), backend)
            assert bindings["edge"].source == "use-working"
            assert bindings["edge"].attrs == ("src", "dst")  # names come from the table
            assert bindings["p"].source == "created"
            assert bindings["p"].attrs == ("att_1",)
        finally:
            backend.close()

    def test_implicit_use_arity_mismatch_rejected(self):
        program = parse_program("p(X) :- edge(X, Y).")
        backend = SqliteBackend(":memory:")
        try:
            backend.execute("CREATE TABLE edge (a INTEGER)")
            with pytest.raises(BackendError, match="arity"):
                bind_tables(program, parse_directives("USEDB w::."), backend)
        finally:
            backend.close()

    def test_use_of_missing_table_rejected(self):
        program = parse_program("p(X) :- edge(X, Y).")
        backend = SqliteBackend(":memory:")
        try:
            with pytest.raises(BackendError, match="does not exist"):
                bind_tables(
                    program,
                    parse_directives("USEDB w::. USE missing (a, b) MAPTO edge."),
                    backend,
                )
        finally:
            backend.close()

    def test_mapto_arity_mismatch_rejected(self):
        program = parse_program("p(X) :- edge(X, Y).")
        backend = SqliteBackend(":memory:")
        try:
            with pytest.raises(BackendError, match="MAPTO"):
                bind_tables(
                    program,
                    parse_directives("USEDB w::. CREATE t MAPTO edge (integer)."),
                    backend,
                )
        finally:
            backend.close()

    def test_integer_inference_from_arithmetic(self):
        program = parse_program("#maxint=9. p(Y) :- edge(X, Y2), +(X, 1, Y), q(Y2).")
        backend = SqliteBackend(":memory:")
        try:
            bindings = bind_tables(program, parse_directives("USEDB w::."), backend)
        finally:
            backend.close()
        assert bindings["edge"].types[0] == INTEGER
        assert bindings["edge"].types[1].base == "varchar"
        assert bindings["p"].types[0] == INTEGER

    def test_deterministic(self):
        program = parse_program(DESTINATIONS_PROGRAM)
        directives = parse_directives(FIG_DIRECTIVES)
        backend = SqliteBackend(":memory:")
        try:
            assert bind_tables(program, directives, backend) == bind_tables(
                program, directives, backend
            )
        finally:
            backend.close()


class TestStaging:
    def test_as_query_materialized(self, tmp_path):
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "USE t (a, b) AS (SELECT a, b FROM r WHERE a > 0) MAPTO q (integer, integer).\n"
        )
        seed = SqliteBackend(f"{tmp_path}/w.sqlite")
        seed.execute("CREATE TABLE r (a INTEGER, b INTEGER)")
        seed.load_rows("r", [(-1, 10), (1, 11), (2, 12)])
        seed.close()
        program = parse_program("p(X) :- q(X, Y).")
        ext = engine.extensions(program, directives, base_dir=tmp_path)
        assert ext["q"] == {(1, 11), (2, 12)}
        assert canon(ext["p"]) == canon({(1,), (2,)})

    def test_external_database_copy(self, tmp_path):
        ext_db = SqliteBackend(str(tmp_path / "dbAirports.sqlite"))
        ext_db.execute("CREATE TABLE flight_rel (Id INTEGER, FromX, ToY, Company)")
        ext_db.load_rows(
            "flight_rel", [(1, "rome", "paris", "az"), (2, "paris", "oslo", "af")]
        )
        ext_db.close()
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "USE flight_rel (Id, FromX, ToY, Company) FROM dbAirports::\n"
            "MAPTO flight (integer, varchar(255), varchar(255), varchar(255)).\n"
        )
        program = parse_program("dest(F, T) :- flight(I, F, T, C).")
        ext = engine.extensions(program, directives, base_dir=tmp_path)
        assert canon(ext["dest"]) == canon({("rome", "paris"), ("paris", "oslo")})

    def test_zero_facts_noop(self, mem_directives):
        program = parse_program("p(X) :- q(X).")
        ext = engine.extensions(program, mem_directives)
        assert ext["p"] == set() and ext["q"] == set()

    def test_duplicate_facts_collapse(self, mem_directives):
        program = parse_program("p(1). p(1). p(2).")
        ext = engine.extensions(program, mem_directives)
        assert len(ext["p"]) == 2

    def test_csv_round_trip(self, tmp_path, mem_directives):
        path = tmp_path / "edges.csv"
        path.write_text('1,2\n2,3\n"3",4\n', encoding="utf-8")
        rows = read_fact_csv(path)
        assert rows == [(1, 2), (2, 3), (3, 4)]

    def test_csv_arity_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n", encoding="utf-8")
        with pytest.raises(BackendError, match="fields"):
            read_fact_csv(path)

    def test_csv_rejects_empty_fields(self, tmp_path):
        path = tmp_path / "null.csv"
        path.write_text("1,\n", encoding="utf-8")
        with pytest.raises(BackendError, match="null"):
            read_fact_csv(path)


class TestExecuteSemantics:
    def test_insert_select_on_empty_source_returns_zero(self):
        backend = SqliteBackend(":memory:")
        try:
            backend.execute("CREATE TABLE a (x)")
            backend.execute("CREATE TABLE b (x)")
            assert backend.execute("INSERT INTO b SELECT * FROM a") == 0
        finally:
            backend.close()

    def test_statement_reexecution_inserts_zero(self, mem_directives):
        # set semantics: the trailing subtraction makes every statement
        # idempotent
        program = parse_program("p(X) :- e(X). e(1). e(2).")
        backend = SqliteBackend(":memory:")
        try:
            prepared = engine.prepare(program, mem_directives, backend)
            stage_inputs(prepared.plan, prepared.program, backend)
            stmt = prepared.plan.component_plans[-1].exit_statements[0]
            assert backend.execute(stmt) == 2
            assert backend.execute(stmt) == 0
        finally:
            backend.close()

    def test_error_carries_statement_text(self):
        backend = SqliteBackend(":memory:")
        try:
            with pytest.raises(BackendError, match="SELECT broken"):
                backend.execute("SELECT broken FROM nowhere")
        finally:
            backend.close()


class TestExports:
    def setup_run(self, tmp_path, final_section):
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "CREATE p_rel (att_1) MAPTO p (integer).\n" + final_section
        )
        program = parse_program("p(X) :- e(X). e(1). e(2).")
        engine.run(program, directives, base_dir=tmp_path)
        return directives

    def test_output_with_alias_in_target_db(self, tmp_path):
        self.setup_run(
            tmp_path, f'OUTPUT p AS results IN "{tmp_path}/out.sqlite"::.\n'
        )
        out = SqliteBackend(f"{tmp_path}/out.sqlite")
        try:
            assert out.rows("results") == {(1,), (2,)}
        finally:
            out.close()

    def test_output_overwrite_replaces(self, tmp_path):
        pre = SqliteBackend(f"{tmp_path}/out.sqlite")
        pre.execute("CREATE TABLE results (att_1 INTEGER)")
        pre.load_rows("results", [(99,)])
        pre.close()
        self.setup_run(tmp_path, f'OUTPUT p AS results IN "{tmp_path}/out.sqlite"::.\n')
        out = SqliteBackend(f"{tmp_path}/out.sqlite")
        try:
            assert out.rows("results") == {(1,), (2,)}
        finally:
            out.close()

    def test_output_append_keeps_duplicates(self, tmp_path):
        pre = SqliteBackend(f"{tmp_path}/out.sqlite")
        pre.execute("CREATE TABLE results (att_1 INTEGER)")
        pre.load_rows("results", [(1,)])
        pre.close()
        self.setup_run(
            tmp_path, f'OUTPUT APPEND p AS results IN "{tmp_path}/out.sqlite"::.\n'
        )
        out = SqliteBackend(f"{tmp_path}/out.sqlite")
        try:
            rows = out.fetch("SELECT att_1 FROM results ORDER BY att_1")
            assert rows == [(1,), (1,), (2,)]  # append permits duplicates
        finally:
            out.close()

    def test_dboutput_copies_every_predicate_table(self, tmp_path):
        self.setup_run(tmp_path, f'DBOUTPUT "{tmp_path}/all.sqlite"::.\n')
        out = SqliteBackend(f"{tmp_path}/all.sqlite")
        try:
            assert out.rows("p_rel") == {(1,), (2,)}
            assert canon(out.rows("e")) == canon({(1,), (2,)})
        finally:
            out.close()

    def test_no_final_section_exports_nothing_and_drops_created(self, tmp_path):
        self.setup_run(tmp_path, "")
        work = SqliteBackend(f"{tmp_path}/w.sqlite")
        try:
            assert not work.table_exists("p_rel")  # created, no KEEP: dropped
        finally:
            work.close()


class TestScale:
    def _seeded_reach_growth(self, tmp_path, depth):
        instance = bench.gen_tree(depth)
        enc = bench.encode(
            "reachability", "Q1", instance, linear=True,
            workdb=str(tmp_path / f"mem{depth}.sqlite"),
        )
        program = parse_program(enc.program_text)
        directives = parse_directives(enc.directive_text)
        result = engine.run(
            program, directives, base_dir=tmp_path, facts=enc.facts, track_memory=True
        )
        return result.rss_growth_bytes, result.query_rows

    def test_bulk_load_count_matches(self, tmp_path):
        n = int(os.environ.get("DEDUCTDB_BIGDATA_ROWS", "100000"))
        backend = SqliteBackend(str(tmp_path / "bulk.sqlite"))
        try:
            backend.execute("CREATE TABLE edge (att_1 INTEGER, att_2 INTEGER)")
            backend.load_rows("edge", ((i, i + 1) for i in range(n)))
            assert backend.count("edge") == n
        finally:
            backend.close()

    @pytest.mark.skipif(
        not os.environ.get("DEDUCTDB_BIGDATA"),
        reason="paper-scale load; set DEDUCTDB_BIGDATA=1 to run",
    )
    def test_paper_scale_edge_load(self, tmp_path):
        # a depth-21 full binary tree has 4194302 arcs
        def edges():
            for i in range(1, 2**21):
                yield (i, 2 * i)
                yield (i, 2 * i + 1)

        backend = SqliteBackend(str(tmp_path / "big.sqlite"))
        try:
            backend.execute("CREATE TABLE edge (att_1 INTEGER, att_2 INTEGER)")
            backend.load_rows("edge", edges())
            assert backend.count("edge") == 4194302
        finally:
            backend.close()

    def test_memory_growth_bounded_across_scale(self, tmp_path):
        pytest.importorskip("psutil")
        small_growth, small_rows = self._seeded_reach_growth(tmp_path, 10)
        big_growth, big_rows = self._seeded_reach_growth(tmp_path, 13)
        assert big_rows == 2**14 - 2  # every non-root node is reachable
        floor = 32 * 2**20
        assert big_growth <= max(2 * small_growth, floor), (small_growth, big_growth)

    @pytest.mark.skipif(
        not os.environ.get("DEDUCTDB_BIGDATA"),
        reason="million-edge evaluation; set DEDUCTDB_BIGDATA=1 to run",
    )
    def test_memory_growth_bounded_at_million_edges(self, tmp_path):
        pytest.importorskip("psutil")
        small_growth, _ = self._seeded_reach_growth(tmp_path, 13)  # 16382 arcs
        big_growth, big_rows = self._seeded_reach_growth(tmp_path, 19)  # 1048574 arcs
        assert big_rows == 2**20 - 2
        floor = 64 * 2**20
        assert big_growth <= max(2 * small_growth, floor), (small_growth, big_growth)


class TestCleanup:
    def test_delta_and_temp_tables_dropped_use_kept(self, tmp_path):
        work = SqliteBackend(f"{tmp_path}/w.sqlite")
        work.execute("CREATE TABLE edge (att_1 INTEGER, att_2 INTEGER)")
        work.load_rows("edge", [(1, 2), (2, 3)])
        work.close()
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "USE edge (att_1, att_2) MAPTO edge (integer, integer).\n"
            "CREATE reach (att_1, att_2) MAPTO reachable (integer, integer) KEEP_AFTER_EXECUTION.\n"
            "CREATE tmp_rel (att_1) MAPTO tmp (integer).\n"
        )
        program = parse_program(
            "reachable(X, Y) :- edge(X, Y).\n"
            "reachable(X, Y) :- reachable(X, Z), reachable(Z, Y).\n"
            "tmp(X) :- edge(X, Y).\n"
        )
        engine.run(program, directives, base_dir=tmp_path)
        work = SqliteBackend(f"{tmp_path}/w.sqlite")
        try:
            assert work.table_exists("edge")  # USE tables never dropped
            assert work.table_exists("reach")  # KEEP_AFTER_EXECUTION
            assert work.rows("reach") == {(1, 2), (2, 3), (1, 3)}
            assert not work.table_exists("tmp_rel")
            assert not work.table_exists("d_reach")
            assert not work.table_exists("d1_reach")
        finally:
            work.close()

    def test_keep_temp_flag_preserves_everything(self, tmp_path):
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "CREATE p_rel (att_1) MAPTO p (integer).\n"
        )
        program = parse_program("p(X) :- e(X). e(1).")
        engine.run(program, directives, base_dir=tmp_path, keep_temp=True)
        work = SqliteBackend(f"{tmp_path}/w.sqlite")
        try:
            assert work.table_exists("p_rel")
        finally:
            work.close()

    def test_cleanup_applies_after_failure(self, tmp_path):
        directives = parse_directives(
            f'USEDB "{tmp_path}/w.sqlite"::.\n'
            "CREATE edge_rel (att_1, att_2) MAPTO edge (integer, integer).\n"
        )
        program = parse_program(
            "reachable(X, Y) :- edge(X, Y).\n"
            "reachable(X, Y) :- reachable(X, Z), reachable(Z, Y).\n"
        )
        from deductdb.backend import EvaluationTimeout

        with pytest.raises(EvaluationTimeout):
            engine.run(
                program,
                directives,
                base_dir=tmp_path,
                facts={"edge": [(i, i + 1) for i in range(200)]},
                timeout_seconds=0.0001,
            )
        work = SqliteBackend(f"{tmp_path}/w.sqlite")
        try:
            assert not work.table_exists("d_reachable")
            assert not work.table_exists("d1_reachable")
        finally:
            work.close()
