"""Mapping predicates to tables across several databases.

The directive file names a working database, maps input predicates to tables
that may live in other database files (copied in before evaluation) or be
defined by an SQL query, and routes results to output databases.  Unmapped
predicates bind implicitly: to a same-named working table when one exists,
otherwise to a freshly created one.

Run:  python demos/04_table_mappings.py
"""

import tempfile
from pathlib import Path

from deductdb import SqliteBackend, parse_directives, parse_program, run

base = Path(tempfile.mkdtemp(prefix="deductdb_demo_"))
print("databases live under", base)

# an "external" airline database
airports = SqliteBackend(str(base / "dbAirports.sqlite"))
airports.execute("CREATE TABLE flight_rel (Id INTEGER, FromX, ToY, Company)")
airports.load_rows(
    "flight_rel",
    [
        (1, "rome", "paris", "alitalia"),
        (2, "paris", "london", "airfrance"),
        (3, "rome", "milan", "alitalia"),
    ],
)
airports.close()

program = parse_program(
    """
    destinations(F, T, C) :- flight(I, F, T, C).
    destinations(F, T, C) :- destinations(F, M, C), destinations(M, T, C).
    """
)

directives = parse_directives(
    f"""
    USEDB "{base}/work.sqlite"::.
    USE flight_rel (Id, FromX, ToY, Company) FROM dbAirports::
        MAPTO flight (integer, varchar(255), varchar(255), varchar(255)).
    CREATE destinations_rel (FromX, ToY, Company)
        MAPTO destinations (varchar(255), varchar(255), varchar(255)) KEEP_AFTER_EXECUTION.
    OUTPUT destinations AS composedCompanyRoutes IN "{base}/agency.sqlite"::.
    """
)

result = run(program, directives, base_dir=base)
print(result.render())

agency = SqliteBackend(str(base / "agency.sqlite"))
print("\nrows delivered to the agency database:")
for row in sorted(agency.rows("composedCompanyRoutes")):
    print("  ", row)
agency.close()
