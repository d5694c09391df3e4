import pytest

from deductdb import engine, oracle
from deductdb.ast import ConnectionSpec, DirectiveSet
from deductdb.parser import parse_directives, parse_program


MEM_DIRECTIVES = 'USEDB ":memory:"::.\n'


@pytest.fixture
def mem_directives():
    return parse_directives(MEM_DIRECTIVES)


def canon(rows):
    """Type-insensitive row set: relational storage may return integers as
    text when no integer type was declared."""
    return {tuple(str(v) for v in row) for row in rows}


def engine_vs_oracle(program_text, facts=None, directive_text=MEM_DIRECTIVES, **kwargs):
    """Evaluate the same program on the backend and in memory; returns the
    two extension maps restricted to predicates both sides computed."""
    program = parse_program(program_text)
    directives = parse_directives(directive_text)
    got = engine.extensions(program, directives, facts=facts, **kwargs)
    expected = oracle.evaluate(program, facts)
    shared = set(got) & set(expected)
    return {p: got[p] for p in shared}, {p: expected[p] for p in shared}


def assert_engine_matches_oracle(program_text, facts=None, **kwargs):
    got, expected = engine_vs_oracle(program_text, facts, **kwargs)
    for pred in sorted(expected):
        assert canon(got[pred]) == canon(expected[pred]), (
            f"extension mismatch for {pred}: engine={sorted(canon(got[pred]))} "
            f"oracle={sorted(canon(expected[pred]))}"
        )
