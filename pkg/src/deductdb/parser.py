"""Text to AST for the rule language and the auxiliary-directive language.

Both parsers are hand-written recursive descent over a small token stream.
Keywords are case-insensitive (as in SQL); identifiers are case-preserving.
Comments run from ``%`` to end of line in programs and from ``--`` to end of
line in directive files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .ast import (
    AGGREGATE_FUNCS,
    ARITHMETIC_OPS,
    COMPARISON_OPS,
    COMPLEMENT_OP,
    RESERVED_PREFIX,
    AggregateAtom,
    Atom,
    BuiltinAtom,
    ConnectionSpec,
    Diagnostic,
    DirectiveSet,
    Literal,
    OutputDirective,
    Program,
    ProgramError,
    Rule,
    SourceSpan,
    SqlType,
    SymbolicSet,
    TableDef,
    Term,
)

_PUNCT = (":-", "!=", "<=", ">=", "<", ">", "=", ".", ",", "(", ")", "{", "}", ":", "+", "*", "|")

_DIRECTIVE_KEYWORDS = {
    "USEDB",
    "USE",
    "CREATE",
    "QUERY",
    "OUTPUT",
    "DBOUTPUT",
    "MAPTO",
    "KEEP_AFTER_EXECUTION",
    "LIKE",
    "AS",
    "FROM",
    "IN",
    "APPEND",
    "OVERWRITE",
}

_LIKE_SYSTEMS = {"POSTGRES", "ORACLE", "DB2", "SQLSERVER", "MYSQL"}


@dataclass
class _Token:
    kind: str  # ident | var | int | string | punct | eof
    text: str
    line: int
    column: int

    @property
    def value(self):
        return int(self.text) if self.kind == "int" else self.text


def _tokenize(text: str, file: str, comment: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def err(msg: str, ln: int, cl: int):
        raise ProgramError([Diagnostic(msg, SourceSpan(file, ln, cl))])

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if text.startswith(comment, i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                err("unterminated string literal", start_line, start_col)
            tokens.append(_Token("string", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("int", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "var" if (word[0].isupper() or word[0] == "_") else "ident"
            tokens.append(_Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        if c == "#":
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            tokens.append(_Token("ident", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(_Token("punct", p, start_line, start_col))
                col += len(p)
                i += len(p)
                break
        else:
            err(f"unexpected character {c!r}", start_line, start_col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[_Token], file: str):
        self.tokens = tokens
        self.pos = 0
        self.file = file

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def span(self, tok: Optional[_Token] = None) -> SourceSpan:
        tok = tok or self.peek()
        return SourceSpan(self.file, tok.line, tok.column)

    def error(self, message: str, tok: Optional[_Token] = None):
        raise ProgramError([Diagnostic(message, self.span(tok))])

    def expect_punct(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != text:
            self.error(f"expected '{text}', found {tok.text!r}")
        return self.next()

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == text

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind in ("ident", "var") and tok.text.upper() in words

    def expect_keyword(self, word: str) -> _Token:
        if not self.at_keyword(word):
            self.error(f"expected '{word}', found {self.peek().text!r}")
        return self.next()


# ---------------------------------------------------------------------------
# Program language
# ---------------------------------------------------------------------------


class _ProgramParser:
    def __init__(self, text: str, file: str):
        self.ts = _TokenStream(_tokenize(text, file, "%"), file)
        self.anon_counter = 0

    def parse(self) -> Program:
        rules: list[Rule] = []
        facts: list[Atom] = []
        maxint = 0
        ts = self.ts
        while ts.peek().kind != "eof":
            if ts.peek().text == "#maxint":
                ts.next()
                ts.expect_punct("=")
                tok = ts.peek()
                if tok.kind != "int":
                    ts.error("expected integer after #maxint=")
                maxint = int(ts.next().text)
                ts.expect_punct(".")
                continue
            rule = self._rule()
            if rule.is_fact:
                facts.append(rule.head)
            else:
                rules.append(rule)
        return Program(tuple(rules), tuple(facts), maxint)

    def _rule(self) -> Rule:
        ts = self.ts
        self.anon_counter = 0
        span = ts.span()
        head = self._atom()
        if ts.peek().kind == "ident" and ts.peek().text == "v" or ts.at_punct("|"):
            ts.error("disjunctive heads are not supported")
        body: list[Literal] = []
        if ts.at_punct(":-"):
            ts.next()
            if not ts.at_punct("."):
                body.append(self._literal())
                while ts.at_punct(","):
                    ts.next()
                    body.append(self._literal())
        ts.expect_punct(".")
        return Rule(head, tuple(body), span)

    def _literal(self) -> Literal:
        ts = self.ts
        span = ts.span()
        negated = False
        if ts.peek().kind == "ident" and ts.peek().text == "not":
            negated = True
            ts.next()
        tok = ts.peek()
        if tok.text in AGGREGATE_FUNCS:
            payload = self._aggregate()
            return Literal(payload, negated, span)
        if tok.kind == "punct" and tok.text in ARITHMETIC_OPS:
            op = ts.next().text
            ts.expect_punct("(")
            args = [self._term()]
            for _ in range(2):
                ts.expect_punct(",")
                args.append(self._term())
            ts.expect_punct(")")
            builtin = BuiltinAtom(op, tuple(args), span)
            if negated:
                ts.error("negated arithmetic builtins are not supported", tok)
            return Literal(builtin, False, span)
        if tok.kind == "ident" and ts.peek(1).kind == "punct" and ts.peek(1).text == "(":
            atom = self._atom()
            return Literal(atom, negated, span)
        if tok.kind == "ident" and not self._peek_comparison(1):
            atom = self._atom()  # zero-arity atom
            return Literal(atom, negated, span)
        lhs = self._term()
        cmp_tok = ts.peek()
        if not (cmp_tok.kind == "punct" and cmp_tok.text in COMPARISON_OPS):
            ts.error(f"expected comparison operator, found {cmp_tok.text!r}")
        op = ts.next().text
        rhs = self._term()
        if negated:
            op = COMPLEMENT_OP[op]
        return Literal(BuiltinAtom(op, (lhs, rhs), span), False, span)

    def _peek_comparison(self, ahead: int) -> bool:
        tok = self.ts.peek(ahead)
        return tok.kind == "punct" and tok.text in COMPARISON_OPS

    def _aggregate(self) -> AggregateAtom:
        ts = self.ts
        span = ts.span()
        func = ts.next().text
        ts.expect_punct("{")
        vars_: list[Term] = []
        vars_.append(self._set_var())
        while ts.at_punct(","):
            ts.next()
            vars_.append(self._set_var())
        ts.expect_punct(":")
        conj = [self._atom()]
        while ts.at_punct(","):
            ts.next()
            conj.append(self._atom())
        ts.expect_punct("}")
        cmp_tok = ts.peek()
        if not (cmp_tok.kind == "punct" and cmp_tok.text in COMPARISON_OPS):
            ts.error(f"expected comparison operator after set term, found {cmp_tok.text!r}")
        if cmp_tok.text == "!=":
            ts.error("'!=' is not a valid aggregate guard comparison")
        op = ts.next().text
        guard = self._term()
        return AggregateAtom(func, SymbolicSet(tuple(vars_), tuple(conj)), op, guard, span)

    def _set_var(self) -> Term:
        tok = self.ts.peek()
        if tok.kind != "var" or tok.text == "_":
            self.ts.error("symbolic set variables must be named variables")
        return self._term()

    def _atom(self) -> Atom:
        ts = self.ts
        tok = ts.peek()
        if tok.kind != "ident":
            ts.error(f"expected predicate name, found {tok.text!r}")
        span = ts.span()
        name = ts.next().text
        if name.startswith(RESERVED_PREFIX):
            ts.error(f"predicate prefix '{RESERVED_PREFIX}' is reserved", tok)
        args: list[Term] = []
        if ts.at_punct("("):
            ts.next()
            args.append(self._term())
            while ts.at_punct(","):
                ts.next()
                args.append(self._term())
            ts.expect_punct(")")
        return Atom(name, tuple(args), span)

    def _term(self) -> Term:
        ts = self.ts
        tok = ts.peek()
        span = ts.span()
        if tok.kind == "var":
            ts.next()
            if tok.text == "_":
                self.anon_counter += 1
                return Term("var", f"_anon_{self.anon_counter}", span)
            return Term("var", tok.text, span)
        if tok.kind == "int":
            ts.next()
            return Term("int", int(tok.text), span)
        if tok.kind == "ident":
            ts.next()
            return Term("str", tok.text, span)
        if tok.kind == "string":
            ts.next()
            return Term("str", tok.text, span)
        ts.error(f"expected term, found {tok.text!r}")


def parse_program(text: str, file: str = "<program>", default_maxint: int = 0) -> Program:
    """Parse program text; raises ProgramError carrying all diagnostics.

    ``default_maxint`` applies when the text itself does not set a bound
    (command-line override channel).
    """
    program = _ProgramParser(text, file).parse()
    if program.maxint == 0 and default_maxint > 0:
        program = Program(program.rules, program.facts, default_maxint)
    from .ast import check_program

    diags = check_program(program)
    if diags:
        raise ProgramError(diags)
    return program


# ---------------------------------------------------------------------------
# Directive language
# ---------------------------------------------------------------------------


class _DirectiveParser:
    def __init__(self, text: str, file: str):
        self.text = text
        self.ts = _TokenStream(_tokenize(_blank_sql_sections(text), file, "--"), file)

    def parse(self) -> DirectiveSet:
        ts = self.ts
        ts.expect_keyword("USEDB")
        working = self._connection()
        like = None
        if ts.at_keyword("LIKE"):
            ts.next()
            tok = ts.next()
            if tok.text.upper() not in _LIKE_SYSTEMS:
                ts.error(f"unknown system in LIKE clause: {tok.text!r}", tok)
            like = tok.text.upper()
        ts.expect_punct(".")

        tables: list[TableDef] = []
        mapped: dict[str, SourceSpan] = {}
        while ts.at_keyword("USE", "CREATE"):
            td = self._table_def()
            if td.predicate in mapped:
                raise ProgramError(
                    [Diagnostic(f"duplicate mapping for predicate '{td.predicate}'", td.span)]
                )
            mapped[td.predicate] = td.span
            tables.append(td)
        if ts.at_keyword("USEDB"):
            ts.error("at most one USEDB section is allowed")

        query = None
        if ts.at_keyword("QUERY"):
            ts.next()
            query = self._name()
            ts.expect_punct(".")

        outputs: list[OutputDirective] = []
        while ts.at_keyword("OUTPUT", "DBOUTPUT"):
            outputs.append(self._output())
        tok = ts.peek()
        if tok.kind != "eof":
            ts.error(f"unexpected {tok.text!r} after final section")
        return DirectiveSet(working, like, tuple(tables), query, tuple(outputs))

    def _table_def(self) -> TableDef:
        ts = self.ts
        span = ts.span()
        mode = ts.next().text.upper()
        table = self._name()
        attrs: list[str] = []
        if ts.at_punct("("):
            ts.next()
            attrs.append(self._name())
            while ts.at_punct(","):
                ts.next()
                attrs.append(self._name())
            ts.expect_punct(")")
        as_query = None
        if ts.at_keyword("AS"):
            if mode == "CREATE":
                ts.error("AS (...) is only allowed on USE definitions")
            ts.next()
            as_query = self._sql_block()
        from_db = None
        if ts.at_keyword("FROM"):
            if mode == "CREATE":
                ts.error("FROM is only allowed on USE definitions")
            ts.next()
            from_db = self._connection()
        mapto_pred = None
        mapto_types: list[SqlType] = []
        if ts.at_keyword("MAPTO"):
            ts.next()
            mapto_pred = self._name()
            if ts.at_punct("("):
                ts.next()
                mapto_types.append(self._sql_type())
                while ts.at_punct(","):
                    ts.next()
                    mapto_types.append(self._sql_type())
                ts.expect_punct(")")
        keep = False
        if ts.at_keyword("KEEP_AFTER_EXECUTION"):
            if mode == "USE":
                ts.error("KEEP_AFTER_EXECUTION applies only to CREATE definitions")
            ts.next()
            keep = True
        ts.expect_punct(".")
        if attrs and mapto_types and len(attrs) != len(mapto_types):
            raise ProgramError(
                [
                    Diagnostic(
                        f"MAPTO declares {len(mapto_types)} types but table '{table}' "
                        f"has {len(attrs)} attributes",
                        span,
                    )
                ]
            )
        return TableDef(
            mode, table, tuple(attrs), as_query, from_db, mapto_pred, tuple(mapto_types), keep, span
        )

    def _output(self) -> OutputDirective:
        ts = self.ts
        span = ts.span()
        kind = ts.next().text.upper()
        if kind == "DBOUTPUT":
            target = self._connection()
            ts.expect_punct(".")
            return OutputDirective("DBOUTPUT", "OVERWRITE", None, None, target, span)
        mode = "OVERWRITE"
        if ts.at_keyword("APPEND", "OVERWRITE"):
            mode = ts.next().text.upper()
        pred = self._name()
        alias = None
        if ts.at_keyword("AS"):
            ts.next()
            alias = self._name()
        target = None
        if ts.at_keyword("IN"):
            ts.next()
            target = self._connection()
        ts.expect_punct(".")
        return OutputDirective("OUTPUT", mode, pred, alias, target, span)

    def _sql_type(self) -> SqlType:
        ts = self.ts
        tok = ts.next()
        word = tok.text.lower()
        if word == "integer":
            return SqlType("integer")
        if word == "varchar":
            ts.expect_punct("(")
            size_tok = ts.peek()
            if size_tok.kind != "int" or int(size_tok.text) < 1:
                ts.error("varchar length must be a positive integer")
            size = int(ts.next().text)
            ts.expect_punct(")")
            return SqlType("varchar", size)
        ts.error(f"unknown SQL type {tok.text!r}", tok)

    def _connection(self) -> ConnectionSpec:
        ts = self.ts
        database = self._name()
        ts.expect_punct(":")
        user = ""
        if not ts.at_punct(":"):
            user = self._name()
        ts.expect_punct(":")
        password = ""
        tok = ts.peek()
        if tok.kind in ("ident", "var", "string") and not (
            tok.kind != "string" and tok.text.upper() in _DIRECTIVE_KEYWORDS
        ):
            password = self._name()
        return ConnectionSpec(database, user, password)

    def _name(self) -> str:
        ts = self.ts
        tok = ts.peek()
        if tok.kind == "string":
            return ts.next().text
        if tok.kind in ("ident", "var"):
            if tok.text.upper() in _DIRECTIVE_KEYWORDS:
                ts.error(f"{tok.text!r} is a keyword; quote it to use it as a name")
            return ts.next().text
        ts.error(f"expected a name, found {tok.text!r}")

    def _sql_block(self) -> str:
        # the tokenizer blanked the SQL out; recover the raw text by offsets
        ts = self.ts
        open_tok = ts.expect_punct("(")
        close_tok = ts.expect_punct(")")
        start = _offset_of(self.text, open_tok.line, open_tok.column)
        end = _offset_of(self.text, close_tok.line, close_tok.column)
        return self.text[start + 1 : end].strip()


def _blank_sql_sections(text: str) -> str:
    """Replace the interior of every ``AS ( ... )`` block with spaces so the
    directive tokenizer never sees raw SQL (which may contain quotes, dots,
    or unbalanced-looking content inside string literals)."""
    out = list(text)
    i = 0
    n = len(text)
    while i < n:
        if text[i] in "\"'":
            quote = text[i]
            i += 1
            while i < n and text[i] != quote:
                i += 1
            i += 1
            continue
        if text[i : i + 2].upper() == "AS" and (i == 0 or not text[i - 1].isalnum()):
            j = i + 2
            while j < n and text[j].isspace():
                j += 1
            if j < n and text[j] == "(":
                depth = 0
                k = j
                while k < n:
                    c = text[k]
                    if c == "'" and depth > 0:
                        m = k + 1
                        while m < n and text[m] != "'":
                            m += 1
                        for t in range(k, min(m + 1, n)):
                            if text[t] != "\n":
                                out[t] = " "
                        k = m + 1
                        continue
                    if c == "(":
                        depth += 1
                    elif c == ")":
                        depth -= 1
                        if depth == 0:
                            break
                    if depth > 0 and k > j and c != "\n":
                        out[k] = " "
                    k += 1
                i = k
                continue
        i += 1
    return "".join(out)


def _offset_of(text: str, line: int, column: int) -> int:
    lines = text.split("\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column - 1


def parse_directives(text: str, file: str = "<directives>") -> DirectiveSet:
    """Parse an auxiliary-directive file; raises ProgramError on violations."""
    return _DirectiveParser(text, file).parse()
