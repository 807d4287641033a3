"""Recursive-descent parser for the Cypher subset.

Input text is split into `;`-separated statements first (quote-aware), and
each statement is parsed independently: one bad statement yields a ParseError
value without aborting the rest.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .ast import (
    CREATE,
    MATCH_RETURN,
    MATCH_SET,
    MERGE,
    Agg,
    BoolOp,
    Cmp,
    Lit,
    NodePattern,
    OrderItem,
    Pattern,
    PropRef,
    RelPattern,
    ReturnItem,
    SetItem,
    Statement,
    VarRef,
    render_operand,
)

_KEYWORDS = {"CREATE", "MERGE", "MATCH", "WHERE", "RETURN", "ORDER", "BY",
             "LIMIT", "SET", "AND", "OR", "AS", "ASC", "DESC", "TRUE", "FALSE"}
_AGGREGATES = {"COUNT": "count", "SUM": "sum", "AVG": "avg"}

_NUMBER_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCTS = ("<>", "<-", "->", "(", ")", "[", "]", "{", "}", ":", ",", ".", "=",
           "<", ">", "-", ";")


class ParseError(Exception):
    """A statement that failed to parse; returned as data by parse()."""

    def __init__(self, message: str, line: int, column: int, token: str = ""):
        super().__init__(f"{message} at {line}:{column}" + (f" near {token!r}" if token else ""))
        self.message = message
        self.line = line
        self.column = column
        self.token = token


@dataclass
class _Token:
    kind: str  # IDENT | STRING | NUMBER | PUNCT | EOF
    text: str
    value: object
    line: int
    column: int


def split_statements(text: str) -> list[tuple[str, int]]:
    """Split on top-level `;`, quote-aware. Returns (chunk, start offset) pairs."""
    chunks = []
    start = 0
    in_string = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == ";":
            chunks.append((text[start:i], start))
            start = i + 1
        i += 1
    chunks.append((text[start:], start))
    return [(chunk, off) for chunk, off in chunks if chunk.strip()]


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    last_nl = text.rfind("\n", 0, offset)
    return line, offset - last_nl


def _tokenize(text: str, chunk: str, base: int) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(chunk):
        ch = chunk[i]
        if ch.isspace():
            i += 1
            continue
        line, col = _line_col(text, base + i)
        if ch == '"':
            j = i + 1
            while j < len(chunk):
                if chunk[j] == "\\":
                    j += 2
                    continue
                if chunk[j] == '"':
                    break
                j += 1
            if j >= len(chunk):
                raise ParseError("unterminated string literal", line, col, chunk[i:i + 12])
            raw = chunk[i:j + 1]
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                raise ParseError("invalid string escape", line, col, raw)
            tokens.append(_Token("STRING", raw, value, line, col))
            i = j + 1
            continue
        if ch.isdigit():
            m = _NUMBER_RE.match(chunk, i)
            tokens.append(_Token("NUMBER", m.group(), float(m.group()), line, col))
            i = m.end()
            continue
        m = _IDENT_RE.match(chunk, i)
        if m:
            tokens.append(_Token("IDENT", m.group(), m.group(), line, col))
            i = m.end()
            continue
        for punct in _PUNCTS:
            if chunk.startswith(punct, i):
                tokens.append(_Token("PUNCT", punct, punct, line, col))
                i += len(punct)
                break
        else:
            raise ParseError("unexpected character", line, col, ch)
    endline, endcol = _line_col(text, base + len(chunk))
    tokens.append(_Token("EOF", "", None, endline, endcol))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.column, tok.text)

    def expect_punct(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.text != text:
            raise self.error(f"expected {text!r}")
        return self.next()

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "PUNCT" and tok.text == text

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.text.upper() == word

    def take_keyword(self, word: str) -> bool:
        if self.at_keyword(word):
            self.next()
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        if not self.take_keyword(word):
            raise self.error(f"expected {word}")

    def expect_ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text.upper() in _KEYWORDS:
            raise self.error(f"expected {what}")
        return self.next().text

    # -- grammar -----------------------------------------------------------

    def statement(self) -> Statement:
        head = self.peek()
        if self.take_keyword("CREATE"):
            return self._mutation_pattern(CREATE, head)
        if self.take_keyword("MERGE"):
            return self._mutation_pattern(MERGE, head)
        if self.take_keyword("MATCH"):
            return self._match(head)
        raise self.error("expected CREATE, MERGE or MATCH")

    def finish(self, stmt: Statement) -> Statement:
        if self.peek().kind != "EOF":
            raise self.error("unexpected trailing input")
        return stmt

    def _mutation_pattern(self, kind: str, head: _Token) -> Statement:
        pattern = self.pattern()
        if pattern.hops() > 1:
            raise ParseError(f"{kind} supports at most one relationship per pattern",
                             head.line, head.column, head.text)
        return self.finish(Statement(kind, pattern, line=head.line, column=head.column))

    def _match(self, head: _Token) -> Statement:
        pattern = self.pattern()
        if pattern.hops() > 3:
            raise ParseError("MATCH patterns are limited to 3 relationships",
                             head.line, head.column, head.text)
        where = None
        if self.take_keyword("WHERE"):
            where = self.expr()
        if self.take_keyword("SET"):
            items = [self.set_item()]
            while self.at_punct(","):
                self.next()
                items.append(self.set_item())
            return self.finish(Statement(MATCH_SET, pattern, where=where,
                                         set_items=items, line=head.line,
                                         column=head.column))
        self.expect_keyword("RETURN")
        items = [self.return_item()]
        while self.at_punct(","):
            self.next()
            items.append(self.return_item())
        order_by = None
        if self.take_keyword("ORDER"):
            self.expect_keyword("BY")
            order_by = [self.order_item()]
            while self.at_punct(","):
                self.next()
                order_by.append(self.order_item())
        limit = None
        if self.take_keyword("LIMIT"):
            tok = self.peek()
            if tok.kind != "NUMBER" or not float(tok.value).is_integer():
                raise self.error("LIMIT expects an integer")
            self.next()
            limit = int(tok.value)
        return self.finish(Statement(MATCH_RETURN, pattern, where=where,
                                     return_items=items, order_by=order_by,
                                     limit=limit, line=head.line, column=head.column))

    def pattern(self) -> Pattern:
        nodes = [self.node_pattern()]
        rels = []
        while self.at_punct("-") or self.at_punct("<-"):
            rels.append(self.rel_pattern())
            nodes.append(self.node_pattern())
        return Pattern(nodes, rels)

    def node_pattern(self) -> NodePattern:
        self.expect_punct("(")
        var = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text.upper() not in _KEYWORDS:
            var = self.next().text
        labels = []
        while self.at_punct(":"):
            self.next()
            labels.append(self.expect_ident("label"))
        properties = self.property_map() if self.at_punct("{") else {}
        self.expect_punct(")")
        return NodePattern(var, sorted(labels), properties)

    def rel_pattern(self) -> RelPattern:
        reversed_ = False
        if self.at_punct("<-"):
            self.next()
            reversed_ = True
        else:
            self.expect_punct("-")
        self.expect_punct("[")
        var = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text.upper() not in _KEYWORDS:
            var = self.next().text
        type_ = None  # untyped matches any relationship (MATCH only)
        if self.at_punct(":"):
            self.next()
            type_ = self.expect_ident("relationship type")
        properties = self.property_map() if self.at_punct("{") else {}
        self.expect_punct("]")
        if reversed_:
            if self.at_punct("->"):
                raise self.error("relationship has two directions")
            self.expect_punct("-")
        else:
            if self.at_punct("->"):
                self.next()
            elif self.at_punct("-"):
                raise self.error("undirected relationships are not accepted; write -> or <-")
            else:
                raise self.error("expected ->")
        return RelPattern(var, type_, properties, reversed_)

    def property_map(self) -> dict:
        self.expect_punct("{")
        props = {}
        if not self.at_punct("}"):
            while True:
                key = self.expect_ident("property key")
                self.expect_punct(":")
                props[key] = self.literal()
                if self.at_punct(","):
                    self.next()
                    continue
                break
        self.expect_punct("}")
        return dict(sorted(props.items()))

    def literal(self):
        tok = self.peek()
        if tok.kind == "STRING":
            return self.next().value
        if tok.kind == "NUMBER":
            return self.next().value
        if tok.kind == "PUNCT" and tok.text == "-":
            self.next()
            num = self.peek()
            if num.kind != "NUMBER":
                raise self.error("expected number after -")
            self.next()
            return -num.value
        if tok.kind == "IDENT" and tok.text.upper() == "TRUE":
            self.next()
            return True
        if tok.kind == "IDENT" and tok.text.upper() == "FALSE":
            self.next()
            return False
        raise self.error("expected literal value")

    def expr(self):
        items = [self.and_expr()]
        while self.take_keyword("OR"):
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else BoolOp("OR", items)

    def and_expr(self):
        items = [self.term()]
        while self.take_keyword("AND"):
            items.append(self.term())
        return items[0] if len(items) == 1 else BoolOp("AND", items)

    def term(self):
        if self.at_punct("("):
            self.next()
            inner = self.expr()
            self.expect_punct(")")
            return inner
        left = self.operand()
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.text not in ("=", "<>", "<", ">"):
            raise self.error("expected comparison operator")
        self.next()
        right = self.operand()
        return Cmp(tok.text, left, right)

    def operand(self):
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text.upper() not in _KEYWORDS:
            var = self.next().text
            self.expect_punct(".")
            key = self.expect_ident("property key")
            return PropRef(var, key)
        return Lit(self.literal())

    def return_item(self) -> ReturnItem:
        expr = self._return_expr()
        alias = None
        if self.take_keyword("AS"):
            alias = self.expect_ident("alias")
        return ReturnItem(expr, alias)

    def _return_expr(self):
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text.upper() in _AGGREGATES:
            func = _AGGREGATES[self.next().text.upper()]
            self.expect_punct("(")
            arg = self._var_or_prop()
            self.expect_punct(")")
            return Agg(func, arg)
        return self._var_or_prop()

    def _var_or_prop(self):
        var = self.expect_ident("variable")
        if self.at_punct("."):
            self.next()
            return PropRef(var, self.expect_ident("property key"))
        return VarRef(var)

    def order_item(self) -> OrderItem:
        ref = render_operand(self._return_expr())
        desc = False
        if self.take_keyword("DESC"):
            desc = True
        else:
            self.take_keyword("ASC")
        return OrderItem(ref, desc)

    def set_item(self) -> SetItem:
        var = self.expect_ident("variable")
        self.expect_punct(".")
        key = self.expect_ident("property key")
        self.expect_punct("=")
        return SetItem(PropRef(var, key), Lit(self.literal()))


def parse(text: str) -> list[Statement | ParseError]:
    """Parse `;`-separated statements; each yields a tree or a ParseError."""
    results = []
    for chunk, offset in split_statements(text):
        try:
            tokens = _tokenize(text, chunk, offset)
            results.append(_Parser(tokens).statement())
        except ParseError as err:
            results.append(err)
    return results


def parse_one(text: str) -> Statement:
    """Parse exactly one statement, raising on failure."""
    parsed = parse(text)
    if not parsed:
        raise ParseError("empty statement", 1, 1)
    if len(parsed) > 1:
        raise ParseError("expected a single statement", 1, 1)
    result = parsed[0]
    if isinstance(result, ParseError):
        raise result
    return result
