"""Front end for the if-then norm language.

Grammar::

    file   := { norm }
    norm   := "norm" IDENT ["priority" INT] "whenever" cond "then" action {";" action}
    action := IDENT "(" [term {"," term}] ")"
    cond   := conj {"or" conj}
    conj   := neg {"and" neg}
    neg    := ["not"] prim
    prim   := cmp | "(" cond ")"
    cmp    := term REL term | path | "true" | "false"
    term   := path | NUMBER | STRING | "true" | "false"
    path   := IDENT {"." IDENT}

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

from normroute.errors import NormSyntaxError

KEYWORDS = frozenset({"norm", "priority", "whenever", "then", "and", "or", "not", "true", "false"})
RELOPS = ("==", "!=", "<=", ">=", "<", ">")
ORDERING_OPS = frozenset({"<", "<=", ">", ">="})

NUMBER, STRING, BOOLEAN, ANY = "number", "string", "boolean", "any"


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    severity: str
    message: str
    expected: tuple[str, ...] = ()

    def format(self, filename: str = "<norms>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.severity}: {self.message}"


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class PathRef:
    parts: tuple[str, ...]
    span: Span | None = field(default=None, compare=False, repr=False)

    @property
    def dotted(self) -> str:
        return ".".join(self.parts)


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, str, bool]
    kind: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Compare:
    op: str
    left: Union[PathRef, Literal]
    right: Union[PathRef, Literal]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class And:
    children: tuple
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Or:
    children: tuple
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    child: object
    span: Span | None = field(default=None, compare=False, repr=False)


ConditionExpr = Union[And, Or, Not, Compare, PathRef, Literal]
Term = Union[PathRef, Literal]


@dataclass(frozen=True)
class ActionCall:
    name: str
    args: tuple[Term, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class NormAST:
    name: str
    priority: int
    condition: ConditionExpr
    actions: tuple[ActionCall, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


def iter_leaves(cond) -> Iterator[Union[Compare, PathRef, Literal]]:
    """Condition leaves in source order."""
    if isinstance(cond, (And, Or)):
        for c in cond.children:
            yield from iter_leaves(c)
    elif isinstance(cond, Not):
        yield from iter_leaves(cond.child)
    else:
        yield cond


def iter_paths(norm: NormAST) -> Iterator[PathRef]:
    for leaf in iter_leaves(norm.condition):
        if isinstance(leaf, Compare):
            for t in (leaf.left, leaf.right):
                if isinstance(t, PathRef):
                    yield t
        elif isinstance(leaf, PathRef):
            yield leaf
    for act in norm.actions:
        for a in act.args:
            if isinstance(a, PathRef):
                yield a


# --------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class Token:
    kind: str  # KW, IDENT, NUMBER, STRING, REL, PUNCT, ERROR, EOF
    text: str
    value: object
    line: int
    col: int
    end_line: int
    end_col: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind in ("KW", "REL", "PUNCT"):
            return f"'{self.text}'"
        if self.kind == "IDENT":
            return f"identifier '{self.text}'"
        return f"{self.kind.lower()} {self.text}"


_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CHARS = _IDENT_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    toks: list[Token] = []
    diags: list[Diagnostic] = []
    i, n = 0, len(text)
    line, col = 1, 1

    def emit(kind, start, start_line, start_col, value=None):
        toks.append(Token(kind, text[start:i], value, start_line, start_col, line, col))

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r\f\v":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        start, sl, sc = i, line, col
        if c in _IDENT_START:
            while i < n and text[i] in _IDENT_CHARS:
                i += 1
                col += 1
            word = text[start:i]
            emit("KW" if word in KEYWORDS else "IDENT", start, sl, sc, word)
        elif c in _DIGITS or (c == "-" and i + 1 < n and text[i + 1] in _DIGITS):
            i += 1
            col += 1
            while i < n and text[i] in _DIGITS:
                i += 1
                col += 1
            is_float = False
            if i + 1 < n and text[i] == "." and text[i + 1] in _DIGITS:
                is_float = True
                i += 1
                col += 1
                while i < n and text[i] in _DIGITS:
                    i += 1
                    col += 1
            lexeme = text[start:i]
            try:
                value = float(lexeme) if is_float else int(lexeme)
            except ValueError:  # beyond the interpreter's int digit limit
                value = math.inf
            if not math.isfinite(value):
                diags.append(Diagnostic(sl, sc, "error", "number out of range"))
                emit("ERROR", start, sl, sc, lexeme)
            else:
                emit("NUMBER", start, sl, sc, value)
        elif c == '"':
            i += 1
            col += 1
            chars = []
            ok = True
            while True:
                if i >= n or text[i] == "\n":
                    diags.append(Diagnostic(sl, sc, "error", "unterminated string literal"))
                    ok = False
                    break
                ch = text[i]
                if ch == '"':
                    i += 1
                    col += 1
                    break
                if ch == "\\":
                    esc = text[i + 1] if i + 1 < n else ""
                    if esc in ("", "\n"):
                        i += 1
                        col += 1
                        continue
                    if esc not in _ESCAPES:
                        diags.append(Diagnostic(line, col, "error", f"invalid escape sequence '\\{esc}'"))
                        ok = False
                    else:
                        chars.append(_ESCAPES[esc])
                    i += 2
                    col += 2
                    continue
                chars.append(ch)
                i += 1
                col += 1
            emit("STRING" if ok else "ERROR", start, sl, sc, "".join(chars))
        elif text.startswith(RELOPS, i):
            op = next(r for r in RELOPS if text.startswith(r, i))
            i += len(op)
            col += len(op)
            emit("REL", start, sl, sc, op)
        elif c in "();,.":
            i += 1
            col += 1
            emit("PUNCT", start, sl, sc, c)
        else:
            i += 1
            col += 1
            shown = c if c.isprintable() else repr(c)
            diags.append(Diagnostic(sl, sc, "error", f"unexpected character {shown}"))
            emit("ERROR", start, sl, sc, c)
    toks.append(Token("EOF", "", None, line, col, line, col))
    return toks, diags


# --------------------------------------------------------------------------
# Parser


class _Bail(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.diags: list[Diagnostic] = []

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, kind: str, value=None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def error(self, expected: Iterable[str], message: str | None = None):
        t = self.tok
        exp = tuple(sorted(set(expected)))
        if t.kind != "ERROR":  # lexer already reported it
            msg = message or f"expected {', '.join(exp)}; found {t.describe()}"
            self.diags.append(Diagnostic(t.line, t.col, "error", msg, exp))
        raise _Bail

    def expect(self, kind: str, value=None, label: str | None = None) -> Token:
        if self.at(kind, value):
            return self.advance()
        self.error([label or (f"'{value}'" if value is not None else kind.lower())])

    def span_from(self, start: Token) -> Span:
        prev = self.toks[self.pos - 1] if self.pos > 0 else start
        return Span(start.line, start.col, prev.end_line, prev.end_col)

    def parse_file(self) -> list[NormAST]:
        norms = []
        while not self.at("EOF"):
            try:
                if not self.at("KW", "norm"):
                    self.error(["'norm'"])
                norms.append(self.parse_norm())
            except _Bail:
                # resync at the next norm header
                self.advance()
                while not (self.at("EOF") or self.at("KW", "norm")):
                    self.advance()
        return norms

    def parse_norm(self) -> NormAST:
        start = self.expect("KW", "norm")
        name = self.expect("IDENT", label="norm name").value
        priority = 0
        if self.at("KW", "priority"):
            self.advance()
            t = self.tok
            if t.kind != "NUMBER" or not isinstance(t.value, int):
                self.error(["integer"])
            priority = self.advance().value
        self.expect("KW", "whenever")
        cond = self.parse_disj()
        self.expect("KW", "then")
        actions = [self.parse_action()]
        while self.at("PUNCT", ";"):
            self.advance()
            actions.append(self.parse_action())
        if not (self.at("EOF") or self.at("KW", "norm")):
            self.error(["';'", "'norm'", "end of input"])
        return NormAST(name, priority, cond, tuple(actions), self.span_from(start))

    def parse_action(self) -> ActionCall:
        start = self.tok
        name = self.expect("IDENT", label="action name").value
        self.expect("PUNCT", "(")
        args = []
        if not self.at("PUNCT", ")"):
            args.append(self.parse_term())
            while self.at("PUNCT", ","):
                self.advance()
                args.append(self.parse_term())
        self.expect("PUNCT", ")")
        return ActionCall(name, tuple(args), self.span_from(start))

    def parse_disj(self):
        start = self.tok
        kids = [self.parse_conj()]
        while self.at("KW", "or"):
            self.advance()
            kids.append(self.parse_conj())
        if len(kids) == 1:
            return kids[0]
        return Or(_flatten(Or, kids), self.span_from(start))

    def parse_conj(self):
        start = self.tok
        kids = [self.parse_neg()]
        while self.at("KW", "and"):
            self.advance()
            kids.append(self.parse_neg())
        if len(kids) == 1:
            return kids[0]
        return And(_flatten(And, kids), self.span_from(start))

    def parse_neg(self):
        if self.at("KW", "not"):
            start = self.advance()
            return Not(self.parse_prim(), self.span_from(start))
        return self.parse_prim()

    def parse_prim(self):
        if self.at("PUNCT", "("):
            self.advance()
            inner = self.parse_disj()
            self.expect("PUNCT", ")")
            return inner
        start = self.tok
        if start.kind not in ("IDENT", "NUMBER", "STRING") and not (
                start.kind == "KW" and start.value in ("true", "false")):
            self.error(["'('", "'not'", "identifier", "number", "string", "'true'", "'false'"])
        left = self.parse_term()
        if self.at("REL"):
            op = self.advance().value
            right = self.parse_term()
            return Compare(op, left, right, self.span_from(start))
        if isinstance(left, PathRef) or left.kind == BOOLEAN:
            return left
        self.error(["comparison operator"])

    def parse_term(self) -> Term:
        t = self.tok
        if t.kind == "IDENT":
            parts = [self.advance().value]
            while self.at("PUNCT", "."):
                self.advance()
                parts.append(self.expect("IDENT", label="identifier").value)
            return PathRef(tuple(parts), self.span_from(t))
        if t.kind == "NUMBER":
            self.advance()
            return Literal(t.value, NUMBER, self.span_from(t))
        if t.kind == "STRING":
            self.advance()
            return Literal(t.value, STRING, self.span_from(t))
        if t.kind == "KW" and t.value in ("true", "false"):
            self.advance()
            return Literal(t.value == "true", BOOLEAN, self.span_from(t))
        self.error(["identifier", "number", "string", "'true'", "'false'"])


def _flatten(cls, kids) -> tuple:
    out = []
    for k in kids:
        if isinstance(k, cls):
            out.extend(k.children)
        else:
            out.append(k)
    return tuple(out)


def parse_with_diagnostics(text: Union[str, bytes]) -> tuple[list[NormAST], list[Diagnostic]]:
    """Parse what can be parsed; never raises on malformed input."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = bytes(text)[: exc.start].decode("utf-8", errors="replace")
            line = prefix.count("\n") + 1
            col = len(prefix) - (prefix.rfind("\n") + 1) + 1
            return [], [Diagnostic(line, col, "error", "invalid UTF-8 byte sequence")]
    toks, lex_diags = tokenize(text)
    p = _Parser(toks)
    norms = p.parse_file()
    diags = sorted(lex_diags + p.diags, key=lambda d: (d.line, d.col))
    return norms, diags


def parse(text: Union[str, bytes]) -> list[NormAST]:
    norms, diags = parse_with_diagnostics(text)
    if diags:
        raise NormSyntaxError(diags)
    return norms


# --------------------------------------------------------------------------
# Pretty printer


def _fmt_literal(lit: Literal) -> str:
    if lit.kind == BOOLEAN:
        return "true" if lit.value else "false"
    if lit.kind == STRING:
        out = ['"']
        for ch in lit.value:
            if ch in '"\\':
                out.append("\\" + ch)
            elif ch == "\n":
                out.append("\\n")
            elif ch == "\t":
                out.append("\\t")
            elif ch == "\r":
                out.append("\\r")
            else:
                out.append(ch)
        out.append('"')
        return "".join(out)
    if isinstance(lit.value, float):
        s = format(decimal.Decimal(repr(lit.value)), "f")
        return s if "." in s else s + ".0"
    return str(lit.value)


def format_term(t: Term) -> str:
    return t.dotted if isinstance(t, PathRef) else _fmt_literal(t)


def format_condition(c) -> str:
    if isinstance(c, Or):
        return " or ".join(format_condition(k) for k in c.children)
    if isinstance(c, And):
        return " and ".join(f"({format_condition(k)})" if isinstance(k, Or) else format_condition(k)
                            for k in c.children)
    if isinstance(c, Not):
        inner = format_condition(c.child)
        return f"not ({inner})" if isinstance(c.child, (And, Or, Not)) else f"not {inner}"
    if isinstance(c, Compare):
        return f"{format_term(c.left)} {c.op} {format_term(c.right)}"
    return format_term(c)


def format_action(a: ActionCall) -> str:
    return f"{a.name}({', '.join(format_term(x) for x in a.args)})"


def pretty_print(norms: Iterable[NormAST]) -> str:
    blocks = []
    for nm in norms:
        head = f"norm {nm.name}" + (f" priority {nm.priority}" if nm.priority != 0 else "")
        lines = [head, f"  whenever {format_condition(nm.condition)}"]
        acts = [format_action(a) for a in nm.actions]
        lines.append(f"  then {acts[0]}" + (";" if len(acts) > 1 else ""))
        for j, a in enumerate(acts[1:], start=1):
            lines.append(f"    {a}" + (";" if j < len(acts) - 1 else ""))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# --------------------------------------------------------------------------
# Lint


@dataclass(frozen=True)
class ActionSig:
    arg_kinds: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.arg_kinds)


@dataclass(frozen=True)
class SchemaCatalog:
    """Legal state paths and action signatures.

    A path key ending in ``.*`` admits any deeper path under that prefix.
    """

    paths: Mapping[str, str] = field(hash=False)
    actions: Mapping[str, ActionSig] = field(hash=False)

    def path_kind(self, dotted: str) -> str | None:
        kind = self.paths.get(dotted)
        if kind is not None:
            return kind
        parts = dotted.split(".")
        for cut in range(len(parts) - 1, 0, -1):
            kind = self.paths.get(".".join(parts[:cut]) + ".*")
            if kind is not None:
                return kind
        return None


def _compatible(a: str | None, b: str | None) -> bool:
    return a is None or b is None or a == ANY or b == ANY or a == b


def lint(norms: Iterable[NormAST], schema: SchemaCatalog) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def report(node, message):
        sp = node.span or Span(0, 0)
        diags.append(Diagnostic(sp.line, sp.col, "error", message))

    def term_kind(t: Term) -> str | None:
        if isinstance(t, Literal):
            return t.kind
        kind = schema.path_kind(t.dotted)
        if kind is None:
            report(t, f"unknown path '{t.dotted}'")
        return kind

    seen: set[str] = set()
    for nm in norms:
        if nm.name in seen:
            report(nm, f"duplicate norm name '{nm.name}'")
        seen.add(nm.name)
        for leaf in iter_leaves(nm.condition):
            if isinstance(leaf, Compare):
                lk, rk = term_kind(leaf.left), term_kind(leaf.right)
                if not _compatible(lk, rk):
                    report(leaf, f"kind mismatch in comparison: {lk} {leaf.op} {rk}")
                elif leaf.op in ORDERING_OPS and {lk, rk} - {ANY, None, NUMBER}:
                    report(leaf, f"operator '{leaf.op}' needs numbers, got {lk}")
            else:
                kind = term_kind(leaf)
                if not _compatible(kind, BOOLEAN):
                    report(leaf, f"kind mismatch: condition '{format_term(leaf)}' is {kind}, expected boolean")
        for act in nm.actions:
            sig = schema.actions.get(act.name)
            if sig is None:
                report(act, f"unknown action '{act.name}'")
                for a in act.args:
                    term_kind(a)
                continue
            if len(act.args) != sig.arity:
                report(act, f"action '{act.name}' expects {sig.arity} argument(s), found {len(act.args)}")
            for j, a in enumerate(act.args):
                kind = term_kind(a)
                if j < sig.arity and not _compatible(kind, sig.arg_kinds[j]):
                    report(a, f"kind mismatch: argument {j + 1} of '{act.name}' is {kind}, "
                              f"expected {sig.arg_kinds[j]}")
    return sorted(diags, key=lambda d: (d.line, d.col))
