"""Text format for BMDP models.

Grammar::

    model      := "bmdp" string? typedecl+ initdecl
    typedecl   := "type" ident "{" actiondecl+ "}"
    actiondecl := "action" ident "cost" float "{" outcome+ "}"
    outcome    := float ":" ident* ";"
    initdecl   := "init" ident* ";"

``#`` starts a comment running to the end of the line. Offspring may refer to
types declared later in the file.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .model import PROB_TOL, Action, Bmdp, Outcome, TypeSpec, normalize_probabilities, validate

KEYWORDS = {"bmdp", "type", "action", "cost", "init"}


class ErrorKind(enum.Enum):
    LexError = "LexError"
    SyntaxError = "SyntaxError"
    DuplicateName = "DuplicateName"
    UnknownType = "UnknownType"
    BadProbability = "BadProbability"
    BadCost = "BadCost"


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, kind: ErrorKind, span: SourceSpan, message: str):
        super().__init__(f"{span}: {kind.value}: {message}")
        self.kind = kind
        self.span = span
        self.message = message


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "number", "string", "punct", "eof"
    text: str
    span: SourceSpan


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[{}:;])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            bad = text[pos]
            if bad == '"':
                raise ParseError(ErrorKind.LexError, SourceSpan(line, col), "unterminated string")
            raise ParseError(ErrorKind.LexError, SourceSpan(line, col), f"unexpected character {bad!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), SourceSpan(line, col, m.end() - pos)))
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, pos - line_start + 1)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, kind: ErrorKind, msg: str, tok: Token | None = None):
        raise ParseError(kind, (tok or self.tok).span, msg)

    def _describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def at_keyword(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text == word

    def keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            self.error(ErrorKind.SyntaxError, f"expected '{word}', found {self._describe(self.tok)}")
        return self.advance()

    def punct(self, p: str) -> Token:
        if self.tok.kind != "punct" or self.tok.text != p:
            self.error(ErrorKind.SyntaxError, f"expected '{p}', found {self._describe(self.tok)}")
        return self.advance()

    def ident(self, what: str) -> Token:
        if self.tok.kind != "ident" or self.tok.text in KEYWORDS:
            self.error(ErrorKind.SyntaxError, f"expected {what}, found {self._describe(self.tok)}")
        return self.advance()

    def number(self, what: str) -> tuple[float, Token]:
        if self.tok.kind != "number":
            self.error(ErrorKind.SyntaxError, f"expected {what}, found {self._describe(self.tok)}")
        tok = self.advance()
        return float(tok.text), tok

    def advance(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def is_ident(self) -> bool:
        return self.tok.kind == "ident" and self.tok.text not in KEYWORDS

    def parse(self) -> Bmdp:
        name = None
        if self.at_keyword("bmdp"):
            self.advance()
            if self.tok.kind == "string":
                name = self.advance().text[1:-1]
        raw_types = []
        while self.at_keyword("type"):
            raw_types.append(self.typedecl())
        if not raw_types:
            self.error(ErrorKind.SyntaxError, f"expected 'type', found {self._describe(self.tok)}")
        self.keyword("init")
        init_toks = []
        while self.is_ident():
            init_toks.append(self.advance())
        self.punct(";")
        if self.tok.kind != "eof":
            self.error(ErrorKind.SyntaxError, f"unexpected {self._describe(self.tok)} after init declaration")
        return self.resolve(name, raw_types, init_toks)

    def typedecl(self):
        self.keyword("type")
        name = self.ident("type name")
        self.punct("{")
        actions = [self.actiondecl()]
        while self.at_keyword("action"):
            actions.append(self.actiondecl())
        self.punct("}")
        return name, actions

    def actiondecl(self):
        self.keyword("action")
        name = self.ident("action name")
        self.keyword("cost")
        cost, cost_tok = self.number("cost")
        if not math.isfinite(cost) or cost <= 0:
            self.error(ErrorKind.BadCost, f"cost must be strictly positive, got {cost_tok.text}", cost_tok)
        self.punct("{")
        outcomes = [self.outcome()]
        while self.tok.kind == "number":
            outcomes.append(self.outcome())
        self.punct("}")
        return name, cost, outcomes

    def outcome(self):
        p, p_tok = self.number("probability")
        if not math.isfinite(p) or not 0 < p <= 1:
            self.error(ErrorKind.BadProbability, f"probability must lie in (0, 1], got {p_tok.text}", p_tok)
        self.punct(":")
        offspring = []
        while self.is_ident():
            offspring.append(self.advance())
        self.punct(";")
        return p, p_tok, offspring

    def resolve(self, name, raw_types, init_toks) -> Bmdp:
        index: dict[str, int] = {}
        for tname, _ in raw_types:
            if tname.text in index:
                self.error(ErrorKind.DuplicateName, f"type {tname.text!r} declared twice", tname)
            index[tname.text] = len(index)

        def lookup(tok: Token) -> int:
            if tok.text not in index:
                self.error(ErrorKind.UnknownType, f"unknown type {tok.text!r}", tok)
            return index[tok.text]

        types = []
        for tname, raw_actions in raw_types:
            seen_actions = set()
            actions = []
            for aname, cost, raw_outcomes in raw_actions:
                if aname.text in seen_actions:
                    self.error(ErrorKind.DuplicateName,
                               f"action {aname.text!r} declared twice in type {tname.text!r}", aname)
                seen_actions.add(aname.text)
                lists = set()
                probs, children = [], []
                for p, p_tok, offspring in raw_outcomes:
                    kids = tuple(lookup(t) for t in offspring)
                    if kids in lists:
                        self.error(ErrorKind.DuplicateName, "duplicate offspring list in one action", p_tok)
                    lists.add(kids)
                    probs.append(p)
                    children.append(kids)
                total = math.fsum(probs)
                if abs(total - 1.0) > PROB_TOL:
                    self.error(ErrorKind.BadProbability,
                               f"probabilities of action {aname.text!r} sum to {total:.12g}", aname)
                probs = normalize_probabilities(probs)
                outcomes = tuple(Outcome(p, kids) for p, kids in zip(probs, children))
                actions.append(Action(aname.text, cost, outcomes))
            types.append(TypeSpec(tname.text, tuple(actions)))
        init = tuple(lookup(t) for t in init_toks)
        model = Bmdp(tuple(types), init, name)
        problems = validate(model)
        assert not problems, problems
        return model


def parse_model(text: str) -> Bmdp:
    """Parse model text; raises :class:`ParseError` at the first problem found."""
    return _Parser(text).parse()


def load_model(path) -> Bmdp:
    return parse_model(Path(path).read_text())


def format_float(x: float) -> str:
    s = f"{x:.17g}"
    if not any(c in s for c in ".einn"):
        s += ".0"
    return s


def serialize_model(model: Bmdp) -> str:
    """Canonical text: one outcome per line, 17 significant digits, types in index order."""
    names = model.type_names
    lines = []
    if model.name is not None:
        lines.append(f'bmdp "{model.name}"')
    for t in model.types:
        lines.append(f"type {t.name} {{")
        for act in t.actions:
            lines.append(f"  action {act.name} cost {format_float(act.cost)} {{")
            for o in act.outcomes:
                kids = " ".join(names[r] for r in o.offspring)
                lines.append(f"    {format_float(o.probability)}: {kids};" if kids
                             else f"    {format_float(o.probability)}: ;")
            lines.append("  }")
        lines.append("}")
    init = " ".join(names[r] for r in model.init)
    lines.append(f"init {init};" if init else "init ;")
    return "\n".join(lines) + "\n"
