"""Formulas of multiplicative-exponential linear logic and typed contexts.

Grammar (ASCII):

    A, B ::= X | X^ | 1 | bot | (A*B) | (A|B) | !A | ?A

with identifiers matching [A-Za-z][A-Za-z0-9_]*.  A context is a sequence
of blocks separated by ';', each block a nonempty comma-separated list of
formulas; '()' denotes the empty context.  The parser also accepts the
usual Unicode spellings on input; printing is always ASCII.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "Formula",
    "FormulaSyntaxError",
    "var",
    "covar",
    "one",
    "bot",
    "tensor",
    "par",
    "ofcourse",
    "whynot",
    "dual",
    "parse_formula",
    "format_formula",
    "SequentContext",
    "parse_context",
    "format_context",
    "subformula_closure",
]


class FormulaSyntaxError(ValueError):
    """Raised on malformed formula or context text; carries the offset."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset}: {text!r}")
        self.text = text
        self.offset = offset


@dataclass(frozen=True)
class Formula:
    """An immutable formula tree.

    kind is one of 'var', 'covar', 'one', 'bot', 'tensor', 'par', 'ofc',
    'why'.  name is set for atoms, left/right for binary connectives, sub
    for the exponentials.
    """

    kind: str
    name: str = ""
    left: "Formula | None" = None
    right: "Formula | None" = None
    sub: "Formula | None" = None

    def __str__(self) -> str:
        return format_formula(self)

    def __repr__(self) -> str:
        return f"Formula({format_formula(self)!r})"


def var(name: str) -> Formula:
    return Formula("var", name=name)


def covar(name: str) -> Formula:
    return Formula("covar", name=name)


one = Formula("one")
bot = Formula("bot")


def tensor(a: Formula, b: Formula) -> Formula:
    return Formula("tensor", left=a, right=b)


def par(a: Formula, b: Formula) -> Formula:
    return Formula("par", left=a, right=b)


def ofcourse(a: Formula) -> Formula:
    return Formula("ofc", sub=a)


def whynot(a: Formula) -> Formula:
    return Formula("why", sub=a)


def dual(a: Formula) -> Formula:
    """Linear negation, involutive: (A*B)^ = A^|B^ and (!A)^ = ?A^."""
    k = a.kind
    if k == "var":
        return Formula("covar", name=a.name)
    if k == "covar":
        return Formula("var", name=a.name)
    if k == "one":
        return bot
    if k == "bot":
        return one
    if k == "tensor":
        return Formula("par", left=dual(a.left), right=dual(a.right))
    if k == "par":
        return Formula("tensor", left=dual(a.left), right=dual(a.right))
    if k == "ofc":
        return Formula("why", sub=dual(a.sub))
    if k == "why":
        return Formula("ofc", sub=dual(a.sub))
    raise ValueError(f"unknown formula kind {k!r}")


def format_formula(a: Formula) -> str:
    k = a.kind
    if k == "var":
        return a.name
    if k == "covar":
        return a.name + "^"
    if k == "one":
        return "1"
    if k == "bot":
        return "bot"
    if k == "tensor":
        return f"({format_formula(a.left)}*{format_formula(a.right)})"
    if k == "par":
        return f"({format_formula(a.left)}|{format_formula(a.right)})"
    if k == "ofc":
        return "!" + format_formula(a.sub)
    if k == "why":
        return "?" + format_formula(a.sub)
    raise ValueError(f"unknown formula kind {k!r}")


# Unicode spellings accepted on input, normalized before tokenizing.
_UNICODE_MAP = {
    "⊗": "*",      # circled times
    "⅋": "|",      # upside-down ampersand
    "\U0001d7cf": "1",  # bold one
    "\U0001d7d9": "1",  # double-struck one
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<punct>[()*|!?,;^])|(?P<one>1))"
)


def _normalize(text: str) -> str:
    out: list[str] = []
    for ch in text:
        if ch == "⊥":
            # up tack: postfix negation after an atom or unit, the unit
            # 'bot' elsewhere
            prev = next((c for c in reversed(out) if not c.isspace()), "")
            if prev.isalnum() or prev == "_":
                out.append("^")
            else:
                out.append(" bot ")
        else:
            out.append(_UNICODE_MAP.get(ch, ch))
    return "".join(out)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Yields (kind, value, offset) triples; kind in {'ident','punct','one'}."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise FormulaSyntaxError("unexpected character", text, pos)
        if m.end() == m.start() and not text[pos:].strip():
            break
        for kind in ("ident", "punct", "one"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val, m.start(kind)))
                break
        else:
            break
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(_normalize(text))
        self.pos = 0

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise FormulaSyntaxError("unexpected end of input", self.text, len(self.text))
        self.pos += 1
        return tok

    def expect(self, value: str):
        tok = self.next()
        if tok[0] != "punct" or tok[1] != value:
            raise FormulaSyntaxError(f"expected {value!r}", self.text, tok[2])
        return tok

    def formula(self) -> Formula:
        kind, val, off = self.next()
        if kind == "ident":
            if val == "bot":
                tok = self.peek()
                if tok is not None and tok[0] == "punct" and tok[1] == "^":
                    self.next()
                    return one
                return bot
            a: Formula = var(val)
            # postfix '^' for the dual atom
            tok = self.peek()
            if tok is not None and tok[0] == "punct" and tok[1] == "^":
                self.next()
                a = covar(val)
            return a
        if kind == "one":
            a = one
            tok = self.peek()
            if tok is not None and tok[0] == "punct" and tok[1] == "^":
                # 1^ normalizes to bot on input
                self.next()
                return bot
            return a
        if kind == "punct":
            if val == "!":
                return ofcourse(self.formula())
            if val == "?":
                return whynot(self.formula())
            if val == "(":
                left = self.formula()
                op = self.next()
                if op[0] != "punct" or op[1] not in "*|":
                    raise FormulaSyntaxError("expected '*' or '|'", self.text, op[2])
                right = self.formula()
                self.expect(")")
                if op[1] == "*":
                    return tensor(left, right)
                return par(left, right)
        raise FormulaSyntaxError("expected a formula", self.text, off)

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    a = p.formula()
    if not p.at_end():
        raise FormulaSyntaxError("trailing input", text, p.tokens[p.pos][2])
    return a


class SequentContext:
    """A sequence of nonempty blocks of formulas, the objects being rewritten.

    The empty context (no blocks) is the terminal object.  Blocks keep
    their own order; flattened positions are 1-based across all blocks,
    matching the step indices of the rewriting system.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[Iterable[Formula]] = ()):
        bs = tuple(tuple(b) for b in blocks)
        for b in bs:
            if not b:
                raise ValueError("context blocks must be nonempty")
        self.blocks = bs

    def __eq__(self, other) -> bool:
        return isinstance(other, SequentContext) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __bool__(self) -> bool:
        return bool(self.blocks)

    def __iter__(self) -> Iterator[tuple[Formula, ...]]:
        return iter(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __str__(self) -> str:
        return format_context(self)

    def __repr__(self) -> str:
        return f"SequentContext({format_context(self)!r})"

    @property
    def flat(self) -> tuple[Formula, ...]:
        return tuple(a for b in self.blocks for a in b)

    def locate(self, i: int) -> tuple[int, int]:
        """Maps a 1-based flattened position to (block index, offset), 0-based."""
        if i < 1:
            raise IndexError(f"position {i} out of range")
        seen = 0
        for k, b in enumerate(self.blocks):
            if i <= seen + len(b):
                return k, i - seen - 1
            seen += len(b)
        raise IndexError(f"position {i} out of range (size {seen})")

    def block_start(self, k: int) -> int:
        """1-based flattened position of the first element of block k."""
        return 1 + sum(len(b) for b in self.blocks[:k])


def parse_context(text: str) -> SequentContext:
    norm = _normalize(text)
    if norm.strip() in ("()", ""):
        return SequentContext()
    p = _Parser(text)
    blocks: list[list[Formula]] = [[]]
    blocks[-1].append(p.formula())
    while not p.at_end():
        kind, val, off = p.next()
        if kind != "punct" or val not in ",;":
            raise FormulaSyntaxError("expected ',' or ';'", text, off)
        if val == ";":
            blocks.append([])
        blocks[-1].append(p.formula())
    return SequentContext(blocks)


def format_context(ctx: SequentContext) -> str:
    if not ctx.blocks:
        return "()"
    return "; ".join(", ".join(format_formula(a) for a in b) for b in ctx.blocks)


def _subformulas(a: Formula) -> Iterator[Formula]:
    yield a
    if a.kind in ("tensor", "par"):
        yield from _subformulas(a.left)
        yield from _subformulas(a.right)
    elif a.kind in ("ofc", "why"):
        yield from _subformulas(a.sub)


def subformula_closure(formulas: Iterable[Formula]) -> frozenset[Formula]:
    """Closure under subformulas and duals, the default cut candidate pool."""
    out: set[Formula] = set()
    stack = list(formulas)
    while stack:
        a = stack.pop()
        for s in _subformulas(a):
            if s not in out:
                out.add(s)
            d = dual(s)
            if d not in out:
                out.add(d)
                stack.append(d)
    return frozenset(out)
