"""Concrete syntax.

The grammar is ML-like and layout-insensitive.  Derived forms are
desugared on the fly:

    let x = e in b        (fun x -> b) e
    e1; e2                (fun _ -> e2) e1
    let rec f x = e in b  (fun f -> b) (rec f x -> e)
    a && b, a || b        if a then b else false / if a then true else b
    x++                   x := !x + 1

Inside annotation formulas ``&&``/``||`` stay as operators, since the
formula is handed to the solver rather than evaluated.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .syntax import (
    BOOL, FALSE, INT, TRUE, UNIT, UNIT_V,
    Annotation, App, Assign, Bot, Const, Deref, If, Lam, LetTuple, NewRef,
    Op, Tuple, Var, free_vars, is_value,
)


class ParseError(Exception):
    def __init__(self, message, pos=None, expected=()):
        where = f"line {pos[0]}, column {pos[1]}: " if pos else ""
        super().__init__(where + message)
        self.message = message
        self.pos = pos
        self.expected = tuple(expected)


KEYWORDS = {
    "fun", "let", "rec", "in", "ref", "if", "then", "else",
    "true", "false", "not", "mod", "as", "_bot_",
}

_SYMBOLS = [
    "|||", ":=", "->", "==", "<>", "!=", "<=", ">=", "&&", "||", "++",
    "(", ")", ",", ";", "=", "<", ">", "+", "-", "*", "/", "!", "{", "}", "|",
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "kw", "sym", "eof"
    text: str
    pos: tuple


def tokenize(text: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance(k):
        nonlocal i, line, col
        for ch in text[i:i + k]:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        i += k

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if text.startswith("(*", i):
            start = (line, col)
            depth = 0
            while True:
                if i >= n:
                    raise ParseError("unterminated comment", start)
                if text.startswith("(*", i):
                    depth += 1
                    advance(2)
                elif text.startswith("*)", i):
                    depth -= 1
                    advance(2)
                    if depth == 0:
                        break
                else:
                    advance(1)
            continue
        pos = (line, col)
        m = _INT.match(text, i)
        if m:
            toks.append(Token("int", m.group(), pos))
            advance(len(m.group()))
            continue
        m = _IDENT.match(text, i)
        if m:
            word = m.group()
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, pos))
            advance(len(word))
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token("sym", sym, pos))
                advance(len(sym))
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", pos)
    toks.append(Token("eof", "", (line, col)))
    return toks


_CMP = {"=": "=", "==": "=", "<>": "<>", "!=": "<>", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


class Parser:
    def __init__(self, tokens, formula_mode=False):
        self.toks = tokens
        self.i = 0
        self.formula_mode = formula_mode

    # -- token helpers --------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, kind=None):
        t = self.tok
        return t.text == text and (kind is None or t.kind == kind) and t.kind != "eof"

    def take(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text):
        if not self.at(text) or self.tok.kind in ("int", "ident"):
            self.fail([text])
        return self.take()

    def ident(self):
        if self.tok.kind != "ident":
            self.fail(["identifier"])
        return self.take()

    def fail(self, expected):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"expected {' or '.join(expected)}, found {got}", t.pos, expected)

    # -- expressions ----------------------------------------------------

    def parse_expr(self):
        """Lowest level: sequencing."""
        e = self.parse_noseq()
        if self.at(";", "sym"):
            t = self.take()
            rest = self.parse_expr()
            return App(Lam("_", rest, pos=t.pos), e, pos=t.pos)
        return e

    def parse_noseq(self):
        t = self.tok
        if t.kind == "kw":
            if t.text == "fun":
                return self.parse_fun()
            if t.text == "let":
                return self.parse_let()
            if t.text == "if":
                return self.parse_if()
            if t.text == "ref":
                return self.parse_ref()
        return self.parse_assign()

    def parse_fun(self):
        start = self.expect("fun").pos
        params = self.parse_params()
        if not params:
            self.fail(["parameter"])
        if self.at("{"):
            params[-1] = (params[-1][0], self.parse_annotation(), params[-1][2])
        self.expect("->")
        body = self.parse_expr()
        return self.curry(params, body, None, start)

    def parse_params(self):
        """Parameters with optional trailing annotations."""
        params = []
        while True:
            t = self.tok
            if t.kind == "ident":
                self.take()
                name = t.text
            elif self.at("(") and self.peek().text == ")":
                self.take()
                self.take()
                name = "()"
            else:
                return params
            annot = None
            if self.at("{"):
                annot = self.parse_annotation()
            params.append((name, annot, t.pos))

    def curry(self, params, body, self_name, pos):
        for k, (name, annot, ppos) in reversed(list(enumerate(params))):
            sname = self_name if k == 0 else None
            body = Lam(name, body, sname, annot, pos=ppos if k else pos)
        return body

    def parse_let(self):
        start = self.expect("let").pos
        if self.at("rec", "kw"):
            self.take()
            fname = self.ident()
            params = self.parse_params()
            if not params:
                self.fail(["parameter"])
            self.expect("=")
            if self.at("{"):
                params[-1] = (params[-1][0], self.parse_annotation(), params[-1][2])
                self.expect("->")
            rhs = self.parse_expr()
            self.expect("in")
            body = self.parse_expr()
            fn = self.curry(params, rhs, fname.text, fname.pos)
            if isinstance(body, Var) and body.name == fname.text:
                return fn
            return App(Lam(fname.text, body, pos=start), fn, pos=start)
        if self.at("("):
            # let (x, y, ...) = e in b
            self.take()
            names = [self.ident().text]
            while self.at(","):
                self.take()
                names.append(self.ident().text)
            self.expect(")")
            if len(names) < 2:
                self.fail([","])
            self.expect("=")
            rhs = self.parse_expr()
            self.expect("in")
            body = self.parse_expr()
            return LetTuple(tuple(names), rhs, body, pos=start)
        name = self.ident()
        params = self.parse_params()
        self.expect("=")
        if params and self.at("{"):
            params[-1] = (params[-1][0], self.parse_annotation(), params[-1][2])
            self.expect("->")
        rhs = self.parse_expr()
        self.expect("in")
        body = self.parse_expr()
        if params:
            rhs = self.curry(params, rhs, None, name.pos)
        return App(Lam(name.text, body, pos=start), rhs, pos=start)

    def parse_if(self):
        start = self.expect("if").pos
        cond = self.parse_expr()
        self.expect("then")
        then = self.parse_noseq()
        self.expect("else")
        els = self.parse_noseq()
        return If(cond, then, els, pos=start)

    def parse_ref(self):
        start = self.expect("ref").pos
        loc = self.ident().text
        self.expect("=")
        init = self.parse_expr()
        self.expect("in")
        body = self.parse_expr()
        if is_value(init) or isinstance(init, Var):
            return NewRef(loc, init, body, pos=start)
        tmp = f"__init_{loc}"
        return App(Lam(tmp, NewRef(loc, Var(tmp), body, pos=start), pos=start), init, pos=start)

    def parse_assign(self):
        lhs = self.parse_tuple()
        if self.at(":="):
            t = self.take()
            if not isinstance(lhs, Var):
                raise ParseError("left of := must be a location name", t.pos)
            rhs = self.parse_operand_or_keyword(self.parse_assign)
            return Assign(lhs.name, rhs, pos=lhs.pos)
        return lhs

    def parse_operand_or_keyword(self, fallback):
        if self.tok.kind == "kw" and self.tok.text in ("fun", "let", "if", "ref"):
            return self.parse_noseq()
        return fallback()

    def parse_tuple(self):
        first = self.parse_or()
        if not self.at(","):
            return first
        items = [first]
        while self.at(","):
            self.take()
            items.append(self.parse_operand_or_keyword(self.parse_or))
        return Tuple(tuple(items), pos=first.pos)

    def _bool_op(self, op, a, b, pos):
        if self.formula_mode:
            return Op(op, (a, b), pos=pos)
        if op == "&&":
            return If(a, b, FALSE, pos=pos)
        return If(a, TRUE, b, pos=pos)

    def parse_or(self):
        e = self.parse_and()
        while self.at("||"):
            t = self.take()
            e = self._bool_op("||", e, self.parse_operand_or_keyword(self.parse_and), t.pos)
        return e

    def parse_and(self):
        e = self.parse_cmp()
        while self.at("&&"):
            t = self.take()
            e = self._bool_op("&&", e, self.parse_operand_or_keyword(self.parse_cmp), t.pos)
        return e

    def parse_cmp(self):
        e = self.parse_add()
        while self.tok.kind == "sym" and self.tok.text in _CMP:
            t = self.take()
            e = Op(_CMP[t.text], (e, self.parse_operand_or_keyword(self.parse_add)), pos=t.pos)
        return e

    def parse_add(self):
        e = self.parse_mul()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            t = self.take()
            e = Op(t.text, (e, self.parse_operand_or_keyword(self.parse_mul)), pos=t.pos)
        return e

    def parse_mul(self):
        e = self.parse_unary()
        while (self.tok.kind == "sym" and self.tok.text in ("*", "/")) or self.at("mod", "kw"):
            t = self.take()
            e = Op(t.text, (e, self.parse_operand_or_keyword(self.parse_unary)), pos=t.pos)
        return e

    def parse_unary(self):
        if self.at("-", "sym"):
            t = self.take()
            if self.tok.kind == "int":
                lit = self.take()
                return Const(-int(lit.text), INT, pos=t.pos)
            return Op("neg", (self.parse_unary(),), pos=t.pos)
        if self.at("not", "kw"):
            t = self.take()
            return Op("not", (self.parse_app(),), pos=t.pos)
        return self.parse_app()

    def starts_atom(self):
        t = self.tok
        if t.kind in ("int", "ident"):
            return True
        if t.kind == "kw":
            return t.text in ("true", "false", "_bot_")
        return t.kind == "sym" and t.text in ("(", "!")

    def parse_app(self):
        e = self.parse_atom()
        while self.starts_atom():
            arg = self.parse_atom()
            e = App(e, arg, pos=e.pos)
        return e

    def parse_atom(self):
        t = self.tok
        if t.kind == "int":
            self.take()
            return Const(int(t.text), INT, pos=t.pos)
        if t.kind == "ident":
            self.take()
            if self.at("++"):
                self.take()
                return Assign(t.text, Op("+", (Deref(t.text, pos=t.pos), Const(1, INT)), pos=t.pos), pos=t.pos)
            return Var(t.text, pos=t.pos)
        if t.kind == "kw":
            if t.text == "true":
                self.take()
                return Const(True, BOOL, pos=t.pos)
            if t.text == "false":
                self.take()
                return Const(False, BOOL, pos=t.pos)
            if t.text == "_bot_":
                self.take()
                return Bot(pos=t.pos)
        if self.at("!"):
            self.take()
            name = self.ident()
            return Deref(name.text, pos=t.pos)
        if self.at("("):
            self.take()
            if self.at(")"):
                self.take()
                return Const(None, UNIT, pos=t.pos)
            e = self.parse_expr()
            self.expect(")")
            return e
        self.fail(["expression"])

    # -- annotations ----------------------------------------------------

    def parse_annotation(self) -> Annotation:
        start = self.expect("{").pos
        if self.at("}"):
            self.take()
            return Annotation()
        syms = []
        if self.tok.kind == "ident":
            syms.append(self.take().text)
            while self.at(","):
                self.take()
                syms.append(self.ident().text)
        self.expect("|")
        pats = []
        seen = set()
        while self.tok.kind == "ident":
            loc = self.take()
            if loc.text in seen:
                raise ParseError(f"location {loc.text} annotated twice", loc.pos)
            seen.add(loc.text)
            self.expect("as")
            pats.append((loc.text, self.parse_pattern()))
            if self.at(",") or self.at(";"):
                self.take()
            else:
                break
        self.expect("|")
        outer = self.formula_mode
        self.formula_mode = True
        try:
            formula = self.parse_expr()
        finally:
            self.formula_mode = outer
        self.expect("}")
        known = set(syms)
        if len(known) != len(syms):
            raise ParseError("duplicate invariant variable", start)
        for loc, p in pats:
            unknown = free_vars(p) - known
            if unknown:
                raise ParseError(f"unknown invariant variable {sorted(unknown)[0]} in pattern for {loc}", start)
        unknown = free_vars(formula) - known
        if unknown:
            raise ParseError(f"unknown invariant variable {sorted(unknown)[0]} in formula", start)
        return Annotation(tuple(syms), tuple(pats), formula)

    def parse_pattern(self):
        t = self.tok
        if t.kind == "ident":
            self.take()
            return Var(t.text, pos=t.pos)
        if t.kind == "int":
            self.take()
            return Const(int(t.text), INT, pos=t.pos)
        if self.at("-", "sym") and self.peek().kind == "int":
            self.take()
            return Const(-int(self.take().text), INT, pos=t.pos)
        if t.kind == "kw" and t.text in ("true", "false"):
            self.take()
            return TRUE if t.text == "true" else FALSE
        if self.at("("):
            self.take()
            if self.at(")"):
                self.take()
                return UNIT_V
            items = [self.parse_pattern()]
            while self.at(","):
                self.take()
                items.append(self.parse_pattern())
            self.expect(")")
            return items[0] if len(items) == 1 else Tuple(tuple(items), pos=t.pos)
        self.fail(["pattern"])


def parse_expr(text: str):
    """Parse a single program."""
    p = Parser(tokenize(text))
    e = p.parse_expr()
    if p.tok.kind != "eof":
        p.fail(["end of input"])
    return e


def parse_annotation(text_or_tokens) -> Annotation:
    toks = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else list(text_or_tokens)
    p = Parser(toks)
    a = p.parse_annotation()
    if p.tok.kind != "eof":
        p.fail(["end of annotation"])
    return a


@dataclass(frozen=True)
class ProgramPair:
    left: object
    right: object
    source_names: tuple = ("left", "right")
    ty: object = None
    header: dict = field(default_factory=dict, compare=False)


def split_pair(text: str):
    """Split a pair file on its ``|||`` separator line.

    Returns the two halves and the line offset of the second half.
    """
    lines = text.split("\n")
    for k, line in enumerate(lines):
        if line.strip() == "|||":
            return "\n".join(lines[:k]), "\n".join(lines[k + 1:]), k + 1
    # Single-line form: ``e1 ||| e2``.
    toks = tokenize(text)
    for t in toks:
        if t.text == "|||" and t.kind == "sym":
            line_idx, col = t.pos
            before = "\n".join(lines[:line_idx - 1] + [lines[line_idx - 1][:col - 1]])
            after_line = lines[line_idx - 1][col - 1 + 3:]
            after = "\n".join([" " * (col + 2) + after_line] + lines[line_idx:])
            return before, after, line_idx - 1
    raise ParseError("no ||| separator between the two programs", (1, 1), ["|||"])


def _parse_half(text, line_offset, side):
    toks = tokenize(text)
    if line_offset:
        toks = [Token(t.kind, t.text, (t.pos[0] + line_offset, t.pos[1])) for t in toks]
    p = Parser(toks)
    try:
        e = p.parse_expr()
        if p.tok.kind != "eof":
            p.fail(["end of input"])
    except ParseError as exc:
        raise ParseError(f"{side} program: {exc.message}", exc.pos, exc.expected) from None
    return e


def parse_program_pair(text: str, names=("left", "right")) -> ProgramPair:
    """Parse and type a two-program file."""
    from .typing import infer_pair

    a, b, offset = split_pair(text)
    left = _parse_half(a, 0, "left")
    right = _parse_half(b, offset, "right")
    left, right, ty = infer_pair(left, right)
    return ProgramPair(left, right, tuple(names), ty, parse_header(text))


_HEADER = re.compile(r"\(\*\s*expect:\s*(\w+)(.*?)\*\)", re.S)


def parse_header(text: str) -> dict:
    """Read the ``(* expect: eq bound: 12 *)`` corpus header, if any."""
    m = _HEADER.search(text)
    if not m:
        return {}
    out = {"expect": m.group(1)}
    for key, val in re.findall(r"(\w+):\s*(\S+)", m.group(2)):
        out[key] = int(val) if val.isdigit() else val
    return out
