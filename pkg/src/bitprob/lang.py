"""A small language for hybrid probabilistic programs (``.hb`` files).

Example::

    const T = 3
    for i in 1:T
        occ[i] = beta(1, 1)
        gene[i] = flip(occ[i])
    end
    diabetes = reduce(|, gene)
    sugar = if diabetes then normal(80, 2) else normal(135, 2)
    observe(sugar, 79)
    return expectation(occ[1])

Statements need no separators; ``;`` is accepted and ignored. ``#`` starts a
comment. ``if c then a else b`` needs no closing keyword, while the form
without ``then`` (``if c a else b end``) does.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Union

from .bdd import TRUE
from .compiler import Site, _log2_exact, uniform_like
from .core import BoolRv, InferenceContext
from .fixedpoint import (BitVectorDist, FixedPointFormat, FormatError,
                         _static_range, common_format, constant, equals, less_than, minus, mux,
                         plus, shift_scale, widen)
from . import distributions as D
from .query import expectation, pr, variance


# ====================================================================== errors
class LangError(Exception):
    kind = "error"

    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg = msg
        self.line = line
        self.col = col
        super().__init__(f"{self.kind} at {line}:{col}: {msg}" if line else f"{self.kind}: {msg}")


class SyntaxErr(LangError):
    kind = "syntax error"


class ScopeErr(LangError):
    kind = "scope error"


class TypeErr(LangError):
    kind = "type error"


class ObserveErr(LangError):
    kind = "observation error"


# ======================================================================= lexer
@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


KEYWORDS = {"for", "in", "end", "if", "then", "else", "observe", "return", "const",
            "true", "false", "reduce"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/^<>=!&|()\[\],:;])
""", re.VERBOSE)


def tokenize(src: str) -> list[Token]:
    out = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise SyntaxErr(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if (kind == "name" and text in KEYWORDS) or kind == "op":
            kind = text
        if kind not in ("ws", "comment"):
            out.append(Token(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# ========================================================================= AST
def _loc():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass
class Num:
    value: float
    loc: tuple = _loc()


@dataclass
class BoolLit:
    value: bool
    loc: tuple = _loc()


@dataclass
class Name:
    id: str
    loc: tuple = _loc()


@dataclass
class Index:
    name: str
    index: "Expr"
    loc: tuple = _loc()


@dataclass
class Call:
    func: str
    args: list
    loc: tuple = _loc()


@dataclass
class ListLit:
    items: list
    loc: tuple = _loc()


@dataclass
class Unary:
    op: str
    operand: "Expr"
    loc: tuple = _loc()


@dataclass
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    loc: tuple = _loc()


@dataclass
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"
    loc: tuple = _loc()


@dataclass
class Reduce:
    op: str
    arg: "Expr"
    loc: tuple = _loc()


Expr = Union[Num, BoolLit, Name, Index, Call, ListLit, Unary, Binary, If, Reduce]


@dataclass
class Const:
    name: str
    value: Expr
    loc: tuple = _loc()


@dataclass
class Assign:
    name: str
    index: Expr | None
    value: Expr
    loc: tuple = _loc()


@dataclass
class Observe:
    target: Expr
    value: Expr | None
    loc: tuple = _loc()


@dataclass
class Range:
    lo: Expr
    hi: Expr
    loc: tuple = _loc()


@dataclass
class For:
    var: str
    over: Range | Expr
    body: list
    loc: tuple = _loc()


@dataclass
class Return:
    kind: str
    target: Expr
    loc: tuple = _loc()


@dataclass
class Program:
    body: list
    ret: Return

    def __str__(self) -> str:
        return format_program(self)


QUERY_KINDS = ("pr", "expectation", "variance")

# callables and how many arguments they accept
BUILTINS: dict[str, tuple[int, int]] = {
    "flip": (1, 1),
    "uniform": (2, 2),
    "beta": (2, 4),
    "normal": (2, 4),
    "gaussian": (2, 4),
    "gaussian_around": (2, 4),
    "exponential": (1, 3),
    "gamma": (4, 4),
    "laplace": (2, 4),
    "general_gamma": (4, 4),
    "chi_squared": (3, 3),
    "student_t": (3, 3),
    "polynomial": (3, 3),
    "bitblast": (3, 4),
    "exp": (1, 1),
    "log": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
}

DENSITY_VAR = "x"


# ====================================================================== parser
class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind: str) -> Token | None:
        if self.tok.kind == kind:
            return self.advance()
        return None

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.tok.kind != kind:
            raise SyntaxErr(f"expected {what or repr(kind)}, found {self.tok.text or 'end of input'!r}",
                            self.tok.line, self.tok.col)
        return self.advance()

    def skip_semis(self) -> None:
        while self.accept(";"):
            pass

    # ------------------------------------------------------------- statements
    def program(self) -> Program:
        body = self.block(top=True)
        t = self.tok
        if t.kind != "return":
            raise SyntaxErr("program must end with a return clause", t.line, t.col)
        ret = self.ret()
        self.skip_semis()
        if self.tok.kind != "eof":
            raise SyntaxErr("nothing may follow the return clause", self.tok.line, self.tok.col)
        return Program(body, ret)

    def block(self, top: bool) -> list:
        out = []
        while True:
            self.skip_semis()
            k = self.tok.kind
            if k in ("return", "eof") or (k == "end" and not top):
                return out
            out.append(self.statement())

    def statement(self):
        t = self.tok
        loc = (t.line, t.col)
        if t.kind == "const":
            self.advance()
            name = self.expect("name", "a constant name").text
            self.expect("=")
            return Const(name, self.expr(), loc)
        if t.kind == "for":
            self.advance()
            var = self.expect("name", "a loop variable").text
            self.expect("in")
            first = self.expr()
            if self.accept(":"):
                over = Range(first, self.expr(), loc)
            else:
                over = first
            body = self.block(top=False)
            self.expect("end", "'end' closing the loop")
            return For(var, over, body, loc)
        if t.kind == "observe":
            self.advance()
            self.expect("(")
            target = self.expr()
            value = None
            if self.accept(","):
                value = self.expr()
            self.expect(")")
            return Observe(target, value, loc)
        if t.kind == "name":
            name = self.advance().text
            index = None
            if self.accept("["):
                index = self.expr()
                self.expect("]")
            self.expect("=", "'=' in an assignment")
            return Assign(name, index, self.expr(), loc)
        raise SyntaxErr(f"unexpected {t.text or 'end of input'!r} at start of statement", t.line, t.col)

    def ret(self) -> Return:
        t = self.expect("return")
        loc = (t.line, t.col)
        # a bare target is shorthand for its posterior table
        if not (self.tok.kind == "name" and self.peek().kind == "("
                and self.tok.text.lower() in QUERY_KINDS):
            return Return("pr", self.expr(), loc)
        kind = self.advance().text.lower()
        self.expect("(")
        target = self.expr()
        self.expect(")")
        return Return(kind, target, loc)

    # ------------------------------------------------------------ expressions
    def expr(self):
        if self.tok.kind == "if":
            t = self.advance()
            cond = self.expr()
            closed = self.accept("then") is None
            then = self.expr()
            self.expect("else", "'else'")
            orelse = self.expr()
            if closed:
                self.expect("end", "'end' closing an if without 'then'")
            return If(cond, then, orelse, (t.line, t.col))
        return self.disj()

    def _binary(self, ops: tuple, sub: Callable):
        left = sub()
        while self.tok.kind in ops:
            t = self.advance()
            left = Binary(t.kind, left, sub(), (t.line, t.col))
        return left

    def disj(self):
        return self._binary(("|",), self.conj)

    def conj(self):
        return self._binary(("&",), self.neg)

    def neg(self):
        if self.tok.kind == "!":
            t = self.advance()
            return Unary("!", self.neg(), (t.line, t.col))
        return self.cmp()

    def cmp(self):
        left = self.sum()
        if self.tok.kind in ("<", "<=", ">", ">=", "==", "!="):
            t = self.advance()
            return Binary(t.kind, left, self.sum(), (t.line, t.col))
        return left

    def sum(self):
        return self._binary(("+", "-"), self.product)

    def product(self):
        return self._binary(("*", "/"), self.unary)

    def unary(self):
        if self.tok.kind == "-":
            t = self.advance()
            return Unary("-", self.unary(), (t.line, t.col))
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok.kind == "^":
            t = self.advance()
            return Binary("^", base, self.unary(), (t.line, t.col))
        return base

    def primary(self):
        t = self.tok
        loc = (t.line, t.col)
        if t.kind == "num":
            self.advance()
            v = float(t.text)
            return Num(int(v) if v.is_integer() and "." not in t.text and "e" not in t.text.lower() else v, loc)
        if t.kind in ("true", "false"):
            self.advance()
            return BoolLit(t.kind == "true", loc)
        if t.kind == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "[":
            self.advance()
            items = []
            if self.tok.kind != "]":
                items.append(self.expr())
                while self.accept(","):
                    items.append(self.expr())
            self.expect("]")
            return ListLit(items, loc)
        if t.kind == "reduce":
            self.advance()
            self.expect("(")
            op = self.tok
            if op.kind not in ("|", "&"):
                raise SyntaxErr("reduce takes | or &", op.line, op.col)
            self.advance()
            self.expect(",")
            arg = self.expr()
            self.expect(")")
            return Reduce(op.kind, arg, loc)
        if t.kind == "name":
            self.advance()
            if self.tok.kind == "(":
                self.advance()
                args = []
                if self.tok.kind != ")":
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return Call(t.text, args, loc)
            if self.tok.kind == "[":
                self.advance()
                idx = self.expr()
                self.expect("]")
                return Index(t.text, idx, loc)
            return Name(t.text, loc)
        raise SyntaxErr(f"unexpected {t.text or 'end of input'!r} in expression", t.line, t.col)


# ================================================================ scope check
def _check_scope(prog: Program) -> None:
    bound: set[str] = set()
    consts: set[str] = set()

    def expr(e, extra: frozenset = frozenset()) -> None:
        if isinstance(e, Name):
            if e.id not in bound and e.id not in extra:
                raise ScopeErr(f"unbound identifier {e.id!r}", *e.loc)
        elif isinstance(e, Index):
            if e.name not in bound:
                raise ScopeErr(f"unbound identifier {e.name!r}", *e.loc)
            expr(e.index, extra)
        elif isinstance(e, Call):
            if e.func not in BUILTINS:
                raise ScopeErr(f"unknown function {e.func!r}", *e.loc)
            lo, hi = BUILTINS[e.func]
            if not lo <= len(e.args) <= hi:
                raise TypeErr(f"{e.func} takes {lo}..{hi} arguments, got {len(e.args)}", *e.loc)
            for k, a in enumerate(e.args):
                expr(a, extra | {DENSITY_VAR} if (e.func == "bitblast" and k == 0) else extra)
        elif isinstance(e, ListLit):
            for a in e.items:
                expr(a, extra)
        elif isinstance(e, Unary):
            expr(e.operand, extra)
        elif isinstance(e, Binary):
            expr(e.left, extra)
            expr(e.right, extra)
        elif isinstance(e, If):
            expr(e.cond, extra)
            expr(e.then, extra)
            expr(e.orelse, extra)
        elif isinstance(e, Reduce):
            expr(e.arg, extra)

    def stmts(body: list) -> None:
        for s in body:
            if isinstance(s, Const):
                expr(s.value)
                bound.add(s.name)
                consts.add(s.name)
            elif isinstance(s, Assign):
                if s.name in consts:
                    raise ScopeErr(f"cannot assign to constant {s.name!r}", *s.loc)
                if s.index is not None:
                    expr(s.index)
                expr(s.value)
                bound.add(s.name)
            elif isinstance(s, Observe):
                expr(s.target)
                if s.value is not None:
                    expr(s.value)
            elif isinstance(s, For):
                if isinstance(s.over, Range):
                    expr(s.over.lo)
                    expr(s.over.hi)
                else:
                    expr(s.over)
                bound.add(s.var)
                stmts(s.body)

    stmts(prog.body)
    expr(prog.ret.target)


def parse(src: str) -> Program:
    """Source text to a scope-checked AST; raises SyntaxErr or ScopeErr with a location."""
    prog = Parser(src).program()
    _check_scope(prog)
    return prog


# ===================================================================== printer
_PREC = {"|": 1, "&": 2, "<": 4, "<=": 4, ">": 4, ">=": 4, "==": 4, "!=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "^": 8}


def _num_text(v) -> str:
    if isinstance(v, int):
        return str(v)
    r = repr(float(v))
    return r if ("." in r or "e" in r) else r + ".0"


def format_expr(e, prec: int = 0) -> str:
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Index):
        return f"{e.name}[{format_expr(e.index)}]"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, ListLit):
        return "[" + ", ".join(format_expr(a) for a in e.items) + "]"
    if isinstance(e, Reduce):
        return f"reduce({e.op}, {format_expr(e.arg)})"
    if isinstance(e, Unary):
        p = 3 if e.op == "!" else 7
        s = f"{e.op}{format_expr(e.operand, p)}"
        return f"({s})" if prec > p else s
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op == "^":
            s = f"{format_expr(e.left, p + 1)} ^ {format_expr(e.right, 7)}"
        elif p == 4:
            s = f"{format_expr(e.left, p + 1)} {e.op} {format_expr(e.right, p + 1)}"
        else:
            s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if prec > p else s
    if isinstance(e, If):
        s = f"if {format_expr(e.cond)} then {format_expr(e.then)} else {format_expr(e.orelse)}"
        return f"({s})" if prec > 0 else s
    raise TypeError(f"not an expression: {e!r}")


def _format_body(body: list, indent: str, out: list) -> None:
    for s in body:
        if isinstance(s, Const):
            out.append(f"{indent}const {s.name} = {format_expr(s.value)}")
        elif isinstance(s, Assign):
            tgt = s.name if s.index is None else f"{s.name}[{format_expr(s.index)}]"
            out.append(f"{indent}{tgt} = {format_expr(s.value)}")
        elif isinstance(s, Observe):
            if s.value is None:
                out.append(f"{indent}observe({format_expr(s.target)})")
            else:
                out.append(f"{indent}observe({format_expr(s.target)}, {format_expr(s.value)})")
        elif isinstance(s, For):
            if isinstance(s.over, Range):
                over = f"{format_expr(s.over.lo)}:{format_expr(s.over.hi)}"
            else:
                over = format_expr(s.over)
            out.append(f"{indent}for {s.var} in {over}")
            _format_body(s.body, indent + "    ", out)
            out.append(f"{indent}end")


def format_program(prog: Program) -> str:
    out: list[str] = []
    _format_body(prog.body, "", out)
    out.append(f"return {prog.ret.kind}({format_expr(prog.ret.target)})")
    return "\n".join(out) + "\n"


# ================================================================== evaluator
@dataclass
class Config:
    bits: int = 8
    pieces: int = 16
    piece_kind: str = "exponential"
    overrides: dict = field(default_factory=dict)


@dataclass
class Result:
    kind: str
    posterior: list | None = None
    expectation: float | None = None
    variance: float | None = None
    target: Any = None
    ctx: InferenceContext | None = None


class _Array(dict):
    pass


def _pow2_at_least(x: float) -> float:
    return 2.0 ** math.ceil(math.log2(x))


class Evaluator:
    def __init__(self, config: Config):
        self.cfg = config
        self.ctx = InferenceContext()
        self.env: dict[str, Any] = {}
        self.notes: list[str] = []

    # -------------------------------------------------------------- helpers
    def number(self, e, what: str = "a constant number") -> float:
        v = self.eval(e)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr(f"expected {what}", *e.loc)
        return v

    def boolean(self, v, loc) -> BoolRv:
        if isinstance(v, bool):
            return self.ctx.const(v)
        if isinstance(v, BoolRv):
            return v
        raise TypeErr("expected a Boolean", *loc)

    def as_dist(self, v, loc, like: BitVectorDist | None = None) -> BitVectorDist:
        if isinstance(v, BitVectorDist):
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr("expected a number or fixed-point value", *loc)
        return self.constant_dist(float(v), loc)

    def constant_dist(self, value: float, loc) -> BitVectorDist:
        frac = 0
        while value * 2.0 ** frac != math.floor(value * 2.0 ** frac):
            frac += 1
            if frac > 60:
                raise TypeErr(f"{value} has no finite binary expansion", *loc)
        signed = value < 0
        ib = 1
        while True:
            fmt = FixedPointFormat(ib + frac, frac, signed)
            if fmt.lo <= value < fmt.hi:
                return constant(self.ctx, value, fmt)
            ib += 1

    def unify(self, a: BitVectorDist, b: BitVectorDist) -> tuple[BitVectorDist, BitVectorDist]:
        if a.format == b.format:
            return a, b
        fmt = common_format(a.format, b.format)
        return widen(a, fmt), widen(b, fmt)

    # ----------------------------------------------------------- statements
    def run(self, prog: Program) -> Result:
        self.exec_body(prog.body)
        return self.query(prog.ret)

    def exec_body(self, body: list) -> None:
        for s in body:
            if isinstance(s, Const):
                if s.name in self.cfg.overrides:
                    self.env[s.name] = self.cfg.overrides[s.name]
                else:
                    self.env[s.name] = self.number(s.value)
            elif isinstance(s, Assign):
                v = self.eval(s.value)
                if s.index is None:
                    self.env[s.name] = v
                else:
                    k = self.index_value(s.index)
                    arr = self.env.get(s.name)
                    if not isinstance(arr, _Array):
                        arr = _Array()
                        self.env[s.name] = arr
                    arr[k] = v
            elif isinstance(s, Observe):
                self.observe(s)
            elif isinstance(s, For):
                for v in self.loop_values(s):
                    self.env[s.var] = v
                    self.exec_body(s.body)

    def index_value(self, e) -> int:
        v = self.number(e, "an integer index")
        if int(v) != v:
            raise TypeErr("index must be an integer", *e.loc)
        return int(v)

    def loop_values(self, s: For) -> list:
        if isinstance(s.over, Range):
            lo = self.index_value(s.over.lo)
            hi = self.index_value(s.over.hi)
            return list(range(lo, hi + 1))
        v = self.eval(s.over)
        if isinstance(v, list):
            return v
        if isinstance(v, _Array):
            return [v[k] for k in sorted(v)]
        raise TypeErr("a loop runs over a:b or a list", *s.over.loc)

    def observe(self, s: Observe) -> None:
        tgt = self.eval(s.target)
        if s.value is None:
            self.ctx.observe(self.boolean(tgt, s.target.loc))
            return
        v = self.eval(s.value)
        if isinstance(tgt, (BoolRv, bool)):
            want = self.boolean(v, s.value.loc)
            self.ctx.observe(self.ctx.store.apply_iff(self.boolean(tgt, s.loc).formula,
                                                      want.formula))
            return
        if not isinstance(tgt, BitVectorDist):
            raise TypeErr("observe needs a random value", *s.target.loc)
        if isinstance(v, BitVectorDist):
            a, b = self.unify(tgt, v)
            self.ctx.observe(equals(a, b))
            return
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr("observed value must be a number", *s.value.loc)
        fmt = tgt.format
        step, offset, lo, hi = _grid(tgt)
        cell = math.floor((v - offset) / step) * step + offset
        if cell < lo or cell > hi:
            near = min(max(cell, lo), hi)
            raise ObserveErr(f"observed value {v} lies outside the range [{lo}, {hi}] "
                             f"(grid snap distance {abs(near - v)})", *s.loc)
        if cell != v:
            self.notes.append(f"{s.loc[0]}:{s.loc[1]}: observed {v} conditioned on the cell "
                              f"starting at {cell} (snap distance {v - cell})")
        self.ctx.observe(equals(tgt, constant(self.ctx, cell, fmt)))

    def query(self, r: Return) -> Result:
        v = self.eval(r.target)
        if isinstance(v, (bool, BoolRv)):
            f = self.boolean(v, r.target.loc)
            v = BitVectorDist(self.ctx, FixedPointFormat(1, 0, False), [f.formula])
        if isinstance(v, (int, float)):
            v = self.constant_dist(float(v), r.target.loc)
        if not isinstance(v, BitVectorDist):
            raise TypeErr("query target must be a random value", *r.target.loc)
        res = Result(r.kind, target=v, ctx=self.ctx)
        if r.kind == "pr":
            res.posterior = pr(v).entries
        elif r.kind == "expectation":
            res.expectation = expectation(v)
        else:
            res.variance = variance(v)
        return res

    # ---------------------------------------------------------- expressions
    def eval(self, e):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, Name):
            if e.id not in self.env:
                raise ScopeErr(f"unbound identifier {e.id!r}", *e.loc)
            return self.env[e.id]
        if isinstance(e, Index):
            arr = self.env.get(e.name)
            k = self.index_value(e.index)
            if isinstance(arr, list):
                if not 1 <= k <= len(arr):
                    raise TypeErr(f"index {k} out of range", *e.loc)
                return arr[k - 1]
            if not isinstance(arr, _Array) or k not in arr:
                raise ScopeErr(f"{e.name}[{k}] is not defined", *e.loc)
            return arr[k]
        if isinstance(e, ListLit):
            return [self.eval(a) for a in e.items]
        if isinstance(e, Unary):
            return self.unary(e)
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, If):
            return self.ite(e)
        if isinstance(e, Reduce):
            return self.reduce(e)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeErr(f"cannot evaluate {type(e).__name__}")

    def unary(self, e: Unary):
        v = self.eval(e.operand)
        if e.op == "!":
            if isinstance(v, bool):
                return not v
            return ~self.boolean(v, e.loc)
        if isinstance(v, BitVectorDist):
            return minus(self.constant_dist(0.0, e.loc), v)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr("unary minus needs a number", *e.loc)
        return -v

    def binary(self, e: Binary):
        op = e.op
        a, b = self.eval(e.left), self.eval(e.right)
        if op in ("&", "|"):
            if isinstance(a, bool) and isinstance(b, bool):
                return (a and b) if op == "&" else (a or b)
            x, y = self.boolean(a, e.left.loc), self.boolean(b, e.right.loc)
            return x & y if op == "&" else x | y
        plain = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool)
        if plain(a) and plain(b):
            return _fold(op, a, b, e.loc)
        if op in ("*", "/", "^"):
            return self.scale(op, a, b, e)
        if op in ("==", "!=") and isinstance(a, (bool, BoolRv)) and isinstance(b, (bool, BoolRv)):
            f = self.ctx.store.apply_iff(self.boolean(a, e.loc).formula, self.boolean(b, e.loc).formula)
            r = BoolRv(f, self.ctx)
            return r if op == "==" else ~r
        x, y = self.as_dist(a, e.left.loc), self.as_dist(b, e.right.loc)
        if op == "+":
            return plus(x, y)
        if op == "-":
            return minus(x, y)
        x, y = self.unify(x, y)
        if op == "<":
            return less_than(x, y)
        if op == ">":
            return less_than(y, x)
        if op == "<=":
            return ~less_than(y, x)
        if op == ">=":
            return ~less_than(x, y)
        if op == "==":
            return equals(x, y)
        if op == "!=":
            return ~equals(x, y)
        raise TypeErr(f"unsupported operator {op}", *e.loc)

    def scale(self, op: str, a, b, e: Binary) -> BitVectorDist:
        if op == "*" and isinstance(b, BitVectorDist) and not isinstance(a, BitVectorDist):
            a, b = b, a
        if not isinstance(a, BitVectorDist) or isinstance(b, (BitVectorDist, BoolRv, bool)):
            raise TypeErr("random values may only be scaled by powers of two", *e.loc)
        if op == "^":
            raise TypeErr("powers of random values are not supported", *e.loc)
        k = b if op == "*" else 1.0 / b
        try:
            return shift_scale(a, k)
        except FormatError as err:
            raise TypeErr(str(err), *e.loc) from None

    def ite(self, e: If):
        c = self.eval(e.cond)
        if isinstance(c, bool):
            return self.eval(e.then if c else e.orelse)
        g = self.boolean(c, e.cond.loc)
        t, f = self.eval(e.then), self.eval(e.orelse)
        if isinstance(t, (bool, BoolRv)) and isinstance(f, (bool, BoolRv)):
            return self.ctx.ite_bool(g, self.boolean(t, e.loc), self.boolean(f, e.loc))
        x, y = self.unify(self.as_dist(t, e.then.loc), self.as_dist(f, e.orelse.loc))
        return mux(g, x, y, lazy=True)

    def reduce(self, e: Reduce):
        v = self.eval(e.arg)
        if isinstance(v, _Array):
            items = [v[k] for k in sorted(v)]
        elif isinstance(v, list):
            items = v
        else:
            raise TypeErr("reduce needs an array", *e.arg.loc)
        s = self.ctx.store
        fs = [self.boolean(x, e.loc).formula for x in items]
        return BoolRv(s.or_all(fs) if e.op == "|" else s.and_all(fs), self.ctx)

    # ------------------------------------------------------------ literals
    def call(self, e: Call):
        f = e.func
        if f in ("exp", "log", "sqrt", "abs"):
            v = self.number(e.args[0])
            return _MATH[f](v)
        if f == "flip":
            return self.flip(e)
        if f == "bitblast":
            return self.bitblast(e)
        cfg = self.cfg
        bits = cfg.bits
        if f in ("normal", "gaussian", "gaussian_around"):
            mu = self.eval(e.args[0])
            sigma = self.number(e.args[1], "a constant standard deviation")
            rng = self.range_args(e, 2)
            if isinstance(mu, BitVectorDist):
                return self.gaussian_around(mu, sigma, rng, e)
            if f == "gaussian_around" or isinstance(mu, BoolRv):
                raise TypeErr("gaussian_around needs a random mean", *e.loc)
            if rng is None:
                rng = self.wrap(e, lambda _ctx, *a: D.default_gaussian_range(*a), mu, sigma)
            return self.wrap(e, D.gaussian, bits, mu, sigma, rng[0], rng[1], cfg.pieces,
                             cfg.piece_kind)
        nums = [self.number(a) for a in e.args]
        if f == "uniform":
            return self.wrap(e, D.uniform, bits, nums[0], nums[1])
        if f == "beta":
            ll, ul = (nums[2], nums[3]) if len(nums) == 4 else (0.0, 1.0)
            if len(nums) == 3:
                raise TypeErr("beta takes a range as two numbers", *e.loc)
            return self.wrap(e, D.beta, bits, nums[0], nums[1], ll, ul,
                             num_pieces=cfg.pieces, kind=cfg.piece_kind)
        if f == "exponential":
            rate = nums[0]
            if len(nums) == 3:
                ll, ul = nums[1], nums[2]
            elif len(nums) == 1:
                if rate <= 0:
                    raise TypeErr("rate must be positive", *e.loc)
                ll, ul = 0.0, _pow2_at_least(16.0 / rate)
            else:
                raise TypeErr("exponential takes a rate and optionally a range", *e.loc)
            return self.wrap(e, D.exponential, bits, rate, ll, ul)
        if f == "laplace":
            mu, scale = nums[0], nums[1]
            if len(nums) == 4:
                ll, ul = nums[2], nums[3]
            elif len(nums) == 2:
                r = _pow2_at_least(8.0 * scale)
                ll, ul = mu - r, mu + r
            else:
                raise TypeErr("laplace takes a range as two numbers", *e.loc)
            return self.wrap(e, D.laplace, bits, mu, scale, ll, ul)
        if f == "gamma":
            return self.wrap(e, D.gamma, bits, *nums, num_pieces=cfg.pieces, kind=cfg.piece_kind)
        if f == "general_gamma":
            alpha = nums[0]
            if int(alpha) != alpha:
                raise TypeErr("alpha must be an integer", *e.args[0].loc)
            return self.wrap(e, D.general_gamma, bits, int(alpha), *nums[1:])
        if f == "chi_squared":
            return self.wrap(e, D.chi_squared, bits, *nums, num_pieces=cfg.pieces,
                             kind=cfg.piece_kind)
        if f == "student_t":
            return self.wrap(e, D.student_t, bits, *nums, cfg.pieces, cfg.piece_kind)
        if f == "polynomial":
            return self.wrap(e, D.polynomial, bits, int(nums[0]), nums[1], nums[2])
        raise ScopeErr(f"unknown function {f!r}", *e.loc)

    def range_args(self, e: Call, start: int):
        rest = e.args[start:]
        if not rest:
            return None
        if len(rest) != 2:
            raise TypeErr("a range is two numbers", *e.loc)
        return self.number(rest[0]), self.number(rest[1])

    def wrap(self, e: Call, fn: Callable, *args, **kw):
        try:
            return fn(self.ctx, *args, **kw)
        except (ValueError, ArithmeticError) as err:
            raise TypeErr(f"{e.func}: {err}", *e.loc) from None

    def gaussian_around(self, mu: BitVectorDist, sigma: float, rng, e: Call) -> BitVectorDist:
        """mu plus zero-mean Gaussian noise; the noise shares mu's block."""
        if rng is None:
            rng = self.wrap(e, lambda _ctx, *a: D.default_gaussian_range(*a), 0.0, sigma)
        ll, ul = rng
        try:
            top = _log2_exact(ul - ll) - 1
        except FormatError as err:
            raise TypeErr(str(err), *e.loc) from None
        site = Site(mu.block, top) if mu.block is not None else None
        noise = self.wrap(e, D.gaussian, self.cfg.bits, 0.0, sigma, ll, ul, self.cfg.pieces,
                          self.cfg.piece_kind, site)
        return plus(mu, noise)

    def flip(self, e: Call):
        v = self.eval(e.args[0])
        if isinstance(v, BitVectorDist):
            lo, hi = _static_range(v)
            if lo < 0 or hi > 1:
                raise TypeErr("flip of a random value needs values in [0, 1]", *e.loc)
            # P(U < X) = X for U uniform on the grid of X
            site = Site(v.block or self.ctx.new_block(), v.format.exponent(0))
            u = uniform_like(self.ctx, v, site)
            return less_than(u, v)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr("flip takes a probability", *e.loc)
        if not 0.0 <= v <= 1.0:
            raise TypeErr(f"flip parameter {v} outside [0, 1]", *e.loc)
        return self.ctx.flip(v)

    def bitblast(self, e: Call):
        ll = self.number(e.args[1])
        ul = self.number(e.args[2])
        pieces = int(self.number(e.args[3])) if len(e.args) == 4 else self.cfg.pieces
        body = e.args[0]
        env = dict(self.env)

        def dens(x: float) -> float:
            env[DENSITY_VAR] = x
            return float(_numeric(body, env))
        return self.wrap(e, D.bitblast, self.cfg.bits, D.DensityFn(dens, ll, ul), pieces,
                         self.cfg.piece_kind)


def _grid(x: BitVectorDist) -> tuple[float, float, float, float]:
    """(stride, offset, lo, hi) of the values x can take, without forcing lazy sums."""
    if x._bits is None and x.branches is not None:
        _, t, e = x.branches
        gt, ge = _grid(t), _grid(e)
        lo, hi = min(gt[2], ge[2]), max(gt[3], ge[3])
        if gt[:2] == ge[:2]:
            return gt[0], gt[1], lo, hi
        return x.format.step, 0.0, lo, hi
    if x._bits is None and x.expr is not None and x.expr[0] == "sum":
        _, a, b, negate = x.expr
        ga, gb = _grid(a), _grid(b)
        step = min(ga[0], gb[0])
        off = (ga[1] - gb[1] if negate else ga[1] + gb[1]) % step
        if negate:
            return step, off, ga[2] - gb[3], ga[3] - gb[2]
        return step, off, ga[2] + gb[2], ga[3] + gb[3]
    f = x.format
    bits = x.bits
    free = [i for i, b in enumerate(bits) if b >= 2]
    lo, hi = _static_range(x)
    if not free:
        return f.step, 0.0, lo, hi
    last = free[-1]
    step = 2.0 ** f.exponent(last)
    offset = sum(f.weight(i) for i in range(last + 1, len(bits)) if bits[i] == TRUE)
    return step, offset, lo, hi


_MATH = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt, "abs": abs}


def _fold(op: str, a, b, loc):
    try:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        if op == "^":
            return a ** b
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
                "==": a == b, "!=": a != b}[op]
    except (ZeroDivisionError, OverflowError, ValueError) as err:
        raise TypeErr(str(err), *loc) from None


def _numeric(e, env: dict) -> float:
    """Plain arithmetic for density bodies."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        v = env.get(e.id)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeErr(f"{e.id} is not a number inside a density", *e.loc)
        return v
    if isinstance(e, Unary) and e.op == "-":
        return -_numeric(e.operand, env)
    if isinstance(e, Binary) and e.op in ("+", "-", "*", "/", "^"):
        a, b = _numeric(e.left, env), _numeric(e.right, env)
        if e.op == "^":
            return a ** b
        return _fold(e.op, a, b, e.loc)
    if isinstance(e, Call) and e.func in _MATH:
        try:
            return _MATH[e.func](_numeric(e.args[0], env))
        except (ValueError, OverflowError):
            return 0.0
    raise TypeErr("densities may only use numbers, x, + - * / ^ and exp/log/sqrt/abs", *e.loc)


def evaluate(prog: Program, config: Config | None = None) -> Result:
    return Evaluator(config or Config()).run(prog)


def run_source(src: str, config: Config | None = None) -> Result:
    return evaluate(parse(src), config)
