"""Index-notation AST: tensor accesses combined with * and + under named index
variables, assigned to a dense output access.

The surface grammar accepted by :func:`parse_assignment`::

    file       :=  (label_def NEWLINE)* assignment
    label_def  :=  NAME "=" expr            # NAME has no parenthesized vars
    assignment :=  access "=" expr
    expr       :=  term ("+" term)*
    term       :=  factor ("*" factor)*
    factor     :=  access | NUMBER | NAME   # bare NAME refers to a label
    access     :=  NAME "(" NAME ("," NAME)* ")"

Labels are expanded inline but remembered on the assignment so schedules can
name the sub-expression they label (used by precompute).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import NotationError


class Space(enum.Enum):
    COORDINATE = "coordinate"
    POSITION = "position"


@dataclass(frozen=True)
class IndexVar:
    """A named iteration dimension, in coordinate or position space."""

    name: str
    space: Space = Space.COORDINATE
    derived: bool = False

    def __repr__(self) -> str:
        tag = "" if self.space is Space.COORDINATE else "@pos"
        return f"{self.name}{tag}"


class IndexExpr:
    """Base class for right-hand-side expression nodes."""

    def __mul__(self, other: IndexExpr) -> IndexExpr:
        return Mul(self, _as_expr(other))

    def __add__(self, other: IndexExpr) -> IndexExpr:
        return Add(self, _as_expr(other))


@dataclass(frozen=True, eq=True)
class Access(IndexExpr):
    tensor: str
    vars: tuple[IndexVar, ...]

    def __repr__(self) -> str:
        return f"{self.tensor}({','.join(v.name for v in self.vars)})"


@dataclass(frozen=True, eq=True)
class Scalar(IndexExpr):
    value: float

    def __repr__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True, eq=True)
class Mul(IndexExpr):
    lhs: IndexExpr
    rhs: IndexExpr

    def __repr__(self) -> str:
        return f"{self.lhs!r} * {self.rhs!r}"


@dataclass(frozen=True, eq=True)
class Add(IndexExpr):
    lhs: IndexExpr
    rhs: IndexExpr

    def __repr__(self) -> str:
        return f"{self.lhs!r} + {self.rhs!r}"


def _as_expr(x) -> IndexExpr:
    if isinstance(x, IndexExpr):
        return x
    if isinstance(x, (int, float)):
        return Scalar(float(x))
    raise NotationError(f"cannot use {x!r} in an index expression")


def accesses(expr: IndexExpr) -> list[Access]:
    """All accesses in expression-walk order (left to right)."""
    out: list[Access] = []

    def walk(e: IndexExpr) -> None:
        if isinstance(e, Access):
            out.append(e)
        elif isinstance(e, (Mul, Add)):
            walk(e.lhs)
            walk(e.rhs)

    walk(expr)
    return out


def expr_vars(expr: IndexExpr) -> list[IndexVar]:
    """Distinct variables in first-appearance order."""
    seen: list[IndexVar] = []
    for acc in accesses(expr):
        for v in acc.vars:
            if v not in seen:
                seen.append(v)
    return seen


def additive_terms(expr: IndexExpr) -> list[IndexExpr]:
    if isinstance(expr, Add):
        return additive_terms(expr.lhs) + additive_terms(expr.rhs)
    return [expr]


def mul_factors(expr: IndexExpr) -> list[IndexExpr]:
    if isinstance(expr, Mul):
        return mul_factors(expr.lhs) + mul_factors(expr.rhs)
    return [expr]


def contains_subexpr(expr: IndexExpr, sub: IndexExpr) -> bool:
    if expr == sub:
        return True
    if isinstance(expr, (Mul, Add)):
        return contains_subexpr(expr.lhs, sub) or contains_subexpr(expr.rhs, sub)
    return False


def substitute_subexpr(expr: IndexExpr, sub: IndexExpr, repl: IndexExpr) -> IndexExpr:
    """Replace every occurrence of `sub` (structural equality) by `repl`."""
    if expr == sub:
        return repl
    if isinstance(expr, Mul):
        return Mul(substitute_subexpr(expr.lhs, sub, repl), substitute_subexpr(expr.rhs, sub, repl))
    if isinstance(expr, Add):
        return Add(substitute_subexpr(expr.lhs, sub, repl), substitute_subexpr(expr.rhs, sub, repl))
    return expr


@dataclass(frozen=True)
class Assignment:
    """`lhs = rhs` in index notation, with the output access dense.

    reduction_vars are the variables that appear on the right-hand side but
    not in the output access; they are implicitly summed over.
    """

    lhs: Access
    rhs: IndexExpr
    labels: dict[str, IndexExpr] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        names = [v.name for v in self.lhs.vars]
        if len(set(names)) != len(names):
            raise NotationError("a variable may not repeat inside a single access")
        for acc in accesses(self.rhs):
            anames = [v.name for v in acc.vars]
            if len(set(anames)) != len(anames):
                raise NotationError(
                    f"a variable may not repeat inside a single access: {acc!r}"
                )
        rhs_vars = {v.name for v in expr_vars(self.rhs)}
        missing = [v.name for v in self.lhs.vars if v.name not in rhs_vars]
        if missing:
            raise NotationError(
                f"output variable(s) {missing} never appear on the right-hand side"
            )
        for term in additive_terms(self.rhs):
            term_vars = {v.name for v in expr_vars(term)}
            if not term_vars and not self.lhs.vars:
                continue
            absent = [v.name for v in self.lhs.vars if v.name not in term_vars]
            if absent:
                raise NotationError(
                    f"output variable(s) {absent} missing from additive term {term!r}"
                )

    @property
    def reduction_vars(self) -> tuple[IndexVar, ...]:
        lhs_names = {v.name for v in self.lhs.vars}
        return tuple(v for v in expr_vars(self.rhs) if v.name not in lhs_names)

    @property
    def all_vars(self) -> tuple[IndexVar, ...]:
        """Output variables first, then reduction variables in first appearance."""
        return tuple(self.lhs.vars) + self.reduction_vars

    @property
    def tensors(self) -> tuple[str, ...]:
        """Distinct input tensor names in expression-walk order."""
        out: list[str] = []
        for acc in accesses(self.rhs):
            if acc.tensor not in out:
                out.append(acc.tensor)
        return tuple(out)

    def input_accesses(self) -> list[Access]:
        return accesses(self.rhs)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)"
    r"|(?P<punct>[(),*+=]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise NotationError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, labels: dict[str, IndexExpr]):
        self.tokens = _tokenize(text)
        self.idx = 0
        self.labels = labels
        self.used_labels: dict[str, IndexExpr] = {}

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.idx]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, pos = self.next()
        if text != value:
            raise NotationError(f"expected {value!r}, found {text or 'end of input'!r}", pos)

    def parse_expr(self) -> IndexExpr:
        expr = self.parse_term()
        while self.peek()[1] == "+":
            self.next()
            expr = Add(expr, self.parse_term())
        return expr

    def parse_term(self) -> IndexExpr:
        expr = self.parse_factor()
        while self.peek()[1] == "*":
            self.next()
            expr = Mul(expr, self.parse_factor())
        return expr

    def parse_factor(self) -> IndexExpr:
        kind, text, pos = self.next()
        if kind == "number":
            return Scalar(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                return self.parse_access_tail(text)
            if text in self.labels:
                self.used_labels[text] = self.labels[text]
                return self.labels[text]
            raise NotationError(f"unknown name {text!r} (not a label, and not an access)", pos)
        raise NotationError(f"expected a tensor access, number, or label, found {text!r}", pos)

    def parse_access_tail(self, tensor: str) -> Access:
        self.expect("(")
        vars_: list[IndexVar] = []
        while True:
            kind, text, pos = self.next()
            if kind != "name":
                raise NotationError("expected an index variable name", pos)
            vars_.append(IndexVar(text))
            kind, text, pos = self.next()
            if text == ")":
                break
            if text != ",":
                raise NotationError("expected ',' or ')' in access", pos)
        return Access(tensor, tuple(vars_))

    def parse_access(self) -> Access:
        kind, text, pos = self.next()
        if kind != "name":
            raise NotationError("expected a tensor name", pos)
        return self.parse_access_tail(text)


def parse_assignment(text: str) -> Assignment:
    """Parse one assignment, optionally preceded by label definitions.

    Example::

        body = A(i,j) * x(j)
        y(i) = body
    """
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln and not ln.startswith("#")]
    if not lines:
        raise NotationError("empty expression")
    labels: dict[str, IndexExpr] = {}
    for line in lines[:-1]:
        if "=" not in line:
            raise NotationError(f"label definition {line!r} has no '='")
        name, _, body = line.partition("=")
        name = name.strip()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
            raise NotationError(f"bad label name {name!r}")
        p = _Parser(body, labels)
        labels[name] = p.parse_expr()
        if p.peek()[0] != "eof":
            raise NotationError("trailing tokens after label expression", p.peek()[2])
    line = lines[-1]
    p = _Parser(line, labels)
    lhs = p.parse_access()
    p.expect("=")
    rhs = p.parse_expr()
    if p.peek()[0] != "eof":
        raise NotationError("trailing tokens after expression", p.peek()[2])
    return Assignment(lhs=lhs, rhs=rhs, labels=dict(labels))


def format_expr(expr: IndexExpr) -> str:
    if isinstance(expr, Access):
        return f"{expr.tensor}({','.join(v.name for v in expr.vars)})"
    if isinstance(expr, Scalar):
        v = expr.value
        return str(int(v)) if v == int(v) else repr(v)
    if isinstance(expr, Mul):
        return f"{format_expr(expr.lhs)} * {format_expr(expr.rhs)}"
    if isinstance(expr, Add):
        return f"{format_expr(expr.lhs)} + {format_expr(expr.rhs)}"
    raise NotationError(f"cannot format {expr!r}")


def format_assignment(assignment: Assignment) -> str:
    return f"{format_expr(assignment.lhs)} = {format_expr(assignment.rhs)}"
