"""Imperative loop IR produced by lowering.

The interpreter executes this IR directly and is the normative semantics;
the C emitter prints the same tree.  Index expressions stay symbolic: no
folding happens beyond literal integer arithmetic, so emitted source is
stable for golden tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# -- expressions ------------------------------------------------------------


class Expr:
    pass


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class FloatLit(Expr):
    value: float


@dataclass(frozen=True)
class VarRef(Expr):
    name: str


@dataclass(frozen=True)
class DimRef(Expr):
    """Extent of one tensor dimension; bound from the dims manifest."""

    tensor: str
    level: int


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * / % == != < <= > >= && || min
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class ArrayRef:
    kind: str  # pos | crd | vals | out | workspace
    tensor: str = ""
    level: int = -1

    def label(self) -> str:
        if self.kind == "pos":
            return f"{self.tensor}{self.level + 1}_pos"
        if self.kind == "crd":
            return f"{self.tensor}{self.level + 1}_crd"
        if self.kind == "vals":
            return f"{self.tensor}_vals"
        if self.kind == "out":
            return "out"
        return self.tensor  # workspace buffers go by their given name


@dataclass(frozen=True)
class Load(Expr):
    array: ArrayRef
    index: Expr


def lit(v: int) -> Expr:
    return IntLit(int(v))


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, IntLit) and a.value == 0:
        return b
    if isinstance(b, IntLit) and b.value == 0:
        return a
    if isinstance(a, IntLit) and isinstance(b, IntLit):
        return IntLit(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(b, IntLit) and b.value == 0:
        return a
    if isinstance(a, IntLit) and isinstance(b, IntLit):
        return IntLit(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, IntLit) and a.value == 1:
        return b
    if isinstance(b, IntLit) and b.value == 1:
        return a
    if isinstance(a, IntLit) and isinstance(b, IntLit):
        return IntLit(a.value * b.value)
    return BinOp("*", a, b)


def ceil_div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, IntLit) and isinstance(b, IntLit):
        return IntLit(-(-a.value // b.value))
    return BinOp("/", add(a, sub(b, lit(1))), b)


# -- statements ---------------------------------------------------------------


class Stmt:
    pass


@dataclass(frozen=True)
class Block(Stmt):
    stmts: tuple[Stmt, ...]


@dataclass(frozen=True)
class Declare(Stmt):
    name: str
    init: Expr
    dtype: str = "i32"  # i32 | f64


@dataclass(frozen=True)
class Assign(Stmt):
    name: str
    value: Expr


@dataclass(frozen=True)
class ForLoop(Stmt):
    var: str
    lo: Expr
    hi: Expr
    body: Block
    parallel: tuple[str, str] | None = None  # (unit, race strategy)
    unroll: int | None = None


@dataclass(frozen=True)
class WhileLoop(Stmt):
    cond: Expr
    body: Block
    label: str = ""


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Block
    orelse: Block | None = None
    tag: str = ""  # "tail" iteration guards, "locate" found-guards


@dataclass(frozen=True)
class Store(Stmt):
    array: ArrayRef
    index: Expr
    value: Expr


@dataclass(frozen=True)
class ReduceAdd(Stmt):
    array: ArrayRef
    index: Expr
    value: Expr
    atomic: bool = False


@dataclass(frozen=True)
class SearchSegment(Stmt):
    """result = largest s in [lo, hi) with arr[s] <= key (clamped into range).

    arr must be nondecreasing; used on pos arrays to find the segment holding
    a storage position.
    """

    result: str
    array: ArrayRef
    lo: Expr
    hi: Expr
    key: Expr


@dataclass(frozen=True)
class SearchCoord(Stmt):
    """result = first s in [lo, hi) with arr[s] >= key, or hi if none.

    arr must be strictly increasing on [lo, hi); used on crd segments to
    locate a coordinate's position.
    """

    result: str
    array: ArrayRef
    lo: Expr
    hi: Expr
    key: Expr


@dataclass(frozen=True)
class AssertExtent(Stmt):
    actual: Expr
    expected: Expr
    message: str


@dataclass(frozen=True)
class AllocWorkspace(Stmt):
    name: str
    size: Expr


# -- whole kernels ------------------------------------------------------------


@dataclass(frozen=True)
class TensorSlot:
    """One input tensor's place in the kernel parameter manifest."""

    name: str
    shorthand: str  # per-level 'd'/'s'
    dims: tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class Manifest:
    """Parameter layout shared by the interpreter and emitted C.

    Arrays appear in tensor order; each compressed level contributes one
    (pos, crd) pair, enumerated tensor-major then level-major; dims are the
    concatenated input dimensions in the same tensor order.
    """

    tensors: tuple[TensorSlot, ...]
    out_dims: tuple[int, ...]

    def dim_index(self, tensor: str, level: int) -> int:
        base = 0
        for slot in self.tensors:
            if slot.name == tensor:
                return base + level
            base += slot.order
        raise KeyError(tensor)

    def sparse_levels(self) -> list[tuple[str, int]]:
        out = []
        for slot in self.tensors:
            for lvl, ch in enumerate(slot.shorthand):
                if ch == "s":
                    out.append((slot.name, lvl))
        return out


@dataclass(frozen=True)
class Program:
    """A lowered kernel: statement tree plus its parameter manifest."""

    body: Block
    manifest: Manifest
    name: str = "compute"
    workspaces: tuple[str, ...] = ()


# -- pretty printer -----------------------------------------------------------


def format_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return repr(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, DimRef):
        return f"{e.tensor}{e.level + 1}_dim"
    if isinstance(e, Load):
        return f"{e.array.label()}[{format_expr(e.index)}]"
    if isinstance(e, BinOp):
        if e.op == "min":
            return f"min({format_expr(e.lhs)}, {format_expr(e.rhs)})"
        return f"({format_expr(e.lhs)} {e.op} {format_expr(e.rhs)})"
    raise TypeError(f"unknown expression {e!r}")


def format_stmt(s: Stmt, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Block):
        out: list[str] = []
        for sub in s.stmts:
            out.extend(format_stmt(sub, indent))
        return out
    if isinstance(s, Declare):
        return [f"{pad}let {s.name}: {s.dtype} = {format_expr(s.init)}"]
    if isinstance(s, Assign):
        return [f"{pad}{s.name} = {format_expr(s.value)}"]
    if isinstance(s, ForLoop):
        attrs = ""
        if s.parallel:
            attrs += f" parallel({s.parallel[0]}, {s.parallel[1]})"
        if s.unroll:
            attrs += f" unroll({s.unroll})"
        head = f"{pad}for {s.var} in [{format_expr(s.lo)}, {format_expr(s.hi)}){attrs}"
        return [head] + format_stmt(s.body, indent + 1)
    if isinstance(s, WhileLoop):
        return [f"{pad}while {format_expr(s.cond)}"] + format_stmt(s.body, indent + 1)
    if isinstance(s, If):
        tag = f" !{s.tag}" if s.tag else ""
        out = [f"{pad}if {format_expr(s.cond)}{tag}"] + format_stmt(s.then, indent + 1)
        if s.orelse is not None:
            out.append(f"{pad}else")
            out.extend(format_stmt(s.orelse, indent + 1))
        return out
    if isinstance(s, Store):
        return [f"{pad}{s.array.label()}[{format_expr(s.index)}] = {format_expr(s.value)}"]
    if isinstance(s, ReduceAdd):
        atom = " atomic" if s.atomic else ""
        return [f"{pad}{s.array.label()}[{format_expr(s.index)}] +={atom} {format_expr(s.value)}"]
    if isinstance(s, SearchSegment):
        return [
            f"{pad}let {s.result}: i32 = search_segment({s.array.label()}, "
            f"{format_expr(s.lo)}, {format_expr(s.hi)}, {format_expr(s.key)})"
        ]
    if isinstance(s, SearchCoord):
        return [
            f"{pad}let {s.result}: i32 = search_coord({s.array.label()}, "
            f"{format_expr(s.lo)}, {format_expr(s.hi)}, {format_expr(s.key)})"
        ]
    if isinstance(s, AssertExtent):
        return [f"{pad}assert {format_expr(s.actual)} == {format_expr(s.expected)}  # {s.message}"]
    if isinstance(s, AllocWorkspace):
        return [f"{pad}workspace {s.name}[{format_expr(s.size)}]: f64 = 0"]
    raise TypeError(f"unknown statement {s!r}")


def format_program(program: Program) -> str:
    lines = [f"kernel {program.name}"]
    for slot in program.manifest.tensors:
        dims = "x".join(str(d) for d in slot.dims)
        lines.append(f"  tensor {slot.name}: {slot.shorthand} [{dims}]")
    lines.append("  out dims [" + "x".join(str(d) for d in program.manifest.out_dims) + "]")
    lines.extend(format_stmt(program.body, 1))
    return "\n".join(lines) + "\n"
