"""Scheduling transformations over a concretized statement.

Each transformation returns a new ScheduledStmt, leaving the input untouched.
Derived index variables are tracked in a provenance graph whose edges record
how each variable was produced; bounds propagation and coordinate recovery
during lowering walk these edges.  Argument order follows the convention that
derived-from variables precede newly derived ones.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .errors import GraphError, RaceError, SchedulingError
from .graph import IterationGraph, MergeKind, build_graph, validate_graph
from .notation import (
    Access,
    Assignment,
    IndexExpr,
    IndexVar,
    Space,
    contains_subexpr,
)
from .tensors import LevelFormat, parse_format


class ParallelUnit(enum.Enum):
    CPU_THREAD = "CPUThread"
    CPU_VECTOR = "CPUVector"
    GPU_BLOCK = "GPUBlock"
    GPU_WARP = "GPUWarp"
    GPU_THREAD = "GPUThread"


class RaceStrategy(enum.Enum):
    NO_RACES = "NoRaces"
    IGNORE_RACES = "IgnoreRaces"
    ATOMICS = "Atomics"
    TEMPORARY = "Temporary"


class BoundType(enum.Enum):
    MAX_EXACT = "MaxExact"


@dataclass(frozen=True)
class SplitRel:
    parent: str
    outer: str
    inner: str
    inner_size: int

    consumed = property(lambda self: (self.parent,))
    produced = property(lambda self: (self.outer, self.inner))


@dataclass(frozen=True)
class DivideRel:
    parent: str
    outer: str
    inner: str
    outer_size: int

    consumed = property(lambda self: (self.parent,))
    produced = property(lambda self: (self.outer, self.inner))


@dataclass(frozen=True)
class FuseRel:
    left: str
    right: str
    fused: str

    consumed = property(lambda self: (self.left, self.right))
    produced = property(lambda self: (self.fused,))


@dataclass(frozen=True)
class PosRel:
    source: str
    pos_var: str
    access: Access
    level: int  # deepest access level covered by the source variable
    covered: tuple[int, ...]  # contiguous run of levels ending at `level`

    consumed = property(lambda self: (self.source,))
    produced = property(lambda self: (self.pos_var,))


@dataclass(frozen=True)
class CoordRel:
    source: str  # position-space variable
    coord_var: str

    consumed = property(lambda self: (self.source,))
    produced = property(lambda self: (self.coord_var,))


@dataclass(frozen=True)
class BoundRel:
    source: str
    bounded: str
    bound: int
    btype: BoundType

    consumed = property(lambda self: (self.source,))
    produced = property(lambda self: (self.bounded,))


Rel = SplitRel | DivideRel | FuseRel | PosRel | CoordRel | BoundRel


@dataclass(frozen=True)
class PosInfo:
    """Where a position-space variable lives: which access, which level, and
    which levels of that access its coordinate source covers."""

    access: Access
    level: int
    covered: tuple[int, ...]

    @property
    def first_covered(self) -> int:
        return self.covered[0]


@dataclass(frozen=True)
class ProvenanceGraph:
    """Acyclic record of how derived index variables came to be.

    Leaves (variables never consumed by a later transformation) are exactly
    the variables present in the current iteration order.
    """

    nodes: tuple[IndexVar, ...]
    rels: tuple[Rel, ...] = ()

    def find(self, name: str) -> IndexVar:
        for v in self.nodes:
            if v.name == name:
                return v
        raise SchedulingError(f"unknown index variable {name!r}")

    def has(self, name: str) -> bool:
        return any(v.name == name for v in self.nodes)

    def producing(self, name: str) -> Rel | None:
        for rel in self.rels:
            if name in rel.produced:
                return rel
        return None

    def consuming(self, name: str) -> Rel | None:
        for rel in self.rels:
            if name in rel.consumed:
                return rel
        return None

    def leaf_names(self) -> list[str]:
        consumed = {n for rel in self.rels for n in rel.consumed}
        return [v.name for v in self.nodes if v.name not in consumed]

    def original_names(self) -> list[str]:
        return [v.name for v in self.nodes if not v.derived]

    def extended(self, rel: Rel, new_vars: tuple[IndexVar, ...]) -> ProvenanceGraph:
        for v in new_vars:
            if self.has(v.name):
                raise SchedulingError(f"index variable name {v.name!r} is already in use")
        return ProvenanceGraph(nodes=self.nodes + tuple(new_vars), rels=self.rels + (rel,))

    def forest_support(self, name: str, forest: set[str]) -> set[str]:
        """Forest variables whose values determine `name`'s value."""
        if name in forest:
            return {name}
        rel = self.consuming(name)
        if rel is None:
            return set()
        out: set[str] = set()
        for child in rel.produced:
            out |= self.forest_support(child, forest)
        return out

    def constituents(self, name: str) -> list[str]:
        """Original coordinate variables composing a coordinate-space variable,
        in hierarchy order.  Undefined for split/divide-derived variables."""
        var = self.find(name)
        if not var.derived:
            return [name]
        rel = self.producing(name)
        if isinstance(rel, FuseRel):
            return self.constituents(rel.left) + self.constituents(rel.right)
        if isinstance(rel, BoundRel):
            return self.constituents(rel.source)
        if isinstance(rel, CoordRel):
            pos_rel = self.producing(rel.source)
            if not isinstance(pos_rel, PosRel):
                raise SchedulingError(
                    f"{rel.source!r} was not produced directly by a pos transformation"
                )
            return self.constituents(pos_rel.source)
        raise SchedulingError(
            f"variable {name!r} does not decompose into original coordinates"
        )

    def pos_info(self, name: str) -> PosInfo | None:
        """The position-space placement of `name`, or None for coordinate space."""
        var = self.find(name)
        if var.space is not Space.POSITION:
            return None
        rel = self.producing(name)
        if isinstance(rel, PosRel):
            return PosInfo(rel.access, rel.level, rel.covered)
        if isinstance(rel, (SplitRel, DivideRel)):
            return self.pos_info(rel.parent)
        if isinstance(rel, BoundRel):
            return self.pos_info(rel.source)
        if isinstance(rel, FuseRel):
            base = self.pos_info(rel.right)
            assert base is not None
            left_levels = tuple(
                list(base.access.vars).index(IndexVar(c)) for c in self.constituents(rel.left)
            )
            return PosInfo(base.access, base.level, tuple(sorted(left_levels)) + base.covered)
        raise SchedulingError(f"cannot determine the position placement of {name!r}")

    def static_extent(self, name: str) -> int | None:
        """Compile-time extent, when the provenance alone pins it down."""
        rel = self.producing(name)
        if isinstance(rel, SplitRel) and name == rel.inner:
            return rel.inner_size
        if isinstance(rel, DivideRel) and name == rel.outer:
            return rel.outer_size
        if isinstance(rel, BoundRel):
            return rel.bound
        return None

    def segment_extent_support(self, name: str) -> set[str]:
        """Original variables that the loop extent of derived variable `name`
        depends on (the uncovered upper levels of a partial position cut)."""
        rel = self.producing(name)
        if rel is None:
            return set()
        if isinstance(rel, (PosRel, FuseRel)):
            info = self.pos_info(name)
            if info is None:
                return set()  # coordinate fuse: extent is a product of dims
            upper = range(0, info.first_covered)
            return {info.access.vars[k].name for k in upper}
        if isinstance(rel, SplitRel):
            return self.segment_extent_support(rel.parent) if name == rel.outer else set()
        if isinstance(rel, DivideRel):
            return self.segment_extent_support(rel.parent) if name == rel.inner else set()
        if isinstance(rel, (BoundRel, CoordRel)):
            return set()
        return set()

    def extent_coord_support(self, name: str) -> set[str]:
        return self.segment_extent_support(name)


@dataclass(frozen=True)
class VarTags:
    parallel_unit: ParallelUnit | None = None
    race: RaceStrategy | None = None
    unroll: int | None = None


@dataclass(frozen=True)
class PrecomputeRec:
    expr: IndexExpr
    var: str
    pre_var: str
    workspace: str


@dataclass(frozen=True)
class ScheduledStmt:
    """An assignment plus its iteration graph, provenance, and lowering tags."""

    assignment: Assignment
    formats: dict[str, tuple[LevelFormat, ...]]
    graph: IterationGraph
    provenance: ProvenanceGraph
    tags: dict[str, VarTags] = field(default_factory=dict)
    precomputes: tuple[PrecomputeRec, ...] = ()

    # -- fluent API -------------------------------------------------------
    def split(self, i, i1, i2, size: int) -> ScheduledStmt:
        return split(self, i, i1, i2, size)

    def divide(self, i, i1, i2, size: int) -> ScheduledStmt:
        return divide(self, i, i1, i2, size)

    def fuse(self, i, j, f) -> ScheduledStmt:
        return fuse(self, i, j, f)

    def reorder(self, ordered) -> ScheduledStmt:
        return reorder(self, ordered)

    def pos(self, i, p, access) -> ScheduledStmt:
        return pos(self, i, p, access)

    def coord(self, p, i) -> ScheduledStmt:
        return coord(self, p, i)

    def parallelize(self, i, unit, race) -> ScheduledStmt:
        return parallelize(self, i, unit, race)

    def unroll(self, i, factor: int) -> ScheduledStmt:
        return unroll(self, i, factor)

    def bound(self, i, bounded, bnd: int, btype=BoundType.MAX_EXACT) -> ScheduledStmt:
        return bound(self, i, bounded, bnd, btype)

    def precompute(self, expr, i, i_pre, workspace: str) -> ScheduledStmt:
        return precompute(self, expr, i, i_pre, workspace)

    # -- helpers ----------------------------------------------------------
    @property
    def forest(self) -> tuple[IndexVar, ...]:
        return self.graph.order

    def forest_names(self) -> list[str]:
        return [v.name for v in self.graph.order]

    def var(self, name) -> IndexVar:
        name = name.name if isinstance(name, IndexVar) else name
        for v in self.graph.order:
            if v.name == name:
                return v
        raise SchedulingError(f"variable {name!r} is not in the current iteration order")

    def tags_for(self, name: str) -> VarTags:
        return self.tags.get(name, VarTags())


def concretize(
    assignment: Assignment,
    formats: dict[str, "tuple[LevelFormat, ...] | str"],
    order: "list[IndexVar | str] | None" = None,
) -> ScheduledStmt:
    """Build the initial scheduled statement for an assignment.

    The iteration order defaults to the output variables followed by the
    reduction variables in first-appearance order.
    """
    fmts: dict[str, tuple[LevelFormat, ...]] = {}
    for name, f in formats.items():
        fmts[name] = parse_format(f) if isinstance(f, str) else tuple(f)
    for acc in assignment.input_accesses():
        if acc.tensor not in fmts:
            raise SchedulingError(f"no format bound for tensor {acc.tensor!r}")
        if len(fmts[acc.tensor]) != len(acc.vars):
            raise SchedulingError(
                f"format for {acc.tensor!r} has {len(fmts[acc.tensor])} levels, "
                f"access {acc!r} has {len(acc.vars)}"
            )
    default = assignment.all_vars
    if order is None:
        ordered = default
    else:
        byname = {v.name: v for v in default}
        try:
            ordered = tuple(byname[o.name if isinstance(o, IndexVar) else o] for o in order)
        except KeyError as exc:
            raise SchedulingError(f"unknown variable {exc.args[0]!r} in iteration order") from None
        if len(ordered) != len(default) or set(ordered) != set(default):
            raise SchedulingError("iteration order must be a permutation of all variables")
    graph = build_graph(assignment, ordered)
    prov = ProvenanceGraph(nodes=tuple(ordered))
    stmt = ScheduledStmt(assignment=assignment, formats=fmts, graph=graph, provenance=prov)
    validate_graph(stmt)
    return stmt


def _name(x) -> str:
    return x.name if isinstance(x, IndexVar) else str(x)


def _replace_run(stmt: ScheduledStmt, at: int, drop: int, new_vars: tuple[IndexVar, ...]) -> tuple[IndexVar, ...]:
    order = stmt.graph.order
    return order[:at] + new_vars + order[at + drop:]


def _rebuilt(stmt: ScheduledStmt, order, prov, tags=None, precomputes=None) -> ScheduledStmt:
    new = replace(
        stmt,
        graph=stmt.graph.reordered(tuple(order)),
        provenance=prov,
        tags=dict(stmt.tags) if tags is None else tags,
        precomputes=stmt.precomputes if precomputes is None else precomputes,
    )
    try:
        validate_graph(new)
    except GraphError as exc:
        raise SchedulingError(str(exc)) from None
    return new


def _check_untagged(stmt: ScheduledStmt, name: str, what: str) -> None:
    tags = stmt.tags_for(name)
    if tags.parallel_unit or tags.unroll:
        raise SchedulingError(f"cannot {what} {name!r}: it carries tags")
    for rec in stmt.precomputes:
        if name in (rec.var, rec.pre_var):
            raise SchedulingError(f"cannot {what} {name!r}: a precompute references it")


def _check_transformable(stmt: ScheduledStmt, name: str, what: str) -> None:
    _check_untagged(stmt, name, what)
    var = stmt.var(name)
    if not var.derived and stmt.graph.merge_kind(name) is MergeKind.UNION:
        raise SchedulingError(
            f"cannot {what} {name!r}: it co-iterates a union of sparse operands"
        )


def split(stmt: ScheduledStmt, i, i1, i2, size: int) -> ScheduledStmt:
    """Strip-mine `i` into outer `i1` and inner `i2` of constant extent `size`."""
    if size < 1:
        raise SchedulingError(f"split size must be >= 1, got {size}")
    i, i1, i2 = _name(i), _name(i1), _name(i2)
    var = stmt.var(i)
    _check_transformable(stmt, i, "split")
    at = stmt.graph.index_of(i)
    outer = IndexVar(i1, var.space, derived=True)
    inner = IndexVar(i2, var.space, derived=True)
    prov = stmt.provenance.extended(SplitRel(i, i1, i2, int(size)), (outer, inner))
    return _rebuilt(stmt, _replace_run(stmt, at, 1, (outer, inner)), prov)


def divide(stmt: ScheduledStmt, i, i1, i2, size: int) -> ScheduledStmt:
    """Split `i` into a constant number `size` of contiguous chunks.

    Unlike split+reorder, the chunks are contiguous: i = i1*ceil(N/size) + i2.
    """
    if size < 1:
        raise SchedulingError(f"divide size must be >= 1, got {size}")
    i, i1, i2 = _name(i), _name(i1), _name(i2)
    var = stmt.var(i)
    _check_transformable(stmt, i, "divide")
    at = stmt.graph.index_of(i)
    outer = IndexVar(i1, var.space, derived=True)
    inner = IndexVar(i2, var.space, derived=True)
    prov = stmt.provenance.extended(DivideRel(i, i1, i2, int(size)), (outer, inner))
    return _rebuilt(stmt, _replace_run(stmt, at, 1, (outer, inner)), prov)


def fuse(stmt: ScheduledStmt, i, j, f) -> ScheduledStmt:
    """Collapse directly nested `i` and `j` into one variable `f` iterating
    their product; iteration order is unchanged."""
    i, j, f = _name(i), _name(j), _name(f)
    vi, vj = stmt.var(i), stmt.var(j)
    at = stmt.graph.index_of(i)
    if stmt.graph.index_of(j) != at + 1:
        raise SchedulingError(f"fuse requires {j!r} to be the sole child of {i!r}")
    _check_transformable(stmt, i, "fuse")
    _check_transformable(stmt, j, "fuse")
    if vi.space is Space.POSITION:
        raise SchedulingError("fuse with a position-space outer variable is not supported")
    if vj.space is Space.POSITION:
        # Narrow case: extending a position cut upward.  The outer variable
        # must cover exactly the levels above the cut's segment.
        info = stmt.provenance.pos_info(j)
        rel = stmt.provenance.producing(j)
        if not isinstance(rel, PosRel):
            raise SchedulingError(
                f"cannot fuse {j!r}: only a direct pos-produced variable can be extended"
            )
        consts = stmt.provenance.constituents(i)
        upper = [info.access.vars[k].name for k in range(info.first_covered)]
        if consts != upper:
            raise SchedulingError(
                f"cannot fuse {i!r} with position variable {j!r}: {i!r} does not "
                f"cover the access levels above the cut"
            )
        fused = IndexVar(f, Space.POSITION, derived=True)
    else:
        fused = IndexVar(f, Space.COORDINATE, derived=True)
    prov = stmt.provenance.extended(FuseRel(i, j, f), (fused,))
    return _rebuilt(stmt, _replace_run(stmt, at, 2, (fused,)), prov)


def reorder(stmt: ScheduledStmt, ordered) -> ScheduledStmt:
    """Permute a contiguously nested run of variables into the given order."""
    names = [_name(v) for v in ordered]
    if len(set(names)) != len(names):
        raise SchedulingError("reorder arguments repeat a variable")
    forest = stmt.forest_names()
    try:
        positions = sorted(forest.index(n) for n in names)
    except ValueError:
        missing = [n for n in names if n not in forest]
        raise SchedulingError(f"variable(s) {missing} are not in the iteration order") from None
    lo, hi = positions[0], positions[-1]
    if positions != list(range(lo, hi + 1)):
        raise SchedulingError(f"reorder requires directly nested variables, got {names}")
    # Conservative reduction check: an Add-merge variable may not move above a
    # reduction variable it currently sits below.
    reduction = {v.name for v in stmt.assignment.reduction_vars}
    union_vars = [
        v.name
        for v in stmt.graph.order
        if not v.derived and stmt.graph.merge_kind(v.name) is MergeKind.UNION
    ]
    new_order = forest[:lo] + names + forest[hi + 1:]
    for uv in union_vars:
        for red in reduction:
            if red in forest and forest.index(red) < forest.index(uv):
                if new_order.index(uv) < new_order.index(red):
                    raise SchedulingError(
                        f"cannot move union variable {uv!r} above reduction variable {red!r}"
                    )
    byname = {v.name: v for v in stmt.graph.order}
    return _rebuilt(stmt, tuple(byname[n] for n in new_order), stmt.provenance)


def pos(stmt: ScheduledStmt, i, p, access) -> ScheduledStmt:
    """Replace coordinate variable `i` by `p` iterating one input's positions.

    The cut happens at the level of `access` where `i` (or, for a fused
    variable, its deepest constituent) appears.  A Dense level yields the
    identity mapping between positions and coordinates.
    """
    i, p = _name(i), _name(p)
    var = stmt.var(i)
    if var.space is not Space.COORDINATE:
        raise SchedulingError(f"pos requires a coordinate-space variable, {i!r} is not")
    _check_untagged(stmt, i, "pos")
    acc = _resolve_access(stmt, access)
    consts = stmt.provenance.constituents(i)
    acc_names = [v.name for v in acc.vars]
    for c in consts:
        if c not in acc_names:
            raise SchedulingError(f"variable {c!r} does not index tensor {acc.tensor!r}")
        if stmt.graph.merge_kind(c) is MergeKind.UNION:
            raise SchedulingError(
                f"pos over a union merge is not defined (variable {c!r})"
            )
    levels = sorted(acc_names.index(c) for c in consts)
    if levels != list(range(levels[0], levels[-1] + 1)):
        raise SchedulingError(f"{i!r} covers non-contiguous levels {levels} of {acc.tensor!r}")
    deepest = levels[-1]
    at = stmt.graph.index_of(i)
    pvar = IndexVar(p, Space.POSITION, derived=True)
    rel = PosRel(source=i, pos_var=p, access=acc, level=deepest, covered=tuple(levels))
    prov = stmt.provenance.extended(rel, (pvar,))
    return _rebuilt(stmt, _replace_run(stmt, at, 1, (pvar,)), prov)


def coord(stmt: ScheduledStmt, p, i) -> ScheduledStmt:
    """Replace position variable `p` by a coordinate-space variable `i`.

    Lowering then iterates the coordinate range and locates positions by
    binary search.
    """
    p, i = _name(p), _name(i)
    var = stmt.var(p)
    if var.space is not Space.POSITION:
        raise SchedulingError(f"coord requires a position-space variable, {p!r} is not")
    _check_untagged(stmt, p, "coord")
    rel = stmt.provenance.producing(p)
    if not isinstance(rel, PosRel):
        raise SchedulingError(
            f"coord applies only to variables produced directly by pos, not {p!r}"
        )
    at = stmt.graph.index_of(p)
    cvar = IndexVar(i, Space.COORDINATE, derived=True)
    prov = stmt.provenance.extended(CoordRel(source=p, coord_var=i), (cvar,))
    return _rebuilt(stmt, _replace_run(stmt, at, 1, (cvar,)), prov)


def parallelize(stmt: ScheduledStmt, i, unit, race) -> ScheduledStmt:
    """Tag `i` for parallel execution with the given output race strategy.

    Reductions here are sums, hence associative (and commutative, as Atomics
    additionally requires).  NoRaces runs a structural race analysis and
    refuses schedules where two iterations of `i` could write one output
    location.
    """
    i = _name(i)
    unit = ParallelUnit(unit) if not isinstance(unit, ParallelUnit) else unit
    race = RaceStrategy(race) if not isinstance(race, RaceStrategy) else race
    var = stmt.var(i)
    tags = stmt.tags_for(i)
    if tags.parallel_unit is not None:
        raise SchedulingError(f"{i!r} already carries a parallel tag")
    if not var.derived and stmt.graph.merge_kind(i) in (MergeKind.UNION,):
        raise SchedulingError(f"cannot parallelize co-iterated union variable {i!r}")
    if race is RaceStrategy.NO_RACES and not _writes_disjoint(stmt, i):
        raise RaceError(
            f"NoRaces parallelization of {i!r} races on the output: two of its "
            f"iterations can reduce into one output location"
        )
    new_tags = dict(stmt.tags)
    new_tags[i] = replace(tags, parallel_unit=unit, race=race)
    return replace(stmt, tags=new_tags)


def _writes_disjoint(stmt: ScheduledStmt, name: str) -> bool:
    """True when distinct iterations of `name` write disjoint output entries.

    Starting from the output variables, repeatedly rewrite the determining
    set through relations that are bijective on visited points (split/divide
    pairs, fuse, full position cuts, coord, bound).  The output location is
    injective in the resulting set, so a parallel variable inside it cannot
    race; anything else (notably partial position recovery by search) can.
    """
    det = {v.name for v in stmt.assignment.lhs.vars}
    prov = stmt.provenance
    changed = True
    while changed:
        changed = False
        for rel in prov.rels:
            if isinstance(rel, (SplitRel, DivideRel)) and rel.parent in det:
                det -= {rel.parent}
                det |= {rel.outer, rel.inner}
                changed = True
            elif isinstance(rel, FuseRel) and rel.left in det and rel.right in det:
                det -= {rel.left, rel.right}
                det |= {rel.fused}
                changed = True
            elif isinstance(rel, PosRel):
                consts = prov.constituents(rel.source)
                if set(consts) <= det and rel.pos_var not in det:
                    det -= set(consts)
                    det |= {rel.pos_var}
                    changed = True
            elif isinstance(rel, CoordRel) and rel.source in det:
                det -= {rel.source}
                det |= {rel.coord_var}
                changed = True
            elif isinstance(rel, BoundRel) and rel.source in det:
                det -= {rel.source}
                det |= {rel.bounded}
                changed = True
    return name in det


def unroll(stmt: ScheduledStmt, i, factor: int) -> ScheduledStmt:
    """Tag `i` to be emitted as an unrolled loop with `factor` body copies."""
    i = _name(i)
    if factor < 1:
        raise SchedulingError(f"unroll factor must be >= 1, got {factor}")
    target = i
    for rec in stmt.precomputes:
        if i == rec.pre_var:
            target = rec.var  # producer mirrors the consumer's domain
    if target not in stmt.forest_names():
        raise SchedulingError(f"variable {i!r} is not in the iteration order")
    if stmt.provenance.static_extent(target) is None:
        raise SchedulingError(
            f"cannot unroll {i!r}: its extent is not a compile-time constant"
        )
    new_tags = dict(stmt.tags)
    new_tags[i] = replace(stmt.tags_for(i), unroll=int(factor))
    return replace(stmt, tags=new_tags)


def bound(stmt: ScheduledStmt, i, bounded, bnd: int, btype=BoundType.MAX_EXACT) -> ScheduledStmt:
    """Fix the range of `i` to the compile-time constant `bnd`.

    MaxExact asserts at execution time that the actual extent equals `bnd`.
    """
    i, bounded = _name(i), _name(bounded)
    btype = BoundType(btype) if not isinstance(btype, BoundType) else btype
    if bnd < 0:
        raise SchedulingError(f"bound must be nonnegative, got {bnd}")
    var = stmt.var(i)
    _check_transformable(stmt, i, "bound")
    at = stmt.graph.index_of(i)
    bvar = IndexVar(bounded, var.space, derived=True)
    prov = stmt.provenance.extended(BoundRel(i, bounded, int(bnd), btype), (bvar,))
    return _rebuilt(stmt, _replace_run(stmt, at, 1, (bvar,)), prov)


def precompute(stmt: ScheduledStmt, expr, i, i_pre, workspace: str) -> ScheduledStmt:
    """Compute `expr` into a workspace over `i_pre` before the loop over `i`
    consumes it in place of the expression."""
    i, i_pre = _name(i), _name(i_pre)
    if isinstance(expr, str):
        if expr not in stmt.assignment.labels:
            raise SchedulingError(f"no labeled sub-expression named {expr!r}")
        expr = stmt.assignment.labels[expr]
    if not isinstance(expr, IndexExpr):
        raise SchedulingError(f"precompute target {expr!r} is not an index expression")
    if not contains_subexpr(stmt.assignment.rhs, expr):
        raise SchedulingError("precompute expression does not occur in the right-hand side")
    stmt.var(i)
    if stmt.provenance.has(i_pre):
        raise SchedulingError(f"index variable name {i_pre!r} is already in use")
    if workspace in stmt.formats or any(r.workspace == workspace for r in stmt.precomputes):
        raise SchedulingError(f"workspace name {workspace!r} is already in use")
    for rec in stmt.precomputes:
        if rec.var == i:
            raise SchedulingError(f"{i!r} already has a precompute")
    rec = PrecomputeRec(expr=expr, var=i, pre_var=i_pre, workspace=workspace)
    return replace(stmt, precomputes=stmt.precomputes + (rec,))


def _resolve_access(stmt: ScheduledStmt, access) -> Access:
    if isinstance(access, Access):
        for acc in stmt.assignment.input_accesses():
            if acc == access:
                return acc
        raise SchedulingError(f"access {access!r} does not occur in the statement")
    name = str(access)
    matches = [acc for acc in stmt.assignment.input_accesses() if acc.tensor == name]
    if not matches:
        raise SchedulingError(f"tensor {name!r} does not occur in the statement")
    if len({m for m in matches}) > 1:
        raise SchedulingError(f"tensor {name!r} occurs in several accesses; spell one out")
    return matches[0]


# -- schedule files --------------------------------------------------------

_DIRECTIVE_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def _split_args(argtext: str) -> list[str]:
    args, depth, cur = [], 0, []
    for ch in argtext:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            args.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    last = "".join(cur).strip()
    if last:
        args.append(last)
    return args


def parse_access_text(text: str) -> "Access | str":
    m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\s*\(([^)]*)\)", text.strip())
    if m is None:
        return text.strip()
    vars_ = tuple(IndexVar(v.strip()) for v in m.group(2).split(","))
    return Access(m.group(1), vars_)


def apply_schedule(stmt: ScheduledStmt, text: str) -> ScheduledStmt:
    """Apply a schedule written one directive per line ('#' starts a comment)."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DIRECTIVE_RE.match(line)
        if m is None:
            raise SchedulingError(f"schedule line {lineno}: cannot parse {raw!r}")
        op, args = m.group(1), _split_args(m.group(2))
        try:
            stmt = _apply_directive(stmt, op, args)
        except SchedulingError as exc:
            raise SchedulingError(f"schedule line {lineno}: {exc}") from None
    return stmt


def _apply_directive(stmt: ScheduledStmt, op: str, args: list[str]) -> ScheduledStmt:
    def want(n: int) -> None:
        if len(args) != n:
            raise SchedulingError(f"{op} takes {n} arguments, got {len(args)}")

    if op == "split":
        want(4)
        return split(stmt, args[0], args[1], args[2], int(args[3]))
    if op == "divide":
        want(4)
        return divide(stmt, args[0], args[1], args[2], int(args[3]))
    if op == "fuse":
        want(3)
        return fuse(stmt, args[0], args[1], args[2])
    if op == "reorder":
        return reorder(stmt, args)
    if op == "pos":
        want(3)
        return pos(stmt, args[0], args[1], parse_access_text(args[2]))
    if op == "coord":
        want(2)
        return coord(stmt, args[0], args[1])
    if op == "parallelize":
        want(3)
        try:
            unit, race = ParallelUnit(args[1]), RaceStrategy(args[2])
        except ValueError as exc:
            raise SchedulingError(str(exc)) from None
        return parallelize(stmt, args[0], unit, race)
    if op == "unroll":
        want(2)
        return unroll(stmt, args[0], int(args[1]))
    if op == "bound":
        want(4)
        try:
            btype = BoundType(args[3])
        except ValueError:
            raise SchedulingError(f"unknown bound type {args[3]!r}") from None
        return bound(stmt, args[0], args[1], int(args[2]), btype)
    if op == "precompute":
        want(4)
        return precompute(stmt, args[0], args[1], args[2], args[3])
    raise SchedulingError(f"unknown schedule directive {op!r}")
