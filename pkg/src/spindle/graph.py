"""Iteration graphs: the ordered tree of index variables a statement iterates,
the per-tensor paths through it, and merge lattices for co-iteration.

For a single assignment the variable tree is a chain, ordered outer to inner.
Each access contributes a path visiting the variables that index it, one per
storage level; multiplication joins incoming paths with an intersection,
addition with a union.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import GraphError, UnsupportedMergeError
from .notation import Access, Add, Assignment, IndexExpr, IndexVar, Mul, Scalar
from .tensors import LevelFormat


class MergeKind(enum.Enum):
    SINGLE = "single"
    INTERSECTION = "intersection"
    UNION = "union"


@dataclass(frozen=True)
class TensorPath:
    """One access's walk through the variable chain: (variable, level) steps."""

    access: Access
    steps: tuple[tuple[IndexVar, int], ...]


@dataclass(frozen=True)
class IterationGraph:
    order: tuple[IndexVar, ...]
    paths: tuple[TensorPath, ...]
    merge: tuple[tuple[str, MergeKind], ...]  # per original variable name

    def merge_kind(self, name: str) -> MergeKind:
        for n, kind in self.merge:
            if n == name:
                return kind
        raise GraphError(f"variable {name!r} is not an original variable of this graph")

    def var(self, name: str) -> IndexVar:
        for v in self.order:
            if v.name == name:
                return v
        raise GraphError(f"variable {name!r} is not in the iteration order")

    def index_of(self, name: str) -> int:
        for k, v in enumerate(self.order):
            if v.name == name:
                return k
        raise GraphError(f"variable {name!r} is not in the iteration order")

    def reordered(self, order: tuple[IndexVar, ...]) -> IterationGraph:
        return IterationGraph(order=order, paths=self.paths, merge=self.merge)


def build_graph(assignment: Assignment, order: tuple[IndexVar, ...]) -> IterationGraph:
    """Thread each access's path through `order` and annotate merges."""
    names = [v.name for v in order]
    want = sorted(v.name for v in assignment.all_vars)
    if sorted(names) != want:
        raise GraphError(f"order {names} is not a permutation of the statement variables {want}")
    paths = []
    for acc in [assignment.lhs] + assignment.input_accesses():
        steps = tuple((v, lvl) for lvl, v in enumerate(acc.vars))
        steps = tuple(sorted(steps, key=lambda s: names.index(s[0].name)))
        paths.append(TensorPath(access=acc, steps=steps))
    merge = tuple((v.name, _merge_kind(assignment.rhs, v)) for v in order)
    return IterationGraph(order=tuple(order), paths=tuple(paths), merge=merge)


def _merge_kind(expr: IndexExpr, var: IndexVar) -> MergeKind:
    uses = [acc for acc in _expr_accesses(expr) if var in acc.vars]
    if len(uses) <= 1:
        return MergeKind.SINGLE
    return MergeKind.UNION if _added_anywhere(expr, var) else MergeKind.INTERSECTION


def _expr_accesses(expr: IndexExpr) -> list[Access]:
    if isinstance(expr, Access):
        return [expr]
    if isinstance(expr, (Mul, Add)):
        return _expr_accesses(expr.lhs) + _expr_accesses(expr.rhs)
    return []


def _added_anywhere(expr: IndexExpr, var: IndexVar) -> bool:
    if isinstance(expr, Add):
        left = any(var in a.vars for a in _expr_accesses(expr.lhs))
        right = any(var in a.vars for a in _expr_accesses(expr.rhs))
        if left and right:
            return True
    if isinstance(expr, (Mul, Add)):
        return _added_anywhere(expr.lhs, var) or _added_anywhere(expr.rhs, var)
    return False


@dataclass(frozen=True)
class LatticePoint:
    """Sparse iterators that must sit on one coordinate, and what to compute there."""

    iterators: tuple[Access, ...]
    expr: IndexExpr


@dataclass(frozen=True)
class MergeLattice:
    points: tuple[LatticePoint, ...]
    dense_accesses: tuple[Access, ...]  # located, never co-iterated

    @property
    def top(self) -> LatticePoint:
        return self.points[0]

    def needs_dense_loop(self) -> bool:
        return any(not p.iterators for p in self.points)


def build_lattice(
    expr: IndexExpr, var: IndexVar, formats: dict[str, tuple[LevelFormat, ...]]
) -> MergeLattice:
    """Enumerate the iterator subsets that co-iteration over `var` must cover.

    Multiplication takes the pairwise meet of its operand lattices; addition
    additionally keeps each operand's own points so tails are covered once one
    side runs out.  Dense operands are located by computed coordinate and do
    not appear in lattice points.
    """
    dense: list[Access] = []

    def sparse_iterator(acc: Access) -> Access | None:
        if var not in acc.vars:
            return None
        lvl = list(acc.vars).index(var)
        if acc.tensor not in formats:
            raise GraphError(f"no format bound for tensor {acc.tensor!r}")
        if formats[acc.tensor][lvl].is_dense:
            if acc not in dense:
                dense.append(acc)
            return None
        return acc

    def build(e: IndexExpr) -> list[tuple[tuple[Access, ...], IndexExpr]]:
        if isinstance(e, (Scalar, Access)):
            if isinstance(e, Access):
                it = sparse_iterator(e)
                if it is not None:
                    return [((it,), e)]
            return [((), e)]
        if isinstance(e, Mul):
            left, right = build(e.lhs), build(e.rhs)
            return [(_join(pl, pr), Mul(el, er)) for pl, el in left for pr, er in right]
        if isinstance(e, Add):
            left, right = build(e.lhs), build(e.rhs)
            both = [(_join(pl, pr), Add(el, er)) for pl, el in left for pr, er in right]
            return both + left + right
        raise GraphError(f"cannot build a merge lattice over {e!r}")

    raw = build(expr)
    points: list[LatticePoint] = []
    seen: set[tuple[Access, ...]] = set()
    for its, sub in raw:
        if its in seen:
            continue
        seen.add(its)
        points.append(LatticePoint(iterators=its, expr=sub))
    points.sort(key=lambda p: -len(p.iterators))
    if points and len(points[0].iterators) > 3:
        raise UnsupportedMergeError(
            f"merging {len(points[0].iterators)} sparse operands at {var.name!r} is not supported (limit 3)"
        )
    return MergeLattice(points=tuple(points), dense_accesses=tuple(dense))


def _join(a: tuple[Access, ...], b: tuple[Access, ...]) -> tuple[Access, ...]:
    out = list(a)
    for acc in b:
        if acc not in out:
            out.append(acc)
    return tuple(sorted(out, key=lambda acc: (acc.tensor, tuple(v.name for v in acc.vars))))


def merge_lattice(stmt, name: str) -> MergeLattice:
    """Merge lattice for an original coordinate-space variable of `stmt`."""
    var = None
    for v in stmt.assignment.all_vars:
        if v.name == name:
            var = v
    if var is None:
        raise GraphError(f"{name!r} is not an original variable of the statement")
    return build_lattice(stmt.assignment.rhs, var, stmt.formats)


def validate_graph(stmt) -> None:
    """Check that `stmt` can be lowered: provenance leaves match the iteration
    order, compressed levels are visited in hierarchy order, and every loop's
    extent only depends on variables resolved further out.

    Raises GraphError; the discordant-traversal message names the tensor and
    level that would be iterated out of order.
    """
    forest = [v.name for v in stmt.graph.order]
    leaves = sorted(stmt.provenance.leaf_names())
    if sorted(forest) != leaves:
        raise GraphError(
            f"iteration order {sorted(forest)} does not match the provenance leaves {leaves}"
        )

    def resolution_depth(var: IndexVar) -> int:
        support = stmt.provenance.forest_support(var.name, set(forest))
        if not support:
            raise GraphError(f"variable {var.name!r} is not recoverable from the iteration order")
        return max(forest.index(n) for n in support)

    # Compressed levels must be reached below the level above them.
    for path in stmt.graph.paths:
        acc = path.access
        fmts = stmt.formats.get(acc.tensor)
        if fmts is None:
            continue  # the dense output has no stored hierarchy
        prev_depth = -1
        for lvl, v in enumerate(acc.vars):
            depth = resolution_depth(v)
            if not fmts[lvl].is_dense and depth < prev_depth:
                raise GraphError(
                    f"discordant traversal: tensor {acc.tensor!r} level {lvl} "
                    f"(variable {v.name!r}) would be iterated above its parent level"
                )
            prev_depth = max(prev_depth, depth)

    # Loop extents must be computable on entry: every variable a loop's bounds
    # depend on has to resolve strictly further out.
    for idx, name in enumerate(forest):
        support = stmt.provenance.extent_coord_support(name)
        for orig in sorted(support):
            var = stmt.provenance.find(orig)
            depth = resolution_depth(var)
            if depth >= idx:
                raise GraphError(
                    f"loop bounds of {name!r} depend on {orig!r}, which is not "
                    f"resolved until position {depth} (loop is at {idx})"
                )


def graph_to_dot(stmt) -> str:
    """Render the iteration order and tensor paths as DOT text."""
    lines = ["digraph iteration {", "  rankdir=TB;"]
    for v in stmt.graph.order:
        tag = "position" if v.space.value == "position" else "coordinate"
        shape = "ellipse" if not v.derived else "box"
        lines.append(f'  "{v.name}" [label="{v.name}\\n{tag}", shape={shape}];')
    order = stmt.graph.order
    for a, b in zip(order, order[1:]):
        lines.append(f'  "{a.name}" -> "{b.name}";')
    for path in stmt.graph.paths:
        prev = None
        for v, lvl in path.steps:
            node = f"{path.access.tensor}_{lvl}"
            lines.append(
                f'  "{node}" [label="{path.access.tensor} lvl {lvl}", shape=plaintext];'
            )
            lines.append(f'  "{node}" -> "{v.name}" [style=dashed];')
            prev = node
    lines.append("}")
    return "\n".join(lines) + "\n"
