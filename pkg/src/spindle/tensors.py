"""Tensor storage as per-dimension coordinate hierarchies.

Every tensor is described by one level per dimension, each level either Dense
(all slots materialized) or Compressed (pos/crd segment arrays holding only
nonempty children).  [Dense, Compressed] on a matrix is exactly CSR,
[Compressed, Compressed] is DCSR, and all-Compressed on higher orders is CSF.

Compressed levels are always ordered and duplicate-free: packing sorts
coordinates and sums duplicate entries, and the coordinate-tracking code in
the lowered kernels relies on that order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, TensorError
from .notation import Access, Add, Assignment, IndexExpr, Mul, Scalar, additive_terms, expr_vars, mul_factors


class LevelKind(enum.Enum):
    DENSE = "dense"
    COMPRESSED = "compressed"


@dataclass(frozen=True)
class LevelFormat:
    kind: LevelKind
    ordered: bool = True

    def __post_init__(self):
        if self.kind is LevelKind.COMPRESSED and not self.ordered:
            raise TensorError("compressed levels must be ordered")

    @property
    def is_dense(self) -> bool:
        return self.kind is LevelKind.DENSE

    def __repr__(self) -> str:
        return "d" if self.is_dense else "s"


DENSE = LevelFormat(LevelKind.DENSE)
COMPRESSED = LevelFormat(LevelKind.COMPRESSED)

_SHORTHAND = {"d": DENSE, "s": COMPRESSED}


def parse_format(shorthand: str) -> tuple[LevelFormat, ...]:
    """Parse per-dimension shorthand: 'd' dense, 's' compressed ('ds' = CSR)."""
    try:
        return tuple(_SHORTHAND[ch] for ch in shorthand)
    except KeyError as exc:
        raise TensorError(f"unknown level shorthand {exc.args[0]!r} in {shorthand!r}") from None


def format_shorthand(levels: tuple[LevelFormat, ...]) -> str:
    return "".join("d" if lv.is_dense else "s" for lv in levels)


@dataclass
class CooTensor:
    """Coordinate-list tensor: 0-based coordinate tuples with float64 values."""

    dims: tuple[int, ...]
    entries: list[tuple[tuple[int, ...], float]]

    @property
    def order(self) -> int:
        return len(self.dims)

    def validate(self) -> None:
        for coords, _ in self.entries:
            if len(coords) != self.order:
                raise TensorError(f"coordinate {coords} has wrong arity for order {self.order}")
            for c, n in zip(coords, self.dims):
                if not 0 <= c < n:
                    raise TensorError(f"coordinate {coords} out of bounds for dims {self.dims}")

    def normalized(self) -> CooTensor:
        """Entries sorted lexicographically with duplicate coordinates summed."""
        self.validate()
        merged: dict[tuple[int, ...], float] = {}
        for coords, value in self.entries:
            merged[coords] = merged.get(coords, 0.0) + float(value)
        entries = sorted(merged.items())
        return CooTensor(self.dims, [(c, v) for c, v in entries])


@dataclass
class DenseTensor:
    """Dense row-major result buffer used as the oracle output."""

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(self.dims)

    @property
    def vals(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.data.reshape(-1)

    @classmethod
    def zeros(cls, dims: tuple[int, ...]) -> DenseTensor:
        return cls(dims, np.zeros(dims, dtype=np.float64))


@dataclass
class Tensor:
    """A packed tensor: values plus per-level pos/crd arrays for compressed levels.

    Immutable after pack; safe to share.
    """

    dims: tuple[int, ...]
    levels: tuple[LevelFormat, ...]
    pos: dict[int, np.ndarray] = field(default_factory=dict)
    crd: dict[int, np.ndarray] = field(default_factory=dict)
    vals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def nnz(self) -> int:
        """Number of stored leaf positions (includes explicit zeros)."""
        return int(self.vals.shape[0])

    def level_sizes(self) -> list[int]:
        """Stored slot count per level, parents before children."""
        sizes = []
        count = 1
        for lvl, fmt in enumerate(self.levels):
            if fmt.is_dense:
                count = count * self.dims[lvl]
            else:
                count = len(self.crd[lvl])
            sizes.append(count)
        return sizes

    def check_invariants(self) -> None:
        count = 1
        for lvl, fmt in enumerate(self.levels):
            if fmt.is_dense:
                count = count * self.dims[lvl]
                continue
            pos, crd = self.pos[lvl], self.crd[lvl]
            if len(pos) != count + 1 or pos[0] != 0 or pos[-1] != len(crd):
                raise TensorError(f"level {lvl}: malformed pos array")
            if np.any(np.diff(pos) < 0):
                raise TensorError(f"level {lvl}: pos not nondecreasing")
            for p in range(count):
                seg = crd[pos[p]:pos[p + 1]]
                if len(seg) > 1 and np.any(np.diff(seg) <= 0):
                    raise TensorError(f"level {lvl}: segment {p} coordinates not strictly increasing")
            count = len(crd)
        if len(self.vals) != count:
            raise TensorError("vals length does not match leaf slot count")

    @classmethod
    def pack(cls, coo: CooTensor, levels: tuple[LevelFormat, ...] | list[LevelFormat]) -> Tensor:
        return pack(coo, tuple(levels))

    @classmethod
    def from_dense(cls, array: np.ndarray, levels: tuple[LevelFormat, ...] | str) -> Tensor:
        """Pack a dense ndarray, storing its nonzero entries."""
        if isinstance(levels, str):
            levels = parse_format(levels)
        array = np.asarray(array, dtype=np.float64)
        coords = np.argwhere(array != 0.0)
        entries = [(tuple(int(c) for c in row), float(array[tuple(row)])) for row in coords]
        coo = CooTensor(tuple(array.shape), entries)
        return pack(coo, tuple(levels))

    def to_dense(self) -> np.ndarray:
        if all(f.is_dense for f in self.levels):
            return self.vals.reshape(self.dims).copy()
        out = np.zeros(self.dims, dtype=np.float64)
        for coords, value in self.walk_stored():
            out[coords] = value
        return out

    def walk_stored(self):
        """Yield (coords, value) for every stored leaf slot, in storage order."""
        yield from self._walk(0, 0, ())

    def _walk(self, lvl: int, slot: int, prefix: tuple[int, ...]):
        if lvl == self.order:
            yield prefix, float(self.vals[slot])
            return
        fmt = self.levels[lvl]
        if fmt.is_dense:
            n = self.dims[lvl]
            for c in range(n):
                yield from self._walk(lvl + 1, slot * n + c, prefix + (c,))
        else:
            pos, crd = self.pos[lvl], self.crd[lvl]
            for p in range(int(pos[slot]), int(pos[slot + 1])):
                yield from self._walk(lvl + 1, p, prefix + (int(crd[p]),))

    def enumerate_nonzeros(self) -> list[tuple[tuple[int, ...], float]]:
        """Stored entries with nonzero values, sorted by coordinate."""
        return [(coords, value) for coords, value in self.walk_stored() if value != 0.0]


def pack(coo: CooTensor, levels: tuple[LevelFormat, ...]) -> Tensor:
    """Pack a coordinate list into a coordinate hierarchy.

    Entries are sorted lexicographically and duplicates summed first.  Dense
    levels materialize every slot under each stored parent; compressed levels
    store pos/crd for nonempty children only.
    """
    if len(levels) != coo.order:
        raise TensorError(f"{len(levels)} level formats for order-{coo.order} tensor")
    norm = coo.normalized()
    n = len(norm.entries)
    coords = np.array([c for c, _ in norm.entries], dtype=np.int64).reshape(n, coo.order)
    values = np.array([v for _, v in norm.entries], dtype=np.float64)

    tensor = Tensor(dims=tuple(coo.dims), levels=tuple(levels))
    parent = np.zeros(n, dtype=np.int64)  # stored slot at the previous level, per entry
    parent_count = 1
    for lvl, fmt in enumerate(levels):
        c = coords[:, lvl]
        if fmt.is_dense:
            slot = parent * coo.dims[lvl] + c
            parent_count = parent_count * coo.dims[lvl]
        else:
            if n:
                first = np.empty(n, dtype=bool)
                first[0] = True
                first[1:] = (parent[1:] != parent[:-1]) | (c[1:] != c[:-1])
                slot = np.cumsum(first) - 1
                crd = c[first]
                counts = np.zeros(parent_count + 1, dtype=np.int64)
                np.add.at(counts, parent[first] + 1, 1)
                pos = np.cumsum(counts)
            else:
                slot = parent
                crd = np.zeros(0, dtype=np.int64)
                pos = np.zeros(parent_count + 1, dtype=np.int64)
            tensor.pos[lvl] = pos.astype(np.int32)
            tensor.crd[lvl] = crd.astype(np.int32)
            parent_count = len(crd)
        parent = slot

    vals = np.zeros(parent_count, dtype=np.float64)
    if n:
        vals[parent] = values
    tensor.vals = vals
    tensor.check_invariants()
    return tensor


def _densify(named: str, t) -> np.ndarray:
    if isinstance(t, Tensor):
        return t.to_dense()
    if isinstance(t, DenseTensor):
        return t.data
    if isinstance(t, np.ndarray):
        return np.asarray(t, dtype=np.float64)
    raise TensorError(f"tensor {named!r} has unsupported type {type(t).__name__}")


def variable_extents(assignment: Assignment, inputs: dict[str, "Tensor | DenseTensor | np.ndarray"]) -> dict[str, int]:
    """Extent per index variable, checked consistent across all accesses."""
    extents: dict[str, int] = {}
    for acc in assignment.input_accesses():
        if acc.tensor not in inputs:
            raise TensorError(f"tensor {acc.tensor!r} is not bound")
        t = inputs[acc.tensor]
        dims = t.dims if hasattr(t, "dims") else tuple(t.shape)
        if len(dims) != len(acc.vars):
            raise DimensionMismatchError(
                f"access {acc!r} has {len(acc.vars)} variables but tensor has order {len(dims)}"
            )
        for v, d in zip(acc.vars, dims):
            if v.name in extents and extents[v.name] != d:
                raise DimensionMismatchError(
                    f"variable {v.name!r} used with extents {extents[v.name]} and {d}"
                )
            extents.setdefault(v.name, int(d))
    return extents


def output_dims(assignment: Assignment, inputs) -> tuple[int, ...]:
    extents = variable_extents(assignment, inputs)
    return tuple(extents[v.name] for v in assignment.lhs.vars)


_AXIS_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def dense_eval(assignment: Assignment, inputs: dict[str, "Tensor | DenseTensor | np.ndarray"]) -> DenseTensor:
    """Reference evaluation over the full dense coordinate space.

    Densifies every operand, evaluates each additive term by explicit
    broadcast-and-contract over all of the term's variables, and sum-reduces
    the variables absent from the output access.
    """
    extents = variable_extents(assignment, inputs)
    out_vars = [v.name for v in assignment.lhs.vars]
    axis = {}
    for v in out_vars:
        axis[v] = _AXIS_LETTERS[len(axis)]
    for v in expr_vars(assignment.rhs):
        if v.name not in axis:
            axis[v.name] = _AXIS_LETTERS[len(axis)]
    result = np.zeros(tuple(extents[v] for v in out_vars), dtype=np.float64)
    for term in additive_terms(assignment.rhs):
        scale = 1.0
        subs: list[str] = []
        arrays: list[np.ndarray] = []
        for factor in mul_factors(term):
            if isinstance(factor, Scalar):
                scale *= factor.value
            elif isinstance(factor, Access):
                subs.append("".join(axis[v.name] for v in factor.vars))
                arrays.append(_densify(factor.tensor, inputs[factor.tensor]))
            else:
                raise TensorError(f"cannot evaluate factor {factor!r}")
        spec = ",".join(subs) + "->" + "".join(axis[v] for v in out_vars)
        result += scale * np.einsum(spec, *arrays)
    return DenseTensor(tuple(result.shape), result)
