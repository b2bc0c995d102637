"""Reading and writing sparse tensors as text files.

Two formats are supported:

* Matrix Market, header ``%%MatrixMarket matrix coordinate real general``,
  ``%`` comment lines, a ``rows cols nnz`` size line, then 1-based
  ``i j value`` entry lines.
* FROSTT ``.tns``: optional ``#`` comment lines, each data line
  ``i1 ... ik value`` (1-based).  Dimensions are inferred as per-dimension
  coordinate maxima unless a ``# dims: d1 ... dk`` comment overrides them.

Duplicate coordinates are legal in both formats and are summed when packing.
"""

from __future__ import annotations

import enum
from pathlib import Path

from .errors import EntryBoundsError, EntryValueError, HeaderError, TensorFileError
from .tensors import CooTensor


class FileFormat(enum.Enum):
    MATRIX_MARKET = "matrix-market"
    FROSTT = "frostt"


_MM_HEADER = "%%matrixmarket matrix coordinate real general"


def parse_coo(text: str, fmt: FileFormat) -> CooTensor:
    if fmt is FileFormat.MATRIX_MARKET:
        return _parse_matrix_market(text)
    return _parse_frostt(text)


def read_tensor_file(path: str | Path) -> CooTensor:
    """Read a tensor file, picking the format from the extension."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".mtx":
        return _parse_matrix_market(text)
    if path.suffix == ".tns":
        return _parse_frostt(text)
    # Fall back on sniffing the header.
    if text.lstrip().lower().startswith("%%matrixmarket"):
        return _parse_matrix_market(text)
    return _parse_frostt(text)


def _float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise EntryValueError(f"non-numeric value {token!r}", lineno) from None


def _int(token: str, lineno: int, what: str = "coordinate") -> int:
    try:
        return int(token)
    except ValueError:
        raise EntryValueError(f"non-numeric {what} {token!r}", lineno) from None


def _parse_matrix_market(text: str) -> CooTensor:
    lines = text.splitlines()
    if not lines:
        raise HeaderError("empty file", 1)
    header = lines[0].strip().lower()
    if header != _MM_HEADER:
        raise HeaderError(
            "expected '%%MatrixMarket matrix coordinate real general' header", 1
        )
    lineno = 1
    size_line = None
    body_start = len(lines)
    for idx in range(1, len(lines)):
        lineno = idx + 1
        stripped = lines[idx].strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = stripped
        body_start = idx + 1
        break
    if size_line is None:
        raise HeaderError("missing 'rows cols nnz' size line", lineno)
    parts = size_line.split()
    if len(parts) != 3:
        raise HeaderError("size line must be 'rows cols nnz'", lineno)
    rows, cols, nnz = (_int(p, lineno, "size") for p in parts)
    entries: list[tuple[tuple[int, ...], float]] = []
    seen = 0
    for idx in range(body_start, len(lines)):
        lineno = idx + 1
        stripped = lines[idx].strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise EntryValueError(f"expected 'i j value', found {stripped!r}", lineno)
        i = _int(parts[0], lineno)
        j = _int(parts[1], lineno)
        v = _float(parts[2], lineno)
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise EntryBoundsError(
                f"coordinate ({i}, {j}) outside declared {rows}x{cols}", lineno
            )
        entries.append(((i - 1, j - 1), v))
        seen += 1
    if seen != nnz:
        raise TensorFileError(f"size line declared {nnz} entries but file has {seen}", lineno)
    return CooTensor((rows, cols), entries).normalized()


def _parse_frostt(text: str) -> CooTensor:
    declared_dims: tuple[int, ...] | None = None
    raw: list[tuple[int, tuple[int, ...], float]] = []
    order: int | None = None
    for idx, line in enumerate(text.splitlines()):
        lineno = idx + 1
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.lower().startswith("dims:"):
                tokens = body[len("dims:"):].split()
                declared_dims = tuple(_int(t, lineno, "dimension") for t in tokens)
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise EntryValueError(f"expected 'i1 ... ik value', found {stripped!r}", lineno)
        if order is None:
            order = len(parts) - 1
        elif len(parts) - 1 != order:
            raise EntryValueError(
                f"entry has {len(parts) - 1} coordinates, expected {order}", lineno
            )
        coords = tuple(_int(t, lineno) for t in parts[:-1])
        value = _float(parts[-1], lineno)
        if any(c < 1 for c in coords):
            raise EntryBoundsError(f"coordinates are 1-based, found {coords}", lineno)
        raw.append((lineno, tuple(c - 1 for c in coords), value))
    if order is None:
        if declared_dims is None:
            raise HeaderError("empty tensor file with no '# dims:' line", 1)
        order = len(declared_dims)
    if declared_dims is not None:
        if len(declared_dims) != order:
            raise HeaderError(
                f"'# dims:' declares order {len(declared_dims)} but entries have order {order}", 1
            )
        dims = declared_dims
        for lineno, coords, _ in raw:
            if any(c >= d for c, d in zip(coords, dims)):
                raise EntryBoundsError(
                    f"coordinate {tuple(c + 1 for c in coords)} outside declared dims {dims}", lineno
                )
    else:
        dims = tuple(max(coords[k] for _, coords, _ in raw) + 1 for k in range(order)) if raw else ()
    return CooTensor(dims, [(coords, value) for _, coords, value in raw]).normalized()


def write_matrix_market(path: str | Path, coo: CooTensor) -> None:
    if coo.order != 2:
        raise TensorFileError("Matrix Market files hold matrices (order 2)", 1)
    norm = coo.normalized()
    lines = ["%%MatrixMarket matrix coordinate real general"]
    lines.append(f"{norm.dims[0]} {norm.dims[1]} {len(norm.entries)}")
    for (i, j), v in norm.entries:
        lines.append(f"{i + 1} {j + 1} {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_frostt(path: str | Path, coo: CooTensor) -> None:
    norm = coo.normalized()
    lines = ["# dims: " + " ".join(str(d) for d in norm.dims)]
    for coords, v in norm.entries:
        lines.append(" ".join(str(c + 1) for c in coords) + f" {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")
