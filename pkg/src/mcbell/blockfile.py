"""Plain-text block-matrix format for Bell functionals.

A file is a header followed by named blocks::

    # Bell functional
    m 4
    o 4
    layout cg
    marginals A B
    [CA]
    ...
    [CB]
    ...
    [C]
    ...

``[CA]`` has one row per outcome and one column per setting.  ``[C]`` is
laid out in (x, y) sub-blocks: the entry for outcomes (a, b) sits at row
``x*k + a`` and column ``y*k + b`` where ``k`` is the number of outcomes
per block (o - 1 in the ``cg`` layout, o in ``full``).  ``|`` tokens and
lines made only of ``-`` and ``+`` are visual separators and are ignored.
A ``constant`` header line is written only when it is nonzero.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from mcbell.local import BellFunctional

LAYOUTS = ("cg", "full")


class BlockFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Collins-Gisin form


def cg_form(C: BellFunctional) -> BellFunctional:
    """Equivalent functional with no weight on the last outcome.

    Uses normalization and no-signaling, so both functionals agree on every
    no-signaling behavior.  Integer functionals stay integer.
    """
    k = C.o - 1
    J = C.joint
    A, B = C.marginal_a(), C.marginal_b()
    joint = np.zeros_like(J)
    joint[:k, :k] = J[:k, :k] - J[:k, k:] - J[k:, :k] + J[k:, k:]
    marg_a = np.zeros_like(A)
    marg_b = np.zeros_like(B)
    marg_a[:k] = (J[:k, k] - J[k, k][None]).sum(axis=2) + A[:k] - A[k]
    marg_b[:k] = (J[k, :k] - J[k, k][None]).sum(axis=1) + B[:k] - B[k]
    constant = J[k, k].sum() + A[k].sum() + B[k].sum() + C.constant
    return BellFunctional(joint, marg_a, marg_b, constant.item() if hasattr(constant, "item") else constant)


def _is_cg(C: BellFunctional) -> bool:
    k = C.o - 1
    return not (
        np.any(C.joint[k]) or np.any(C.joint[:, k]) or np.any(C.marginal_a()[k]) or np.any(C.marginal_b()[k])
    )


# ---------------------------------------------------------------------------
# emit


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def _format_matrix(mat: np.ndarray, block: int | None) -> list[str]:
    cells = [[_fmt(v) for v in row] for row in mat]
    width = max((len(c) for row in cells for c in row), default=1)
    lines = []
    rows, cols = mat.shape
    sep = None
    if block:
        groups = cols // block
        sep = "+".join(["-" * (block * (width + 1) + 1)] * groups)
    for i, row in enumerate(cells):
        if block and i and i % block == 0:
            lines.append(sep)
        parts = []
        for j, c in enumerate(row):
            if block and j and j % block == 0:
                parts.append("|")
            parts.append(c.rjust(width))
        lines.append(" " + " ".join(parts))
    return lines


def emit(C: BellFunctional, layout: str | None = None) -> str:
    """Canonical text for ``C``; ``layout`` defaults to ``cg`` when C has no last-outcome weight."""
    if layout is None:
        layout = "cg" if _is_cg(C) else "full"
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    if layout == "cg" and not _is_cg(C):
        C = cg_form(C)
    o, m = C.o, C.m
    k = o - 1 if layout == "cg" else o
    marg = [name for name, arr in (("A", C.marg_a), ("B", C.marg_b)) if arr is not None and np.any(arr)]
    lines = ["# Bell functional", f"m {m}", f"o {o}", f"layout {layout}", "marginals " + (" ".join(marg) or "none")]
    if C.constant != 0:
        lines.append(f"constant {_fmt(C.constant)}")
    if "A" in marg:
        lines += ["[CA]"] + _format_matrix(np.asarray(C.marg_a)[:k], None)
    if "B" in marg:
        lines += ["[CB]"] + _format_matrix(np.asarray(C.marg_b)[:k], None)
    joint = np.asarray(C.joint)[:k, :k].transpose(2, 0, 3, 1).reshape(m * k, m * k)
    lines += ["[C]"] + _format_matrix(joint, k)
    return "\n".join(lines) + "\n"


def save(C: BellFunctional, path, layout: str | None = None) -> None:
    Path(path).write_text(emit(C, layout))


# ---------------------------------------------------------------------------
# parse


def _number(token: str, line: int, column: int):
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise BlockFileError(f"non-numeric token {token!r}", line, column) from None


def _tokens(text: str):
    """Yield (token, column) with 1-based columns."""
    col = 0
    for tok in text.split():
        col = text.index(tok, col)
        yield tok, col + 1
        col += len(tok)


def parse(text: str) -> BellFunctional:
    header: dict[str, tuple[str, int]] = {}
    blocks: dict[str, list[tuple[int, list]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1]
            if current not in ("CA", "CB", "C"):
                raise BlockFileError(f"unknown block [{current}]", lineno, line.index("[") + 1)
            if current in blocks:
                raise BlockFileError(f"duplicate block [{current}]", lineno)
            blocks[current] = []
            continue
        if current is None:
            key, _, value = stripped.partition(" ")
            header[key] = (value.strip(), lineno)
            continue
        if set(stripped) <= set("-+ "):
            continue
        row = [_number(tok, lineno, col) for tok, col in _tokens(line) if tok != "|"]
        blocks[current].append((lineno, row))

    def need(key):
        if key not in header:
            raise BlockFileError(f"missing header field {key!r}")
        return header[key]

    def integer(key):
        value, lineno = need(key)
        try:
            return int(value)
        except ValueError:
            raise BlockFileError(f"{key} must be an integer, got {value!r}", lineno) from None

    m, o = integer("m"), integer("o")
    layout, lineno = header.get("layout", ("cg", None))
    if layout not in LAYOUTS:
        raise BlockFileError(f"unknown layout {layout!r}", lineno)
    marg = header.get("marginals", ("none", None))[0].split()
    marg = [] if marg == ["none"] else marg
    if any(v not in ("A", "B") for v in marg):
        raise BlockFileError(f"marginals must list A and/or B, got {marg}", header["marginals"][1])
    constant = 0
    if "constant" in header:
        constant = _number(header["constant"][0], header["constant"][1], None)
    k = o - 1 if layout == "cg" else o

    def matrix(name, rows, cols):
        if name not in blocks:
            raise BlockFileError(f"missing block [{name}]")
        data = blocks[name]
        if len(data) != rows:
            where = data[-1][0] if data else None
            raise BlockFileError(f"block [{name}] has {len(data)} rows, expected {rows}", where)
        for lineno, row in data:
            if len(row) != cols:
                raise BlockFileError(f"block [{name}] row has {len(row)} entries, expected {cols}", lineno)
        values = [v for _, row in data for v in row]
        dtype = np.int64 if all(isinstance(v, int) for v in values) else float
        return np.array(values, dtype=dtype).reshape(rows, cols)

    def marginal(name):
        full = np.zeros((o, m), dtype=np.int64)
        part = matrix(name, k, m)
        full = full.astype(part.dtype)
        full[:k] = part
        return full

    for name in ("CA", "CB"):
        present = name in blocks
        declared = name[1] in marg
        if declared != present:
            state = "declared but missing" if declared else "present but not declared in the header"
            raise BlockFileError(f"block [{name}] {state}")
    marg_a = marginal("CA") if "A" in marg else None
    marg_b = marginal("CB") if "B" in marg else None
    block = matrix("C", m * k, m * k)
    joint = np.zeros((o, o, m, m), dtype=block.dtype)
    joint[:k, :k] = block.reshape(m, k, m, k).transpose(1, 3, 0, 2)
    return BellFunctional(joint, marg_a, marg_b, constant)


def load(path) -> BellFunctional:
    return parse(Path(path).read_text())
