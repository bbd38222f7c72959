"""Small dense linear algebra on expression matrices (cofactor based, n <= 6 or so)."""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

from .expr import ONE, ZERO, Expr, add, div, mul, neg, sub, total

Matrix = tuple[tuple[Expr, ...], ...]


def as_matrix(rows: Sequence[Sequence[Expr]]) -> Matrix:
    return tuple(tuple(r) for r in rows)


def identity(n: int) -> Matrix:
    return tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n))


def transpose(m: Matrix) -> Matrix:
    return tuple(zip(*m)) if m else ()


def matmul(a: Matrix, b: Matrix) -> Matrix:
    bt = transpose(b)
    return tuple(tuple(total(mul(x, y) for x, y in zip(row, col)) for col in bt) for row in a)


def matvec(a: Matrix, v: Sequence[Expr]) -> tuple[Expr, ...]:
    return tuple(total(mul(x, y) for x, y in zip(row, v)) for row in a)


def det(m: Matrix) -> Expr:
    n = len(m)
    if n == 0:
        return ONE

    @lru_cache(maxsize=None)
    def minor(row: int, cols: tuple[int, ...]) -> Expr:
        # determinant of rows row.. and the given columns (Laplace along the top row)
        if len(cols) == 1:
            return m[row][cols[0]]
        out = ZERO
        for k, c in enumerate(cols):
            entry = m[row][c]
            if entry.is_zero():
                continue
            rest = minor(row + 1, cols[:k] + cols[k + 1 :])
            term = mul(entry, rest)
            out = sub(out, term) if k % 2 else add(out, term)
        return out

    return minor(0, tuple(range(n)))


def _drop(m: Matrix, r: int, c: int) -> Matrix:
    return tuple(tuple(x for j, x in enumerate(row) if j != c) for i, row in enumerate(m) if i != r)


def inverse(m: Matrix) -> tuple[Matrix, Expr]:
    """Symbolic inverse via the adjugate; returns ``(inverse, determinant)``."""
    n = len(m)
    if n == 1:
        return ((div(ONE, m[0][0]),),), m[0][0]
    d = det(m)
    diagonal = all(m[i][j].is_zero() for i in range(n) for j in range(n) if i != j)
    if diagonal:
        return tuple(tuple(div(ONE, m[i][i]) if i == j else ZERO for j in range(n)) for i in range(n)), d
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            cof = det(_drop(m, j, i))
            cof = neg(cof) if (i + j) % 2 else cof
            row.append(div(cof, d))
        rows.append(tuple(row))
    return tuple(rows), d
