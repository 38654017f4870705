"""Column rank by fraction-free (Bareiss) elimination, with an SVD fallback."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import to_rational

EXACT = "exact_rational"
FLOAT = "float_svd"


@dataclass(frozen=True)
class RankResult:
    rank: int
    method: str
    columns: int
    null_vector: tuple | None = None

    @property
    def full_column_rank(self) -> bool:
        return self.rank == self.columns


def as_rational_matrix(M) -> tuple[list[list[Fraction]], bool]:
    """Return ``(rows, exact)``; ``exact`` is false if any entry needed float conversion."""
    if isinstance(M, np.ndarray) and M.dtype.kind == "f":
        rows = M.tolist()
    else:
        rows = [list(r) for r in M]
    exact = True
    out = []
    for row in rows:
        conv = []
        for v in row:
            frac, ok = to_rational(v)
            exact &= ok
            conv.append(frac)
        out.append(conv)
    return out, exact


def _integer_rows(rows: Sequence[Sequence[Fraction]]) -> list[list[int]]:
    out = []
    for row in rows:
        scale = 1
        for v in row:
            scale = math.lcm(scale, v.denominator)
        out.append([int(v * scale) for v in row])
    return out


def bareiss_echelon(A: list[list[int]]) -> tuple[list[list[int]], list[int]]:
    """Integer row echelon form by one-step fraction-free elimination.

    Returns the reduced matrix (modified in place) and its pivot columns.
    Every intermediate entry is a minor of ``A``, so no fractions appear.
    """
    nrows = len(A)
    ncols = len(A[0]) if nrows else 0
    pivots: list[int] = []
    prev = 1
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        sel = next((i for i in range(r, nrows) if A[i][c] != 0), None)
        if sel is None:
            continue
        if sel != r:
            A[r], A[sel] = A[sel], A[r]
        piv = A[r][c]
        for i in range(r + 1, nrows):
            a_ic = A[i][c]
            row_i = A[i]
            row_r = A[r]
            for j in range(c + 1, ncols):
                row_i[j] = (piv * row_i[j] - a_ic * row_r[j]) // prev
            row_i[c] = 0
        prev = piv
        pivots.append(c)
        r += 1
    return A, pivots


def _null_vector(E: list[list[int]], pivots: list[int], ncols: int) -> tuple[Fraction, ...]:
    free = next(c for c in range(ncols) if c not in pivots)
    x = [Fraction(0)] * ncols
    x[free] = Fraction(1)
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        s = sum((E[r][j] * x[j] for j in range(c + 1, ncols)), Fraction(0))
        x[c] = -s / E[r][c]
    scale = 1
    for v in x:
        scale = math.lcm(scale, v.denominator)
    ints = [int(v * scale) for v in x]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    ints = [v // g for v in ints]
    lead = next(v for v in ints if v != 0)
    if lead < 0:
        ints = [-v for v in ints]
    return tuple(Fraction(v) for v in ints)


def column_rank(M) -> RankResult:
    """Rank of ``M`` plus a nonzero null vector when the columns are dependent.

    Exact rational elimination is used whenever all entries are exactly
    representable; otherwise singular values are thresholded at
    ``max(rows, cols) * eps * s_max``.
    """
    rows, exact = as_rational_matrix(M)
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    if nrows == 0 or ncols == 0:
        raise ValueError("column_rank needs a nonempty matrix")
    if exact:
        E, pivots = bareiss_echelon(_integer_rows(rows))
        rank = len(pivots)
        null = _null_vector(E, pivots, ncols) if rank < ncols else None
        return RankResult(rank, EXACT, ncols, null)

    A = np.array([[float(v) for v in row] for row in rows])
    _, s, vt = np.linalg.svd(A)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    null = tuple(vt[-1].tolist()) if rank < ncols else None
    return RankResult(rank, FLOAT, ncols, null)


def hstack(A, B):
    return tuple(tuple(a) + tuple(b) for a, b in zip(A, B))
