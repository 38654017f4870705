"""Exact decision of ``exists e > 0 with e^T M = 0``.

By positive scaling the open condition is equivalent to the closed system
``M^T e = 0, e >= 1``.  Writing ``e = 1 + f`` gives the standard-form
feasibility problem ``M^T f = -M^T 1, f >= 0`` which is solved by a dense
two-phase simplex over :class:`~fractions.Fraction` with Bland's rule, so
neither cycling nor tolerance-dependent answers can occur.

When the system is infeasible the phase-one simplex multipliers give a
vector ``h != 0`` with ``M h <= 0`` componentwise and ``sum(M h) < 0``,
which certifies (Farkas/Stiemke) that no positive null combination exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .linalg import as_rational_matrix

_ZERO = Fraction(0)


@dataclass(frozen=True)
class FeasibilityResult:
    exists: bool
    witness_e: tuple[Fraction, ...] | None = None
    certificate_h: tuple[Fraction, ...] | None = None
    rationalized: bool = False
    pivots: int = 0


class _Tableau:
    """Dense simplex tableau ``[A | rhs]`` with a reduced-cost row."""

    def __init__(self, A, rhs, basis):
        self.A = A
        self.rhs = rhs
        self.basis = basis
        self.pivots = 0

    def pivot(self, r: int, c: int) -> None:
        row = self.A[r]
        piv = row[c]
        if piv != 1:
            self.A[r] = row = [v / piv for v in row]
            self.rhs[r] /= piv
        for i, other in enumerate(self.A):
            if i == r:
                continue
            f = other[c]
            if f:
                self.A[i] = [a - f * b for a, b in zip(other, row)]
                self.rhs[i] -= f * self.rhs[r]
        self.basis[r] = c
        self.pivots += 1

    def reduced_costs(self, cost):
        ncols = len(cost)
        rc = list(cost)
        obj = _ZERO
        for i, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.A[i]
                for j in range(ncols):
                    rc[j] -= cb * row[j]
                obj += cb * self.rhs[i]
        return rc, obj

    def minimize(self, cost, allowed) -> Fraction:
        """Bland's rule simplex; the problems solved here are never unbounded."""
        while True:
            rc, obj = self.reduced_costs(cost)
            entering = next((j for j in allowed if rc[j] < 0), None)
            if entering is None:
                return obj
            best = None
            for i, row in enumerate(self.A):
                a = row[entering]
                if a > 0:
                    key = (self.rhs[i] / a, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                raise ArithmeticError("unbounded phase in a bounded feasibility LP")
            self.pivot(best[1], entering)


def _primitive(vec) -> tuple[Fraction, ...]:
    scale = 1
    for v in vec:
        scale = math.lcm(scale, v.denominator)
    ints = [int(v * scale) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    g = g or 1
    return tuple(Fraction(v // g) for v in ints)


def exists_positive_null(M) -> FeasibilityResult:
    """Decide whether a strictly positive ``e`` with ``e^T M = 0`` exists.

    On success ``witness_e`` has every component >= 1 and is the minimum
    ``sum(e)`` vertex of ``{M^T e = 0, e >= 1}``.  Otherwise
    ``certificate_h`` is a primitive integer vector with ``M h <= 0`` and
    at least one strict inequality.
    """
    rows, exact = as_rational_matrix(M)
    nvar = len(rows)
    ncon = len(rows[0]) if nvar else 0
    if nvar == 0:
        raise ValueError("exists_positive_null needs a nonempty matrix")
    if ncon == 0:
        return FeasibilityResult(True, (Fraction(1),) * nvar, None, not exact)

    # Constraint c: sum_i M[i][c] f_i = -sum_i M[i][c]
    signs = []
    A = []
    rhs = []
    for c in range(ncon):
        coeffs = [rows[i][c] for i in range(nvar)]
        b = -sum(coeffs, _ZERO)
        s = -1 if b < 0 else 1
        signs.append(s)
        art = [_ZERO] * ncon
        art[c] = Fraction(1)
        A.append([s * v for v in coeffs] + art)
        rhs.append(s * b)

    tab = _Tableau(A, rhs, [nvar + c for c in range(ncon)])
    phase1_cost = [_ZERO] * nvar + [Fraction(1)] * ncon
    infeasibility = tab.minimize(phase1_cost, range(nvar + ncon))

    if infeasibility > 0:
        rc, _ = tab.reduced_costs(phase1_cost)
        duals = [1 - rc[nvar + c] for c in range(ncon)]
        h = _primitive([s * y for s, y in zip(signs, duals)])
        return FeasibilityResult(False, None, h, not exact, tab.pivots)

    # Drive zero-level artificials out of the basis; drop redundant rows.
    keep = []
    for i in range(len(tab.basis)):
        if tab.basis[i] >= nvar:
            col = next((j for j in range(nvar) if tab.A[i][j] != 0), None)
            if col is None:
                continue
            tab.pivot(i, col)
        keep.append(i)
    tab.A = [tab.A[i] for i in keep]
    tab.rhs = [tab.rhs[i] for i in keep]
    tab.basis = [tab.basis[i] for i in keep]

    phase2_cost = [Fraction(1)] * nvar + [_ZERO] * ncon
    tab.minimize(phase2_cost, range(nvar))

    f = [_ZERO] * nvar
    for i, b in enumerate(tab.basis):
        if b < nvar:
            f[b] = tab.rhs[i]
    e = tuple(1 + v for v in f)
    return FeasibilityResult(True, e, None, not exact, tab.pivots)


def check_witness(M, e) -> bool:
    rows, _ = as_rational_matrix(M)
    if any(v <= 0 for v in e):
        return False
    ncols = len(rows[0])
    return all(sum((e[i] * rows[i][c] for i in range(len(rows))), _ZERO) == 0 for c in range(ncols))


def check_certificate(M, h) -> bool:
    rows, _ = as_rational_matrix(M)
    if not any(h):
        return False
    prods = [sum((a * b for a, b in zip(row, h)), _ZERO) for row in rows]
    return all(v <= 0 for v in prods) and any(v < 0 for v in prods)
