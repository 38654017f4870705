"""Independent reference implementations used only by the tests.

None of these share code with the package: the LP oracle enumerates
vertices, the separation oracle enumerates candidate extreme rays, the
likelihood oracle uses scipy.stats densities and the quadrature oracle is
a plain trapezoid rule.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy import integrate, stats


def _solve_exact(A, b):
    """Unique solution of ``A x = b`` (Fractions) or None if not unique / inconsistent."""
    rows, cols = len(A), len(A[0])
    M = [list(A[i]) + [b[i]] for i in range(rows)]
    piv_cols = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if p is None:
            return None
        M[r], M[p] = M[p], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv for v in M[r]]
        for i in range(rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [vi - f * vr for vi, vr in zip(M[i], M[r])]
        piv_cols.append(c)
        r += 1
    if any(M[i][cols] != 0 for i in range(r, rows)):
        return None
    return [M[i][cols] for i in range(cols)]


def vertex_positive_null(M) -> bool:
    """Positive ``e`` with ``e^T M = 0`` exists iff every coordinate is positive at some vertex.

    Vertices of ``{e >= 0, M^T e = 0, sum(e) = 1}`` are found by solving the
    equality system on every support set.
    """
    M = [[Fraction(v) for v in row] for row in M]
    n, p = len(M), len(M[0])
    covered = set()
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            A = [[M[i][c] for i in S] for c in range(p)] + [[Fraction(1)] * size]
            b = [Fraction(0)] * p + [Fraction(1)]
            x = _solve_exact(A, b)
            if x is not None and all(v > 0 for v in x):
                covered.update(S)
    return len(covered) == n


def separating_direction(M, bound: int):
    """Integer ``h`` with ``M h <= 0`` and some strict inequality, searched on a box.

    For integer ``M`` with ``|entries| <= 2`` and at most three columns the
    extreme rays of ``{h : M h <= 0}`` are cross products of rows, so a box
    of half-width 8 is exhaustive.
    """
    M = np.asarray(M, dtype=float)
    p = M.shape[1]
    grid = np.array(list(itertools.product(range(-bound, bound + 1), repeat=p)), dtype=float)
    grid = grid[np.any(grid != 0, axis=1)]
    prod = grid @ M.T
    ok = np.all(prod <= 0, axis=1) & np.any(prod < 0, axis=1)
    hits = np.flatnonzero(ok)
    return None if hits.size == 0 else grid[hits[0]]


def complete_loglik_ref(beta, tau_per_col, u, y, m, X, Z, family, link="logit"):
    """log p(y | beta, u) + log N(u; 0, diag(1/tau)) via scipy.stats."""
    eta = np.asarray(X, float) @ np.asarray(beta, float) + np.asarray(Z, float) @ np.asarray(u, float)
    if family == "poisson":
        ll = stats.poisson.logpmf(y, np.exp(eta)).sum()
    else:
        prob = stats.logistic.cdf(eta) if link == "logit" else stats.norm.cdf(eta)
        ll = stats.binom.logpmf(y, m, prob).sum()
    sd = 1.0 / np.sqrt(np.asarray(tau_per_col, float))
    return ll + stats.norm.logpdf(u, scale=sd).sum()


def trapezoid_marginal_1d(loglik_u, tau, lo=-12.0, hi=12.0, points=200):
    """``log int exp(loglik(u)) N(u; 0, 1/tau) du`` by the trapezoid rule."""
    u = np.linspace(lo, hi, points)
    vals = np.exp(np.array([loglik_u(v) for v in u]) + stats.norm.logpdf(u, scale=1 / np.sqrt(tau)))
    return float(np.log(integrate.trapezoid(vals, u)))


def trapezoid_marginal_2d(loglik_u, tau, half=12.0, points=401):
    g = np.linspace(-half, half, points)
    U1, U2 = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([U1.ravel(), U2.ravel()], axis=1)
    logv = loglik_u(pts) + stats.norm.logpdf(pts, scale=1 / np.sqrt(tau)).sum(axis=1)
    top = logv.max()
    vals = np.exp(logv - top).reshape(points, points)
    return float(top + np.log(integrate.trapezoid(integrate.trapezoid(vals, g, axis=1), g)))
