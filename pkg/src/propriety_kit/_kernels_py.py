"""Numpy evaluator with the same contract as the compiled kernel.

Every batch row is processed simultaneously: the Newton iterations run on
``(N, q)`` arrays with per-row step-halving masks, and the Gauss-Hermite
grid is evaluated in chunks to bound memory.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import special

LOG_2PI = float(np.log(2.0 * np.pi))
_CHUNK_DOUBLES = 4_000_000


def _obs_loglik(eta, y, m, fam, link):
    if fam == 1:
        return y * eta - np.exp(eta)
    if link == 0:
        return y * special.log_expit(eta) + (m - y) * special.log_expit(-eta)
    return y * special.log_ndtr(eta) + (m - y) * special.log_ndtr(-eta)


def _mills(x):
    return np.exp(-0.5 * x * x - 0.5 * LOG_2PI - special.log_ndtr(x))


def _obs_derivs(eta, y, m, fam, link):
    if fam == 1:
        p = np.exp(eta)
        return y - p, -p
    if link == 0:
        p = special.expit(eta)
        return y - m * p, -m * p * (1.0 - p)
    lp, lm = _mills(eta), _mills(-eta)
    return y * lp - (m - y) * lm, -y * lp * (eta + lp) - (m - y) * lm * (lm - eta)


def _h(eta0, Z, y, m, tau, u, fam, link, lgauss):
    eta = eta0 + u @ Z.T
    return lgauss - 0.5 * np.sum(tau * u * u, axis=-1) + np.sum(_obs_loglik(eta, y, m, fam, link), axis=-1)


def _grad_negh(eta0, Z, y, m, tau, u, fam, link):
    eta = eta0 + u @ Z.T
    d1, d2 = _obs_derivs(eta, y, m, fam, link)
    g = d1 @ Z - tau * u
    A = -np.einsum("ni,ic,id->ncd", d2, Z, Z)
    idx = np.arange(Z.shape[1])
    A[:, idx, idx] += tau
    return g, A


def _slope(eta0, Z, y, m, tau, u, step, t, fam, link):
    """Derivative of ``h(u + t step)`` with respect to ``t``, row by row."""
    v = u + t[:, None] * step
    eta = eta0 + v @ Z.T
    d1, _ = _obs_derivs(eta, y, m, fam, link)
    return np.sum(d1 * (step @ Z.T), axis=1) - np.sum(tau * v * step, axis=1)


def _line_search(eta0, Z, y, m, tau, u, step, fam, link, slope0):
    """Full Newton step where the objective still rises, else safeguarded Illinois on the slope."""
    n_rows = u.shape[0]
    a = np.zeros(n_rows)
    fa = slope0.copy()
    b = np.ones(n_rows)
    with np.errstate(over="ignore", invalid="ignore"):
        fb = _slope(eta0, Z, y, m, tau, u, step, b, fam, link)
        for _ in range(45):
            bad = ~np.isfinite(fb)
            if not bad.any():
                break
            b[bad] *= 0.5
            fb[bad] = _slope(eta0[bad], Z, y, m, tau[bad], u[bad], step[bad], b[bad], fam, link)
    t = np.where(fb >= 0.0, b, 0.0)
    open_ = np.isfinite(fb) & (fb < 0.0)
    side = np.zeros(n_rows, dtype=int)
    bisect = np.zeros(n_rows, dtype=bool)
    width = b - a
    for _ in range(200):
        j = np.flatnonzero(open_)
        if j.size == 0:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            c = (a[j] * fb[j] - b[j] * fa[j]) / (fb[j] - fa[j])
        inside = (c > a[j]) & (c < b[j]) & ~bisect[j]
        c = np.where(inside, c, 0.5 * (a[j] + b[j]))
        with np.errstate(over="ignore", invalid="ignore"):
            fc = _slope(eta0[j], Z, y, m, tau[j], u[j], step[j], c, fam, link)
        hit = (fc >= 0.0) & (fc <= 0.1 * slope0[j])
        t[j[hit]] = c[hit]
        open_[j[hit]] = False
        neg = ~hit & (fc < 0.0)
        pos = ~hit & ~neg
        jn, jp = j[neg], j[pos]
        b[jn], fb[jn] = c[neg], fc[neg]
        fa[jn[side[jn] == -1]] *= 0.5
        side[jn] = -1
        a[jp], fa[jp] = c[pos], fc[pos]
        fb[jp[side[jp] == 1]] *= 0.5
        side[jp] = 1
        narrow = open_ & (b - a <= 1e-15 * b)
        t[narrow] = a[narrow]
        open_[narrow] = False
        # a huge slope at b pins the secant near a; bisect after a poor step
        bisect[j] = (b[j] - a[j]) > 0.5 * width[j]
        width[j] = b[j] - a[j]
    t[open_] = a[open_]
    return t


def log_marginal_batch(eta0, tau, Z, y, m, family_code, link_code, nodes, logw, max_iter=200, tol=1e-14):
    eta0 = np.ascontiguousarray(eta0, dtype=float)
    tau = np.ascontiguousarray(tau, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    N, n = eta0.shape
    q = Z.shape[1]
    if q < 1 or q > 4:
        raise ValueError("q must be between 1 and 4")
    if Z.shape[0] != n or tau.shape != (N, q):
        raise ValueError("shape mismatch")

    lgauss = np.sum(0.5 * np.log(tau) - 0.5 * LOG_2PI, axis=1)
    u = np.zeros((N, q))
    with np.errstate(over="ignore", invalid="ignore"):
        f = _h(eta0, Z, y, m, tau, u, family_code, link_code, lgauss)
    failed = ~np.isfinite(f)
    active = ~failed
    polish = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.flatnonzero(active)
        g, A = _grad_negh(eta0[ia], Z, y, m, tau[ia], u[ia], family_code, link_code)
        pd = np.all(np.linalg.eigvalsh(A) > 0, axis=1)
        if not pd.all():
            failed[ia[~pd]] = True
            active[ia[~pd]] = False
            ia, g, A = ia[pd], g[pd], A[pd]
        step = np.linalg.solve(A, g[..., None])[..., 0]
        dec = np.sum(g * step, axis=1)
        # flat directions leave the mode loose at a tiny decrement, so the step must be small too
        small = np.all(np.abs(step) <= 1e-9 * (1.0 + np.abs(u[ia])), axis=1)
        # a few polishing steps at most; rounding can keep the step above threshold
        tiny = dec < tol * (1.0 + np.abs(f[ia]))
        polish[ia[tiny]] += 1
        done = tiny & (small | (polish[ia] > 4))
        active[ia[done]] = False
        ia, step, dec = ia[~done], step[~done], dec[~done]
        if ia.size == 0:
            continue
        t = _line_search(eta0[ia], Z, y, m, tau[ia], u[ia], step, family_code, link_code, dec)
        trial = u[ia] + t[:, None] * step
        with np.errstate(over="ignore", invalid="ignore"):
            ft = _h(eta0[ia], Z, y, m, tau[ia], trial, family_code, link_code, lgauss[ia])
        ok = (t > 0) & np.isfinite(ft) & (ft >= f[ia] - 1e-13 * np.abs(f[ia]))
        # no representable ascent left; accept if already at the mode
        at_mode = ~ok & (dec < 1e-8 * (1.0 + np.abs(f[ia])))
        failed[ia[~ok & ~at_mode]] = True
        active[ia[~ok]] = False
        u[ia[ok]] = trial[ok]
        f[ia[ok]] = ft[ok]
    failed |= active

    out = np.full(N, np.nan)
    ok = np.flatnonzero(~failed)
    if ok.size:
        g, A = _grad_negh(eta0[ok], Z, y, m, tau[ok], u[ok], family_code, link_code)
        L = np.linalg.cholesky(A)
        logdet = np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
        grid = np.array(list(itertools.product(nodes, repeat=q)))
        lw = np.array([sum(c) for c in itertools.product(logw, repeat=q)])
        gsq = np.sum(grid * grid, axis=1)
        Lt = np.swapaxes(L, 1, 2)
        chunk = max(1, _CHUNK_DOUBLES // max(1, grid.shape[0] * n))
        for s in range(0, ok.size, chunk):
            sl = ok[s:s + chunk]
            # du = sqrt(2) L^{-T} x for every grid point
            du = np.sqrt(2.0) * np.linalg.solve(Lt[s:s + chunk], np.broadcast_to(grid.T, (sl.size, q, grid.shape[0])))
            pts = u[sl][:, None, :] + np.swapaxes(du, 1, 2)
            with np.errstate(over="ignore", invalid="ignore"):
                hk = _h(eta0[sl][:, None, :], Z, y, m, tau[sl][:, None, :], pts, family_code, link_code, lgauss[sl][:, None])
            terms = hk - f[sl][:, None] + gsq + lw
            out[sl] = f[sl] + 0.5 * q * np.log(2.0) - logdet[s:s + chunk] + special.logsumexp(terms, axis=1)
    status = failed.astype(np.int32)
    out[failed] = np.nan
    return out, status
