# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch evaluator of random-effect integrals by adaptive Gauss-Hermite quadrature."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs, isfinite, INFINITY
from scipy.special.cython_special cimport log_ndtr

cnp.import_array()

cdef enum:
    QMAX = 4
cdef double LOG_2PI = 1.8378770664093453
cdef double LOG_SQRT_2PI = 0.9189385332046727


cdef inline double _log_expit(double x) noexcept nogil:
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


cdef inline double _obs_loglik(double eta, double y, double m, int fam, int link) noexcept nogil:
    if fam == 1:
        return y * eta - exp(eta)
    if link == 0:
        # log_expit(-eta) = log_expit(eta) - eta
        return m * _log_expit(eta) - (m - y) * eta
    return y * log_ndtr(eta) + (m - y) * log_ndtr(-eta)


cdef inline double _mills(double x) noexcept nogil:
    # phi(x) / Phi(x)
    return exp(-0.5 * x * x - LOG_SQRT_2PI - log_ndtr(x))


cdef inline void _obs_derivs(double eta, double y, double m, int fam, int link,
                             double *d1, double *d2) noexcept nogil:
    cdef double p, lp, lm
    if fam == 1:
        p = exp(eta)
        d1[0] = y - p
        d2[0] = -p
    elif link == 0:
        p = 1.0 / (1.0 + exp(-eta))
        d1[0] = y - m * p
        d2[0] = -m * p * (1.0 - p)
    else:
        lp = _mills(eta)
        lm = _mills(-eta)
        d1[0] = y * lp - (m - y) * lm
        d2[0] = -y * lp * (eta + lp) - (m - y) * lm * (lm - eta)


cdef double _h(const double *eta0, const double *Z, const double *y,
               const double *m, const double *tau, const double *u,
               Py_ssize_t n, Py_ssize_t q, int fam, int link, double lgauss) noexcept nogil:
    cdef Py_ssize_t i, c
    cdef double eta, s = lgauss
    for c in range(q):
        s -= 0.5 * tau[c] * u[c] * u[c]
    for i in range(n):
        eta = eta0[i]
        for c in range(q):
            eta += Z[i * q + c] * u[c]
        s += _obs_loglik(eta, y[i], m[i], fam, link)
    return s


cdef void _grad_negh(const double *eta0, const double *Z, const double *y,
                     const double *m, const double *tau, const double *u,
                     Py_ssize_t n, Py_ssize_t q, int fam, int link,
                     double *g, double *A) noexcept nogil:
    # g = grad h, A = -hess h
    cdef Py_ssize_t i, c, d
    cdef double eta, d1, d2
    for c in range(q):
        g[c] = -tau[c] * u[c]
        for d in range(q):
            A[c * QMAX + d] = tau[c] if c == d else 0.0
    for i in range(n):
        eta = eta0[i]
        for c in range(q):
            eta += Z[i * q + c] * u[c]
        _obs_derivs(eta, y[i], m[i], fam, link, &d1, &d2)
        for c in range(q):
            if Z[i * q + c] != 0.0:
                g[c] += Z[i * q + c] * d1
                for d in range(q):
                    A[c * QMAX + d] -= d2 * Z[i * q + c] * Z[i * q + d]


cdef int _cholesky(double *A, double *L, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(q):
        for j in range(i + 1):
            s = A[i * QMAX + j]
            for k in range(j):
                s -= L[i * QMAX + k] * L[j * QMAX + k]
            if i == j:
                if not s > 0.0:
                    return 1
                L[i * QMAX + i] = sqrt(s)
            else:
                L[i * QMAX + j] = s / L[j * QMAX + j]
        for j in range(i + 1, QMAX):
            L[i * QMAX + j] = 0.0
    return 0


cdef void _chol_solve(const double *L, const double *b, double *x, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s
    cdef double w[QMAX]
    for i in range(q):
        s = b[i]
        for k in range(i):
            s -= L[i * QMAX + k] * w[k]
        w[i] = s / L[i * QMAX + i]
    for i in range(q - 1, -1, -1):
        s = w[i]
        for k in range(i + 1, q):
            s -= L[k * QMAX + i] * x[k]
        x[i] = s / L[i * QMAX + i]


cdef double _slope(const double *eta0, const double *Z, const double *y,
                   const double *m, const double *tau, const double *u, const double *step,
                   double t, Py_ssize_t n, Py_ssize_t q, int fam, int link) noexcept nogil:
    # derivative of h(u + t step) with respect to t
    cdef Py_ssize_t i, c
    cdef double eta, zs, d1, d2, s = 0.0
    for c in range(q):
        s -= tau[c] * (u[c] + t * step[c]) * step[c]
    for i in range(n):
        eta = eta0[i]
        zs = 0.0
        for c in range(q):
            eta += Z[i * q + c] * (u[c] + t * step[c])
            zs += Z[i * q + c] * step[c]
        if zs != 0.0:
            _obs_derivs(eta, y[i], m[i], fam, link, &d1, &d2)
            s += d1 * zs
    return s


cdef double _line_search(const double *eta0, const double *Z, const double *y,
                         const double *m, const double *tau, const double *u, const double *step,
                         Py_ssize_t n, Py_ssize_t q, int fam, int link, double slope0) noexcept nogil:
    """Step length along a Newton direction of the concave objective.

    The full step is taken when the objective still increases at it;
    otherwise the root of the directional derivative in ``(0, 1)`` is
    bracketed by the Illinois variant of regula falsi, with a bisection
    step whenever the bracket fails to halve.  Only points where the
    derivative is still non-negative are returned, so by concavity every
    accepted step is an ascent step.  Plain backtracking stalls on
    the flat logistic tails where the Hessian is close to ``diag(tau)``.
    """
    cdef double a = 0.0, fa = slope0, b = 1.0, fb, c, fc, width
    cdef int side = 0, k, bisect = 0
    fb = _slope(eta0, Z, y, m, tau, u, step, 1.0, n, q, fam, link)
    while not isfinite(fb):
        b *= 0.5
        if b < 1e-12:
            return 0.0
        fb = _slope(eta0, Z, y, m, tau, u, step, b, n, q, fam, link)
    if fb >= 0.0:
        return b
    width = b - a
    for k in range(200):
        c = (a * fb - b * fa) / (fb - fa)
        if bisect or not (c > a and c < b):
            c = 0.5 * (a + b)
        fc = _slope(eta0, Z, y, m, tau, u, step, c, n, q, fam, link)
        if fc >= 0.0 and fc <= 0.1 * slope0:
            return c
        if fc < 0.0:
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
        if b - a <= 1e-15 * b:
            break
        # a huge slope at b pins the secant near a; bisect after a poor step
        bisect = (b - a) > 0.5 * width
        width = b - a
    return a


cdef int _one_point(const double *eta0, const double *Z, const double *y,
                    const double *m, const double *tau, Py_ssize_t n, Py_ssize_t q,
                    int fam, int link, const double *nodes, const double *logw, Py_ssize_t K,
                    int max_iter, double tol, double *out) noexcept nogil:
    cdef double u[QMAX]
    cdef double trial[QMAX]
    cdef double g[QMAX]
    cdef double step[QMAX]
    cdef double xk[QMAX]
    cdef double du[QMAX]
    cdef double A[QMAX * QMAX]
    cdef double L[QMAX * QMAX]
    cdef int idx[QMAX]
    cdef Py_ssize_t c
    cdef double lgauss = 0.0, f, ft, dec, t, logdet, hk, lw, sq2 = sqrt(2.0)
    cdef double best, acc, s
    cdef int it, converged = 0, small, polish = 0

    for c in range(q):
        lgauss += 0.5 * log(tau[c]) - 0.5 * LOG_2PI
        u[c] = 0.0
    f = _h(eta0, Z, y, m, tau, u, n, q, fam, link, lgauss)
    if not isfinite(f):
        return 1
    for it in range(max_iter):
        _grad_negh(eta0, Z, y, m, tau, u, n, q, fam, link, g, A)
        if _cholesky(A, L, q):
            return 1
        _chol_solve(L, g, step, q)
        dec = 0.0
        small = 1
        for c in range(q):
            dec += g[c] * step[c]
            if fabs(step[c]) > 1e-9 * (1.0 + fabs(u[c])):
                small = 0
        # flat directions leave the mode loose at a tiny decrement, so the step must be small too
        # a few polishing steps at most; rounding can keep the step above threshold
        if dec < tol * (1.0 + fabs(f)):
            polish += 1
            if small or polish > 4:
                converged = 1
                break
        t = _line_search(eta0, Z, y, m, tau, u, step, n, q, fam, link, dec)
        for c in range(q):
            trial[c] = u[c] + t * step[c]
        ft = _h(eta0, Z, y, m, tau, trial, n, q, fam, link, lgauss)
        if not (t > 0.0 and isfinite(ft) and ft >= f - 1e-13 * fabs(f)):
            # no representable ascent left; accept if already at the mode
            if dec < 1e-8 * (1.0 + fabs(f)):
                converged = 1
                break
            return 1
        for c in range(q):
            u[c] = trial[c]
        f = ft
    if not converged:
        return 1

    _grad_negh(eta0, Z, y, m, tau, u, n, q, fam, link, g, A)
    if _cholesky(A, L, q):
        return 1
    logdet = 0.0
    for c in range(q):
        logdet += log(L[c * QMAX + c])

    # tensor grid with a running log-sum-exp
    best = -INFINITY
    acc = 0.0
    for c in range(q):
        idx[c] = 0
    while True:
        lw = 0.0
        s = 0.0
        for c in range(q):
            xk[c] = nodes[idx[c]]
            lw += logw[idx[c]]
            s += xk[c] * xk[c]
        # du = L^{-T} x
        for c in range(q - 1, -1, -1):
            dec = xk[c]
            for it in range(c + 1, q):
                dec -= L[it * QMAX + c] * du[it]
            du[c] = dec / L[c * QMAX + c]
        for c in range(q):
            trial[c] = u[c] + sq2 * du[c]
        hk = _h(eta0, Z, y, m, tau, trial, n, q, fam, link, lgauss) - f + s + lw
        if hk > best:
            acc = acc * exp(best - hk) + 1.0
            best = hk
        elif hk > -INFINITY:
            acc += exp(hk - best)
        c = 0
        while c < q:
            idx[c] += 1
            if idx[c] < K:
                break
            idx[c] = 0
            c += 1
        if c == q:
            break
    if not isfinite(best):
        return 1
    out[0] = f + 0.5 * q * log(2.0) - logdet + best + log(acc)
    return 0


def log_marginal_batch(const double[:, ::1] eta0, const double[:, ::1] tau,
                       const double[:, ::1] Z, const double[::1] y, const double[::1] m,
                       int family_code, int link_code, const double[::1] nodes,
                       const double[::1] logw, int max_iter=200, double tol=1e-14):
    """Log of ``int prod_i p(y_i | eta0_i + z_i'u) N(u; 0, diag(tau)^-1) du`` for each row.

    ``tau`` holds one precision per column of ``Z``.  Returns ``(values, status)``
    where status 1 marks a failed mode search (value set to nan).
    """
    cdef Py_ssize_t N = eta0.shape[0], n = eta0.shape[1], q = Z.shape[1], j
    if q < 1 or q > QMAX:
        raise ValueError(f"q must be between 1 and {QMAX}")
    if Z.shape[0] != n or tau.shape[1] != q or tau.shape[0] != N:
        raise ValueError("shape mismatch")
    if y.shape[0] != n or m.shape[0] != n or logw.shape[0] != nodes.shape[0] or nodes.shape[0] < 1:
        raise ValueError("shape mismatch")
    out = np.empty(N)
    status = np.zeros(N, dtype=np.int32)
    cdef double[::1] ov = out
    cdef int[::1] sv = status
    cdef double val
    with nogil:
        for j in range(N):
            if _one_point(&eta0[j, 0], &Z[0, 0], &y[0], &m[0], &tau[j, 0], n, q, family_code,
                          link_code, &nodes[0], &logw[0], nodes.shape[0], max_iter, tol, &val):
                sv[j] = 1
                ov[j] = -INFINITY
            else:
                ov[j] = val
    out[status == 1] = np.nan
    return out, status
