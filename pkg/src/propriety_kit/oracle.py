"""Deterministic quadrature for likelihoods and truncated normalizing constants.

Nothing here proves propriety.  A truncated integral that keeps growing
with the box is only consistent with impropriety; the exact verdict
from :mod:`propriety_kit.engine` stays authoritative.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import kernels
from .errors import ModeSearchFailed, NonpositiveTau, NotConvergedWarning, OutOfScope, ScaleLimit
from .glm import fit_model_glm
from .jeffreys import JeffreysPrior, log_jeffreys_density
from .model import FamilyKind, ValidatedModel

MAX_Q = 4
ORDER_CAPS = {1: 320, 2: 80, 3: 40, 4: 20}
DEFAULT_BOXES = (5.0, 10.0, 20.0, 40.0, 50.0)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class QuadratureEstimate:
    value: float
    log_value: float
    box: tuple[float, ...]
    nodes: tuple[int, ...]
    rel_error_est: float


@dataclass(frozen=True)
class MarginalEstimate:
    log_value: float
    order: int
    rel_change: float
    converged: bool


# ---------------------------------------------------------------------------
# likelihood pieces
# ---------------------------------------------------------------------------


def _codes(model: ValidatedModel) -> tuple[int, int]:
    link = model.link.kind.value
    if link not in kernels.LINK_CODES:
        raise OutOfScope(f"quadrature supports logit, probit and log links, got {model.link}")
    return kernels.FAMILY_CODES[model.family.kind.value], kernels.LINK_CODES[link]


def _log_pmf_constant(model: ValidatedModel) -> float:
    y = model.y_array
    if model.family.kind is FamilyKind.POISSON:
        return -float(np.sum(special.gammaln(y + 1.0)))
    m = model.m_array
    return float(np.sum(special.gammaln(m + 1.0) - special.gammaln(y + 1.0) - special.gammaln(m - y + 1.0)))


def _tau_vector(model: ValidatedModel, tau) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.shape[-1] != model.r:
        raise ValueError(f"expected {model.r} precisions, got {tau.shape[-1]}")
    if np.any(~(tau > 0)):
        raise NonpositiveTau("every tau_j must be strictly positive")
    return tau


def random_effect_logdensity(tau, u, block_sizes: Sequence[int]) -> float:
    """``log N(u; 0, D(tau)^-1)`` for block-diagonal precision ``D(tau)``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(~(tau > 0)):
        raise NonpositiveTau("every tau_j must be strictly positive")
    u = np.asarray(u, dtype=float)
    total, start = 0.0, 0
    for t, q in zip(tau, block_sizes):
        uj = u[start:start + q]
        total += 0.5 * q * math.log(t) - 0.5 * t * float(uj @ uj) - 0.5 * q * LOG_2PI
        start += q
    return total


def data_loglik(beta, u, model: ValidatedModel) -> float:
    """Exact log pmf of ``y`` given ``(beta, u)``, combinatorial constants included."""
    fam, link = _codes(model)
    eta = model.X @ np.asarray(beta, dtype=float) + model.Z @ np.asarray(u, dtype=float)
    ll = kernels._kernels_py._obs_loglik(eta, model.y_array, model.m_array, fam, link)
    return float(np.sum(ll)) + _log_pmf_constant(model)


def complete_loglik(beta, tau, u, model: ValidatedModel) -> float:
    """Log of the joint density of ``(y, u)`` given ``(beta, tau)``."""
    tau = _tau_vector(model, tau)
    return data_loglik(beta, u, model) + random_effect_logdensity(tau, u, [b.q for b in model.blocks])


# ---------------------------------------------------------------------------
# marginal likelihood
# ---------------------------------------------------------------------------


def _gh_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, np.log(w)


def _thread_cap() -> int:
    cap = os.environ.get("PROPRIETY_KIT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = max(1, min(n, int(cap)))
    return n


def _batch(model: ValidatedModel, betas: np.ndarray, taus: np.ndarray, order: int, backend=None) -> np.ndarray:
    """Log marginal likelihood for each row of ``betas``/``taus`` at a fixed order."""
    if model.q > MAX_Q:
        raise ScaleLimit(f"marginal quadrature handles q <= {MAX_Q}, got q = {model.q}")
    fam, link = _codes(model)
    fn = backend or kernels.log_marginal_batch
    betas = np.asarray(betas, dtype=float)
    taus = np.asarray(taus, dtype=float)
    eta0 = np.ascontiguousarray(betas @ model.X.T)
    tau_col = np.ascontiguousarray(taus[:, model.block_of_column])
    Z = np.ascontiguousarray(model.Z)
    y = np.ascontiguousarray(model.y_array)
    m = np.ascontiguousarray(model.m_array)
    x, lw = _gh_rule(order)

    def run(sl):
        return fn(eta0[sl], tau_col[sl], Z, y, m, fam, link, x, lw)

    N = eta0.shape[0]
    workers = _thread_cap()
    if workers == 1 or N < 2048:
        vals, status = run(slice(0, N))
    else:
        step = -(-N // workers)
        slices = [slice(s, min(N, s + step)) for s in range(0, N, step)]
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, slices))
        vals = np.concatenate([p[0] for p in parts])
        status = np.concatenate([p[1] for p in parts])
    if np.any(status):
        raise ModeSearchFailed(f"mode search failed at {int(np.sum(status))} of {N} points")
    return vals + _log_pmf_constant(model)


def marginal_loglik_estimate(beta, tau, model: ValidatedModel, *, rel_tol: float = 1e-8, start_order: int = 5) -> MarginalEstimate:
    """Adaptive Gauss-Hermite with node counts doubled until the value settles.

    Convergence is declared when successive likelihood values differ by
    less than ``rel_tol`` relatively; the order is capped per dimension.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    tau = np.atleast_2d(_tau_vector(model, tau))
    cap = ORDER_CAPS.get(model.q)
    if cap is None:
        raise ScaleLimit(f"marginal quadrature handles q <= {MAX_Q}, got q = {model.q}")
    order = start_order
    prev = float(_batch(model, beta, tau, order)[0])
    while True:
        order *= 2
        cur = float(_batch(model, beta, tau, order)[0])
        change = abs(math.expm1(cur - prev))
        if change < rel_tol:
            return MarginalEstimate(cur, order, change, True)
        if order * 2 > cap:
            return MarginalEstimate(cur, order, change, False)
        prev = cur


def marginal_loglik(beta, tau, model: ValidatedModel, *, rel_tol: float = 1e-8) -> float:
    """``log L(beta, tau | y)`` with the random effects integrated out."""
    est = marginal_loglik_estimate(beta, tau, model, rel_tol=rel_tol)
    if not est.converged:
        warnings.warn(
            f"quadrature stopped at order {est.order} with relative change {est.rel_change:.2e}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return est.log_value


# ---------------------------------------------------------------------------
# truncated normalizing constant
# ---------------------------------------------------------------------------


def clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes and weights on ``[-1, 1]`` for ``n + 1`` points (``n`` even)."""
    k = np.arange(n + 1)
    theta = k * math.pi / n
    x = -np.cos(theta)
    w = np.zeros(n + 1)
    for i in range(n + 1):
        s = 0.0
        for j in range(1, n // 2 + 1):
            b = 1.0 if 2 * j == n else 2.0
            s += b / (4.0 * j * j - 1.0) * math.cos(2.0 * j * theta[i])
        c = 1.0 if i in (0, n) else 2.0
        w[i] = c / n * (1.0 - s)
    return x, w


def _tau_rule(tau_window: tuple[float, float], points: int):
    """Decade panels in ``s = tau / (1 + tau)`` with an embedded coarse rule.

    Returns ``(tau, log_weight, log_weight_coarse)``; the coarse weights are
    ``-inf`` at nodes the coarse rule does not use.
    """
    lo, hi = tau_window
    if not 0 < lo < hi:
        raise ValueError("tau_window must satisfy 0 < lo < hi")
    edges = np.unique(np.concatenate([[lo, hi], 10.0 ** np.arange(math.ceil(math.log10(lo)), math.floor(math.log10(hi)) + 1)]))
    edges = edges[(edges >= lo) & (edges <= hi)]
    xf, wf = clenshaw_curtis(points)
    xc, wc = clenshaw_curtis(points // 2)
    taus, wfine, wcoarse = {}, {}, {}
    for a, b in zip(edges[:-1], edges[1:]):
        sa, sb = a / (1.0 + a), b / (1.0 + b)
        half = 0.5 * (sb - sa)
        for k, (x, w) in enumerate(zip(xf, wf)):
            s = sa + half * (x + 1.0)
            if k == 0:
                t = a
            elif k == points:
                t = b
            else:
                t = s / (1.0 - s)
            key = float(t)
            jac = (1.0 + t) ** 2  # d tau / d s
            taus[key] = t
            wfine[key] = wfine.get(key, 0.0) + half * w * jac
            if k % 2 == 0:
                wcoarse[key] = wcoarse.get(key, 0.0) + half * wc[k // 2] * jac
    keys = sorted(taus)
    tau = np.array(keys)
    lf = np.log(np.array([wfine[k] for k in keys]))
    with np.errstate(divide="ignore"):
        lc = np.log(np.array([wcoarse.get(k, 0.0) for k in keys]))
    return tau, lf, lc


def _beta_rule(boxes: Sequence[float], panel: float, nodes: int, growth: float = 0.0):
    """Gauss-Legendre panels on ``[-B_max, B_max]`` with breakpoints at every ``+-B_k``.

    Panel width is ``max(panel, growth * r)`` where ``r`` is the inner radius
    of the shell being split.
    """
    edges = [0.0]
    for b in boxes:
        start = edges[-1]
        width = max(panel, growth * start)
        k = max(1, math.ceil((b - start) / width - 1e-12))
        edges.extend(start + (b - start) * np.arange(1, k + 1) / k)
    edges = np.array(edges)
    x, w = np.polynomial.legendre.leggauss(nodes)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts.append(mid + half * x)
        wts.append(half * w)
    pos = np.concatenate(pts)
    wpos = np.concatenate(wts)
    return np.concatenate([-pos[::-1], pos]), np.concatenate([wpos[::-1], wpos])


def _log_prior_fn(model: ValidatedModel, prior) -> Callable[[np.ndarray], np.ndarray]:
    if prior is None:
        return model.blocks[0].log_density
    if isinstance(prior, JeffreysPrior):
        return lambda t: log_jeffreys_density(prior, 0, t)
    return prior


def truncated_cy(
    model: ValidatedModel,
    prior=None,
    half_widths: Sequence[float] = DEFAULT_BOXES,
    *,
    tau_window: tuple[float, float] = (1e-6, 1e4),
    beta_panel: float = 2.5,
    beta_growth: float = 0.25,
    beta_nodes: int = 4,
    tau_points: int = 8,
    gh_order: int = 6,
) -> list[QuadratureEstimate]:
    """Integral of ``pi(tau) L(beta, tau | y)`` over ``[-B, B]^p`` times ``tau_window``.

    ``prior`` is ``None`` (use the model's block prior), a
    :class:`JeffreysPrior`, or a callable returning the log prior density.
    The boxes share one nested grid, so each value is the previous one plus
    a nonnegative shell and the sequence is nondecreasing by construction.
    """
    if model.p > 2 or model.q > 2 or model.r != 1:
        raise ScaleLimit(f"truncated_cy needs p <= 2, q <= 2, r = 1 (got p={model.p}, q={model.q}, r={model.r})")
    boxes = [float(b) for b in half_widths]
    if not boxes or any(b <= 0 for b in boxes) or any(b2 <= b1 for b1, b2 in zip(boxes, boxes[1:])):
        raise ValueError("half_widths must be a positive increasing sequence")
    log_prior = _log_prior_fn(model, prior)

    tau, lw_tau, lw_tau_coarse = _tau_rule(tau_window, tau_points)
    b1d, w1d = _beta_rule(boxes, beta_panel, beta_nodes, beta_growth)
    grids = np.meshgrid(*([b1d] * model.p), indexing="ij")
    wgrids = np.meshgrid(*([np.log(w1d)] * model.p), indexing="ij")
    betas = np.stack([g.ravel() for g in grids], axis=1)
    lw_beta = np.sum(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    radius = np.max(np.abs(betas), axis=1)
    shell = np.searchsorted(np.array(boxes), radius - 1e-12 * boxes[-1])

    Nb, Nt = betas.shape[0], tau.size
    all_beta = np.repeat(betas, Nt, axis=0)
    all_tau = np.tile(tau, Nb)[:, None]
    logL = _batch(model, all_beta, all_tau, gh_order).reshape(Nb, Nt)
    lp = np.asarray(log_prior(tau), dtype=float)
    fine = logL + lp + lw_tau + lw_beta[:, None]
    coarse = logL + lp + lw_tau_coarse + lw_beta[:, None]
    top = float(np.max(fine))

    results = []
    acc_f, acc_c = [], []
    for k, b in enumerate(boxes):
        sel = shell == k
        acc_f.append(math.fsum(np.exp(fine[sel] - top).ravel()))
        acc_c.append(math.fsum(np.exp(coarse[sel] - top).ravel()))
        vf = math.fsum(acc_f)
        vc = math.fsum(acc_c)
        log_value = top + math.log(vf) if vf > 0 else -math.inf
        rel = abs(vf - vc) / vf if vf > 0 else math.inf
        value = math.exp(log_value) if log_value < 709 else math.inf
        results.append(
            QuadratureEstimate(value, log_value, (b,) * model.p, (int(np.sum(radius <= b + 1e-12 * b)), Nt, gh_order), rel)
        )
    return results


def ratio_diagnostics(estimates: Sequence[QuadratureEstimate]) -> list[tuple[float, float, float | None]]:
    """Rows ``(B, value, value_k / value_{k-1})``, computed on the log scale."""
    out = []
    prev = None
    for est in estimates:
        ratio = None if prev is None else math.exp(est.log_value - prev)
        out.append((est.box[0], est.value, ratio))
        prev = est.log_value
    return out


# ---------------------------------------------------------------------------
# finite-difference Fisher information
# ---------------------------------------------------------------------------


def fisher_fd_oracle(model: ValidatedModel, tau: float, *, beta=None, step: float = 0.05, order: int | None = None) -> float:
    """``-d^2/dtau^2 log L(beta_hat, tau | y)`` by Richardson-extrapolated central differences.

    Differences are taken in ``s = log tau`` with a fixed quadrature order so
    the function being differenced is smooth.
    """
    if model.r != 1 or model.q > 2:
        raise ScaleLimit("fisher_fd_oracle expects one block with q <= 2")
    if not tau > 0:
        raise NonpositiveTau("tau must be strictly positive")
    if beta is None:
        beta = fit_model_glm(model).beta_hat
    beta = np.asarray(beta, dtype=float)
    order = order or (64 if model.q == 1 else 32)
    s0 = math.log(tau)

    def g(s):
        return _batch(model, beta[None, :], np.array([[math.exp(s)]]), order)[0]

    def derivs(h):
        gp, g0, gm = g(s0 + h), g(s0), g(s0 - h)
        return (gp - gm) / (2 * h), (gp - 2 * g0 + gm) / (h * h)

    d1a, d2a = derivs(step)
    d1b, d2b = derivs(step / 2)
    d1 = (4 * d1b - d1a) / 3
    d2 = (4 * d2b - d2a) / 3
    # g_tt = (g_ss - g_s) / tau^2
    return -(d2 - d1) / (tau * tau)
