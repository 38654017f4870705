"""Fixed-effects GLM fit by iteratively reweighted least squares."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NotConvergedWarning, RankDeficient, WrongLink
from .linalg import as_rational_matrix, column_rank
from .lp import exists_positive_null
from .model import Family, FamilyKind, Link, LinkKind, ValidatedModel, _coerce_family, _coerce_link


@dataclass(frozen=True)
class GlmFit:
    beta_hat: np.ndarray
    converged: bool
    iterations: int
    separation_flag: bool
    loglik: float
    score_norm: float


def _mle_exists(y, m, X_rows, family: Family) -> bool:
    """Existence of a finite MLE as a positive-null-vector problem.

    Rows with ``y = 0`` enter as ``x_i``, saturated rows as ``-x_i`` and
    interior rows (or positive Poisson counts) as both, matching the
    signed augmented design of the binomial construction.
    """
    lower, upper, both = [], [], []
    for i, yi in enumerate(y):
        if yi == 0:
            lower.append(i)
        elif family.kind is not FamilyKind.POISSON and yi == m[i]:
            upper.append(i)
        else:
            both.append(i)
    rows = [X_rows[i] for i in lower + both]
    rows += [[-v for v in X_rows[i]] for i in upper + both]
    return exists_positive_null(rows).exists


def _moments(eta, m, family: Family, link: Link):
    """Mean, d(mean)/d(eta) and variance for each observation."""
    if family.kind is FamilyKind.POISSON:
        mu = np.exp(eta)
        return mu, mu, mu
    if link.kind is LinkKind.LOGIT:
        f = special.expit(eta)
        dens = f * (1.0 - f)
    elif link.kind is LinkKind.PROBIT:
        f = special.ndtr(eta)
        dens = np.exp(-0.5 * eta * eta) / np.sqrt(2.0 * np.pi)
    else:
        raise WrongLink(f"GLM fitting supports logit and probit binomial links, got {link}")
    var = m * f * (1.0 - f)
    return m * f, m * dens, var


def loglik(beta, y, m, X, family: Family, link: Link) -> float:
    """Log-likelihood without the combinatorial constants."""
    eta = X @ beta
    if family.kind is FamilyKind.POISSON:
        return float(np.sum(y * eta - np.exp(eta)))
    if link.kind is LinkKind.LOGIT:
        lf, lg = special.log_expit(eta), special.log_expit(-eta)
    else:
        lf, lg = special.log_ndtr(eta), special.log_ndtr(-eta)
    return float(np.sum(y * lf + (m - y) * lg))


def _initial_beta(y, m, X, family: Family, link: Link) -> np.ndarray:
    beta = np.zeros(X.shape[1])
    ones = np.flatnonzero(np.all(X == 1.0, axis=0))
    if ones.size == 0:
        return beta
    if family.kind is FamilyKind.POISSON:
        beta[ones[0]] = np.log((y.sum() + 0.5) / len(y))
        return beta
    pbar = (y.sum() + 0.5) / (m.sum() + 1.0)
    beta[ones[0]] = special.logit(pbar) if link.kind is LinkKind.LOGIT else special.ndtri(pbar)
    return beta


def fit_glm(
    y,
    m,
    X,
    family,
    link=None,
    *,
    tol_deviance: float = 1e-10,
    tol_score: float = 1e-8,
    max_iter: int = 100,
) -> GlmFit:
    """IRLS with step-halving.

    Stops when the relative deviance change falls below ``tol_deviance``
    or the max-norm of the score falls below ``tol_score``.  When the
    data are separated (no finite MLE) the last iterate is returned with
    ``separation_flag`` set and ``converged`` false.

    Raises
    ------
    RankDeficient
        ``X`` does not have full column rank.
    """
    family = _coerce_family(family)
    link = _coerce_link(link, family)
    if family.kind is FamilyKind.POISSON and link.kind is not LinkKind.LOG:
        raise WrongLink("Poisson fits use the log link only")

    X_rows, _ = as_rational_matrix(X)
    rank = column_rank(X_rows)
    if not rank.full_column_rank:
        raise RankDeficient(f"rank(X) = {rank.rank} < {rank.columns}")

    y = np.asarray(y, dtype=float)
    Xf = np.array([[float(v) for v in row] for row in X_rows])
    if family.kind is FamilyKind.POISSON:
        m_arr = np.ones_like(y)
    else:
        m_arr = np.ones_like(y) if m is None else np.asarray(m, dtype=float)
    separated = not _mle_exists(y.astype(int), m_arr.astype(int), X_rows, family)

    beta = _initial_beta(y, m_arr, Xf, family, link)
    ll = loglik(beta, y, m_arr, Xf, family, link)
    converged = False
    polish = 0
    it = 0
    score_norm = np.inf
    for it in range(1, max_iter + 1):
        eta = Xf @ beta
        mu, dmu, var = _moments(eta, m_arr, family, link)
        var = np.maximum(var, 1e-300)
        score = Xf.T @ ((y - mu) * dmu / var)
        score_norm = float(np.max(np.abs(score)))
        if score_norm < tol_score or polish >= 10:
            converged = True
            break
        w = np.maximum(dmu * dmu / var, 1e-300)
        z = eta + (y - mu) / np.maximum(dmu, 1e-300)
        sw = np.sqrt(w)
        target, *_ = np.linalg.lstsq(Xf * sw[:, None], z * sw, rcond=None)
        step = target - beta
        for _ in range(60):
            cand = beta + step
            ll_new = loglik(cand, y, m_arr, Xf, family, link)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        beta = cand
        dev_change = abs(ll_new - ll) / (abs(ll_new) + 0.05)
        ll = ll_new
        # a small deviance change still gets a few Newton polishing steps
        if dev_change < tol_deviance:
            polish += 1

    if separated:
        converged = False
    elif not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", NotConvergedWarning, stacklevel=2)
    return GlmFit(beta, converged, it, separated, ll, score_norm)


def fit_model_glm(model: ValidatedModel, **kwargs) -> GlmFit:
    """Fit the GLM obtained by dropping the random effects from ``model``."""
    X = model.X_exact if model.X_is_exact else model.X
    m = None if model.m is None else list(model.m)
    return fit_glm(model.y_array, m, X, model.family, model.link, **kwargs)
