"""Approximate independence Jeffreys prior for the random-effect precisions.

For block ``i`` with levels ``m = 1..q_i`` the approximate Fisher
information is ``sum_m {1/(2 tau^2) - 1/(2 (tau + c_im)^2)}`` where
``c_im = sum_k z_imk^2 t'(x_k' beta_hat)`` and ``beta_hat`` is the GLM fit
without random effects.  The prior is the square root of that sum and is
dominated by ``(sum_m sqrt(c_im) / 2)^(1/2) tau^(-5/4)``.

The module also carries the two closed-form comparison priors for the
single random intercept model and the root finder for the point where the
two priors cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveTau, OutOfScope, SeparationError, WrongLink
from .glm import fit_model_glm
from .model import FamilyKind, LinkKind, ValidatedModel


@dataclass(frozen=True)
class ConditionalMoments:
    u_tilde: float
    v_tilde: float


@dataclass(frozen=True)
class JeffreysPrior:
    c_constants: tuple[np.ndarray, ...]
    beta_hat: np.ndarray

    @property
    def envelope_scale(self) -> np.ndarray:
        return np.array([math.sqrt(float(np.sum(np.sqrt(c))) / 2.0) for c in self.c_constants])

    @property
    def r(self) -> int:
        return len(self.c_constants)


def _positive_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise NonpositiveTau("tau must be strictly positive")
    return tau


def _unit_mean_derivative(eta, m, family, link):
    if family.kind is FamilyKind.POISSON:
        return np.exp(eta)
    return m * link.mean_derivative(eta)


def _mean(eta, m, family, link):
    if family.kind is FamilyKind.POISSON:
        return np.exp(eta)
    return m * link.cdf(eta)


def approx_conditional_moments(y, m, X, z, beta, tau, family, link, beta_hat=None) -> ConditionalMoments:
    """Approximate posterior mean and variance of one random-effect level.

    ``y``, ``m``, ``X`` and ``z`` hold the observations of the level (``z``
    being the level's column of ``Z`` restricted to those rows).  The mean
    uses ``beta``; the curvature uses ``beta_hat`` (defaults to ``beta``).
    """
    if not tau > 0:
        raise NonpositiveTau("tau must be strictly positive")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.size == 0:
        return ConditionalMoments(0.0, 1.0 / tau)
    X = np.asarray(X, dtype=float).reshape(y.size, -1)
    m = np.ones_like(y) if m is None else np.asarray(m, dtype=float)
    beta = np.asarray(beta, dtype=float)
    beta_hat = beta if beta_hat is None else np.asarray(beta_hat, dtype=float)
    resid = y - _mean(X @ beta, m, family, link)
    u = float(np.sum(z * resid)) / tau
    curv = float(np.sum(z * z * _unit_mean_derivative(X @ beta_hat, m, family, link)))
    return ConditionalMoments(u, 1.0 / (tau + curv))


def build_jeffreys(model: ValidatedModel, **fit_kwargs) -> JeffreysPrior:
    """Fit the fixed-effects GLM and compute every ``c_im``.

    Raises
    ------
    SeparationError
        The GLM maximum likelihood estimate does not exist.
    RankDeficient
        ``X`` lacks full column rank.
    WrongLink
        The link is not canonical (logit for binomial data, log for Poisson).
    """
    canonical = LinkKind.LOG if model.family.kind is FamilyKind.POISSON else LinkKind.LOGIT
    if model.link.kind is not canonical:
        raise WrongLink(f"the Jeffreys construction assumes the canonical link, got {model.link}")
    fit = fit_model_glm(model, **fit_kwargs)
    if fit.separation_flag:
        raise SeparationError("the GLM MLE does not exist (separated data)")
    tprime = _unit_mean_derivative(model.X @ fit.beta_hat, model.m_array, model.family, model.link)
    Z = model.Z
    consts = []
    for j in range(model.r):
        cols = model.block_columns(j)
        consts.append(np.array([float(np.sum(Z[:, c] ** 2 * tprime)) for c in cols]))
    return JeffreysPrior(tuple(consts), fit.beta_hat)


def _info_terms(c: np.ndarray, tau: np.ndarray) -> np.ndarray:
    # 1/(2 t^2) - 1/(2 (t+c)^2) rewritten without cancellation
    t = tau[..., None]
    return c * (2.0 * t + c) / (2.0 * t * t * (t + c) ** 2)


def fisher_info_tau(jp: JeffreysPrior, block: int, tau):
    """Approximate Fisher information for the precision of ``block``."""
    tau = _positive_tau(tau)
    return np.sum(_info_terms(jp.c_constants[block], tau), axis=-1)


def jeffreys_density(jp: JeffreysPrior, block: int, tau):
    return np.sqrt(fisher_info_tau(jp, block, tau))


def log_jeffreys_density(jp: JeffreysPrior, block: int, tau):
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(fisher_info_tau(jp, block, tau))


def jeffreys_envelope(jp: JeffreysPrior, block: int, tau):
    """Power-prior bound ``(sum_m sqrt(c_im)/2)^(1/2) tau^(-5/4)``."""
    tau = _positive_tau(tau)
    return jp.envelope_scale[block] * tau ** -1.25


def approx_score_variance(jp: JeffreysPrior, block: int, tau, u_tilde=None):
    """Conditional variance of the complete-data score for ``tau``.

    With ``u_tilde`` omitted the mean terms are dropped, which gives the
    quantity used by the prior; passing the per-level means keeps them.
    """
    tau = _positive_tau(tau)
    v = 1.0 / (tau[..., None] + jp.c_constants[block])
    extra = 0.0 if u_tilde is None else v * np.asarray(u_tilde, dtype=float) ** 2
    return np.sum(v * v / 2.0 + extra, axis=-1)


# ---------------------------------------------------------------------------
# single random intercept comparison
# ---------------------------------------------------------------------------


def _intercept_constant(family, n: int, beta_hat: float) -> float:
    kind = str(getattr(family, "kind", family)).lower().split(".")[-1]
    kind = getattr(getattr(family, "kind", None), "value", kind)
    if kind in ("bernoulli", "binary"):
        e = math.exp(-abs(beta_hat))
        return n * e / (1.0 + e) ** 2
    if kind == "poisson":
        return n * math.exp(beta_hat)
    raise OutOfScope(f"closed forms exist only for binary and Poisson intercept models, got {family!r}")


def nk_density(family, n: int, beta_hat: float, tau):
    """Comparison prior ``(1 + c tau)^(-1)`` with unit proportionality constant."""
    c = _intercept_constant(family, n, beta_hat)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise NonpositiveTau("tau must be nonnegative")
    return 1.0 / (1.0 + c * tau)


def intercept_jeffreys(family, n: int, beta_hat: float) -> JeffreysPrior:
    """Jeffreys prior of the one-intercept, one-level model."""
    c = _intercept_constant(family, n, beta_hat)
    return JeffreysPrior((np.array([c]),), np.array([beta_hat]))


def crossover_log_ratio(family, n: int, beta_hat: float, tau):
    """``log pi_J(tau) - log pi_NK(tau)``; strictly decreasing in ``tau``."""
    c = _intercept_constant(family, n, beta_hat)
    tau = _positive_tau(tau)
    log_j = 0.5 * (math.log(c) + np.log(2.0 * tau + c) - math.log(2.0) - 2.0 * np.log(tau) - 2.0 * np.log(tau + c))
    return log_j + np.log1p(c * tau)


def crossover_tau0(family, n: int, beta_hat: float, *, rel_tol: float = 1e-10) -> float:
    """Unique root of :func:`crossover_log_ratio` by bracketing bisection in ``log tau``."""
    def f(t):
        return float(crossover_log_ratio(family, n, beta_hat, t))

    lo = hi = 1.0
    while f(lo) <= 0.0:
        lo /= 10.0
    while f(hi) >= 0.0:
        hi *= 10.0
    while (hi - lo) > rel_tol * hi:
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def jeffreys_for_model(model: ValidatedModel) -> JeffreysPrior:
    """Like :func:`build_jeffreys` but refuses anything but one random intercept."""
    if not (model.p == 1 and model.q == 1 and model.r == 1):
        raise OutOfScope("the closed-form comparison needs p = q = q_1 = r = 1")
    return build_jeffreys(model)
