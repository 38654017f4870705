import numpy as np
import pytest

from propriety_kit.errors import RankDeficient
from propriety_kit.glm import fit_glm, fit_model_glm


def test_bernoulli_intercept():
    y = [1, 1, 1] + [0] * 7
    fit = fit_glm(y, None, [[1]] * 10, "bernoulli", "logit")
    assert fit.converged and not fit.separation_flag
    assert fit.beta_hat[0] == pytest.approx(np.log(3 / 7), abs=1e-9)


def test_poisson_intercept():
    fit = fit_glm([1, 2, 3], None, [[1]] * 3, "poisson", "log")
    assert fit.beta_hat[0] == pytest.approx(np.log(2), abs=1e-9)


def test_separated_binary():
    fit = fit_glm([0, 0, 1, 1], None, [[1, -2], [1, -1], [1, 1], [1, 2]], "bernoulli", "logit")
    assert fit.separation_flag and not fit.converged


def test_rank_deficient():
    with pytest.raises(RankDeficient):
        fit_glm([0, 1], None, [[1, 2], [1, 2]], "bernoulli")


def test_score_equations(oneway, poisson_oneway):
    for model in (oneway, poisson_oneway.replace(y=[1, 0, 3, 2, 0, 1])):
        fit = fit_model_glm(model)
        assert fit.converged
        eta = model.X @ fit.beta_hat
        mu = np.exp(eta) if model.family.kind.value == "poisson" else model.m_array / (1 + np.exp(-eta))
        assert np.max(np.abs(model.X.T @ (model.y_array - mu))) < 1e-7


def test_probit_matches_direct_optimizer(oneway):
    from scipy import optimize, stats

    model = oneway.replace(link="probit")
    fit = fit_model_glm(model)

    def nll(b):
        p = stats.norm.cdf(model.X @ b)
        return -np.sum(stats.binom.logpmf(model.y_array, model.m_array, p))

    ref = optimize.minimize(nll, np.zeros(2), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
    assert np.allclose(fit.beta_hat, ref.x, atol=1e-5)


def test_reparameterization_invariance(oneway):
    fit_a = fit_model_glm(oneway)
    T = np.array([[1.0, 0.5], [0.0, 2.0]])
    fit_b = fit_glm(oneway.y_array, list(oneway.m), oneway.X @ T, "binomial", "logit")
    assert np.allclose(oneway.X @ fit_a.beta_hat, oneway.X @ T @ fit_b.beta_hat, atol=1e-8)
