import math

import numpy as np
import pytest
from scipy import special

from propriety_kit import oracle
from propriety_kit.errors import NonpositiveTau, OutOfScope, ScaleLimit
from propriety_kit.jeffreys import build_jeffreys, fisher_info_tau
from propriety_kit.model import GlmmModel, PriorBlock, user_cdf, validate

from conftest import oneway_binomial
from oracles import complete_loglik_ref, trapezoid_marginal_1d, trapezoid_marginal_2d


def _single_poisson(y=0):
    return validate(GlmmModel(y=[y], X=[[1]], Z=[[1]], blocks=[PriorBlock(1, 1, 1)], family="poisson"))


def test_no_data_normal_term():
    assert oracle.random_effect_logdensity([1.0], [0.0], [1]) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_single_bernoulli_complete_loglik():
    model = validate(GlmmModel(y=[1], X=[[1]], Z=[[1]], blocks=[PriorBlock(1, 1, 1)], family="bernoulli"))
    assert oracle.complete_loglik([0.0], [1.0], [0.0], model) == pytest.approx(math.log(0.5) - 0.5 * math.log(2 * math.pi))


def test_complete_loglik_against_scipy(twoway, oneway):
    rng = np.random.default_rng(4)
    for model in (twoway, oneway, oneway.replace(link="probit")):
        # moderate points: the reference works on the probability scale
        for _ in range(20):
            beta = rng.normal(0, 0.5, size=model.p)
            tau = np.exp(rng.normal(size=model.r))
            u = rng.normal(0, 1.0, size=model.q)
            tau_col = tau[model.block_of_column]
            ref = complete_loglik_ref(beta, tau_col, u, model.y_array, model.m_array, model.X, model.Z, "binomial", model.link.kind.value)
            assert oracle.complete_loglik(beta, tau, u, model) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_nonpositive_tau_rejected(oneway):
    with pytest.raises(NonpositiveTau):
        oracle.complete_loglik([0, 0], [0.0], [0, 0], oneway)


def test_single_poisson_marginal_against_trapezoid():
    model = _single_poisson()
    ref = trapezoid_marginal_1d(lambda u: -math.exp(u), 1.0)
    assert oracle.marginal_loglik([0.0], [1.0], model) == pytest.approx(ref, abs=1e-6)


def test_oneway_marginal_against_2d_trapezoid(oneway):
    y, m, X, Z = oneway.y_array, oneway.m_array, oneway.X, oneway.Z
    const = oracle._log_pmf_constant(oneway)
    for beta, tau in [((-1.0, 0.5), 1.0), ((0.5, -0.2), 0.3), ((-3.0, 1.2), 4.0)]:
        eta0 = X @ np.array(beta)

        def ll(U):
            eta = eta0 + U @ Z.T
            return np.sum(y * special.log_expit(eta) + (m - y) * special.log_expit(-eta), axis=1) + const

        ref = trapezoid_marginal_2d(ll, tau)
        assert oracle.marginal_loglik(beta, [tau], oneway) == pytest.approx(ref, abs=1e-6)


def test_zero_z_marginal_is_fixed_effects_likelihood(oneway):
    model = oneway.replace(Z=[[0, 0]] * 6)
    beta = np.array([-0.7, 0.4])
    ref = oracle.data_loglik(beta, np.zeros(2), model)
    assert oracle.marginal_loglik(beta, [0.8], model) == pytest.approx(ref, abs=1e-12)


def test_logit_reflection_symmetry(oneway):
    flipped = oneway.replace(y=[m - v for m, v in zip(oneway.m, oneway.y)], X=-oneway.X, Z=-oneway.Z)
    for beta, tau in [((0.3, -0.4), 1.5), ((-2.0, 0.9), 0.2)]:
        assert oracle.marginal_loglik(beta, [tau], oneway) == pytest.approx(oracle.marginal_loglik(beta, [tau], flipped), abs=1e-10)


def _three_level(twoway):
    # first random-effect block of the two-way design only (q = 3)
    return twoway.replace(Z=[row[:3] for row in twoway.Z_exact], blocks=[PriorBlock(3, "1.5", "0.1")])


def test_permutation_invariance(twoway):
    model = _three_level(twoway)
    perm = [4, 2, 0, 5, 1, 3]
    permuted = model.replace(
        y=[model.y[i] for i in perm], m=[model.m[i] for i in perm],
        X=[model.X_exact[i] for i in perm], Z=[model.Z_exact[i] for i in perm],
    )
    beta, tau = (-0.4, 0.3), (0.7,)
    assert oracle.marginal_loglik(beta, tau, model) == pytest.approx(oracle.marginal_loglik(beta, tau, permuted), abs=1e-10)


def test_marginal_scale_limit(twoway):
    with pytest.raises(ScaleLimit):
        oracle.marginal_loglik((0, 0), (1.0, 1.0), twoway)


def test_user_cdf_out_of_scope(oneway):
    with pytest.raises(OutOfScope):
        oracle.marginal_loglik([0, 0], [1.0], oneway_binomial(link=user_cdf(3)))


def test_truncated_cy_scale_limit(twoway):
    with pytest.raises(ScaleLimit):
        oracle.truncated_cy(twoway)


def test_truncated_cy_monotone_in_box_and_window(oneway):
    est = oracle.truncated_cy(oneway, half_widths=(2, 4, 6), tau_window=(1e-2, 1e2))
    vals = [e.value for e in est]
    assert all(v >= 0 for v in vals) and vals == sorted(vals)
    assert all(e.rel_error_est >= 0 for e in est)
    wider = oracle.truncated_cy(oneway, half_widths=(2, 4, 6), tau_window=(1e-3, 1e3))
    assert all(w.value >= v for w, v in zip(wider, vals))


def test_truncated_cy_diverges_at_boundary_exponent():
    model = oneway_binomial(a="-1", b=0)
    vals = [oracle.truncated_cy(model, half_widths=(3,), tau_window=(lo, 1e2))[0].value for lo in (1e-2, 1e-4, 1e-6, 1e-8)]
    steps = np.diff(vals)
    assert np.all(steps > 0)
    # the integrand behaves like 1/tau near zero: equal gains per decade
    assert steps[-1] > 0.9 * steps[0]


def test_truncated_cy_accepts_jeffreys(oneway):
    jp = build_jeffreys(oneway)
    est = oracle.truncated_cy(oneway, jp, half_widths=(2, 4), tau_window=(1e-2, 1e2))
    assert 0 < est[0].value <= est[1].value


def test_ratio_diagnostics_rows(oneway):
    est = oracle.truncated_cy(oneway, half_widths=(2, 4), tau_window=(1e-2, 1e2))
    rows = oracle.ratio_diagnostics(est)
    assert rows[0][2] is None
    assert rows[1][2] == pytest.approx(est[1].value / est[0].value)


def test_fisher_fd_single_level_within_25_percent():
    # y = 0 has no finite intercept MLE, so one count of 1 is used
    model = _single_poisson(1)
    jp = build_jeffreys(model)
    fd = oracle.fisher_fd_oracle(model, 1.0)
    assert abs(fd / float(fisher_info_tau(jp, 0, 1.0)) - 1) < 0.25


def test_fisher_fd_tail_ratio_tends_to_one():
    model = _single_poisson(1)
    jp = build_jeffreys(model)
    ratios = [oracle.fisher_fd_oracle(model, t) / float(fisher_info_tau(jp, 0, t)) for t in (1e2, 1e3, 1e4)]
    errs = [abs(r - 1) for r in ratios]
    assert errs[-1] < 0.01
    assert errs == sorted(errs, reverse=True)


def test_fisher_fd_without_random_effect_is_zero():
    model = validate(GlmmModel(y=[1, 2], X=[[1], [1]], Z=[[0], [0]], blocks=[PriorBlock(1, 1, 1)], family="poisson"))
    assert oracle.fisher_fd_oracle(model, 1.0) == pytest.approx(0.0, abs=1e-8)


def test_marginal_order_doubles_until_settled(oneway):
    est = oracle.marginal_loglik_estimate([0.2, -0.1], [1.0], oneway)
    assert est.converged and est.rel_change < 1e-8


@pytest.mark.slow
def test_steeper_prior_tail_settles_by_fifty():
    # the beta tail decays like B^{-2(a - p/2)}; with a = 3 it is gone by B = 50
    rows = oracle.ratio_diagnostics(oracle.truncated_cy(oneway_binomial(a="3")))
    diags = [abs(r - 1) for _, _, r in rows[1:]]
    assert diags[-1] < 1e-3
    assert diags == sorted(diags, reverse=True)
