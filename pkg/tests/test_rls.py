import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lure_pcac.numerics import f_inv_cdf
from lure_pcac.rls import (
    RlsConfig,
    RlsConfigError,
    RlsState,
    extract_model,
    forgetting_factor,
    regressor,
    rls_update,
    vectorize_model,
)

from oracles import batch_least_squares, random_arx_io, regressor_direct


def _feed(state, ys, us):
    errs = []
    for y, u in zip(ys, us):
        errs.append(rls_update(state, y))
        state.push_io(y, u)
    return errs


# -- configuration ---------------------------------------------------------

def test_config_fills_scalars():
    cfg = RlsConfig(order=2, p=1, m=1, theta0=0.5, psi0=3.0)
    assert cfg.nparams == 4
    np.testing.assert_array_equal(cfg.theta0, np.full(4, 0.5))
    np.testing.assert_array_equal(cfg.psi0, 3.0 * np.eye(4))


@pytest.mark.parametrize("kwargs", [
    dict(order=0),
    dict(order=2, psi0=-1.0),
    dict(order=2, psi0=np.diag([1.0, 1.0, 1.0, 0.0])),
    dict(order=2, theta0=np.zeros(3)),
    dict(order=2, tau_n=40, tau_d=40),
    dict(order=2, tau_n=0, tau_d=10),
    dict(order=2, p=2, m=1, tau_n=2, tau_d=5),
    dict(order=2, alpha=0.0),
    dict(order=2, eta=-0.1),
])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(RlsConfigError):
        RlsConfig(**kwargs)


# -- regressor -------------------------------------------------------------

def test_regressor_zero_history():
    phi = regressor([np.zeros(1)], [np.zeros(1)], 1, 1, 1)
    np.testing.assert_array_equal(phi, np.zeros((1, 2)))


def test_regressor_scalar_substitution():
    np.testing.assert_array_equal(regressor([[2.0]], [[3.0]], 1, 1, 1), [[-2.0, 3.0]])


def test_regressor_kronecker_layout():
    phi = regressor([np.array([1.0, 0.0])], [np.array([5.0])], 1, 2, 1)
    expected = np.kron(np.array([[-1.0, 0.0, 5.0]]), np.eye(2))
    np.testing.assert_array_equal(phi, expected)
    theta = np.arange(1.0, 7.0)
    # vec identity: phi theta = -F1 y + G1 u with F1, G1 unstacked by columns
    model = extract_model(theta, 1, 2, 1)
    np.testing.assert_allclose(phi @ theta,
                               -model.F[0] @ [1.0, 0.0] + model.G[0] @ [5.0], atol=1e-15)


def test_regressor_dimension_mismatch():
    with pytest.raises(ValueError):
        regressor([np.zeros(3)], [np.zeros(1)], 1, 2, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
def test_prediction_equals_arx_form(n, p, m, seed):
    rng = np.random.default_rng(seed)
    ys = rng.standard_normal((n, p))
    us = rng.standard_normal((n, m))
    theta = rng.standard_normal(n * p * (p + m))
    phi = regressor(list(ys), list(us), n, p, m)
    model = extract_model(theta, n, p, m)
    direct = sum(-model.F[i] @ ys[i] + model.G[i] @ us[i] for i in range(n))
    assert np.max(np.abs(phi @ theta - direct)) <= 1e-12 * max(1.0, np.max(np.abs(direct)))


# -- vec / unvec -----------------------------------------------------------

def test_extract_model_examples():
    z = extract_model(np.zeros(12), 2, 2, 1)
    assert all(np.all(F == 0) for F in z.F) and all(np.all(G == 0) for G in z.G)
    m = extract_model([1.0, 2.0, 3.0, 4.0], 2, 1, 1)
    assert [F[0, 0] for F in m.F] == [1.0, 2.0]
    assert [G[0, 0] for G in m.G] == [3.0, 4.0]
    with pytest.raises(ValueError):
        extract_model(np.zeros(5), 2, 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
def test_extract_vectorize_round_trip(n, p, m, seed):
    theta = np.random.default_rng(seed).standard_normal(n * p * (p + m))
    np.testing.assert_array_equal(vectorize_model(extract_model(theta, n, p, m)), theta)


# -- update ----------------------------------------------------------------

def test_update_hand_example():
    cfg = RlsConfig(order=1, theta0=0.0, psi0=1.0, eta=0.0)
    st_ = RlsState(cfg)
    phi = np.array([[1.0, 0.0]])
    rls_update(st_, [1.0], phi=phi)
    assert st_.psi[0, 0] == pytest.approx(0.5)
    assert st_.theta[0] == pytest.approx(0.5)


def test_zero_innovation_leaves_theta():
    cfg = RlsConfig(order=2, theta0=0.3, psi0=2.0, eta=0.0)
    st_ = RlsState(cfg)
    phi = np.array([[0.5, -1.0, 2.0, 0.25]])
    y = phi @ st_.theta
    th = st_.theta.copy()
    rls_update(st_, y, phi=phi)
    np.testing.assert_allclose(st_.theta, th, atol=1e-15)


@pytest.mark.parametrize("n,p,m", [(1, 1, 1), (3, 1, 1), (2, 2, 1), (2, 1, 2), (2, 2, 2)])
def test_recursive_matches_batch_without_forgetting(n, p, m):
    rng = np.random.default_rng(100 * n + 10 * p + m)
    ys, us = random_arx_io(rng, n, p, m, 150)
    npar = n * p * (p + m)
    cfg = RlsConfig(order=n, p=p, m=m, theta0=rng.standard_normal(npar) * 0.1,
                    psi0=0.5, eta=0.0)
    st_ = RlsState(cfg)
    phis = [regressor_direct(ys, us, k, n, p, m) for k in range(len(ys))]
    ref = batch_least_squares(phis, ys, cfg.theta0, cfg.psi0)
    for k, (y, u) in enumerate(zip(ys, us)):
        rls_update(st_, y)
        st_.push_io(y, u)
        rel = np.linalg.norm(st_.theta - ref[k]) / max(np.linalg.norm(ref[k]), 1e-300)
        assert rel < 1e-8, k


def test_exact_arx_coefficients_recovered():
    rng = np.random.default_rng(4)
    f, g = [-0.5, 0.2], [1.0, 0.4]
    us = rng.standard_normal(300)
    ys = np.zeros(300)
    for k in range(300):
        ys[k] = sum(-f[i] * ys[k - 1 - i] + g[i] * us[k - 1 - i] for i in range(2) if k - 1 - i >= 0)
    st_ = RlsState(RlsConfig(order=2, theta0=0.0, psi0=1e6, eta=0.0))
    _feed(st_, ys[:, None], us[:, None])
    np.testing.assert_allclose(st_.theta, f + g, atol=1e-6)


def test_information_matrix_stays_positive_definite_with_forgetting():
    rng = np.random.default_rng(9)
    ys, us = random_arx_io(rng, 2, 1, 1, 700)
    ys[400:] *= 8.0  # a burst that triggers forgetting
    st_ = RlsState(RlsConfig(order=2, theta0=0.0, psi0=1.0, tau_n=10, tau_d=50, eta=0.5,
                             alpha=0.05))
    betas = []
    for y, u in zip(ys, us):
        rls_update(st_, y)
        st_.push_io(y, u)
        betas.append(st_.beta)
        assert np.linalg.eigvalsh(st_.psi)[0] > 0
        np.testing.assert_array_equal(st_.psi, st_.psi.T)
    assert max(betas) > 1.0
    assert all(b == 1.0 for b in betas[:50])
    assert len(st_.errors) == 51


# -- forgetting factor -----------------------------------------------------

def test_forgetting_is_off_before_denominator_window():
    cfg = RlsConfig(order=1, tau_n=5, tau_d=25, eta=0.1, alpha=0.002)
    beta, deg = forgetting_factor([np.array([1.0])] * 10, 10, cfg)
    assert beta == 1.0 and not deg


def test_forgetting_degenerate_zero_window():
    cfg = RlsConfig(order=1, tau_n=5, tau_d=25, eta=0.1, alpha=0.002)
    beta, deg = forgetting_factor([np.zeros(1)] * 26, 30, cfg)
    assert beta == 1.0 and deg


def test_forgetting_degenerate_singular_covariance():
    cfg = RlsConfig(order=1, p=2, m=1, tau_n=5, tau_d=25, eta=0.1, alpha=0.002)
    rng = np.random.default_rng(0)
    errs = [np.array([e, 2 * e]) for e in rng.standard_normal(26)]
    beta, deg = forgetting_factor(errs, 30, cfg)
    assert beta == 1.0 and deg


def _window_with_ratio(tau_n, tau_d, scale):
    # quiet +-1 samples followed by a louder +-scale tail of tau_n + 1 samples
    quiet = np.array([(-1.0) ** i for i in range(tau_d - tau_n)])
    loud = scale * np.array([(-1.0) ** i for i in range(tau_n + 1)])
    w = np.concatenate([quiet, loud])
    ratio = np.var(w[-(tau_n + 1):], ddof=1) / np.var(w, ddof=1)
    return [np.array([e]) for e in w], ratio


def test_forgetting_scalar_formula():
    # nested windows cap the variance ratio at tau_d / tau_n, so a moderate
    # significance level is needed for the test statistic to clear the threshold
    tau_n, tau_d, alpha, eta = 5, 25, 0.2, 0.1
    cfg = RlsConfig(order=1, tau_n=tau_n, tau_d=tau_d, eta=eta, alpha=alpha)
    errs, ratio = _window_with_ratio(tau_n, tau_d, 10.0)
    beta, deg = forgetting_factor(errs, 40, cfg)
    q = f_inv_cdf(tau_n, tau_d, 1 - alpha)
    expected = 1 + eta * max(np.sqrt(ratio) - np.sqrt(q), 0.0)
    assert not deg
    assert expected > 1.0
    assert beta == pytest.approx(expected, rel=1e-12)


def test_nested_window_ratio_bound():
    _, ratio = _window_with_ratio(5, 25, 1e6)
    assert ratio <= 25 / 5


def test_forgetting_multivariate_formula():
    p, tau_n, tau_d, alpha, eta = 2, 6, 30, 0.01, 0.2
    cfg = RlsConfig(order=1, p=p, m=1, tau_n=tau_n, tau_d=tau_d, eta=eta, alpha=alpha)
    rng = np.random.default_rng(2)
    w = rng.standard_normal((tau_d + 1, p))
    w[-(tau_n + 1):] *= 6.0
    beta, deg = forgetting_factor(list(w), 50, cfg)
    a = (tau_n + tau_d - p - 1) * (tau_d - 1) / ((tau_d - p - 3) * (tau_d - p))
    b = 4 + (p * tau_n + 2) / (a - 1)
    c = p * tau_n * (b - 2) / (b * (tau_d - p - 1))
    Sn = np.cov(w[-(tau_n + 1):].T)
    Sd = np.cov(w.T)
    g = np.sqrt(tau_n / (c * tau_d) * np.trace(Sn @ np.linalg.inv(Sd))) \
        - np.sqrt(f_inv_cdf(p * tau_n, b, 1 - alpha))
    assert not deg
    assert beta == pytest.approx(1 + eta * max(g, 0.0), rel=1e-10)
    assert beta > 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 60))
def test_forgetting_factor_at_least_one(seed, k):
    cfg = RlsConfig(order=1, tau_n=5, tau_d=25, eta=0.3, alpha=0.5)
    errs = [np.array([e]) for e in np.random.default_rng(seed).standard_normal(26)]
    beta, _ = forgetting_factor(errs, k, cfg)
    assert beta >= 1.0
    if k < cfg.tau_d:
        assert beta == 1.0
