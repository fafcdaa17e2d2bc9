import numpy as np
import pytest
from scipy.optimize import root
from types import SimpleNamespace

import truncstein as ts
from truncstein.errors import ConfigError
from truncstein.stein import (
    Reason,
    TestFunctionPair,
    product_test_functions,
    stein_residual,
    tn_test_functions,
    untruncated_test_functions,
)

TN_SIX_POINTS = np.array(
    [
        [0.3, -0.2],
        [-0.5, 0.4],
        [0.7, 0.1],
        [-0.1, -0.6],
        [0.2, 0.5],
        [-0.65, -0.35],
    ]
)

NG_EIGHT_POINTS = np.array(
    [
        [0.1, 2.2],
        [-0.3, 1.8],
        [0.5, 2.4],
        [-0.2, 2.6],
        [0.4, 1.6],
        [0.0, 2.05],
        [-0.55, 2.15],
        [0.25, 1.35],
    ]
)

NB_EIGHT_POINTS = np.array(
    [
        [0.1, 0.55],
        [-0.2, 0.45],
        [0.3, 0.7],
        [-0.25, 0.3],
        [0.15, 0.2],
        [0.05, 0.85],
        [-0.38, 0.6],
        [0.33, 0.42],
    ]
)


# ---------------------------------------------------------------------------
# test functions


def test_tn_test_function_values(square):
    tfp = tn_test_functions(square)
    assert tfp.f1(np.array([0.0, 0.0]))[0] == pytest.approx(1.0)
    assert np.allclose(tfp.f2(np.array([0.0, 0.0]))[0], [0.0, 0.0])
    # boundary vanishing
    assert tfp.f1(np.array([1.0, 0.3]))[0] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(tfp.f2(np.array([1.0, 0.3]))[0], [0.0, 0.0], atol=1e-15)


def test_test_functions_vanish_on_boundary(square, gamma_disc, beta_disc):
    rng = np.random.default_rng(0)
    for dom, build in (
        (square, tn_test_functions),
        (gamma_disc, product_test_functions),
        (beta_disc, product_test_functions),
    ):
        tfp = build(dom)
        pts = dom.boundary_points(300, rng)
        interior = dom.bounding_box()[0] + 0.5 * (
            dom.bounding_box()[1] - dom.bounding_box()[0]
        )
        scale = max(1.0, float(np.max(np.abs(tfp.f1(interior[None, :])))))
        assert np.max(np.abs(tfp.f1(pts))) <= 1e-9 * scale
        assert np.max(np.abs(tfp.f2(pts))) <= 1e-9 * scale * 10.0


def test_tn_jacobian_f2_finite_differences(square):
    tfp = tn_test_functions(square)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.95, 0.95, size=(100, 2))
    jac = tfp.grad_f2(pts)
    h = 1e-6
    for k, x in enumerate(pts):
        for j in range(2):
            up = x.copy()
            dn = x.copy()
            up[j] += h
            dn[j] -= h
            fd = (tfp.f2(up[None, :])[0] - tfp.f2(dn[None, :])[0]) / (2 * h)
            assert np.allclose(jac[k, :, j], fd, rtol=1e-6, atol=1e-6)


def test_product_grad_f2_analytic(gamma_disc):
    tfp = product_test_functions(gamma_disc)
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(-0.6, 0.6, 50), rng.uniform(1.4, 2.6, 50)])
    pts = pts[gamma_disc.contains(pts)]
    m = gamma_disc.m
    k = gamma_disc.kappa(pts)
    s = pts[:, 0] + pts[:, 1]
    expected = np.stack(
        [2 * (pts[:, 0] - m[0]) * s + k, 2 * (pts[:, 1] - m[1]) * s + k], axis=1
    )
    assert np.allclose(tfp.grad_f2(pts), expected, rtol=1e-13)
    h = 1e-6
    for x in pts[:20]:
        for j in range(2):
            up = x.copy()
            dn = x.copy()
            up[j] += h
            dn[j] -= h
            fd = (tfp.f2(up[None, :])[0] - tfp.f2(dn[None, :])[0]) / (2 * h)
            assert tfp.grad_f2(x[None, :])[0, j] == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_product_test_functions_need_ball(square):
    with pytest.raises(ConfigError):
        product_test_functions(square)


# ---------------------------------------------------------------------------
# truncated normal estimator


def test_untruncated_hook_reproduces_mle(square):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(500, 2))
    res = ts.tn_stein_estimate(x, square, test_functions=untruncated_test_functions(2))
    assert res.eligible
    assert np.allclose(res.theta_hat.mu, x.mean(axis=0), rtol=1e-12)
    xc = x - x.mean(axis=0)
    biased_cov = xc.T @ xc / x.shape[0]
    assert np.allclose(res.theta_hat.sigma, biased_cov, rtol=1e-10)


def test_tn_root_property_on_fixed_points(square):
    res = ts.tn_stein_estimate(TN_SIX_POINTS, square)
    assert res.eligible
    sigma_tilde = res.diagnostics["sigma_tilde"]
    mu_tilde = res.diagnostics["mu_tilde"]
    theta_root = SimpleNamespace(mu=mu_tilde, sigma=sigma_tilde, dim=2)
    resid = stein_residual("tn", theta_root, TN_SIX_POINTS, tn_test_functions(square))
    scale = max(1.0, float(np.max(np.abs(TN_SIX_POINTS))))
    assert np.max(np.abs(resid.f1)) <= 1e-8 * scale
    assert np.max(np.abs(resid.f2)) <= 1e-8 * scale


def test_tn_matches_root_finder_oracle(square):
    res = ts.tn_stein_estimate(TN_SIX_POINTS, square)
    tfp = tn_test_functions(square)

    def stein_eqs(p):
        theta = SimpleNamespace(mu=p[:2], sigma=p[2:].reshape(2, 2), dim=2)
        r = stein_residual("tn", theta, TN_SIX_POINTS, tfp)
        return np.concatenate([r.f1, r.f2.ravel()])

    p0 = np.concatenate(
        [TN_SIX_POINTS.mean(axis=0) + 0.05,
         (np.cov(TN_SIX_POINTS.T, ddof=0) + 0.01 * np.eye(2)).ravel()]
    )
    sol = root(stein_eqs, p0, method="hybr", tol=1e-12)
    assert sol.success
    assert np.allclose(sol.x[:2], res.diagnostics["mu_tilde"], rtol=1e-8)
    assert np.allclose(
        sol.x[2:].reshape(2, 2), res.diagnostics["sigma_tilde"], rtol=1e-8
    )


def test_tn_sigma_hat_exactly_symmetric(square):
    rng = np.random.default_rng(4)
    theta = ts.TNParams(mu=np.array([0.2, -0.1]),
                        sigma=np.array([[1.0, 0.3], [0.3, 0.7]]))
    s = ts.sample_truncated("tn", theta, square, 400, ts.RngStream(5, 0))
    res = ts.tn_stein_estimate(s.x, square)
    assert res.eligible
    assert np.array_equal(res.theta_hat.sigma, res.theta_hat.sigma.T)


def test_tn_equivariance_under_translation():
    t = np.array([0.4, -0.8])
    dom = ts.rectangle_domain([-1, -1], [1, 1])
    dom_t = ts.rectangle_domain([-1 + t[0], -1 + t[1]], [1 + t[0], 1 + t[1]])
    theta = ts.TNParams(mu=np.array([0.1, 0.2]), sigma=np.array([[0.5, 0.1], [0.1, 0.4]]))
    s = ts.sample_truncated("tn", theta, dom, 800, ts.RngStream(6, 0))
    res = ts.tn_stein_estimate(s.x, dom)
    res_t = ts.tn_stein_estimate(s.x + t, dom_t)
    assert res.eligible and res_t.eligible
    assert np.allclose(res_t.theta_hat.mu, res.theta_hat.mu + t, atol=1e-10)
    assert np.allclose(res_t.theta_hat.sigma, res.theta_hat.sigma, atol=1e-10)


def test_tn_non_pd_sigma_reported(square):
    theta = ts.TNParams(mu=np.zeros(2), sigma=2 * np.eye(2))
    s = ts.sample_truncated("tn", theta, square, 6, ts.RngStream(0, 6))
    res = ts.tn_stein_estimate(s.x, square)
    assert not res.eligible
    assert res.reason is Reason.NON_PD_SIGMA
    assert res.theta_hat is None
    assert "sigma_hat" in res.diagnostics


def test_tn_singular_system_via_injection(square):
    # constant vector-valued f2 zeroes the Jacobian moment block
    const = TestFunctionPair(
        f1=lambda x: np.ones(x.shape[0]),
        grad_f1=lambda x: np.zeros_like(x),
        f2=lambda x: np.ones_like(x),
        grad_f2=lambda x: np.zeros((x.shape[0], 2, 2)),
        vector_f2=True,
    )
    res = ts.tn_stein_estimate(TN_SIX_POINTS, square, test_functions=const)
    assert not res.eligible
    assert res.reason is Reason.SINGULAR_SYSTEM


def test_tn_zero_mean_f1_via_injection(square):
    # symmetric +/- pairs with f1 = x1^2 - c: gradient moments vanish, the
    # f1 mean is driven to a vanishing fraction of mean |f1|
    x = np.array([[0.5, 0.2], [-0.5, -0.2], [0.3, -0.4], [-0.3, 0.4]])
    c = float(np.mean(x[:, 0] ** 2)) - 1e-13
    tfp = TestFunctionPair(
        f1=lambda p: p[:, 0] ** 2 - c,
        grad_f1=lambda p: np.column_stack([2 * p[:, 0], np.zeros(p.shape[0])]),
        f2=lambda p: p.copy(),
        grad_f2=lambda p: np.broadcast_to(np.eye(2), (p.shape[0], 2, 2)).copy(),
        vector_f2=True,
    )
    res = ts.tn_stein_estimate(x, square, test_functions=tfp)
    assert not res.eligible
    assert res.reason is Reason.ZERO_MEAN_F1


# ---------------------------------------------------------------------------
# product estimators


def test_ng_root_property_and_oracle(gamma_disc):
    res = ts.ng_stein_estimate(NG_EIGHT_POINTS, gamma_disc)
    assert res.eligible
    tfp = product_test_functions(gamma_disc)
    resid = stein_residual("normal_gamma", res.theta_hat, NG_EIGHT_POINTS, tfp)
    scale = max(1.0, float(np.max(np.abs(NG_EIGHT_POINTS))))
    assert np.max(np.abs(np.concatenate([resid.f1, resid.f2]))) <= 1e-8 * scale

    def eqs(p):
        theta = ts.NormalGammaParams(mu=p[0], sigma2=p[1], alpha=p[2], beta=p[3])
        r = stein_residual("normal_gamma", theta, NG_EIGHT_POINTS, tfp)
        return np.concatenate([r.f1, r.f2])

    target = np.array(
        [res.theta_hat.mu, res.theta_hat.sigma2, res.theta_hat.alpha, res.theta_hat.beta]
    )
    sol = root(eqs, target * [1.1, 1.2, 0.9, 1.15] + [0.05, 0, 0, 0],
               method="hybr", tol=1e-13)
    assert sol.success
    assert np.allclose(sol.x, target, rtol=1e-7)


def test_nb_root_property_and_oracle(beta_disc):
    res = ts.nb_stein_estimate(NB_EIGHT_POINTS, beta_disc)
    assert res.eligible
    tfp = product_test_functions(beta_disc)
    resid = stein_residual("normal_beta", res.theta_hat, NB_EIGHT_POINTS, tfp)
    assert np.max(np.abs(np.concatenate([resid.f1, resid.f2]))) <= 1e-8

    def eqs(p):
        theta = ts.NormalBetaParams(mu=p[0], sigma2=p[1], alpha=p[2], beta=p[3])
        r = stein_residual("normal_beta", theta, NB_EIGHT_POINTS, tfp)
        return np.concatenate([r.f1, r.f2])

    target = np.array(
        [res.theta_hat.mu, res.theta_hat.sigma2, res.theta_hat.alpha, res.theta_hat.beta]
    )
    sol = root(eqs, target * [1.1, 1.2, 0.9, 1.1] + [0.03, 0, 0, 0],
               method="hybr", tol=1e-13)
    assert sol.success
    assert np.allclose(sol.x, target, rtol=1e-7)


def test_ng_negative_scalar_param(gamma_disc):
    s = ts.sample_truncated(
        "normal_gamma", ts.NormalGammaParams(0.0, 1.0, 1.0, 1.0),
        gamma_disc, 5, ts.RngStream(1, 5),
    )
    res = ts.ng_stein_estimate(s.x, gamma_disc)
    assert not res.eligible
    assert res.reason is Reason.NEGATIVE_SCALAR_PARAM
    assert "theta_raw" in res.diagnostics


def test_product_singular_on_repeated_point(gamma_disc, beta_disc):
    x = np.tile([[0.1, 2.1]], (6, 1))
    res = ts.ng_stein_estimate(x, gamma_disc)
    assert not res.eligible
    assert res.reason is Reason.SINGULAR_SYSTEM
    y = np.tile([[0.1, 0.5]], (6, 1))
    res = ts.nb_stein_estimate(y, beta_disc)
    assert not res.eligible
    assert res.reason is Reason.SINGULAR_SYSTEM


def test_product_support_validation(gamma_disc, beta_disc):
    with pytest.raises(ConfigError):
        ts.ng_stein_estimate(np.array([[0.0, -1.0]]), gamma_disc)
    with pytest.raises(ConfigError):
        ts.nb_stein_estimate(np.array([[0.0, 1.5]]), beta_disc)


# ---------------------------------------------------------------------------
# residual diagnostics


def test_residual_unbiased_at_theta0(square, gamma_disc, beta_disc):
    cases = [
        ("tn", ts.TNParams(mu=np.zeros(2), sigma=np.eye(2)), square,
         tn_test_functions(square)),
        ("normal_gamma", ts.NormalGammaParams(0.0, 1.0, 1.0, 1.0), gamma_disc,
         product_test_functions(gamma_disc)),
        ("normal_beta", ts.NormalBetaParams(0.0, 1.0, 1.0, 1.5), beta_disc,
         product_test_functions(beta_disc)),
    ]
    for model, theta, dom, tfp in cases:
        s = ts.sample_truncated(model, theta, dom, 200_000, ts.RngStream(20, 1))
        resid = stein_residual(model, theta, s.x, tfp)
        assert resid.max_abs_z() < 3.0


def test_residual_detects_wrong_theta(square):
    theta0 = ts.TNParams(mu=np.zeros(2), sigma=np.eye(2))
    wrong = ts.TNParams(mu=np.array([1.0, 0.0]), sigma=np.eye(2))
    s = ts.sample_truncated("tn", theta0, square, 200_000, ts.RngStream(21, 1))
    resid = stein_residual("tn", wrong, s.x, tn_test_functions(square))
    assert resid.max_abs_z() > 3.0


def test_root_property_over_random_samples(square, gamma_disc, beta_disc):
    # smaller version of the acceptance sweep: residual vanishes at the root
    cases = [
        ("tn", ts.TNParams(mu=np.zeros(2), sigma=np.eye(2)), square),
        ("normal_gamma", ts.NormalGammaParams(0.0, 1.0, 1.0, 1.0), gamma_disc),
        ("normal_beta", ts.NormalBetaParams(0.0, 1.0, 1.0, 1.5), beta_disc),
    ]
    for model, theta, dom in cases:
        tfp = tn_test_functions(dom) if model == "tn" else product_test_functions(dom)
        for rep in range(30):
            s = ts.sample_truncated(model, theta, dom, 100, ts.RngStream(30, rep))
            res = ts.stein_estimate(model, s.x, dom)
            if not res.eligible:
                continue
            if model == "tn":
                theta_root = SimpleNamespace(
                    mu=res.diagnostics["mu_tilde"],
                    sigma=res.diagnostics["sigma_tilde"],
                    dim=2,
                )
            else:
                theta_root = res.theta_hat
            r = stein_residual(model, theta_root, s.x, tfp)
            scale = max(1.0, float(np.max(np.abs(s.x))))
            assert np.max(np.abs(r.f1)) <= 1e-8 * scale
            assert np.max(np.abs(r.f2)) <= 1e-8 * scale
