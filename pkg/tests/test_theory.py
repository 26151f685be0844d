"""Exact distances, contraction coefficients, and brute-force bound checks."""

import numpy as np
import pytest

from invgen.envs import make_discrete_world
from invgen.nets import network_new
from invgen.theory import (
    augmentation_taylor_verify,
    dobrushin_exact,
    dobrushin_lipschitz_bound,
    hellinger_gaussian,
    lemma1_verify,
    lipschitz_empirical,
    logistic_second_derivative,
    sdpi_verify,
    theorem1_verify,
    tv_discrete,
    tv_gaussian_bound,
    tv_gaussian_exact_isotropic,
)


def test_tv_discrete_basic_properties():
    p = np.array([0.5, 0.5, 0.0])
    q = np.array([0.0, 0.5, 0.5])
    assert tv_discrete(p, p) == 0.0
    assert np.isclose(tv_discrete(p, q), 0.5)
    # disjoint supports -> TV = 1
    assert np.isclose(tv_discrete(np.array([1.0, 0.0]), np.array([0.0, 1.0])), 1.0)


def test_tv_discrete_symmetry_and_triangle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, q, r = (rng.dirichlet(np.ones(6)) for _ in range(3))
        assert np.isclose(tv_discrete(p, q), tv_discrete(q, p))
        assert tv_discrete(p, r) <= tv_discrete(p, q) + tv_discrete(q, r) + 1e-12
        assert 0.0 <= tv_discrete(p, q) <= 1.0


def test_tv_discrete_rejects_non_distributions():
    with pytest.raises(ValueError):
        tv_discrete(np.array([0.7, 0.7]), np.array([0.5, 0.5]))


def test_gaussian_tv_exact_monte_carlo():
    """erf closed form against direct numerical integration in 1-D."""
    from scipy.integrate import quad
    from scipy.stats import norm
    mu1, mu2, sigma = 0.0, 1.3, 0.8
    exact = tv_gaussian_exact_isotropic([mu1], [mu2], sigma)
    integral, _ = quad(
        lambda x: 0.5 * abs(norm.pdf(x, mu1, sigma) - norm.pdf(x, mu2, sigma)),
        -20, 20)
    assert abs(exact - integral) < 1e-9


def test_gaussian_tv_exact_depends_only_on_distance():
    a = tv_gaussian_exact_isotropic([0, 0, 0], [1, 1, 1], 1.0)
    b = tv_gaussian_exact_isotropic([0.0], [np.sqrt(3.0)], 1.0)
    assert np.isclose(a, b)


def test_hellinger_dominates_tv_in_one_dimension():
    """For d=1 the sqrt(2)H bound is a valid TV upper bound."""
    rng = np.random.default_rng(1)
    for _ in range(100):
        delta = rng.uniform(0, 5)
        sigma = rng.uniform(0.2, 3)
        tv = tv_gaussian_exact_isotropic([0.0], [delta], sigma)
        assert tv_gaussian_bound([0.0], [delta], sigma, 1) >= tv - 1e-12


def test_hellinger_per_dim_factor_weakens_bound():
    """The displayed /d exponent can drop below the exact TV for d > 1 -
    the documented discrepancy; the d=1 form stays valid on the same pair."""
    mu1 = np.zeros(9)
    mu2 = np.full(9, 1.0)  # ||delta|| = 3
    sigma = 1.0
    tv = tv_gaussian_exact_isotropic(mu1, mu2, sigma)
    assert tv_gaussian_bound(mu1, mu2, sigma, 9) < tv  # the /d artifact
    assert tv_gaussian_bound(mu1, mu2, sigma, 1) >= tv


def test_hellinger_validation():
    with pytest.raises(ValueError):
        hellinger_gaussian([0], [1], 0.0, 1)
    with pytest.raises(ValueError):
        hellinger_gaussian([0], [1], 1.0, 0)


def test_dobrushin_exact_extremes():
    assert dobrushin_exact(np.eye(3)) == 1.0
    assert dobrushin_exact(np.full((4, 2), 0.5)) == 0.0
    ch = np.array([[0.9, 0.1], [0.1, 0.9]])
    assert np.isclose(dobrushin_exact(ch), 0.8)


def test_dobrushin_lipschitz_bound_monotone():
    b1 = dobrushin_lipschitz_bound(1.0, 1.0, 2, 1.0)
    b2 = dobrushin_lipschitz_bound(2.0, 1.0, 2, 1.0)
    assert b2 > b1
    assert dobrushin_lipschitz_bound(0.0, 1.0, 2, 1.0) == 0.0


def test_lipschitz_empirical_linear_network():
    net = network_new([3, 2], "identity", 0)
    xs = np.random.default_rng(0).standard_normal((50, 3))
    emp = lipschitz_empirical(net, xs)
    spec = np.linalg.svd(net.layers[0].W, compute_uv=False)[0]
    assert emp <= spec + 1e-9
    assert emp > 0.3 * spec  # random pairs come close to the top direction


def test_theorem1_report_fields_and_holds():
    w = make_discrete_world(6, 5, 3, 3, seed=1)
    h = np.random.default_rng(0).integers(0, 3, 5)
    rep = theorem1_verify(w, h)
    for key in ("avg_source_ber", "kappa", "alpha_tv", "epsilon", "rhs_total"):
        assert key in rep.rhs_terms
    assert rep.holds
    assert np.isclose(
        rep.rhs_total,
        rep.rhs_terms["avg_source_ber"] + rep.rhs_terms["kappa"]
        + rep.rhs_terms["alpha_tv"] * rep.rhs_terms["epsilon"])


def test_theorem1_identical_environments_tight_terms():
    """With identical environments kappa = epsilon = 0, so the bound
    reduces to BER_T <= avg source BER (an equality here)."""
    w = make_discrete_world(5, 4, 2, 2, seed=3)
    same = np.repeat(w.px_given_y[:1], w.n_env, axis=0)
    w2 = type(w)(w.n_x, w.n_z, w.n_y, w.n_env, same, w.py, w.channel, 0)
    h = np.random.default_rng(1).integers(0, 2, w.n_z)
    rep = theorem1_verify(w2, h)
    assert rep.rhs_terms["kappa"] == 0.0
    assert rep.rhs_terms["epsilon"] == 0.0
    assert np.isclose(rep.lhs, rep.rhs_terms["avg_source_ber"])


def test_theorem1_suite_small():
    for i in range(50):
        rng = np.random.default_rng(i)
        w = make_discrete_world(int(rng.integers(2, 10)), int(rng.integers(2, 10)),
                                int(rng.integers(2, 4)), int(rng.integers(2, 4)),
                                seed=i, smoothness=float(rng.random()))
        h = rng.integers(0, w.n_y, w.n_z)
        assert theorem1_verify(w, h).holds


def test_lemma1_requires_balanced_labels():
    w = make_discrete_world(4, 4, 2, 2, seed=0, balanced=False)
    if np.allclose(w.py, 0.5):  # exceedingly unlikely; regenerate
        w = make_discrete_world(4, 4, 2, 2, seed=1, balanced=False)
    with pytest.raises(ValueError):
        lemma1_verify(w)


def test_lemma1_suite_small():
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        w = make_discrete_world(int(rng.integers(2, 10)), int(rng.integers(2, 10)),
                                int(rng.integers(2, 4)), int(rng.integers(2, 4)),
                                seed=i, smoothness=float(rng.random()),
                                balanced=True, floor=0.05)
        rep = lemma1_verify(w)
        assert rep["holds"]
        assert rep["marginal_gap"] <= rep["kappa"] + 1e-10


def test_sdpi_contraction_and_identity_equality():
    rng = np.random.default_rng(2)
    for i in range(50):
        w = make_discrete_world(6, 5, 2, 2, seed=200 + i)
        p0, p1 = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        rep = sdpi_verify(w, p0, p1)
        assert rep["holds"]
    # identity channel: alpha = 1 and the inequality is an equality
    w = make_discrete_world(4, 4, 2, 2, seed=9)
    ident = type(w)(4, 4, 2, 2, w.px_given_y, w.py, np.eye(4), 0)
    p0, p1 = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    rep = sdpi_verify(ident, p0, p1)
    assert rep["alpha_tv"] == 1.0
    assert abs(rep["slack"]) < 1e-12


def test_logistic_second_derivative_bounds():
    x = np.linspace(-30, 30, 2001)
    vals = logistic_second_derivative(x)
    assert np.all(vals >= 0)
    assert np.all(vals <= 0.25)  # hence trivially <= 1
    assert np.isclose(logistic_second_derivative(0.0), 0.25)


def test_augmentation_taylor_small_variance():
    rng = np.random.default_rng(3)
    phi = network_new([5, 8, 3], "tanh", 4)
    w = rng.standard_normal(3) * 0.3
    center = rng.standard_normal(5)
    xt = center + 0.01 * rng.standard_normal((300, 5))
    labels = np.where(rng.random(300) < 0.5, -1, 1)
    rep = augmentation_taylor_verify(w, phi, xt, labels)
    assert rep["taylor_gap"] / rep["R_aug"] < 1e-2
    assert rep["G2"] <= 0.5 * rep["var_wphi"] + 1e-12
    assert rep["holds_pair"]


def test_augmentation_taylor_rejects_bad_labels():
    phi = network_new([2, 2], "tanh", 0)
    with pytest.raises(ValueError):
        augmentation_taylor_verify(np.ones(2), phi, np.zeros((4, 2)),
                                   np.array([0, 1, 0, 1]))
