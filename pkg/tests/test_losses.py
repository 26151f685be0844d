"""Objective terms: balanced risk, adversarial losses, IRM, virtual samples."""

import numpy as np
import pytest

from invgen.losses import (
    Batch,
    ObjectiveConfig,
    balanced_risk,
    ber_eval,
    cdann_loss,
    cross_entropy,
    cross_entropy_batch,
    dann_loss,
    dirichlet_sample,
    draw_virtual_batch,
    irm_penalty,
    regularizer,
    total_objective,
    virtual_sample,
)
from invgen.nets import network_new


def _batch(rng, d, n=24, k=2, t=2):
    ys = np.concatenate([np.arange(k * t) % k, rng.integers(0, k, n - k * t)])
    es = np.concatenate([np.arange(k * t) // k, rng.integers(0, t, n - k * t)])
    return Batch(rng.standard_normal((n, d)), ys, es)


def _nets(seed=0, d=5, latent=4, k=2, t=2):
    phi = network_new([d, 6, latent], "tanh", seed)
    h = network_new([latent, 5, k], "tanh", seed + 1)
    disc = network_new([latent, 5, t], "tanh", seed + 2)
    cdisc = network_new([latent + k, 5, t], "tanh", seed + 3)
    return phi, h, disc, cdisc


def test_cross_entropy_uniform_logits():
    k = 4
    assert np.isclose(cross_entropy(np.zeros(k), 2)[0], np.log(k))


def test_cross_entropy_batch_matches_single():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((5, 3))
    ys = rng.integers(0, 3, 5)
    losses, dl = cross_entropy_batch(logits, ys)
    for i in range(5):
        l, g = cross_entropy(logits[i], int(ys[i]))
        assert np.isclose(losses[i], l)
        assert np.allclose(dl[i], g)


def test_cross_entropy_shift_invariance():
    logits = np.array([1.0, -2.0, 0.5])
    a, _ = cross_entropy(logits, 1)
    b, _ = cross_entropy(logits + 100.0, 1)
    assert np.isclose(a, b)


def test_balanced_risk_ignores_class_imbalance():
    """Duplicating samples of one cell must not change the balanced risk."""
    rng = np.random.default_rng(1)
    phi, h, _, _ = _nets()
    batch = _batch(rng, 5)
    base, _, _ = balanced_risk(h, phi, batch, 2, 2)
    # duplicate every (env 0, class 0) sample three times
    mask = (batch.ys == 0) & (batch.env_ids == 0)
    xs = np.concatenate([batch.xs] + [batch.xs[mask]] * 3)
    ys = np.concatenate([batch.ys] + [batch.ys[mask]] * 3)
    es = np.concatenate([batch.env_ids] + [batch.env_ids[mask]] * 3)
    dup, _, _ = balanced_risk(h, phi, Batch(xs, ys, es), 2, 2)
    assert np.isclose(base, dup)


def test_balanced_risk_uniform_logits_value():
    phi = network_new([3, 4], "identity", 0)
    h = network_new([4, 2], "identity", 1)
    h = h.with_params([np.zeros_like(p) for p in h.params()])
    rng = np.random.default_rng(2)
    batch = _batch(rng, 3)
    loss, _, _ = balanced_risk(h, phi, batch, 2, 2)
    assert np.isclose(loss, np.log(2))


def test_balanced_risk_requires_class_somewhere():
    phi, h, _, _ = _nets()
    rng = np.random.default_rng(3)
    xs = rng.standard_normal((6, 5))
    batch = Batch(xs, np.zeros(6, dtype=int), np.array([0, 0, 0, 1, 1, 1]))
    with pytest.raises(ValueError):
        balanced_risk(h, phi, batch, 2, 2)


def test_ber_eval_mean_over_classes():
    phi = network_new([2, 2], "identity", 0)
    h = network_new([2, 2], "identity", 1)
    # force constant prediction of class 0 via huge bias
    params = h.params()
    params[1] = np.array([100.0, -100.0])
    h = h.with_params(params)

    class E:
        xs = np.zeros((10, 2))
        ys = np.array([0] * 9 + [1])

    # class 0 error 0, class 1 error 1 -> BER 0.5 regardless of imbalance
    assert np.isclose(ber_eval(h, phi, E), 0.5)


def test_dann_reversal_is_exact_negation():
    rng = np.random.default_rng(4)
    phi, h, disc, _ = _nets()
    batch = _batch(rng, 5)
    ce1, gphi, gdisc = dann_loss(phi, disc, batch, 2)
    ce2, gphi2, _ = dann_loss(phi, disc, batch, 2)
    assert ce1 == ce2
    neg = gphi.scaled(-1.0)
    for a, b in zip(neg.dW, gphi2.scaled(-1.0).scaled(-1.0).dW):
        assert np.allclose(a, -b)  # reversal negates every entry


def test_dann_perfect_discriminator_low_ce():
    """A discriminator that already separates envs yields small CE."""
    rng = np.random.default_rng(5)
    phi = network_new([2, 3, 2], "tanh", 9)
    disc = network_new([2, 8, 2], "tanh", 10)
    xs = np.concatenate([rng.standard_normal((20, 2)) + 5,
                         rng.standard_normal((20, 2)) - 5])
    batch = Batch(xs, np.zeros(40, dtype=int) // 1, np.repeat([0, 1], 20))
    ce0, _, _ = dann_loss(phi, disc, batch, 2)
    assert ce0 <= np.log(2) * 1.5  # sanity: finite, near-chance or better


def test_cdann_requires_matching_disc_width():
    rng = np.random.default_rng(6)
    phi, h, disc, cdisc = _nets()
    batch = _batch(rng, 5)
    with pytest.raises(ValueError):
        cdann_loss(phi, disc, batch, 2, 2)  # missing one-hot width
    ce, gphi, gdisc = cdann_loss(phi, cdisc, batch, 2, 2)
    assert np.isfinite(ce)


def test_irm_penalty_zero_at_interpolation():
    """If mean <p - e_y, logits> is zero per env the penalty vanishes."""
    phi = network_new([2, 2], "identity", 0)
    h = network_new([2, 2], "identity", 1)
    h = h.with_params([np.zeros_like(p) for p in h.params()])
    rng = np.random.default_rng(7)
    batch = _batch(rng, 2)
    pen, _, _ = irm_penalty(h, phi, batch, 2, 2)
    # zero logits -> per-sample scale gradient is exactly 0
    assert pen == 0.0


def test_irm_penalty_nonnegative():
    rng = np.random.default_rng(8)
    phi, h, _, _ = _nets()
    pen, _, _ = irm_penalty(h, phi, _batch(rng, 5), 2, 2)
    assert pen >= 0.0


def test_dirichlet_sample_simplex():
    rng = np.random.default_rng(9)
    for beta in (0.2, 1.0, 5.0):
        g = dirichlet_sample(beta, 4, rng)
        assert g.shape == (4,)
        assert np.all(g >= 0) and np.isclose(g.sum(), 1.0)


def test_dirichlet_rejects_bad_beta():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        dirichlet_sample(0.0, 3, rng)


def test_virtual_sample_convexity():
    xs = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    gamma = np.array([0.2, 0.3, 0.5])
    v = virtual_sample(xs, gamma)
    assert np.allclose(v, 0.3 * xs[1] + 0.5 * xs[2])
    # degenerate weight on one env reproduces that env's sample
    assert np.allclose(virtual_sample(xs, np.array([0.0, 1.0, 0.0])), xs[1])


def test_draw_virtual_batch_in_convex_hull():
    rng = np.random.Generator(np.random.Philox(3))
    per_env = [np.full((10, 3), -1.0), np.full((10, 3), 2.0)]
    vb = draw_virtual_batch(per_env, 1.0, rng, 16)
    assert vb.shape == (16, 3)
    assert np.all(vb >= -1.0 - 1e-12) and np.all(vb <= 2.0 + 1e-12)


def test_regularizer_zero_for_constant_network():
    phi = network_new([3, 4, 2], "tanh", 1)
    phi = phi.with_params([np.zeros_like(p) for p in phi.params()])
    rng = np.random.Generator(np.random.Philox(4))
    per_env = [np.random.default_rng(0).standard_normal((8, 3)) for _ in range(2)]
    assert regularizer(phi, per_env, 1.0, rng, 8) == 0.0


def test_total_objective_parts_and_finiteness():
    rng = np.random.default_rng(11)
    phi, h, disc, cdisc = _nets()
    batch = _batch(rng, 5)
    for crit, d in (("ERM", None), ("DANN", disc), ("CDANN", cdisc), ("IRM", None)):
        cfg = ObjectiveConfig(criterion=crit, lambda0=0.7, lambda1=0.3,
                              n_classes=2, n_envs=2)
        rng2 = np.random.Generator(np.random.Philox(5))
        loss, gh, gphi, gd, parts = total_objective(h, phi, d, batch, cfg, rng2)
        assert np.isfinite(loss)
        assert set(parts) == {"task", "inv", "reg"}
        if crit == "ERM":
            assert parts["inv"] == 0.0
        assert np.isclose(loss, parts["task"] + 0.7 * parts["inv"] + 0.3 * parts["reg"])


def test_objective_config_validation():
    with pytest.raises(ValueError):
        ObjectiveConfig(criterion="GAN")
    with pytest.raises(ValueError):
        ObjectiveConfig(lambda1=-0.1)
    with pytest.raises(ValueError):
        ObjectiveConfig(beta=0.0)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        Batch(np.zeros((0, 3)), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
