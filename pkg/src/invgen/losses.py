"""Loss terms for invariance-based domain generalization.

Covers the class-and-environment-balanced classification risk, the three
invariance criteria (adversarial marginal alignment, conditional
adversarial alignment, and the scalar-scale stationarity penalty), and
the virtual-sample Jacobian regularizer. All losses return both their
value and exact parameter gradients; the gradient-reversal convention for
the adversarial criteria is that the embedding receives exactly the
negated discriminator-path gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import (
    Gradients,
    Network,
    backward,
    forward,
    grad_jacobian_penalty_batch,
    jacobian_frobenius_sq_batch,
)

__all__ = [
    "Batch",
    "ObjectiveConfig",
    "cross_entropy",
    "cross_entropy_batch",
    "balanced_risk",
    "ber_eval",
    "dann_loss",
    "cdann_loss",
    "irm_penalty",
    "dirichlet_sample",
    "virtual_sample",
    "draw_virtual_batch",
    "regularizer",
    "total_objective",
]

CRITERIA = ("ERM", "DANN", "CDANN", "IRM")


@dataclass(frozen=True)
class Batch:
    """Labeled samples tagged with their source environment."""

    xs: np.ndarray  # (n, d)
    ys: np.ndarray  # (n,) int class labels
    env_ids: np.ndarray  # (n,) int

    def __post_init__(self):
        if not (len(self.xs) == len(self.ys) == len(self.env_ids)):
            raise ValueError("batch field lengths differ")
        if len(self.xs) == 0:
            raise ValueError("empty batch")


@dataclass(frozen=True)
class ObjectiveConfig:
    criterion: str = "ERM"
    lambda0: float = 1.0
    lambda1: float = 0.0
    beta: float = 1.0
    n_classes: int = 2
    n_envs: int = 2
    m_virtual: int = 32  # virtual samples per step

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if not (np.isfinite(self.lambda0) and np.isfinite(self.lambda1)):
            raise ValueError("non-finite loss weights")
        if self.lambda0 < 0 or self.lambda1 < 0:
            raise ValueError("loss weights must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, y: int):
    """Single-sample softmax cross-entropy; returns (loss, dloss/dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    K = logits.shape[-1]
    if K < 2:
        raise ValueError("need at least two classes")
    if not (0 <= y < K):
        raise ValueError("label out of range")
    p = _softmax(logits)
    z = logits - logits.max()
    loss = float(np.log(np.exp(z).sum()) - z[y])
    grad = p.copy()
    grad[y] -= 1.0
    return loss, grad


def cross_entropy_batch(logits, ys):
    """Row-wise softmax cross-entropy; returns (losses (n,), dlogits (n, K))."""
    logits = np.asarray(logits, dtype=np.float64)
    ys = np.asarray(ys)
    n, K = logits.shape
    if ys.min() < 0 or ys.max() >= K:
        raise ValueError("label out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    losses = lse - z[np.arange(n), ys]
    grads = _softmax(logits)
    grads[np.arange(n), ys] -= 1.0
    return losses, grads


def _cell_weights(ys, env_ids, n_classes, n_envs):
    """Per-sample weights making the loss a mean over envs of means over
    classes of within-cell means. Empty cells are skipped with
    renormalization; a class absent from every environment is an error."""
    ys = np.asarray(ys)
    env_ids = np.asarray(env_ids)
    n = len(ys)
    for y in range(n_classes):
        if not np.any(ys == y):
            raise ValueError(f"class {y} absent from the batch")
    w = np.zeros(n)
    envs_present = [t for t in range(n_envs) if np.any(env_ids == t)]
    for t in envs_present:
        in_env = env_ids == t
        classes_present = [y for y in range(n_classes) if np.any(in_env & (ys == y))]
        for y in classes_present:
            cell = in_env & (ys == y)
            w[cell] = 1.0 / (len(envs_present) * len(classes_present) * cell.sum())
    return w


def _backprop_head_chain(h: Network, phi: Network, tape_h, tape_phi, dlogits):
    """Push per-sample logit gradients through h then phi."""
    grads_h, dz = backward(h, tape_h, dlogits)
    grads_phi, _ = backward(phi, tape_phi, dz)
    return grads_h, grads_phi


def balanced_risk(h: Network, phi: Network, batch: Batch, n_classes: int, n_envs: int):
    """Environment- and class-balanced cross-entropy surrogate of the
    balanced error rate; returns (loss, grads_h, grads_phi)."""
    z, tape_phi = forward(phi, batch.xs)
    logits, tape_h = forward(h, z)
    losses, dlogits = cross_entropy_batch(logits, batch.ys)
    w = _cell_weights(batch.ys, batch.env_ids, n_classes, n_envs)
    loss = float(w @ losses)
    grads_h, grads_phi = _backprop_head_chain(h, phi, tape_h, tape_phi, w[:, None] * dlogits)
    return loss, grads_h, grads_phi


def ber_eval(h: Network, phi: Network, env) -> float:
    """Balanced error rate under 0-1 loss; argmax ties break to the lowest
    class index. env is anything with .xs and .ys arrays."""
    z, _ = forward(phi, env.xs)
    logits, _ = forward(h, z)
    preds = np.argmax(logits, axis=1)
    classes = np.unique(env.ys)
    errs = []
    for y in classes:
        mask = env.ys == y
        errs.append(float(np.mean(preds[mask] != y)))
    return float(np.mean(errs))


def _domain_ce(phi: Network, disc: Network, disc_input_fn, batch: Batch, n_envs: int):
    """Environment-balanced discriminator cross-entropy and its gradients.

    Returns (ce, grads_disc, grads_phi_raw) where grads_phi_raw is the
    gradient of the cross-entropy w.r.t. phi parameters (before reversal).
    """
    if n_envs < 2:
        raise ValueError("domain discriminator needs at least two environments")
    if disc.out_dim != n_envs:
        raise ValueError("discriminator out_dim must equal n_envs")
    z, tape_phi = forward(phi, batch.xs)
    d_in, dz_of_din = disc_input_fn(z)
    logits, tape_d = forward(disc, d_in)
    losses, dlogits = cross_entropy_batch(logits, batch.env_ids)
    # balance environments so each contributes equally
    w = np.zeros(len(batch.env_ids))
    envs_present = [t for t in range(n_envs) if np.any(batch.env_ids == t)]
    if len(envs_present) < 2:
        raise ValueError("batch covers fewer than two environments")
    for t in envs_present:
        mask = batch.env_ids == t
        w[mask] = 1.0 / (len(envs_present) * mask.sum())
    ce = float(w @ losses)
    grads_disc, dd_in = backward(disc, tape_d, w[:, None] * dlogits)
    dz = dz_of_din(dd_in)
    grads_phi_raw, _ = backward(phi, tape_phi, dz)
    return ce, grads_disc, grads_phi_raw


def dann_loss(phi: Network, disc: Network, batch: Batch, n_envs: int):
    """Adversarial marginal alignment. Returns (inv_loss, grads_phi, grads_disc):
    grads_disc descends the discriminator's cross-entropy (sharpening it),
    grads_phi is the exact negation of the discriminator-path gradient."""
    ce, grads_disc, grads_phi_raw = _domain_ce(phi, disc, lambda z: (z, lambda g: g), batch, n_envs)
    return ce, grads_phi_raw.scaled(-1.0), grads_disc


def cdann_loss(phi: Network, disc: Network, batch: Batch, n_envs: int, n_classes: int):
    """Conditional adversarial alignment: the discriminator sees the
    embedding concatenated with a one-hot label. Same contract as dann_loss."""
    latent = phi.out_dim

    def make_input(z):
        onehot = np.zeros((z.shape[0], n_classes))
        onehot[np.arange(z.shape[0]), batch.ys] = 1.0
        return np.concatenate([z, onehot], axis=1), lambda g: g[:, :latent]

    if disc.in_dim != latent + n_classes:
        raise ValueError("discriminator in_dim must be latent + n_classes")
    ce, grads_disc, grads_phi_raw = _domain_ce(phi, disc, make_input, batch, n_envs)
    return ce, grads_phi_raw.scaled(-1.0), grads_disc


def irm_penalty(h: Network, phi: Network, batch: Batch, n_classes: int, n_envs: int):
    """Per-environment squared gradient of the risk w.r.t. a scalar logit
    scale fixed at 1; returns (penalty, grads_h, grads_phi).

    With p = softmax(logits), the scale gradient of a sample's loss is
    <p - onehot(y), logits>; its logit-gradient is (p - onehot) +
    (diag(p) - p p^T) logits, which is chained through h and phi.
    """
    z, tape_phi = forward(phi, batch.xs)
    logits, tape_h = forward(h, z)
    p = _softmax(logits)
    n = len(batch.ys)
    resid = p.copy()
    resid[np.arange(n), batch.ys] -= 1.0
    per_sample_g = np.einsum("nk,nk->n", resid, logits)

    envs_present = [t for t in range(n_envs) if np.any(batch.env_ids == t)]
    if not envs_present:
        raise ValueError("no environments in batch")
    penalty = 0.0
    dlogits = np.zeros_like(logits)
    # d/dlogits of per-sample scale-gradient f(l) = <p - e_y, l>
    pl = np.einsum("nk,nk->n", p, logits)
    df = resid + p * (logits - pl[:, None])
    for t in envs_present:
        mask = batch.env_ids == t
        g_t = float(per_sample_g[mask].mean())
        penalty += g_t * g_t
        dlogits[mask] += (2.0 * g_t / mask.sum()) * df[mask]
    penalty /= len(envs_present)
    dlogits /= len(envs_present)
    grads_h, grads_phi = _backprop_head_chain(h, phi, tape_h, tape_phi, dlogits)
    return penalty, grads_h, grads_phi


def dirichlet_sample(beta: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Dirichlet draw via normalized Gamma variates."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if T < 1:
        raise ValueError("T must be >= 1")
    g = rng.gamma(beta, size=T)
    s = g.sum()
    while s == 0.0:  # astronomically rare underflow guard
        g = rng.gamma(beta, size=T)
        s = g.sum()
    return g / s


def virtual_sample(per_env_xs, gamma) -> np.ndarray:
    """Convex combination of one sample per environment."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if len(per_env_xs) != len(gamma):
        raise ValueError("need one sample per mixing weight")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x in per_env_xs])
    if xs.ndim != 2:
        raise ValueError("per-environment samples must share one dimension")
    return gamma @ xs


def draw_virtual_batch(per_env_xs, beta: float, rng: np.random.Generator, m: int) -> np.ndarray:
    """Draw m virtual samples, one fresh Dirichlet weight vector per sample."""
    if m < 1:
        raise ValueError("m must be >= 1")
    T = len(per_env_xs)
    for xs in per_env_xs:
        if len(xs) == 0:
            raise ValueError("empty environment batch")
    g = rng.gamma(beta, size=(m, T))
    zero = g.sum(axis=1) == 0.0
    while zero.any():  # astronomically rare underflow guard
        g[zero] = rng.gamma(beta, size=(int(zero.sum()), T))
        zero = g.sum(axis=1) == 0.0
    gammas = g / g.sum(axis=1, keepdims=True)
    out = np.zeros((m, per_env_xs[0].shape[1]))
    for t, xs in enumerate(per_env_xs):
        picks = rng.integers(0, len(xs), size=m)
        out += gammas[:, t, None] * xs[picks]
    return out


def regularizer(phi: Network, per_env_batches, beta: float, rng: np.random.Generator, m: int) -> float:
    """Monte-Carlo estimate of the mean squared Jacobian Frobenius norm on
    Dirichlet-mixed virtual samples."""
    xt = draw_virtual_batch(per_env_batches, beta, rng, m)
    return float(jacobian_frobenius_sq_batch(phi, xt).mean())


def total_objective(h: Network, phi: Network, disc, batch: Batch, cfg: ObjectiveConfig,
                    rng: np.random.Generator):
    """Combined loss: balanced risk + lambda0 * invariance + lambda1 *
    Jacobian regularizer. Returns (loss, grads_h, grads_phi, grads_disc);
    grads_disc is None for non-adversarial criteria."""
    task, grads_h, grads_phi = balanced_risk(h, phi, batch, cfg.n_classes, cfg.n_envs)
    loss = task
    grads_disc = None
    inv = 0.0
    if cfg.criterion == "DANN":
        inv, g_phi_rev, grads_disc = dann_loss(phi, disc, batch, cfg.n_envs)
        grads_phi.add_scaled(g_phi_rev, cfg.lambda0)
    elif cfg.criterion == "CDANN":
        inv, g_phi_rev, grads_disc = cdann_loss(phi, disc, batch, cfg.n_envs, cfg.n_classes)
        grads_phi.add_scaled(g_phi_rev, cfg.lambda0)
    elif cfg.criterion == "IRM":
        inv, g_h, g_phi = irm_penalty(h, phi, batch, cfg.n_classes, cfg.n_envs)
        grads_h.add_scaled(g_h, cfg.lambda0)
        grads_phi.add_scaled(g_phi, cfg.lambda0)
    loss += cfg.lambda0 * inv if cfg.criterion != "ERM" else 0.0

    reg = 0.0
    if cfg.lambda1 > 0:
        per_env_xs = [batch.xs[batch.env_ids == t] for t in range(cfg.n_envs)]
        per_env_xs = [xs for xs in per_env_xs if len(xs)]
        xt = draw_virtual_batch(per_env_xs, cfg.beta, rng, cfg.m_virtual)
        reg = float(jacobian_frobenius_sq_batch(phi, xt).mean())
        grads_phi.add_scaled(grad_jacobian_penalty_batch(phi, xt), cfg.lambda1)
        loss += cfg.lambda1 * reg
    parts = {"task": task, "inv": inv, "reg": reg}
    return loss, grads_h, grads_phi, grads_disc, parts
