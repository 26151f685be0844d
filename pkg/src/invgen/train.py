"""Deterministic mini-batch training of the combined objective.

One run is a pure function of (environments, config): batches are
class-and-environment stratified from a Philox stream, the embedding and
classifier descend the combined loss, and an adversarial discriminator
(when configured) descends its own cross-entropy in the same step via the
gradient-reversal convention. The squared-Jacobian probe value is logged
as a Frobenius norm even when the regularizer weight is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .envs import Environment
from .losses import Batch, ObjectiveConfig, ber_eval, draw_virtual_batch, total_objective
from .nets import Gradients, Network, jacobian_frobenius_sq_batch, network_new

__all__ = [
    "TrainConfig",
    "RunHistory",
    "OptState",
    "optimizer_step",
    "train",
    "train_val_split",
    "model_select",
    "evaluate",
    "default_networks",
]


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    optimizer: str = "Adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 128
    steps: int = 2000
    seed: int = 0
    val_fraction: float = 0.2
    log_every: int = 100
    latent_dim: int = 16
    hidden_phi: int = 64
    hidden_h: int = 32
    hidden_d: int = 32
    lambda1_grid: tuple = (0.0, 1e-3, 1e-2, 1e-1, 1.0)
    lambda0_grid: tuple = (1.0,)

    def __post_init__(self):
        if self.optimizer not in ("SGD", "Adam"):
            raise ValueError("optimizer must be SGD or Adam")
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 1:
            raise ValueError("bad optimizer hyperparameters")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class RunHistory:
    steps: list = field(default_factory=list)
    task_loss: list = field(default_factory=list)
    inv_loss: list = field(default_factory=list)
    jfro: list = field(default_factory=list)  # Frobenius norm (not squared)
    val_ber: list = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)

    def log(self, step, task, inv, jfro, val):
        if self.steps and step <= self.steps[-1]:
            raise ValueError("non-monotone logging step")
        for v in (task, inv, jfro, val):
            if not np.isfinite(v):
                raise FloatingPointError("non-finite logged value")
        self.steps.append(int(step))
        self.task_loss.append(float(task))
        self.inv_loss.append(float(inv))
        self.jfro.append(float(jfro))
        self.val_ber.append(float(val))


@dataclass
class OptState:
    """Adam moment buffers (unused for SGD)."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @staticmethod
    def for_net(net: Network) -> "OptState":
        params = net.params()
        return OptState(m=[np.zeros_like(p) for p in params],
                        v=[np.zeros_like(p) for p in params])


def optimizer_step(net: Network, grads: Gradients, state: OptState, cfg: TrainConfig) -> tuple[Network, OptState]:
    """One descent step; returns the updated network and state."""
    params = net.params()
    gs = []
    for k in range(len(net.layers)):
        gs.append(grads.dW[k])
        gs.append(grads.db[k])
    for p, g in zip(params, gs):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if cfg.optimizer == "SGD":
        new = [p - cfg.lr * g for p, g in zip(params, gs)]
        return net.with_params(new), state
    t = state.t + 1
    new_m, new_v, new_p = [], [], []
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps_adam))
    return net.with_params(new_p), OptState(new_m, new_v, t)


def default_networks(in_dim: int, cfg: TrainConfig):
    """Desk-scale dense stacks for embedding, classifier, discriminator."""
    obj = cfg.objective
    phi = network_new([in_dim, cfg.hidden_phi, cfg.latent_dim], "tanh", cfg.seed)
    h = network_new([cfg.latent_dim, cfg.hidden_h, obj.n_classes],
                    ["tanh", "identity"], cfg.seed + 1)
    disc = None
    if obj.criterion in ("DANN", "CDANN"):
        d_in = cfg.latent_dim + (obj.n_classes if obj.criterion == "CDANN" else 0)
        disc = network_new([d_in, cfg.hidden_d, obj.n_envs],
                           ["tanh", "identity"], cfg.seed + 2)
    return h, phi, disc


def _stratified_batch(envs, batch_size: int, n_classes: int, rng: np.random.Generator) -> Batch:
    """Sample batch_size indices spread over every (env, class) cell."""
    cells = []
    for t, env in enumerate(envs):
        for y in range(n_classes):
            idx = env.class_indices(y)
            if len(idx):
                cells.append((t, idx))
    if not cells:
        raise ValueError("no data to sample")
    base = batch_size // len(cells)
    rem = batch_size - base * len(cells)
    xs, ys, es = [], [], []
    for c, (t, idx) in enumerate(cells):
        take = base + (1 if c < rem else 0)
        if take == 0:
            continue
        pick = idx[rng.integers(0, len(idx), size=take)]
        xs.append(envs[t].xs[pick])
        ys.append(envs[t].ys[pick])
        es.append(np.full(take, t))
    return Batch(np.concatenate(xs), np.concatenate(ys), np.concatenate(es))


def _probe_jfro(phi, envs, beta, rng, m=64):
    per_env = [env.xs for env in envs]
    xt = draw_virtual_batch(per_env, beta, rng, m)
    return float(np.sqrt(jacobian_frobenius_sq_batch(phi, xt)).mean())


def train(envs, cfg: TrainConfig, val_envs=None):
    """Optimize the combined objective; returns (h, phi, disc, RunHistory).

    Environment order defines env ids 0..T-1. val_envs (when given) are
    held-out source splits used only for the logged validation BER.
    """
    obj = cfg.objective
    if len(envs) != obj.n_envs:
        raise ValueError("config n_envs does not match environments")
    if obj.criterion != "ERM" and len(envs) < 2:
        raise ValueError("invariance criteria need at least two environments")
    in_dim = envs[0].dim
    h, phi, disc = default_networks(in_dim, cfg)
    st_h, st_phi = OptState.for_net(h), OptState.for_net(phi)
    st_d = OptState.for_net(disc) if disc is not None else None
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    hist = RunHistory()
    monitor = val_envs if val_envs else envs
    for step in range(1, cfg.steps + 1):
        batch = _stratified_batch(envs, cfg.batch_size, obj.n_classes, rng)
        loss, g_h, g_phi, g_d, parts = total_objective(h, phi, disc, batch, obj, rng)
        h, st_h = optimizer_step(h, g_h, st_h, cfg)
        phi, st_phi = optimizer_step(phi, g_phi, st_phi, cfg)
        if g_d is not None:
            disc, st_d = optimizer_step(disc, g_d, st_d, cfg)
        if (step % cfg.log_every == 0 or step == cfg.steps) and (not hist.steps or step > hist.steps[-1]):
            probe = np.random.Generator(np.random.Philox([cfg.seed, 0xA5, step]))
            jfro = _probe_jfro(phi, envs, obj.beta, probe)
            val = float(np.mean([ber_eval(h, phi, e) for e in monitor]))
            hist.log(step, parts["task"], parts["inv"], jfro, val)
    return h, phi, disc, hist


def train_val_split(envs, fraction: float, seed: int):
    """Per-environment class-stratified split into (train, val) lists."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.Generator(np.random.Philox(seed))
    train_envs, val_envs = [], []
    for env in envs:
        tr_idx, va_idx = [], []
        for y in np.unique(env.ys):
            idx = env.class_indices(int(y))
            idx = idx[rng.permutation(len(idx))]
            n_tr = int(round(len(idx) * (1.0 - fraction)))
            if n_tr == 0 or n_tr == len(idx):
                raise ValueError("split would empty a class cell")
            tr_idx.append(idx[:n_tr])
            va_idx.append(idx[n_tr:])
        tr_idx = np.concatenate(tr_idx)
        va_idx = np.concatenate(va_idx)
        train_envs.append(Environment(env.xs[tr_idx], env.ys[tr_idx], env.name, dict(env.meta)))
        val_envs.append(Environment(env.xs[va_idx], env.ys[va_idx], env.name, dict(env.meta)))
    return train_envs, val_envs


def model_select(envs, cfg: TrainConfig):
    """Grid search over (lambda0, lambda1) scored by source validation BER.

    Only source environments are ever passed in; the selected config is
    the argmin of mean validation BER, ties broken toward larger lambda1
    (prefer the smoother model), then larger lambda0.
    """
    grid = [(l0, l1) for l0 in cfg.lambda0_grid for l1 in cfg.lambda1_grid]
    if not grid:
        raise ValueError("empty hyperparameter grid")
    tr, va = train_val_split(envs, cfg.val_fraction, cfg.seed)
    table = []
    best = None
    for l0, l1 in grid:
        cand = replace(cfg, objective=replace(cfg.objective, lambda0=l0, lambda1=l1))
        h, phi, _, _ = train(tr, cand, val_envs=va)
        val = float(np.mean([ber_eval(h, phi, e) for e in va]))
        table.append((l0, l1, val))
        key = (val, -l1, -l0)
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1], table


def evaluate(h: Network, phi: Network, env: Environment):
    """Per-class 0-1 accuracies; their mean is exactly 1 - BER."""
    from .nets import forward

    z, _ = forward(phi, env.xs)
    logits, _ = forward(h, z)
    preds = np.argmax(logits, axis=1)
    classes = np.unique(env.ys)
    accs = []
    for y in classes:
        mask = env.ys == y
        accs.append(float(np.mean(preds[mask] == y)))
    accs = np.array(accs)
    mean_acc = float(accs.mean())
    return {
        "per_class_accuracy": accs,
        "accuracy_per_class_mean": mean_acc,
        "ber": 1.0 - mean_acc,
    }
