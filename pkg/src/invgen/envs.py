"""Environment generators and finite discrete worlds.

Provides the colored-digits construction (from real IDX files or an
offline two-blob surrogate), the 1-D piecewise-uniform counter-example
world whose class-conditional shifts are exact by construction, Gaussian
shift families for sweeps, and random finite DiscreteWorlds that serve as
brute-force substrates for the theory verifiers.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Environment",
    "DiscreteWorld",
    "load_idx",
    "make_surrogate_digits",
    "make_colored_env",
    "make_counterexample_envs",
    "counterexample_phi",
    "counterexample_h",
    "make_gaussian_envs",
    "rebalance_labels",
    "make_discrete_world",
    "env_to_csv",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Environment:
    """A labeled sample set tagged with a name and generator metadata."""

    xs: np.ndarray  # (n, d)
    ys: np.ndarray  # (n,) int
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.xs) == 0 or len(self.xs) != len(self.ys):
            raise ValueError("environment needs matching non-empty xs/ys")
        if not np.all(np.isfinite(self.xs)):
            raise ValueError("non-finite features")

    @property
    def n(self) -> int:
        return len(self.ys)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def class_indices(self, y: int) -> np.ndarray:
        return np.flatnonzero(self.ys == y)


@dataclass(frozen=True)
class DiscreteWorld:
    """Finite feature/latent spaces with an explicit stochastic channel.

    px_given_y[t] is the (n_y, n_x) table of class-conditional feature
    distributions in environment t; channel is the (n_x, n_z) embedding
    kernel; test_env_index marks which environment plays the unseen one.
    """

    n_x: int
    n_z: int
    n_y: int
    n_env: int
    px_given_y: np.ndarray  # (n_env, n_y, n_x), rows sum to 1
    py: np.ndarray  # (n_env, n_y), rows sum to 1
    channel: np.ndarray  # (n_x, n_z), rows sum to 1
    test_env_index: int = 0

    def __post_init__(self):
        for name, table, last in (
            ("px_given_y", self.px_given_y, self.n_x),
            ("py", self.py, self.n_y),
            ("channel", self.channel, self.n_z),
        ):
            if table.shape[-1] != last or np.any(table < 0):
                raise ValueError(f"invalid {name} table")
            if not np.allclose(table.sum(axis=-1), 1.0, atol=1e-12):
                raise ValueError(f"{name} rows must sum to 1")
        if not (0 <= self.test_env_index < self.n_env):
            raise ValueError("test_env_index out of range")

    def source_indices(self):
        return [t for t in range(self.n_env) if t != self.test_env_index]

    def latent_given_y(self, env: int) -> np.ndarray:
        """Class-conditional latent distributions (n_y, n_z) for one environment."""
        return self.px_given_y[env] @ self.channel


def load_idx(images_path, labels_path):
    """Read big-endian IDX image/label files; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise ValueError("truncated image header")
        magic, n, rows, cols = struct.unpack(">iiii", header)
        if magic != _IDX_IMAGES_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x}")
        payload = f.read(n * rows * cols)
        if len(payload) != n * rows * cols:
            raise ValueError("truncated image payload")
        xs = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols) / 255.0
    with open(labels_path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise ValueError("truncated label header")
        magic, n_lab = struct.unpack(">ii", header)
        if magic != _IDX_LABELS_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x}")
        payload = f.read(n_lab)
        if len(payload) != n_lab:
            raise ValueError("truncated label payload")
        ys = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if len(xs) != len(ys):
        raise ValueError("image/label count mismatch")
    return xs, ys


def make_surrogate_digits(n: int, seed: int, dim: int = 20):
    """Offline stand-in for digit images: two well-separated isotropic
    blobs in `dim` dimensions, labels 0/1, balanced to within one sample.

    The cloud is kept at small amplitude (class-mean separation 0.4
    against noise sigma 0.1, a 2-sigma margin, so a linear probe clears
    95% accuracy). Small amplitude matters: any feature extracted from
    these inputs needs high gain, so feature choices are visible to a
    Jacobian-norm penalty the way fine image detail is."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    ys = np.arange(n) % 2
    mu = np.full(dim, 0.2 / np.sqrt(dim))
    xs = 0.1 * rng.standard_normal((n, dim))
    xs[ys == 0] -= mu
    xs[ys == 1] += mu
    perm = rng.permutation(n)
    return xs[perm], ys[perm]


def make_colored_env(base_xs, base_ys, p_color_flip: float, label_noise: float,
                     n: int, seed: int, name: str = "") -> Environment:
    """Colored-digits construction.

    Binary label from the digit (0-4 vs 5-9, or the surrogate's 0/1),
    flipped with probability label_noise; a color bit copies the final
    label and is flipped with probability p_color_flip. The output is
    two stacked channels (red copy, green copy, one zeroed) so the color
    is a linearly decodable feature. meta["P_S"] records the flip
    probability.
    """
    if not (0 <= p_color_flip <= 1 and 0 <= label_noise <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if n > len(base_xs):
        raise ValueError("n exceeds available samples")
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.choice(len(base_xs), size=n, replace=False)
    imgs = np.asarray(base_xs, dtype=np.float64)[idx]
    digits = np.asarray(base_ys)[idx]
    y_tilde = (digits >= 5).astype(np.int64) if digits.max() > 1 else digits.astype(np.int64)
    y = y_tilde ^ (rng.random(n) < label_noise)
    color = y ^ (rng.random(n) < p_color_flip)  # 1 = red, 0 = green
    d = imgs.shape[1]
    xs = np.zeros((n, 2 * d))
    red = color == 1
    xs[red, :d] = imgs[red]
    xs[~red, d:] = imgs[~red]
    return Environment(xs, y.astype(np.int64), name or f"P_S={p_color_flip}",
                       {"P_S": p_color_flip, "label_noise": label_noise})


def counterexample_phi(x: float) -> float:
    """Piecewise embedding of the over-matching counter-example."""
    if 0.0 <= x <= 2.0:
        return x
    if 3.0 <= x <= 4.0:
        return x - 2.0
    if 4.0 < x <= 5.0:
        return 5.0 - x
    raise ValueError(f"x={x} outside the supported segments")


def counterexample_h(z: float) -> int:
    """Classifier -sign(z - 1); the z = 1 tie breaks toward +1."""
    return 1 if z <= 1.0 else -1


def make_counterexample_envs(n: int, epsilon: float, seed: int = 0):
    """Sampled 1-D environments on piecewise-uniform segments.

    S1 places class +1 on [0,1] and class -1 on [1,2]; S2 places class -1
    on [3,4] and class +1 on (4,5], so the piecewise phi/h pair above is
    exact on both. T equals S2 with mass epsilon of each class moved
    across the class boundary, making every class-conditional total
    variation to S2 exactly epsilon. Labels are encoded 1 for +1 and 0
    for -1.
    """
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 0.5)")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    half = n // 2

    def env(pos_seg, neg_seg, name, swap_frac=0.0):
        xs, ys = [], []
        for label, (lo, hi), (olo, ohi) in ((1, pos_seg, neg_seg), (0, neg_seg, pos_seg)):
            u = rng.random(half)
            swapped = rng.random(half) < swap_frac
            x = lo + u * (hi - lo)
            x[swapped] = olo + u[swapped] * (ohi - olo)
            xs.append(x)
            ys.append(np.full(half, label))
        xs = np.concatenate(xs)[:, None]
        ys = np.concatenate(ys)
        return Environment(xs, ys, name, {"epsilon": swap_frac})

    s1 = env((0.0, 1.0), (1.0, 2.0), "S1")
    s2 = env((4.0, 5.0), (3.0, 4.0), "S2")
    t = env((4.0, 5.0), (3.0, 4.0), "T", swap_frac=epsilon)
    return s1, s2, t


def make_gaussian_envs(spec, n: int, seed: int):
    """Class-conditional isotropic Gaussian environments.

    spec is a list of per-environment dicts {"means": [vec per class],
    "sigma": s}; the spec is retained in meta so exact distances between
    the generating distributions remain computable.
    """
    envs = []
    rng = np.random.Generator(np.random.Philox(seed))
    for i, es in enumerate(spec):
        means = [np.asarray(m, dtype=np.float64) for m in es["means"]]
        sigma = float(es["sigma"])
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        if len({m.shape for m in means}) != 1:
            raise ValueError("class means must share a dimension")
        k = len(means)
        per = [n // k + (1 if c < n % k else 0) for c in range(k)]
        xs, ys = [], []
        for c, mu in enumerate(means):
            xs.append(mu + sigma * rng.standard_normal((per[c], mu.shape[0])))
            ys.append(np.full(per[c], c))
        envs.append(Environment(np.concatenate(xs), np.concatenate(ys),
                                es.get("name", f"env{i}"), {"spec": es}))
    return envs


def rebalance_labels(env: Environment, seed: int = 0) -> Environment:
    """Resample (with replacement where short) so every class count equals
    the largest one; deterministic under the seed."""
    rng = np.random.Generator(np.random.Philox(seed))
    classes = np.unique(env.ys)
    counts = {int(y): int((env.ys == y).sum()) for y in classes}
    target = max(counts.values())
    keep = []
    for y in classes:
        idx = env.class_indices(int(y))
        if len(idx) == target:
            keep.append(idx)
        else:
            extra = rng.choice(idx, size=target - len(idx), replace=True)
            keep.append(np.concatenate([idx, extra]))
    order = np.concatenate(keep)
    return Environment(env.xs[order], env.ys[order], env.name, dict(env.meta))


def make_discrete_world(n_x: int, n_z: int, n_y: int, n_env: int, seed: int,
                        smoothness: float = 0.0, balanced: bool = False,
                        floor: float = 0.0) -> DiscreteWorld:
    """Random valid world. smoothness interpolates every channel row toward
    a shared row (1 = identical rows, hence zero contraction coefficient).
    floor > 0 mixes each probability row with uniform to guarantee full
    support (needed when support intersections must be nonempty)."""
    if min(n_x, n_z, n_y, n_env) < 2:
        raise ValueError("all sizes must be >= 2")
    if not (0.0 <= smoothness <= 1.0):
        raise ValueError("smoothness must lie in [0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))

    def rows(shape):
        g = rng.gamma(1.0, size=shape)
        g /= g.sum(axis=-1, keepdims=True)
        if floor > 0:
            g = (1 - floor) * g + floor / shape[-1]
        return g

    px_given_y = rows((n_env, n_y, n_x))
    if balanced:
        py = np.full((n_env, n_y), 1.0 / n_y)
    else:
        py = rows((n_env, n_y))
    common = rows((1, n_z))
    channel = (1 - smoothness) * rows((n_x, n_z)) + smoothness * common
    channel /= channel.sum(axis=-1, keepdims=True)
    test_idx = int(rng.integers(n_env))
    return DiscreteWorld(n_x, n_z, n_y, n_env, px_given_y, py, channel, test_idx)


def env_to_csv(env: Environment, path) -> None:
    """Inspection dump: header env,label,f0..f{d-1}."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["env", "label"] + [f"f{i}" for i in range(env.dim)])
        for y, x in zip(env.ys, env.xs):
            w.writerow([env.name, int(y)] + [f"{v:.10g}" for v in x])
