"""Dense differentiable networks with exact input-Jacobians.

Everything here is plain numpy and purely functional: a Network is an
immutable stack of (W, b, activation) layers, forward returns a tape, and
backward/jacobian consume that tape. Activations are restricted to smooth
functions (tanh, softplus, identity) so that input-Jacobians and the
second-order Jacobian-penalty gradient are exact and certifiable against
finite differences.

Inputs may be single vectors of shape (d,) or batches of shape (n, d)
(rows are samples); outputs follow the input's rank.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Network",
    "Gradients",
    "network_new",
    "forward",
    "backward",
    "jacobian",
    "jacobian_batch",
    "jacobian_frobenius_sq",
    "jacobian_frobenius_sq_batch",
    "grad_jacobian_penalty",
    "grad_jacobian_penalty_batch",
    "finite_diff_check",
    "save_network",
    "load_network",
    "ACTIVATIONS",
]


# activation -> (f, f', f'') with f'' exact (needed by the Jacobian penalty)
def _softplus(x):
    # stable log(1 + e^x)
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


ACTIVATIONS = {
    "identity": (
        lambda x: x,
        lambda x: np.ones_like(x),
        lambda x: np.zeros_like(x),
    ),
    "tanh": (
        np.tanh,
        lambda x: 1.0 - np.tanh(x) ** 2,
        lambda x: -2.0 * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
    ),
    "softplus": (
        _softplus,
        _sigmoid,
        lambda x: _sigmoid(x) * (1.0 - _sigmoid(x)),
    ),
}

_ACT_TAGS = {"identity": 0, "tanh": 1, "softplus": 2}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}

_CKPT_MAGIC = b"INVGEN01"


@dataclass(frozen=True)
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str

    def __post_init__(self):
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}")
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise ValueError("layer shape mismatch")


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def params(self):
        """Flat list of parameter arrays, (W0, b0, W1, b1, ...)."""
        out = []
        for lay in self.layers:
            out.append(lay.W)
            out.append(lay.b)
        return out

    def with_params(self, arrays) -> "Network":
        """Rebuild with the given flat parameter list (same layout as params())."""
        if len(arrays) != 2 * len(self.layers):
            raise ValueError("parameter count mismatch")
        layers = []
        for i, lay in enumerate(self.layers):
            W, b = arrays[2 * i], arrays[2 * i + 1]
            if W.shape != lay.W.shape or b.shape != lay.b.shape:
                raise ValueError("parameter shape mismatch")
            layers.append(Layer(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64), lay.act))
        return Network(tuple(layers))


@dataclass
class Gradients:
    """Per-layer (dW, db), shape-congruent with a Network."""

    dW: list = field(default_factory=list)
    db: list = field(default_factory=list)

    @staticmethod
    def zeros_like(net: Network) -> "Gradients":
        return Gradients(
            dW=[np.zeros_like(l.W) for l in net.layers],
            db=[np.zeros_like(l.b) for l in net.layers],
        )

    def add_scaled(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        for i in range(len(self.dW)):
            self.dW[i] += scale * other.dW[i]
            self.db[i] += scale * other.db[i]
        return self

    def scaled(self, scale: float) -> "Gradients":
        return Gradients(dW=[scale * g for g in self.dW], db=[scale * g for g in self.db])

    def max_abs(self) -> float:
        vals = [np.max(np.abs(g)) if g.size else 0.0 for g in self.dW + self.db]
        return float(max(vals))


def network_new(layer_dims, activation, seed: int) -> Network:
    """Build a dense network with deterministic Glorot-uniform weights.

    layer_dims chains consecutive layers, e.g. [2, 3, 2] gives two layers.
    activation is a single name applied to every layer, or a per-layer
    sequence of names. Weights are uniform(+-sqrt(6/(in+out))) from a
    Philox counter-based stream; biases start at zero. Same (dims, seed)
    gives bit-identical weights.
    """
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least two dims to form a layer")
    if any(d < 1 for d in dims):
        raise ValueError("layer dims must be >= 1")
    n_layers = len(dims) - 1
    if isinstance(activation, str):
        acts = [activation] * n_layers
    else:
        acts = list(activation)
        if len(acts) != n_layers:
            raise ValueError("one activation per layer required")
    rng = np.random.Generator(np.random.Philox(seed))
    layers = []
    for k in range(n_layers):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        layers.append(Layer(W, b, acts[k]))
    return Network(tuple(layers))


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"input dim {x.shape[0]} != network in_dim {dim}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise ValueError(f"input dim {x.shape[1]} != network in_dim {dim}")
        return x, False
    raise ValueError("input must be rank 1 or 2")


def forward(net: Network, x):
    """Evaluate the network; returns (output, tape).

    The tape records per-layer inputs and pre-activations and is consumed
    by backward(). Output shape mirrors the input (vector in, vector out).
    """
    a, squeeze = _as_batch(x, net.in_dim)
    tape = {"inputs": [], "preacts": [], "squeeze": squeeze, "n": a.shape[0]}
    for lay in net.layers:
        tape["inputs"].append(a)
        s = a @ lay.W.T + lay.b
        tape["preacts"].append(s)
        a = ACTIVATIONS[lay.act][0](s)
    out = a[0] if squeeze else a
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite network output")
    return out, tape


def backward(net: Network, tape, upstream):
    """Reverse-mode gradient of <upstream, output> w.r.t. parameters and input.

    upstream must match the forward output's shape; returns (Gradients, dx).
    """
    if len(tape["inputs"]) != len(net.layers):
        raise ValueError("tape does not match network")
    up = np.asarray(upstream, dtype=np.float64)
    if tape["squeeze"]:
        if up.shape != (net.out_dim,):
            raise ValueError("upstream shape mismatch")
        g = up[None, :]
    else:
        if up.shape != (tape["n"], net.out_dim):
            raise ValueError("upstream shape mismatch")
        g = up
    grads = Gradients.zeros_like(net)
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        s = tape["preacts"][k]
        if s.shape[0] != g.shape[0] or s.shape[1] != lay.W.shape[0]:
            raise ValueError("tape/layer shape mismatch")
        delta = g * ACTIVATIONS[lay.act][1](s)
        grads.dW[k] = delta.T @ tape["inputs"][k]
        grads.db[k] = delta.sum(axis=0)
        g = delta @ lay.W
    dx = g[0] if tape["squeeze"] else g
    return grads, dx


def _layer_jacobians(net: Network, X):
    """Per-layer per-sample Jacobian factors diag(act'(s)) @ W.

    Returns (Ms, preacts, inputs): Ms[k] has shape (n, out_k, in_k).
    """
    a = X
    Ms, preacts, inputs = [], [], []
    for lay in net.layers:
        inputs.append(a)
        s = a @ lay.W.T + lay.b
        preacts.append(s)
        d = ACTIVATIONS[lay.act][1](s)
        Ms.append(d[:, :, None] * lay.W[None, :, :])
        a = ACTIVATIONS[lay.act][0](s)
    return Ms, preacts, inputs


def jacobian_batch(net: Network, X) -> np.ndarray:
    """Exact input-Jacobians for a batch, shape (n, out_dim, in_dim)."""
    X, _ = _as_batch(X, net.in_dim)
    Ms, _, _ = _layer_jacobians(net, X)
    J = Ms[0]
    for M in Ms[1:]:
        J = M @ J
    return J


def jacobian(net: Network, x) -> np.ndarray:
    """Exact Jacobian d(net(x))/dx for a single input, shape (out, in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("jacobian takes a single input vector")
    return jacobian_batch(net, x[None, :])[0]


def jacobian_frobenius_sq_batch(net: Network, X) -> np.ndarray:
    """Per-sample squared Frobenius norms of the input-Jacobian, shape (n,)."""
    J = jacobian_batch(net, X)
    return np.einsum("nij,nij->n", J, J)


def jacobian_frobenius_sq(net: Network, x) -> float:
    """Sum of squared Jacobian entries at a single input."""
    return float(jacobian_frobenius_sq_batch(net, np.asarray(x, dtype=np.float64)[None, :])[0])


def grad_jacobian_penalty_batch(net: Network, X) -> Gradients:
    """Parameter gradient of mean_n ||J(x_n)||_F^2, computed analytically.

    Each per-layer factor is M_k = diag(act'(s_k)) W_k with J = M_L...M_1.
    dF/dM_k = 2 U^T J V^T with U, V the partial products above/below layer
    k; the dependence of act'(s_k) on lower-layer parameters is handled by
    seeding the ordinary reverse pass with dF/ds_k = rowsum(dF/dM_k * W_k)
    * act''(s_k). Requires smooth activations.
    """
    X, _ = _as_batch(X, net.in_dim)
    n = X.shape[0]
    L = len(net.layers)
    Ms, preacts, inputs = _layer_jacobians(net, X)

    # prefix[k] = M_k ... M_1 ; suffix[k] = M_L ... M_k
    prefix = [None] * L
    prefix[0] = Ms[0]
    for k in range(1, L):
        prefix[k] = Ms[k] @ prefix[k - 1]
    suffix = [None] * L
    suffix[L - 1] = Ms[L - 1]
    for k in range(L - 2, -1, -1):
        suffix[k] = suffix[k + 1] @ Ms[k]
    J = prefix[L - 1]

    grads = Gradients.zeros_like(net)
    rho = [None] * L  # dF/ds_k per sample, from the act'(s_k) dependence
    for k in range(L):
        lay = net.layers[k]
        U = suffix[k + 1] if k + 1 < L else None
        V = prefix[k - 1] if k > 0 else None
        UJ = J if U is None else U.transpose(0, 2, 1) @ J
        G = 2.0 * UJ if V is None else 2.0 * (UJ @ V.transpose(0, 2, 1))
        d = ACTIVATIONS[lay.act][1](preacts[k])
        dd = ACTIVATIONS[lay.act][2](preacts[k])
        grads.dW[k] += (d[:, :, None] * G).sum(axis=0)
        rho[k] = (G * lay.W).sum(axis=2) * dd

    # reverse accumulation of the rho seeds through the forward graph
    g_a = None
    for k in range(L - 1, -1, -1):
        lay = net.layers[k]
        g_s = rho[k].copy()
        if g_a is not None:
            g_s += g_a * ACTIVATIONS[lay.act][1](preacts[k])
        grads.dW[k] += g_s.T @ inputs[k]
        grads.db[k] += g_s.sum(axis=0)
        g_a = g_s @ lay.W
    return grads.scaled(1.0 / n)


def grad_jacobian_penalty(net: Network, x) -> Gradients:
    """Parameter gradient of ||J(x)||_F^2 at a single input."""
    return grad_jacobian_penalty_batch(net, np.asarray(x, dtype=np.float64)[None, :])


def finite_diff_check(loss_fn, net: Network, step: float = 1e-5) -> float:
    """Certify an analytic gradient against central finite differences.

    loss_fn(net) must return (scalar_loss, Gradients). Every parameter is
    perturbed by +-step; the result is the max over parameters of
    |analytic - central| / max(1, |central|).
    """
    if not (1e-7 <= step <= 1e-3):
        raise ValueError("step must lie in [1e-7, 1e-3]")
    loss, grads = loss_fn(net)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    params = net.params()
    max_err = 0.0
    for pi, p in enumerate(params):
        analytic = grads.dW[pi // 2] if pi % 2 == 0 else grads.db[pi // 2]
        flat = p.ravel()
        for j in range(flat.size):
            orig = flat[j]
            pp = [q.copy() for q in params]
            pp[pi].ravel()[j] = orig + step
            lp, _ = loss_fn(net.with_params(pp))
            pp[pi].ravel()[j] = orig - step
            lm, _ = loss_fn(net.with_params(pp))
            central = (lp - lm) / (2.0 * step)
            err = abs(analytic.ravel()[j] - central) / max(1.0, abs(central))
            if err > max_err:
                max_err = err
    return float(max_err)


def save_network(net: Network, path) -> None:
    """Versioned binary checkpoint: dims, activation tags, little-endian f64 weights."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<q", len(net.layers)))
        for lay in net.layers:
            f.write(struct.pack("<qqB", lay.W.shape[0], lay.W.shape[1], _ACT_TAGS[lay.act]))
        for lay in net.layers:
            f.write(np.ascontiguousarray(lay.W, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(lay.b, dtype="<f8").tobytes())


def load_network(path) -> Network:
    """Inverse of save_network; round-trip is bit-exact."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _CKPT_MAGIC:
            raise ValueError("bad checkpoint magic")
        (n_layers,) = struct.unpack("<q", f.read(8))
        shapes = []
        for _ in range(n_layers):
            out_d, in_d, tag = struct.unpack("<qqB", f.read(17))
            if tag not in _TAG_ACTS:
                raise ValueError("bad activation tag")
            shapes.append((out_d, in_d, _TAG_ACTS[tag]))
        layers = []
        for out_d, in_d, act in shapes:
            W = np.frombuffer(f.read(8 * out_d * in_d), dtype="<f8").reshape(out_d, in_d).copy()
            b = np.frombuffer(f.read(8 * out_d), dtype="<f8").copy()
            if W.size != out_d * in_d or b.size != out_d:
                raise ValueError("truncated checkpoint")
            layers.append(Layer(W, b, act))
    return Network(tuple(layers))
