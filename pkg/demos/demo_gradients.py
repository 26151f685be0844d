"""Autodiff walkthrough: exact Jacobians and the double-backprop penalty.

Builds a small tanh network, compares every analytic derivative against
central finite differences, and shows the Jacobian-norm penalty gradient
that powers the representation regularizer.
"""

import numpy as np

from invgen.nets import (
    finite_diff_check,
    forward,
    backward,
    grad_jacobian_penalty_batch,
    jacobian,
    jacobian_frobenius_sq_batch,
    network_new,
)

rng = np.random.default_rng(0)
net = network_new([4, 16, 3], "tanh", seed=7)
x = rng.standard_normal(4)

out, tape = forward(net, x)
print("output:", np.round(out, 4))

J = jacobian(net, x)
print("input Jacobian shape:", J.shape)
print("||J||_F =", float(np.sqrt((J ** 2).sum())))

# certify d<w, f(x)>/dparams against finite differences
w = rng.standard_normal(3)


def scalar_loss(n):
    o, t = forward(n, x)
    g, _ = backward(n, t, w)
    return float(o @ w), g


print("first-order fd error:", finite_diff_check(scalar_loss, net))

# and the second-order quantity: gradient of mean ||J||_F^2
X = rng.standard_normal((8, 4))


def penalty_loss(n):
    val = float(jacobian_frobenius_sq_batch(n, X).mean())
    return val, grad_jacobian_penalty_batch(n, X)


print("jacobian-penalty fd error:", finite_diff_check(penalty_loss, net))
