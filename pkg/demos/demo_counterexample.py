"""The over-matching counter-example: zero source error, epsilon test error.

Two source environments admit a piecewise-linear embedding under which
both are perfectly classified and exactly matched in representation
space - yet a test environment that differs from a source by
class-conditional total variation epsilon forces error epsilon. Matching
representations across sources alone cannot certify transfer.
"""

import numpy as np

from invgen.envs import counterexample_h, counterexample_phi, make_counterexample_envs


def analytic_ber(env):
    errs = []
    for y in (0, 1):
        mask = env.ys == y
        want = 1 if y == 1 else -1
        preds = np.array([counterexample_h(counterexample_phi(float(x)))
                          for x in env.xs[mask, 0]])
        errs.append(np.mean(preds != want))
    return float(np.mean(errs))


print(f"{'epsilon':>8} {'BER(S1)':>8} {'BER(S2)':>8} {'BER(T)':>8}")
for eps in (0.1, 0.2, 0.3):
    s1, s2, t = make_counterexample_envs(10_000, eps, seed=0)
    print(f"{eps:>8.2f} {analytic_ber(s1):>8.4f} {analytic_ber(s2):>8.4f} "
          f"{analytic_ber(t):>8.4f}")

print("\nsource BERs are exactly 0; test BER tracks epsilon "
      "(within 2/sqrt(n) sampling error).")
