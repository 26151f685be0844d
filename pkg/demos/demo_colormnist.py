"""Color shortcut versus Jacobian regularization on the surrogate digits.

Two observed environments agree on a spurious color-label correlation
(P_S = 0.1 and 0.2); the held-out environment reverses it (P_S = 0.9).
Plain ERM exploits the color channel and collapses out of distribution;
adding the virtual-sample Jacobian penalty prices the high-gain color
detector out of the model and restores the shape-based (invariant)
solution. Runs in about a minute.
"""

from dataclasses import replace

import numpy as np

from invgen.envs import make_colored_env, make_surrogate_digits
from invgen.losses import ObjectiveConfig
from invgen.train import TrainConfig, evaluate, train

xs, ys = make_surrogate_digits(20_000, seed=202_406)
observed = [make_colored_env(xs, ys, p, 0.25, 5000, seed=int(p * 1000), name=f"P_S={p}")
            for p in (0.1, 0.2)]
held_out = make_colored_env(xs, ys, 0.9, 0.25, 5000, seed=900, name="P_S=0.9")

for lam in (0.0, 0.1):
    obj = ObjectiveConfig(criterion="ERM", lambda1=lam, n_classes=2, n_envs=2)
    cfg = TrainConfig(objective=obj, steps=1500, seed=0)
    h, phi, _, hist = train(observed, cfg)
    src = np.mean([evaluate(h, phi, e)["accuracy_per_class_mean"] for e in observed])
    tgt = evaluate(h, phi, held_out)["accuracy_per_class_mean"]
    tag = "ERM      " if lam == 0 else "ERM + REG"
    print(f"{tag}  lambda1={lam:<4}  source acc {src:.3f}   "
          f"held-out acc {tgt:.3f}   final ||J||_F {hist.jfro[-1]:.2f}")

print("\nThe Bayes cap for a shape-only model is 0.75 (25% label noise); "
      "ERM beats it in-distribution by leaning on color, then pays for it "
      "on the reversed environment.")
