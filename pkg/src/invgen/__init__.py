"""Invariance-based domain generalization with Jacobian-norm
regularization, plus exact finite-world verification of the bounds that
justify it."""

from . import envs, losses, nets, theory, train

__all__ = ["nets", "losses", "envs", "theory", "train"]
__version__ = "0.1.0"
