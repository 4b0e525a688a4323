"""Adam optimizer over named parameter tensors."""

from typing import Dict

import numpy as np

from .autodiff import Tensor


class OptimizerError(RuntimeError):
    pass


class Adam:
    """Bias-corrected Adam. Moments are keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, named_params: Dict[str, Tensor], lr: float) -> None:
        """One in-place update from each tensor's accumulated .grad.

        Tensors without a gradient this step are left untouched (their
        moments do not advance either).
        """
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in named_params.items():
            g = p.grad
            if g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise OptimizerError("non-finite gradient for parameter %r" % name)
            if g.shape != p.data.shape:
                raise OptimizerError(
                    "gradient shape %r does not match parameter %r shape %r"
                    % (g.shape, name, p.data.shape)
                )
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
