"""Adam with bias correction and optional global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from ..errors import GradientError
from .tensor import Tensor


class Adam:
    """Holds first/second moment buffers for a fixed parameter list.

    ``max_grad_norm`` is off by default; when set (0.5 is the intended
    value), gradients are rescaled so their joint l2 norm never exceeds it.
    A non-finite gradient raises ``GradientError`` before any parameter or
    moment buffer is touched.
    """

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        max_grad_norm: float | None = None,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.max_grad_norm = max_grad_norm
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise GradientError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for k, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise GradientError(
                    f"non-finite gradient for parameter {k} "
                    f"(shape {g.shape}, {bad} bad entries); update rejected"
                )
        if self.max_grad_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if total > self.max_grad_norm:
                scale = self.max_grad_norm / total
                grads = [g * scale for g in grads]
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
