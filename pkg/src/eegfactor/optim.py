"""AdamW with decoupled weight decay."""

import numpy as np


class AdamW:
    def __init__(self, params, lr=0.001, weight_decay=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        """params: {name: Tensor}; state is tracked per parameter name."""
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """One update using each parameter's accumulated .grad (missing grad = 0)."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {k}")
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            # decay is decoupled and applied to the pre-update parameter value
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps) + (
                self.lr * self.weight_decay
            ) * p.data

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
