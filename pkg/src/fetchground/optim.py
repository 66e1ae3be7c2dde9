"""Adam optimizer, global-norm clipping and a central-difference
gradient checker used by the test suite."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError
from .nn import Parameter
from .tensor import backward


class Adam:
    """Adam with bias correction; eps sits outside the square root:

        p -= lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params: list[Parameter], lr: float = 2e-4,
                 beta1: float = 0.99, beta2: float = 0.9, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.tensor.grad
            if g is None:
                raise UsageError(f"parameter '{p.name}' has no gradient; "
                                 "run backward before step")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** t)
            v_hat = self.v[i] / (1 - b2 ** t)
            p.data[...] = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.tensor.zero_grad()

    def state_arrays(self) -> dict:
        """Flat name->array view of optimizer state, for checkpointing."""
        out = {"adam.step": np.array([float(self.step_count)])}
        for i, p in enumerate(self.params):
            out[f"adam.m.{p.name}"] = self.m[i]
            out[f"adam.v.{p.name}"] = self.v[i]
        return out

    def load_state_arrays(self, arrays: dict):
        self.step_count = int(arrays["adam.step"][0])
        for i, p in enumerate(self.params):
            self.m[i] = np.array(arrays[f"adam.m.{p.name}"], dtype=np.float64)
            self.v[i] = np.array(arrays[f"adam.v.{p.name}"], dtype=np.float64)


def clip_global_norm(params: list[Parameter], max_norm: float = 5.0) -> float:
    """Scale all gradients by max_norm/norm when the joint L2 norm exceeds
    max_norm.  Returns the pre-clip norm."""
    total = 0.0
    grads = []
    for p in params:
        if not p.trainable or p.tensor.grad is None:
            continue
        grads.append(p.tensor.grad)
        total += float(np.sum(p.tensor.grad ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    per_param: dict = field(default_factory=dict)

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(f, params: list[Parameter], h: float = 1e-5,
               tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued f() against central
    differences over every element of every parameter.

    Relative error uses max(|analytic|, |numeric|, 1e-8) in the
    denominator so zero gradients do not blow up.  Any non-finite probe
    value raises NumericError.
    """
    for p in params:
        p.tensor.zero_grad()
    loss = f()
    backward(loss)
    analytic = {p.name: np.array(p.tensor.grad) for p in params if p.trainable}

    worst = (0.0, "", ())
    per_param = {}
    for p in params:
        if not p.trainable:
            continue
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = float(f().data)
            flat[j] = orig - h
            lm = float(f().data)
            flat[j] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while probing '{p.name}'")
            num[j] = (lp - lm) / (2 * h)
        a = analytic[p.name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
        rel = np.abs(a - num) / denom
        per_param[p.name] = float(rel.max()) if rel.size else 0.0
        if rel.size and rel.max() > worst[0]:
            idx = int(np.argmax(rel))
            worst = (float(rel.max()), p.name, np.unravel_index(idx, p.data.shape))
    return GradCheckReport(max_rel_error=worst[0], worst_param=worst[1],
                           worst_index=worst[2], per_param=per_param)
