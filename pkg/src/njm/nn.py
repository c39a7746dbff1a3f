"""Dense numeric primitives for the hand-written backpropagation.

Float64 everywhere: the models are tiny and finite-difference checking
needs the headroom. Forward ops validate shapes and raise ValueError on
mismatch; each op has a matching backward that maps output gradients to
input gradients.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DivergenceError
from .kernels_np import sigmoid  # stable elementwise logistic


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(grad_out, a, b):
    """Gradients of `matmul` w.r.t. both inputs."""
    if grad_out.shape != (a.shape[0], b.shape[1]):
        raise ValueError(f"matmul grad shape mismatch: {grad_out.shape}")
    return grad_out @ b.T, a.T @ grad_out


def add(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def add_backward(grad_out):
    return grad_out, grad_out


def sigmoid_backward(grad_out, out):
    """Backward through sigmoid given its output."""
    return grad_out * out * (1.0 - out)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_backward(grad_out, out):
    return grad_out * (1.0 - out * out)


def softmax_cross_entropy(logits, target):
    """Loss and logits gradient for one row.

    loss = -log softmax(logits)[target], computed with max subtraction;
    grad = softmax(logits) - onehot(target).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("softmax_cross_entropy expects a 1-d logits row")
    v = logits.shape[0]
    if not (0 <= target < v):
        raise ValueError(f"target {target} out of range for {v} classes")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    shifted = logits - logits.max()
    ex = np.exp(shifted)
    denom = ex.sum()
    loss = np.log(denom) - shifted[target]
    grad = ex / denom
    grad[target] -= 1.0
    return float(loss), grad


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def init(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place, in sorted name order."""
    for name in sorted(params):
        if not np.all(np.isfinite(grads[name])):
            raise DivergenceError(f"divergence: non-finite gradient in {name}")
    state.t += 1
    kern = backend.kernels()
    for name in sorted(params):
        if state.m[name].shape != params[name].shape:
            raise ValueError(f"adam state shape mismatch for {name}")
        kern.adam_update(params[name].ravel(), grads[name].ravel(),
                         state.m[name].ravel(), state.v[name].ravel(),
                         state.t, state.lr, state.beta1, state.beta2, state.eps)


def grad_check(loss_fn, params, grads, epsilon=1e-4, max_coords=None, seed=0,
               floor=1e-6):
    """Max relative error between `grads` and central differences of `loss_fn`.

    Perturbs each coordinate (or a seeded subsample of max_coords per
    tensor) by +/- epsilon and compares (f+ - f-) / 2 eps against the
    analytic value; relative error uses max(|a|, |n|, floor) as scale.
    The floor keeps finite-difference roundoff (~1e-12 absolute at
    epsilon=1e-4) from dominating coordinates whose true gradient is too
    small for the difference quotient to resolve; at the default it
    still demands 1e-10 absolute agreement there.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        flat = p.ravel()
        g = grads[name].ravel()
        idxs = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idxs = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_fn(params)
            flat[i] = orig - epsilon
            f_minus = loss_fn(params)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            analytic = g[i]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            if err > worst:
                worst = err
    return float(worst)


def init_uniform(shape, rng, scale=0.08):
    """Conventional small-LSTM initialization: uniform in [-scale, scale]."""
    return rng.uniform(-scale, scale, size=shape)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))


def clip_global_norm(grads, max_norm):
    """Scale all gradients so the global norm is at most max_norm.

    Returns the pre-clip norm. No-op when max_norm is None or the norm
    is already within bounds.
    """
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
