"""Minimal dense-network machinery with hand-written gradients.

Everything is plain numpy so runs are bit-reproducible for a fixed seed and
gradients can be validated against finite differences in float64. Weights are
initialized fan-in scaled uniform (U(-1/sqrt(fan_in), 1/sqrt(fan_in))).
"""

from __future__ import annotations

import numpy as np


class TrainingFault(RuntimeError):
    """Raised when a loss or gradient turns non-finite."""


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # stable piecewise form
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def log1m_tanh_sq(x):
    """log(1 - tanh(x)^2), computed without cancellation."""
    return 2.0 * (np.log(2.0) - x - softplus(-2.0 * x))


def init_linear(rng: np.random.Generator, n_in: int, n_out: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)
    b = rng.uniform(-bound, bound, n_out).astype(dtype)
    return w, b


class MLP:
    """Fully-connected net; hidden activations ReLU, identity output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, dtype=np.float64):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w, b = init_linear(rng, n_in, n_out, self.dtype)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """x: (B, sizes[0]). Returns output (B, sizes[-1]) and optionally the
        per-layer post-activation cache required by backward()."""
        h = x
        cache = [x] if want_cache else None
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = relu(h)
            if want_cache:
                cache.append(h)
        return (h, cache) if want_cache else h

    def backward(self, cache: list[np.ndarray], dout: np.ndarray):
        """Gradient of a scalar loss given d loss / d output.

        Returns (grads, dx) where grads matches parameters() ordering.
        """
        dw_list = [None] * self.n_layers
        db_list = [None] * self.n_layers
        grad = dout
        for i in range(self.n_layers - 1, -1, -1):
            h_in = cache[i]
            if i != self.n_layers - 1:
                grad = grad * (cache[i + 1] > 0)  # relu mask on post-activation
            dw_list[i] = h_in.T @ grad
            db_list[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
        grads = []
        for dw, db in zip(dw_list, db_list):
            grads.extend([dw, db])
        return grads, grad

    def input_gradient(self, cache: list[np.ndarray], dout: np.ndarray) -> np.ndarray:
        """d loss / d input only, skipping the parameter-gradient matmuls."""
        grad = dout
        for i in range(self.n_layers - 1, -1, -1):
            if i != self.n_layers - 1:
                grad = grad * (cache[i + 1] > 0)
            grad = grad @ self.weights[i].T
        return grad

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        it = iter(params)
        for i in range(self.n_layers):
            self.weights[i] = next(it).astype(self.dtype)
            self.biases[i] = next(it).astype(self.dtype)

    def copy(self) -> "MLP":
        clone = MLP.__new__(MLP)
        clone.sizes = list(self.sizes)
        clone.dtype = self.dtype
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


class Adam:
    """Adaptive-moment gradient descent over a list of arrays."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def polyak_update(target: list[np.ndarray], online: list[np.ndarray], tau: float) -> None:
    for t, o in zip(target, online):
        t *= 1.0 - tau
        t += tau * o


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(np.square(g))) for g in grads))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def check_finite(arrays, what: str) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise TrainingFault(f"non-finite values in {what}")
