"""Small dense networks trained with Adam, plus replay memories.

Everything is plain numpy; no autodiff.  A network standardizes its input,
applies ReLU hidden layers and ends in a single linear unit.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

STD_FLOOR = 1e-8
VALUE_HIDDEN = (64, 32, 16)
SINR_HIDDEN = (32, 16, 8)


class DivergenceError(RuntimeError):
    pass


def fit_standardizer(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and (population) standard deviation, std floored."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2D dataset")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return mean, std


class DenseNetwork:
    def __init__(self, widths: Sequence[int], rng: np.random.Generator | None = None,
                 output_bias: float = 0.0):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid widths {widths}")
        self.widths = widths
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            lim = np.sqrt(6.0 / fan_in) if fan_out > 1 else np.sqrt(3.0 / fan_in)
            self.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.biases[-1][:] = output_bias
        self.mean = np.zeros(widths[0])
        self.std = np.ones(widths[0])

    @classmethod
    def value_net(cls, n_in: int, rng=None) -> "DenseNetwork":
        return cls((n_in, *VALUE_HIDDEN, 1), rng)

    @classmethod
    def sinr_net(cls, n_in: int, rng=None, output_bias: float = 0.5) -> "DenseNetwork":
        return cls((n_in, *SINR_HIDDEN, 1), rng, output_bias)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_standardizer(self, mean, std):
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        if mean.shape != (self.widths[0],) or std.shape != (self.widths[0],):
            raise ValueError("standardizer width mismatch")
        self.mean = mean.copy()
        self.std = np.maximum(std, STD_FLOOR)

    def copy(self) -> "DenseNetwork":
        new = DenseNetwork.__new__(DenseNetwork)
        new.widths = self.widths
        new.weights = [W.copy() for W in self.weights]
        new.biases = [b.copy() for b in self.biases]
        new.mean = self.mean.copy()
        new.std = self.std.copy()
        return new

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.widths[0]:
            raise ValueError(f"input width {X.shape[-1]} does not match network width {self.widths[0]}")
        return X

    def predict(self, X) -> np.ndarray:
        """Outputs for a batch ``(N, n_in)``; a single vector gives a scalar."""
        X = self._check(X)
        h = (X - self.mean) / self.std
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        out = h[..., 0]
        return float(out) if out.ndim == 0 else out

    forward = predict

    def loss_and_grads(self, X, y, l2: float):
        """Mean squared error plus ``l2 * sum(W**2)`` and its exact gradients."""
        X = np.atleast_2d(self._check(X))
        y = np.asarray(y, dtype=float).reshape(-1)
        n = X.shape[0]
        acts = [(X - self.mean) / self.std]
        pre = []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ W + b
            pre.append(z)
            acts.append(np.maximum(z, 0.0) if i < last else z)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err ** 2) + l2 * sum(float(np.sum(W * W)) for W in self.weights))
        delta = (2.0 / n) * err[:, None]
        gW, gb = [None] * len(self.weights), [None] * len(self.weights)
        for i in range(last, -1, -1):
            gW[i] = acts[i].T @ delta + 2.0 * l2 * self.weights[i]
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        grads = []
        for a, b in zip(gW, gb):
            grads += [a, b]
        return loss, grads


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Trainable:
    """A network bundled with its optimizer state and regularization."""

    def __init__(self, net: DenseNetwork, lr: float = 0.01, l2: float = 1e-4, batch_size: int = 200):
        self.net = net
        self.opt = Adam(net.params, lr)
        self.l2 = l2
        self.batch_size = batch_size


def train_minibatch(net: DenseNetwork, opt: Adam, X, y, l2: float = 1e-4) -> float:
    """One Adam step on ``(X, y)``; returns the loss before the update."""
    if len(y) == 0:
        raise ValueError("empty batch")
    loss, grads = net.loss_and_grads(X, y, l2)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise DivergenceError("divergence")
    opt.step(net.params, grads)
    return loss


def fit(net: DenseNetwork, opt: Adam, X, y, n_updates: int, rng: np.random.Generator,
        batch_size: int = 200, l2: float = 1e-4) -> list[float]:
    """Plain minibatch loop over an in-memory dataset."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    losses = []
    for _ in range(n_updates):
        idx = rng.choice(len(y), size=min(batch_size, len(y)), replace=False)
        losses.append(train_minibatch(net, opt, X[idx], y[idx], l2))
    return losses


def _finish(layer, pre, weights, biases):
    """Output from the pre-activation of ``layer`` onward."""
    last = len(weights) - 1
    h = pre
    for i in range(layer, last):
        h = np.maximum(h, 0.0) @ weights[i + 1] + biases[i + 1]
    return h[:, 0].copy()


def gradient_check(net: DenseNetwork, X, y, l2: float = 1e-4, h: float = 1e-6) -> float:
    """Max relative error between backprop and central differences over all parameters.

    The differences use a separate forward pass in extended precision so that
    rounding stays well below the step's truncation error even for tiny
    gradients; the small step keeps ReLU kinks out of the stencil.
    """
    _, grads = net.loss_and_grads(X, y, l2)
    ld = np.longdouble
    weights = [W.astype(ld) for W in net.weights]
    biases = [b.astype(ld) for b in net.biases]
    yl = np.asarray(y, dtype=ld).reshape(-1)
    act = (np.atleast_2d(np.asarray(X, dtype=ld)) - net.mean.astype(ld)) / net.std.astype(ld)
    ins, pres = [], []
    for i, (W, b) in enumerate(zip(weights, biases)):
        ins.append(act)
        pres.append(act @ W + b)
        act = np.maximum(pres[-1], 0.0)
    step = ld(h)
    worst = 0.0

    def compare(layer, col, shift, analytic, l2_term):
        nonlocal worst
        pre = pres[layer].copy()
        base = pre[:, col].copy()
        pre[:, col] = base + shift
        up = _finish(layer, pre, weights, biases)
        pre[:, col] = base - shift
        down = _finish(layer, pre, weights, biases)
        # (a - y)^2 - (b - y)^2 = (a - b)(a + b - 2y) avoids cancellation
        num = float((np.mean((up - down) * (up + down - 2 * yl)) + l2_term) / (2 * step))
        worst = max(worst, abs(num - analytic) / max(abs(num), abs(analytic), 1e-7))

    for layer, (W, b) in enumerate(zip(weights, biases)):
        gW, gb = grads[2 * layer], grads[2 * layer + 1]
        for i in range(W.shape[0]):
            for j in range(W.shape[1]):
                # a weight only moves its own output column, by step * input
                compare(layer, j, step * ins[layer][:, i], gW[i, j], l2 * 4 * W[i, j] * step)
        for j in range(b.shape[0]):
            compare(layer, j, step, gb[j], 0.0)
    return worst


class ReplayMemory:
    """Fixed-capacity FIFO of ``(features, target)`` rows kept in a ring buffer."""

    def __init__(self, capacity: int, width: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.width = width
        self.X = np.zeros((capacity, width))
        self.y = np.zeros(capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def push(self, x, target: float):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.width,):
            raise ValueError(f"expected features of width {self.width}, got {x.shape}")
        i = self.inserted % self.capacity
        self.X[i] = x
        self.y[i] = target
        self.inserted += 1

    def push_many(self, X, y):
        for x, t in zip(np.asarray(X, dtype=float).reshape(-1, self.width), np.asarray(y, dtype=float)):
            self.push(x, t)

    def contents(self) -> tuple[np.ndarray, np.ndarray]:
        """All rows, oldest first."""
        n = len(self)
        if self.inserted <= self.capacity:
            return self.X[:n].copy(), self.y[:n].copy()
        start = self.inserted % self.capacity
        order = np.r_[start:self.capacity, 0:start]
        return self.X[order].copy(), self.y[order].copy()

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty memory")
        return rng.choice(n, size=batch_size, replace=n < batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = self.sample_indices(batch_size, rng)
        return self.X[idx], self.y[idx]
