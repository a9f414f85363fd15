"""Hand-rolled dense-network numerics: MLPs, reverse-mode gradients,
Adam, and the squashed-Gaussian policy head.

Everything is float64 numpy.  Backward passes are written out explicitly
(no autodiff) and verified against central finite differences in the
test suite, so any edit here must keep the analytic gradients in step
with the forwards.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), stable for large |x|."""
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


class Mlp:
    """Fully connected net with ReLU hidden layers and a linear output.

    ``sizes`` lists layer widths input-first, e.g. ``[15, 64, 64, 4]``.
    Weights initialize uniform in ±1/sqrt(fan_in); ``final_scale``
    shrinks the output layer (actors start near uniform allocations).
    """

    def __init__(self, sizes, rng: np.random.Generator, final_scale: float = 1.0):
        if len(sizes) < 2:
            raise ShapeError("an MLP needs at least input and output widths")
        self.sizes = list(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(sizes) - 2
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
            if k == last and final_scale != 1.0:
                w *= final_scale
                b *= final_scale
            self.weights.append(w)
            self.biases.append(b)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, layer-major: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ShapeError(f"expected {len(params)} arrays, got {len(values)}")
        for dst, src in zip(params, values):
            if dst.shape != src.shape:
                raise ShapeError(f"parameter shape {src.shape} != {dst.shape}")
            dst[...] = src

    def clone(self) -> "Mlp":
        twin = object.__new__(Mlp)
        twin.sizes = list(self.sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def _check_input(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        squeezed = x.ndim == 1
        if squeezed:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"input shape {x.shape} incompatible with in_dim {self.in_dim}")
        return x, squeezed

    def forward(self, x) -> np.ndarray:
        x, squeezed = self._check_input(x)
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ w + b)
        out = h @ self.weights[-1] + self.biases[-1]
        return out[0] if squeezed else out

    def forward_cached(self, x):
        """Forward pass keeping layer inputs for ``backward``."""
        x, squeezed = self._check_input(x)
        if squeezed:
            raise ShapeError("forward_cached expects a batch (2-D input)")
        inputs = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ w + b)
            inputs.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, inputs

    def backward(self, cache, dout):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns ``(grads, dx)`` where grads is ordered like
        ``parameters()`` and dx is the gradient at the input batch.
        """
        inputs = cache
        dout = np.asarray(dout, dtype=np.float64)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dout
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = inputs[k]
            grads_w[k] = h_in.T @ delta
            grads_b[k] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
            if k > 0:
                # ReLU gate: inputs[k] is the post-activation of layer k-1
                delta = delta * (inputs[k] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        return grads, delta


class Adam:
    """Bias-corrected Adam over a fixed parameter list (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def sample_squashed(mean, log_std_raw, eps):
    """Reparametrized squashed-Gaussian sample into (0, 1)^d.

    u = mean + exp(log_std)·eps;  a = (tanh(u)+1)/2.  Returns
    ``(action, log_prob, cache)``; log_prob is per-row and includes the
    tanh-Jacobian and the affine rescaling onto (0,1).  ``log_std_raw``
    is clamped into [LOG_STD_MIN, LOG_STD_MAX]; the clamp mask lives in
    the cache so the backward pass zeroes clamped gradients.
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std_raw = np.asarray(log_std_raw, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
    clip_mask = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
    std = np.exp(log_std)
    u = mean + std * eps
    t = np.tanh(u)
    action = (t + 1.0) / 2.0
    # log((1 - t^2)/2) computed without cancellation:
    # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
    log1m_t2 = 2.0 * (_LOG2 - u - softplus(-2.0 * u))
    per_dim = -0.5 * np.square(eps) - log_std - 0.5 * _LOG_2PI - (log1m_t2 - _LOG2)
    log_prob = per_dim.sum(axis=-1)
    cache = (t, std, eps, clip_mask)
    return action, log_prob, cache


def squashed_backward(cache, d_action, d_log_prob):
    """Gradients of the squashed sample w.r.t. mean and raw log-std.

    ``d_action`` has the sample's shape; ``d_log_prob`` is per-row.
    Derivation: da/du = (1−t²)/2, dlogp/du = 2t, dlogp/dlog_std = −1,
    du/dmean = 1, du/dlog_std = std·eps.
    """
    t, std, eps, clip_mask = cache
    d_action = np.asarray(d_action, dtype=np.float64)
    d_log_prob = np.asarray(d_log_prob, dtype=np.float64)
    if d_log_prob.ndim == t.ndim - 1:
        d_log_prob = d_log_prob[..., None]
    du = d_action * (1.0 - np.square(t)) / 2.0 + d_log_prob * (2.0 * t)
    d_mean = du
    d_log_std = (du * std * eps - d_log_prob) * clip_mask
    return d_mean, d_log_std


def mean_action(mean) -> np.ndarray:
    """Deterministic head output: squashed distribution mode."""
    return (np.tanh(np.asarray(mean, dtype=np.float64)) + 1.0) / 2.0


def split_actor_output(out):
    """An actor MLP emits [mean | raw log-std] halves."""
    d = out.shape[-1] // 2
    return out[..., :d], out[..., d:]


def finite_difference_grads(loss_fn, arrays: list[np.ndarray], h: float = 1e-4):
    """Central-difference gradients of ``loss_fn()`` w.r.t. each array.

    ``loss_fn`` must read the arrays in place (they are perturbed and
    restored entry by entry).  Slow; test use only.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
