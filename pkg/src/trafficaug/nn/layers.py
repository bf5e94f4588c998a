"""Layers with explicit forward/backward passes on float64 numpy arrays.

Conventions: inputs carry a leading batch axis; each layer caches what its
backward pass needs during forward and accumulates parameter gradients in
``self.grads``.  Shapes in constructors are per-sample (no batch axis).
"""

from __future__ import annotations

import numpy as np

from .specs import (
    BatchNormSpec,
    Conv2DSpec,
    DenseSpec,
    DropoutSpec,
    LstmSpec,
    ReluSpec,
    SoftmaxSpec,
    TimeReshapeSpec,
)


class Layer:
    spec = None

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def zero_grads(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Conv2D(Layer):
    """Cross-correlation, stride 1, valid padding: (C,H,W) -> (F,H-kh+1,W-kw+1)."""

    def __init__(self, spec: Conv2DSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        c, h, w = in_shape
        if spec.kernel_h > h or spec.kernel_w > w:
            raise ValueError(f"kernel {spec.kernel_h}x{spec.kernel_w} larger than input {h}x{w}")
        fan_in = c * spec.kernel_h * spec.kernel_w
        bound = 1.0 / np.sqrt(fan_in)
        self.params["W"] = _uniform(rng, bound, (spec.filters, c, spec.kernel_h, spec.kernel_w))
        self.params["b"] = _uniform(rng, bound, (spec.filters,))
        self.in_shape = tuple(in_shape)
        self.out_shape = (spec.filters, h - spec.kernel_h + 1, w - spec.kernel_w + 1)
        self.zero_grads()

    def _im2col(self, x):
        n = x.shape[0]
        c, _, _ = self.in_shape
        _, oh, ow = self.out_shape
        kh, kw = self.spec.kernel_h, self.spec.kernel_w
        cols = np.empty((n, oh, ow, c, kh, kw), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, :, :, i, j] = x[:, :, i:i + oh, j:j + ow].transpose(0, 2, 3, 1)
        return cols.reshape(n, oh * ow, c * kh * kw)

    def forward(self, x, train=False, rng=None):
        n = x.shape[0]
        f, oh, ow = self.out_shape
        cols = self._im2col(x)
        w_flat = self.params["W"].reshape(f, -1)
        y = cols @ w_flat.T + self.params["b"]
        self._cols = cols
        return y.transpose(0, 2, 1).reshape(n, f, oh, ow)

    def backward(self, dout):
        n = dout.shape[0]
        c, h, w = self.in_shape
        f, oh, ow = self.out_shape
        kh, kw = self.spec.kernel_h, self.spec.kernel_w
        dy = np.ascontiguousarray(dout.reshape(n, f, oh * ow).transpose(0, 2, 1))
        dy_flat = dy.reshape(n * oh * ow, f)
        cols_flat = self._cols.reshape(n * oh * ow, -1)
        self.grads["W"] += (dy_flat.T @ cols_flat).reshape(self.params["W"].shape)
        self.grads["b"] += dy_flat.sum(axis=0)
        dcols = (dy @ self.params["W"].reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
        dx = np.zeros((n, c, h, w), dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalization over (N, C, H, W).

    Train mode normalizes with batch statistics and updates the running
    ones; eval mode normalizes with the running statistics.  Batches of
    size 1 are rejected in train mode.
    """

    def __init__(self, spec: BatchNormSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        if len(in_shape) != 3:
            raise ValueError(f"batchnorm expects (C, H, W) input, got {in_shape}")
        c = in_shape[0]
        self.params["gamma"] = np.ones(c)
        self.params["beta"] = np.zeros(c)
        self.buffers["running_mean"] = np.zeros(c)
        self.buffers["running_var"] = np.ones(c)
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        eps = self.spec.epsilon
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm train mode needs batch size >= 2")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.spec.momentum
            self.buffers["running_mean"] *= 1.0 - m
            self.buffers["running_mean"] += m * mean
            self.buffers["running_var"] *= 1.0 - m
            self.buffers["running_var"] += m * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._xhat = xhat
        self._inv_std = inv_std
        self._train = train
        return self.params["gamma"][None, :, None, None] * xhat + self.params["beta"][None, :, None, None]

    def backward(self, dout):
        xhat, inv_std = self._xhat, self._inv_std
        self.grads["gamma"] += (dout * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] += dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.params["gamma"][None, :, None, None]
        if not self._train:
            return dxhat * inv_std[None, :, None, None]
        mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return inv_std[None, :, None, None] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


class Relu(Layer):
    def __init__(self, spec: ReluSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Dropout(Layer):
    """Inverted dropout: eval mode is a pure pass-through."""

    def __init__(self, spec: DropoutSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        if not train or self.spec.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng for its mask stream")
        keep = 1.0 - self.spec.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class Dense(Layer):
    def __init__(self, spec: DenseSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        d = in_shape[-1]
        bound = 1.0 / np.sqrt(d)
        self.params["W"] = _uniform(rng, bound, (d, spec.units))
        self.params["b"] = _uniform(rng, bound, (spec.units,))
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape[:-1]) + (spec.units,)
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        dy2 = dout.reshape(-1, dout.shape[-1])
        self.grads["W"] += x2.T @ dy2
        self.grads["b"] += dy2.sum(axis=0)
        return dout @ self.params["W"].T


class Lstm(Layer):
    """Single LSTM layer over (N, T, D) with input/forget/output/candidate gates.

    ``return_sequences`` yields (N, T, H); otherwise the final hidden state
    (N, H).  Gradients flow through time; trailing padded steps are safe
    when their loss contribution is masked out, because nothing downstream
    of a pad step feeds a real one.
    """

    def __init__(self, spec: LstmSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        if len(in_shape) != 2:
            raise ValueError(f"lstm expects (T, D) input, got {in_shape}")
        d = in_shape[-1]
        h = spec.hidden
        self.params["Wx"] = _uniform(rng, 1.0 / np.sqrt(d), (d, 4 * h))
        self.params["Wh"] = _uniform(rng, 1.0 / np.sqrt(h), (h, 4 * h))
        self.params["b"] = np.zeros(4 * h)
        self.in_shape = tuple(in_shape)
        self.out_shape = (in_shape[0], h) if spec.return_sequences else (h,)
        self.zero_grads()

    def _gates(self, x, h_prev):
        h = self.spec.hidden
        z = x @ self.params["Wx"] + h_prev @ self.params["Wh"] + self.params["b"]
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        o = _sigmoid(z[:, 2 * h:3 * h])
        g = np.tanh(z[:, 3 * h:])
        return i, f, o, g

    def step(self, x, state):
        """One recurrence step for generation: (N,D), (h,c) -> (h', c')."""
        h_prev, c_prev = state
        i, f, o, g = self._gates(x, h_prev)
        c = f * c_prev + i * g
        return o * np.tanh(c), c

    def forward(self, x, train=False, rng=None):
        n, t, _ = x.shape
        h = self.spec.hidden
        i_all = np.empty((n, t, h)); f_all = np.empty((n, t, h))
        o_all = np.empty((n, t, h)); g_all = np.empty((n, t, h))
        c_all = np.empty((n, t, h)); h_all = np.empty((n, t, h))
        h_t = np.zeros((n, h)); c_t = np.zeros((n, h))
        for step in range(t):
            i, f, o, g = self._gates(x[:, step], h_t)
            c_t = f * c_t + i * g
            h_t = o * np.tanh(c_t)
            i_all[:, step] = i; f_all[:, step] = f
            o_all[:, step] = o; g_all[:, step] = g
            c_all[:, step] = c_t; h_all[:, step] = h_t
        self._cache = (x, i_all, f_all, o_all, g_all, c_all, h_all)
        return h_all if self.spec.return_sequences else h_t

    def backward(self, dout):
        x, i_all, f_all, o_all, g_all, c_all, h_all = self._cache
        n, t, d = x.shape
        h = self.spec.hidden
        dx = np.zeros_like(x)
        dh_carry = np.zeros((n, h))
        dc_carry = np.zeros((n, h))
        for step in reversed(range(t)):
            dh = dh_carry.copy()
            if self.spec.return_sequences:
                dh += dout[:, step]
            elif step == t - 1:
                dh += dout
            i, f, o, g = i_all[:, step], f_all[:, step], o_all[:, step], g_all[:, step]
            tanh_c = np.tanh(c_all[:, step])
            c_prev = c_all[:, step - 1] if step > 0 else np.zeros((n, h))
            h_prev = h_all[:, step - 1] if step > 0 else np.zeros((n, h))
            do = dh * tanh_c
            dc = dc_carry + dh * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g ** 2),
            ], axis=1)
            self.grads["Wx"] += x[:, step].T @ dz
            self.grads["Wh"] += h_prev.T @ dz
            self.grads["b"] += dz.sum(axis=0)
            dx[:, step] = dz @ self.params["Wx"].T
            dh_carry = dz @ self.params["Wh"].T
            dc_carry = dc * f
        return dx


class TimeReshape(Layer):
    """(N, C, H, W) -> (N, H, C*W): the H axis becomes time."""

    def __init__(self, spec: TimeReshapeSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        if len(in_shape) != 3:
            raise ValueError(f"time_reshape expects (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        self.in_shape = tuple(in_shape)
        self.out_shape = (h, c * w)

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        self._shape = x.shape
        return x.transpose(0, 2, 1, 3).reshape(n, h, c * w)

    def backward(self, dout):
        n, c, h, w = self._shape
        return dout.reshape(n, h, c, w).transpose(0, 2, 1, 3)


class Softmax(Layer):
    def __init__(self, spec: SoftmaxSpec, in_shape, rng):
        super().__init__()
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - (dout * p).sum(axis=-1, keepdims=True))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-stabilized softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels, mask=None):
    """Mean cross-entropy -log p(label) and its gradient w.r.t. logits.

    ``logits`` has shape (..., K) and ``labels`` integer shape (...).  With
    a 0/1 ``mask``, masked positions contribute neither loss nor gradient
    and the mean runs over unmasked positions only.
    """
    p = softmax(np.asarray(logits, dtype=float))
    labels = np.asarray(labels)
    flat_p = p.reshape(-1, p.shape[-1])
    flat_labels = labels.reshape(-1)
    picked = flat_p[np.arange(flat_labels.size), flat_labels]
    losses = -np.log(np.maximum(picked, 1e-300)).reshape(labels.shape)
    grad = p.copy()
    np.add.at(grad.reshape(-1, p.shape[-1]), (np.arange(flat_labels.size), flat_labels), -1.0)
    if mask is None:
        count = flat_labels.size
        loss = losses.sum() / count
    else:
        mask = np.asarray(mask, dtype=float)
        count = mask.sum()
        if count == 0:
            raise ValueError("mask excludes every position")
        loss = (losses * mask).sum() / count
        grad *= mask[..., None]
    grad /= count
    return float(loss), grad
