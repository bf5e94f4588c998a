"""A sequential network assembled from layer specs, with shape inference."""

from __future__ import annotations

import numpy as np

from . import layers as L
from . import specs as S
from .layers import softmax_cross_entropy

_LAYER_OF_SPEC = {
    S.Conv2DSpec: L.Conv2D,
    S.BatchNormSpec: L.BatchNorm,
    S.LstmSpec: L.Lstm,
    S.DenseSpec: L.Dense,
    S.DropoutSpec: L.Dropout,
    S.ReluSpec: L.Relu,
    S.SoftmaxSpec: L.Softmax,
    S.TimeReshapeSpec: L.TimeReshape,
}


class Network:
    """Layers applied in order; the last layer is expected to emit logits."""

    def __init__(self, layer_list, input_shape):
        self.layers = list(layer_list)
        self.input_shape = tuple(input_shape)

    @classmethod
    def build(cls, specs, input_shape, seed) -> "Network":
        rng = np.random.default_rng(seed)
        built = []
        shape = tuple(input_shape)
        for idx, spec in enumerate(specs):
            layer_cls = _LAYER_OF_SPEC[type(spec)]
            try:
                layer = layer_cls(spec, shape, rng)
            except ValueError as exc:
                raise ValueError(
                    f"layer {idx} ({S.spec_tag(spec)}): shape check failed on input {shape}: {exc}"
                ) from None
            built.append(layer)
            shape = layer.out_shape
        return cls(built, input_shape)

    @property
    def output_shapes(self) -> list[tuple]:
        return [layer.out_shape for layer in self.layers]

    def forward(self, x, train=False, rng=None) -> np.ndarray:
        out = x
        for layer in self.layers:
            out = layer.forward(out, train=train, rng=rng)
        return out

    def backward(self, dout) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def _named(self, attr) -> dict[str, np.ndarray]:
        out = {}
        for idx, layer in enumerate(self.layers):
            tag = S.spec_tag(layer.spec)
            for name, arr in getattr(layer, attr).items():
                out[f"l{idx}_{tag}/{name}"] = arr
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable parameters, keyed by ``l<idx>_<tag>/<name>``."""
        return self._named("params")

    def gradients(self) -> dict[str, np.ndarray]:
        return self._named("grads")

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trained state (batchnorm running statistics)."""
        return self._named("buffers")

    def loss(self, x, labels, train=False, rng=None) -> float:
        logits = self.forward(x, train=train, rng=rng)
        loss, _ = softmax_cross_entropy(logits, labels)
        return loss

    def loss_and_grads(self, x, labels, train=False, rng=None):
        self.zero_grads()
        logits = self.forward(x, train=train, rng=rng)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        self.backward(dlogits)
        return loss, self.gradients()
