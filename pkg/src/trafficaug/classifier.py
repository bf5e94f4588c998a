"""The convolutional-recurrent flow classifier.

Architecture, on a 1x20x6 input (channel, packets, features):

    conv 32 filters 4x2 -> batchnorm -> conv 64 filters 4x2 -> batchnorm
    -> 14-step sequence of 256 features -> LSTM(100), final hidden state
    -> FC(100) + relu + dropout 0.2 -> FC(108) + relu + dropout 0.4
    -> FC(n_classes) -> softmax

All activations are ReLU except the softmax output.  Features are scaled
before entering the network: ports and window sizes by 1/65535, payload by
1/1500, inter-arrival times by log1p followed by division by the training
split's 99th percentile of the transformed values; direction bits pass
through.  Padding columns stay exactly zero under these maps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DatasetFormatError, DivergenceError
from .flows import Dataset
from .nn import (
    Adam,
    BatchNormSpec,
    Conv2DSpec,
    DenseSpec,
    DropoutSpec,
    LstmSpec,
    Network,
    ReluSpec,
    TimeReshapeSpec,
    checkpoint_to_obj,
    network_from_checkpoint_obj,
    softmax,
    softmax_cross_entropy,
)

MODEL_FILE_VERSION = 1

PORT_SCALE = 65535.0
WINDOW_SCALE = 65535.0
PAYLOAD_SCALE = 1500.0


class CrnnClassifier(BaseEstimator):
    """Conv/BN/Conv/BN/LSTM/FC/FC/softmax classifier over flow matrices.

    Training is deterministic per ``random_state``: weight init, epoch
    shuffling and dropout masks each draw from their own derived stream.
    """

    def __init__(self, conv1_filters=32, conv2_filters=64, kernel_h=4, kernel_w=2,
                 lstm_hidden=100, fc1_units=100, fc2_units=108,
                 dropout1=0.2, dropout2=0.4, batch_size=128, epochs=20,
                 learning_rate=1e-3, random_state=0):
        self.conv1_filters = conv1_filters
        self.conv2_filters = conv2_filters
        self.kernel_h = kernel_h
        self.kernel_w = kernel_w
        self.lstm_hidden = lstm_hidden
        self.fc1_units = fc1_units
        self.fc2_units = fc2_units
        self.dropout1 = dropout1
        self.dropout2 = dropout2
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    # -- construction ---------------------------------------------------

    def _specs(self, n_classes: int):
        return [
            Conv2DSpec(self.conv1_filters, self.kernel_h, self.kernel_w),
            BatchNormSpec(),
            Conv2DSpec(self.conv2_filters, self.kernel_h, self.kernel_w),
            BatchNormSpec(),
            TimeReshapeSpec(),
            LstmSpec(self.lstm_hidden),
            DenseSpec(self.fc1_units),
            ReluSpec(),
            DropoutSpec(self.dropout1),
            DenseSpec(self.fc2_units),
            ReluSpec(),
            DropoutSpec(self.dropout2),
            DenseSpec(n_classes),
        ]

    def build_network(self, n_classes: int) -> Network:
        """Untrained network for this configuration (shape-checked)."""
        if n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {n_classes}")
        return Network.build(self._specs(n_classes), (1, 20, 6), seed=self.random_state)

    def shape_chain(self, n_classes: int = 19) -> list[tuple]:
        """Output shapes of conv1, conv2, sequence, lstm, fc1, fc2, logits."""
        net = self.build_network(n_classes)
        picks = (0, 2, 4, 5, 6, 9, 12)
        return [net.output_shapes[i] for i in picks]

    # -- feature scaling --------------------------------------------------

    def _encode(self, flows) -> np.ndarray:
        check_is_fitted(self, "iat_scale_")
        x = np.stack([f.matrix() for f in flows])    # (N, 6, 20)
        x[:, 1, :] /= WINDOW_SCALE
        x[:, 2, :] /= PORT_SCALE
        x[:, 3, :] /= PORT_SCALE
        x[:, 4, :] = np.log1p(x[:, 4, :]) / self.iat_scale_
        x[:, 5, :] /= PAYLOAD_SCALE
        return x.transpose(0, 2, 1)[:, None, :, :]   # (N, 1, 20, 6)

    # -- training ---------------------------------------------------------

    def fit(self, train: Dataset, valid: Dataset | None = None):
        if len(train) == 0:
            raise ValueError("training dataset is empty")
        if any(f.label is None for f in train.flows):
            raise ValueError("training flows must all be labeled")
        self.classes_ = train.class_names
        self.class_index_ = dict(train.class_index)
        iats = np.log1p([p.inter_arrival_time for f in train.flows for p in f.packets])
        p99 = float(np.percentile(iats, 99.0))
        self.iat_scale_ = p99 if p99 > 0 else 1.0

        x = self._encode(train.flows)
        y = np.array([self.class_index_[f.label] for f in train.flows])
        if valid is not None:
            if len(valid) == 0 or any(f.label is None for f in valid.flows):
                raise ValueError("validation dataset must be non-empty and labeled")
            x_val = self._encode(valid.flows)
            y_val = np.array([self.class_index_[f.label] for f in valid.flows])

        net = self.build_network(len(self.classes_))
        optimizer = Adam(net.parameters(), lr=self.learning_rate)
        shuffle_rng = np.random.default_rng([self.random_state, 1])
        dropout_rng = np.random.default_rng([self.random_state, 2])

        n = len(train)
        trace = []
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            starts = list(range(0, n, self.batch_size))
            # merge a trailing single sample into the previous batch;
            # batchnorm train mode rejects batches of size 1
            if len(starts) > 1 and n - starts[-1] == 1:
                starts.pop()
            loss_sum = 0.0
            hits = 0
            for bi, start in enumerate(starts):
                stop = start + self.batch_size if start != starts[-1] else n
                idx = order[start:stop]
                net.zero_grads()
                logits = net.forward(x[idx], train=True, rng=dropout_rng)
                loss, dlogits = softmax_cross_entropy(logits, y[idx])
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, f"non-finite loss in batch {bi}")
                net.backward(dlogits)
                optimizer.step(net.gradients())
                loss_sum += loss * len(idx)
                hits += int((logits.argmax(axis=1) == y[idx]).sum())
            entry = {"epoch": epoch, "loss": loss_sum / n, "accuracy": hits / n}
            if valid is not None:
                val_loss, val_acc = _eval_pass(net, x_val, y_val)
                entry["val_loss"] = val_loss
                entry["val_accuracy"] = val_acc
            trace.append(entry)
        self.net_ = net
        self.trace_ = trace
        return self

    # -- inference ----------------------------------------------------------

    def predict_proba(self, flows) -> np.ndarray:
        """Class probabilities, one flow at a time in eval mode.

        Each flow passes through the network as its own batch, so the
        result is bitwise independent of how callers partition the input.
        """
        check_is_fitted(self, "net_")
        flows = list(flows)
        out = np.empty((len(flows), len(self.classes_)))
        for i, flow in enumerate(flows):
            logits = self.net_.forward(self._encode([flow]), train=False)
            out[i] = softmax(logits)[0]
        return out

    def predict(self, flows) -> np.ndarray:
        return self.predict_proba(flows).argmax(axis=1)

    # -- persistence ----------------------------------------------------------

    def to_obj(self) -> dict:
        check_is_fitted(self, "net_")
        return {
            "version": MODEL_FILE_VERSION,
            "checkpoint": checkpoint_to_obj(self.net_, rng_seed=self.random_state),
            "class_index": dict(self.class_index_),
            "normalization": {"iat_log1p_p99": self.iat_scale_},
            "config": self.get_params(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "CrnnClassifier":
        if obj.get("version") != MODEL_FILE_VERSION:
            raise DatasetFormatError(f"unsupported model version {obj.get('version')!r}")
        model = cls(**obj["config"])
        net, _ = network_from_checkpoint_obj(obj["checkpoint"])
        model.net_ = net
        model.class_index_ = {str(k): int(v) for k, v in obj["class_index"].items()}
        model.classes_ = tuple(sorted(model.class_index_, key=model.class_index_.__getitem__))
        model.iat_scale_ = float(obj["normalization"]["iat_log1p_p99"])
        model.trace_ = []
        return model


def _eval_pass(net: Network, x: np.ndarray, y: np.ndarray, chunk: int = 256):
    """Eval-mode loss/accuracy in fixed-size chunks (trace bookkeeping only)."""
    loss_sum = 0.0
    hits = 0
    for start in range(0, len(x), chunk):
        logits = net.forward(x[start:start + chunk], train=False)
        loss, _ = softmax_cross_entropy(logits, y[start:start + chunk])
        loss_sum += loss * len(logits)
        hits += int((logits.argmax(axis=1) == y[start:start + chunk]).sum())
    return loss_sum / len(x), hits / len(x)
