"""Character-level LSTM generators for per-class packet-sequence patterns.

Two sequential flow features are modeled this way: the per-packet direction
bit and the TCP window size.  Each class trains one generator per feature on
the end-marked symbol sequences of its flows, then new sequences are sampled
symbol by symbol: the first symbol comes from the corpus' empirical
first-symbol distribution, every later one from the softmax of the previous
step, until the end marker or 19 generated steps (20 symbols total).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DivergenceError, NoTcpPacketsError
from .flows import MAX_PACKETS, Dataset, Transport
from .nn import DenseSpec, LstmSpec, Network, Adam, softmax, softmax_cross_entropy
from .validation import check_rng


@dataclass(frozen=True)
class Vocabulary:
    """Integer symbol values plus one end marker at the last index."""

    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if len(set(self.values)) != len(self.values):
            raise ValueError("vocabulary values must be distinct")
        if not self.values:
            raise ValueError("vocabulary needs at least one non-end symbol")

    @property
    def end_index(self) -> int:
        return len(self.values)

    @property
    def size(self) -> int:
        """Symbol count including the end marker."""
        return len(self.values) + 1

    def index_of(self, value: int) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise KeyError(f"value {value!r} not in vocabulary") from None


DIRECTION_VOCAB = Vocabulary(values=(0, 1))


@dataclass(frozen=True)
class SequenceCorpus:
    """End-terminated index sequences plus the empirical first-symbol law."""

    vocab: Vocabulary
    sequences: tuple[tuple[int, ...], ...]
    first_symbol_distribution: dict[int, float]

    def __post_init__(self):
        end = self.vocab.end_index
        for seq in self.sequences:
            if len(seq) < 2 or len(seq) > MAX_PACKETS + 1:
                raise ValueError(f"sequence length {len(seq)} outside [2, {MAX_PACKETS + 1}]")
            if seq[-1] != end or end in seq[:-1]:
                raise ValueError("sequences must end with the end marker and contain no interior one")
            if any(not 0 <= s < self.vocab.size for s in seq):
                raise ValueError("sequence contains out-of-vocabulary indices")
        total = sum(self.first_symbol_distribution.values())
        if self.sequences and abs(total - 1.0) > 1e-9:
            raise ValueError(f"first-symbol probabilities sum to {total}, expected 1")


def _corpus_from_value_lists(vocab: Vocabulary, value_lists) -> SequenceCorpus:
    end = vocab.end_index
    sequences = []
    firsts = Counter()
    for values in value_lists:
        seq = tuple(vocab.index_of(v) for v in values) + (end,)
        sequences.append(seq)
        firsts[values[0]] += 1
    n = len(sequences)
    first_dist = {value: count / n for value, count in sorted(firsts.items())}
    return SequenceCorpus(vocab=vocab, sequences=tuple(sequences),
                          first_symbol_distribution=first_dist)


def build_direction_corpus(dataset: Dataset, class_name: str) -> SequenceCorpus:
    """One 0/1 sequence per flow of the class (real packets only, end-marked)."""
    class_flows = dataset.flows_of_class(class_name)
    if not class_flows:
        raise ValueError(f"class {class_name!r} has no flows")
    return _corpus_from_value_lists(
        DIRECTION_VOCAB,
        ([p.direction for p in flow.packets] for flow in class_flows),
    )


def build_window_corpus(dataset: Dataset, class_name: str, vocab_cap: int = 64) -> SequenceCorpus:
    """Window-size sequences of the class' TCP flows under a capped vocabulary.

    The ``vocab_cap`` most frequent distinct window values become symbols;
    rarer values are replaced by the nearest retained value (ties toward the
    smaller one).  A class without TCP flows raises ``NoTcpPacketsError``.
    """
    if vocab_cap < 2:
        raise ValueError(f"vocab_cap must be >= 2, got {vocab_cap}")
    class_flows = dataset.flows_of_class(class_name)
    if not class_flows:
        raise ValueError(f"class {class_name!r} has no flows")
    tcp_flows = [f for f in class_flows if f.key.transport is Transport.TCP]
    if not tcp_flows:
        raise NoTcpPacketsError(
            f"class {class_name!r} has no TCP packets; skip window generation for this class")
    counts = Counter(p.tcp_window for f in tcp_flows for p in f.packets)
    retained = sorted(sorted(counts), key=lambda v: (-counts[v], v))[:vocab_cap]
    retained_arr = np.array(sorted(retained))
    vocab = Vocabulary(values=tuple(int(v) for v in retained_arr))

    def snap(value: int) -> int:
        pos = int(np.argmin(np.abs(retained_arr - value)))
        return int(retained_arr[pos])

    return _corpus_from_value_lists(
        vocab,
        ([snap(p.tcp_window) for p in flow.packets] for flow in tcp_flows),
    )


class LstmSequenceGenerator(BaseEstimator):
    """Next-symbol LSTM over a small symbol vocabulary, trained teacher-forced.

    Inputs are one-hot symbols; at step t the input is symbol t and the
    target symbol t+1, so every corpus sequence supplies its shifted self as
    labels and the end marker as the final target.

    Parameters mirror the training loop: ``hidden_size``, ``epochs``,
    ``learning_rate``, ``batch_size``, ``temperature`` (sampling only) and
    ``random_state``.
    """

    def __init__(self, hidden_size=64, epochs=30, learning_rate=1e-3,
                 batch_size=32, temperature=1.0, random_state=0):
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.temperature = temperature
        self.random_state = random_state

    # -- training -----------------------------------------------------------

    def fit(self, corpus: SequenceCorpus, y=None):
        if not corpus.sequences:
            raise ValueError("cannot train a generator on an empty corpus")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        vocab_size = corpus.vocab.size
        net = Network.build(
            [LstmSpec(self.hidden_size, return_sequences=True), DenseSpec(vocab_size)],
            input_shape=(MAX_PACKETS, vocab_size),
            seed=self.random_state,
        )
        optimizer = Adam(net.parameters(), lr=self.learning_rate)
        shuffle_rng = np.random.default_rng([self.random_state, 1])

        sequences = [np.array(s, dtype=int) for s in corpus.sequences]
        order = np.arange(len(sequences))
        trace = []
        for epoch in range(self.epochs):
            shuffle_rng.shuffle(order)
            loss_sum = 0.0
            symbol_count = 0
            for start in range(0, len(order), self.batch_size):
                batch = [sequences[i] for i in order[start:start + self.batch_size]]
                x, targets, mask = _pack_batch(batch, vocab_size)
                net.zero_grads()
                logits = net.forward(x, train=True)
                loss, dlogits = softmax_cross_entropy(logits, targets, mask)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch)
                net.backward(dlogits)
                optimizer.step(net.gradients())
                n_symbols = int(mask.sum())
                loss_sum += loss * n_symbols
                symbol_count += n_symbols
            trace.append(loss_sum / symbol_count)
        self.vocab_ = corpus.vocab
        self.first_symbol_distribution_ = dict(corpus.first_symbol_distribution)
        self.net_ = net
        self.loss_trace_ = trace
        return self

    def step_probs(self, symbol_index: int, state):
        """Advance one step on a known symbol; return (probs, new_state)."""
        check_is_fitted(self, "net_")
        lstm, proj = self.net_.layers
        x = np.zeros((1, self.vocab_.size))
        x[0, symbol_index] = 1.0
        h, c = lstm.step(x, state)
        logits = h @ proj.params["W"] + proj.params["b"]
        return softmax(logits / self.temperature)[0], (h, c)

    # -- sampling -----------------------------------------------------------

    def sample(self, n_sequences: int, random_state=None, first_dist=None,
               max_steps: int = MAX_PACKETS - 1) -> list[list[int]]:
        """Generate symbol-value sequences (end marker stripped), batched.

        The first symbol of each sequence is drawn from ``first_dist``
        (default: the fitted corpus distribution), not from the model; up to
        ``max_steps`` further symbols come from the per-step softmax, so
        lengths fall in [1, max_steps + 1].
        """
        check_is_fitted(self, "net_")
        rng = check_rng(random_state)
        if n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        dist = self.first_symbol_distribution_ if first_dist is None else first_dist
        values = np.array(sorted(dist))
        probs = np.array([dist[v] for v in values], dtype=float)
        probs = probs / probs.sum()
        lstm, proj = self.net_.layers
        vocab_size = self.vocab_.size
        end = self.vocab_.end_index

        current = np.array([self.vocab_.index_of(v)
                            for v in rng.choice(values, size=n_sequences, p=probs)])
        out: list[list[int]] = [[self.vocab_.values[i]] for i in current]
        h = np.zeros((n_sequences, self.hidden_size))
        c = np.zeros((n_sequences, self.hidden_size))
        active = np.ones(n_sequences, dtype=bool)
        for _ in range(max_steps):
            x = np.zeros((n_sequences, vocab_size))
            x[np.arange(n_sequences), current] = 1.0
            h, c = lstm.step(x, (h, c))
            logits = h @ proj.params["W"] + proj.params["b"]
            p = softmax(logits / self.temperature)
            # inverse-CDF draw per row; one uniform per sequence per step
            u = rng.random(n_sequences)
            nxt = (p.cumsum(axis=1) < u[:, None]).sum(axis=1)
            nxt = np.minimum(nxt, vocab_size - 1)
            for row in np.nonzero(active)[0]:
                if nxt[row] == end:
                    active[row] = False
                else:
                    out[row].append(self.vocab_.values[nxt[row]])
            if not active.any():
                break
            current = np.where(active, nxt, current)
        return out

    def generate(self, random_state=None, first_dist=None,
                 max_steps: int = MAX_PACKETS - 1) -> list[int]:
        """Single sequence of symbol values, length in [1, max_steps + 1]."""
        return self.sample(1, random_state=random_state, first_dist=first_dist,
                           max_steps=max_steps)[0]

    # -- persistence --------------------------------------------------------

    def to_obj(self) -> dict:
        check_is_fitted(self, "net_")
        from .nn import checkpoint_to_obj
        return {
            "checkpoint": checkpoint_to_obj(self.net_, rng_seed=self.random_state),
            "vocab": list(self.vocab_.values),
            "first_symbol_distribution": {str(k): v for k, v in
                                          sorted(self.first_symbol_distribution_.items())},
            "hyper": {
                "hidden_size": self.hidden_size,
                "epochs": self.epochs,
                "learning_rate": self.learning_rate,
                "batch_size": self.batch_size,
                "temperature": self.temperature,
                "random_state": self.random_state,
            },
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "LstmSequenceGenerator":
        from .nn import network_from_checkpoint_obj
        gen = cls(**obj["hyper"])
        net, _ = network_from_checkpoint_obj(obj["checkpoint"])
        gen.net_ = net
        gen.vocab_ = Vocabulary(values=tuple(obj["vocab"]))
        gen.first_symbol_distribution_ = {int(k): float(v) for k, v in
                                          obj["first_symbol_distribution"].items()}
        gen.loss_trace_ = []
        return gen


def _pack_batch(sequences, vocab_size):
    """One-hot inputs, integer targets, and a mask for a padded batch.

    For a sequence s of length L+1 (end marker included) the inputs are
    s[0..L-1], the targets s[1..L]; padding appends masked zero steps.
    """
    max_t = max(len(s) - 1 for s in sequences)
    n = len(sequences)
    x = np.zeros((n, max_t, vocab_size))
    targets = np.zeros((n, max_t), dtype=int)
    mask = np.zeros((n, max_t))
    for row, seq in enumerate(sequences):
        t = len(seq) - 1
        x[row, np.arange(t), seq[:-1]] = 1.0
        targets[row, :t] = seq[1:]
        mask[row, :t] = 1.0
    return x, targets, mask
