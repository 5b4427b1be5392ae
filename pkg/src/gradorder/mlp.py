"""Dense ReLU classifier with softmax cross-entropy and hand-written backprop.

Flat parameter order, layer by layer from the input side: the weight matrix
``W_l`` of shape ``(out_l, in_l)`` in row-major order, followed by the bias
``b_l`` of length ``out_l``. Logits are ``W_L a + b_L`` for the last layer;
hidden layers apply ``relu(W_l a + b_l)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import FiniteSumLoss
from .ordering import LogitScore
from .rng import SplitMix64, derive_seed


def param_count(layer_dims: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(layer_dims[:-1], layer_dims[1:]))


def unflatten(layer_dims: Sequence[int], params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ``params`` into per-layer ``(W, b)`` views (no copy)."""
    if params.shape != (param_count(layer_dims),):
        raise ValueError(f"expected {param_count(layer_dims)} parameters, got {params.shape}")
    layers, pos = [], 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        W = params[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = params[pos : pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def init_params(layer_dims: Sequence[int], seed: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias of a layer."""
    chunks = []
    for l, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        rng = SplitMix64(derive_seed(seed, l))
        chunks.append(rng.uniform(-bound, bound, size=fan_out * fan_in + fan_out))
    return np.concatenate(chunks)


@dataclass(frozen=True)
class DenseNet:
    layer_dims: tuple[int, ...]
    params: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError("layer_dims needs an input and an output size, all positive")
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (param_count(dims),):
            raise ValueError(f"expected {param_count(dims)} parameters, got {params.shape}")
        params.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "params", params)

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed: int = 0) -> "DenseNet":
        return cls(tuple(layer_dims), init_params(layer_dims, seed))

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> "DenseNet":
        return cls(tuple(layer_dims), np.zeros(param_count(layer_dims)))

    @property
    def layers(self):
        return unflatten(self.layer_dims, self.params)

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]


def _forward(layers, X: np.ndarray):
    """Return (inputs to each layer, pre-activations of each layer)."""
    acts, pre = [X], []
    a = X
    for l, (W, b) in enumerate(layers):
        z = a @ W.T + b
        pre.append(z)
        if l < len(layers) - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return acts, pre


def _backward(layers, acts, pre, dlogits):
    """Per-sample deltas (dLoss/dz) for every layer, output layer last."""
    deltas = [dlogits]
    d = dlogits
    for l in range(len(layers) - 1, 0, -1):
        W = layers[l][0]
        d = (d @ W) * (pre[l - 1] > 0)
        deltas.append(d)
    return deltas[::-1]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_inputs(net: DenseNet, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != net.layer_dims[0]:
        raise ValueError(f"sample dimension {X.shape[-1]} != input size {net.layer_dims[0]}")
    return X


def forward_logits(net: DenseNet, sample) -> np.ndarray:
    """Pre-softmax scores for one sample (1-D) or a batch of samples (2-D)."""
    X = _check_inputs(net, sample)
    _, pre = _forward(net.layers, np.atleast_2d(X))
    return pre[-1][0] if X.ndim == 1 else pre[-1]


def _ce_and_dlogits(logits, y):
    logp = log_softmax(logits)
    rows = np.arange(len(y))
    loss = -logp[rows, y]
    d = np.exp(logp)
    d[rows, y] -= 1.0
    return loss, d


def _flatten_grads(acts, deltas, weights=None) -> np.ndarray:
    """Sum over samples of the per-sample gradients (optionally weighted)."""
    parts = []
    for a, d in zip(acts, deltas):
        if weights is not None:
            d = d * weights[:, None]
        parts.append((d.T @ a).ravel())
        parts.append(d.sum(axis=0))
    return np.concatenate(parts)


def sample_loss_and_grad(net: DenseNet, sample, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one sample and its flat parameter gradient."""
    x = _check_inputs(net, sample).reshape(1, -1)
    if not 0 <= label < net.n_classes:
        raise ValueError(f"label {label} out of range for {net.n_classes} classes")
    layers = net.layers
    acts, pre = _forward(layers, x)
    loss, dlogits = _ce_and_dlogits(pre[-1], np.array([label]))
    return float(loss[0]), _flatten_grads(acts, _backward(layers, acts, pre, dlogits))


class SoftmaxClassifierLoss(FiniteSumLoss):
    """Finite-sum view of a DenseNet: component i is the cross-entropy of sample i.

    The optimised vector ``x`` is the flat parameter vector described in the
    module docstring.
    """

    def __init__(self, layer_dims: Sequence[int], features, labels):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.X = np.array(features, dtype=np.float64, ndmin=2)
        self.labels = np.array(labels, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on row count")
        if self.X.shape[1] != self.layer_dims[0]:
            raise ValueError("feature width does not match the input layer")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.layer_dims[-1]):
            raise ValueError("label outside the output layer range")
        self.X.setflags(write=False)
        self.labels.setflags(write=False)
        self.n = self.X.shape[0]
        self.dim = param_count(self.layer_dims)

    def _pass(self, x, idx):
        layers = unflatten(self.layer_dims, self._check_x(x))
        acts, pre = _forward(layers, self.X[idx])
        return layers, acts, pre

    def value(self, i, x):
        return float(self.values_at(x, [self._check_i(i)])[0])

    def grad(self, i, x):
        return self.mean_grad(x, [self._check_i(i)])

    def values_at(self, x, idx=None) -> np.ndarray:
        idx = self._idx(idx)
        _, _, pre = self._pass(x, idx)
        return -log_softmax(pre[-1])[np.arange(len(idx)), self.labels[idx]]

    def values(self, x):
        return self.values_at(x, None)

    def grads(self, x, idx=None):
        idx = self._idx(idx)
        return np.stack([self.mean_grad(x, [i]) for i in idx])

    def grad_norms(self, x, idx=None):
        # per-sample ||dW_l||_F^2 = ||delta_l||^2 ||a_{l-1}||^2, ||db_l||^2 = ||delta_l||^2
        idx = self._idx(idx)
        layers, acts, pre = self._pass(x, idx)
        _, dlogits = _ce_and_dlogits(pre[-1], self.labels[idx])
        deltas = _backward(layers, acts, pre, dlogits)
        sq = np.zeros(len(idx))
        for a, d in zip(acts, deltas):
            sq += (d**2).sum(axis=1) * ((a**2).sum(axis=1) + 1.0)
        return np.sqrt(sq)

    def mean_grad(self, x, idx):
        idx = self._idx(idx)
        layers, acts, pre = self._pass(x, idx)
        _, dlogits = _ce_and_dlogits(pre[-1], self.labels[idx])
        return _flatten_grads(acts, _backward(layers, acts, pre, dlogits)) / len(idx)

    def logit_scores(self, x, idx=None, score: LogitScore = LogitScore.LOSS) -> np.ndarray:
        idx = self._idx(idx)
        if LogitScore(score) is LogitScore.LOSS:
            return self.values_at(x, idx)
        _, _, pre = self._pass(x, idx)
        return np.linalg.norm(pre[-1], axis=1)

    def predict(self, x, features=None) -> np.ndarray:
        X = self.X if features is None else np.asarray(features, dtype=np.float64)
        _, pre = _forward(unflatten(self.layer_dims, self._check_x(x)), X)
        return pre[-1].argmax(axis=1)

    def accuracy(self, x, features=None, labels=None) -> float:
        y = self.labels if labels is None else np.asarray(labels)
        return float(np.mean(self.predict(x, features) == y))
