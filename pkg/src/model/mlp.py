"""
One-hidden-layer tanh classifier with softmax cross-entropy, trained by plain mini-batch SGD.
Everything is a pure function of its arguments: params in, new params out.
"""
from typing import Tuple

import numpy as np

from src.errors import ConfigurationError
from src.model.dataset import Dataset
from src.model.spec import ModelSpec, ParamVector
from src.rng import SplitMix64


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn W1 then W2; biases zero."""
    rng = SplitMix64(seed)
    i, h, c = spec.input_dim, spec.hidden_dim, spec.num_classes
    w1 = rng.uniform(i * h, -1.0, 1.0) / np.sqrt(i)
    w2 = rng.uniform(h * c, -1.0, 1.0) / np.sqrt(h)
    return ParamVector.pack(spec, w1, np.zeros(h), w2, np.zeros(c))


def forward(params: ParamVector, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (hidden activations, logits)."""
    w1, b1, w2, b2 = params.unpack()
    hidden = np.tanh(features @ w1 + b1)
    return hidden, hidden @ w2 + b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_grad(
    params: ParamVector, features: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient as a flat array in ParamVector layout."""
    w1, _, w2, _ = params.unpack()
    batch = features.shape[0]
    hidden, logits = forward(params, features)
    probs = _softmax(logits)
    rows = np.arange(batch)
    loss = float(-np.mean(np.log(np.maximum(probs[rows, labels], 1e-300))))

    d_logits = probs
    d_logits[rows, labels] -= 1.0
    d_logits /= batch
    g_w2 = hidden.T @ d_logits
    g_b2 = d_logits.sum(axis=0)
    d_hidden = (d_logits @ w2.T) * (1.0 - hidden ** 2)
    g_w1 = features.T @ d_hidden
    g_b1 = d_hidden.sum(axis=0)
    grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
    return loss, grad


def train_local(
    params: ParamVector,
    data: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
) -> ParamVector:
    """
    Mini-batch SGD on a client's data. Batch order comes from a fresh seeded permutation each epoch.
    epochs == 0 or learning_rate == 0 hands back the input vector untouched.
    """
    data.check_spec(params.spec)
    if epochs < 0 or learning_rate < 0 or batch_size < 1:
        raise ConfigurationError(
            f"bad training hyperparameters: epochs={epochs} lr={learning_rate} batch={batch_size}"
        )
    if epochs == 0 or learning_rate == 0 or len(data) == 0:
        return params

    rng = SplitMix64(seed)
    current = params
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grad = loss_and_grad(current, data.features[idx], data.labels[idx])
            current = current.replace(current.values - learning_rate * grad)
    return current


def predict(params: ParamVector, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; np.argmax already breaks ties toward the lowest index."""
    _, logits = forward(params, features)
    return np.argmax(logits, axis=1)


def evaluate(params: ParamVector, data: Dataset) -> float:
    """Fraction of samples whose argmax prediction matches the label."""
    if len(data) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    data.check_spec(params.spec)
    return float(np.mean(predict(params, data.features) == data.labels))
