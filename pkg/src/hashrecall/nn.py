"""Small fully-connected network with hand-written backprop and AdamW.

Both trained components share one shape: two tanh hidden layers followed by a
linear head.  Training runs in float64 so analytic gradients can be checked
against central finite differences; checkpoints are float32 on disk (the
embedding file format), with a JSON descriptor alongside the tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .store import EmbeddingMatrix, read_embeddings, write_embeddings


@dataclass
class Mlp:
    """Weights (fan_in, fan_out) and biases per layer; hidden tanh, linear head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, dims: list[int], rng: np.random.Generator) -> "Mlp":
        """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Head pre-activation and the activation stack needed by backward."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"dimension mismatch: input has dim {x.shape[1]}, "
                f"network expects {self.input_dim}"
            )
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.tanh(z) if i < last else z
            acts.append(h)
        return acts[-1], acts

    def backward(
        self, acts: list[np.ndarray], d_head: np.ndarray
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer (dW, db) for a scalar loss, given dL/d(head pre-activation)."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        delta = d_head
        for i in reversed(range(len(self.weights))):
            x_in = acts[i]
            grads[i] = (x_in.T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - x_in * x_in)
        return grads

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.extend((dw, db))
    return out


@dataclass
class AdamW:
    """Adam with decoupled weight decay; state is positional over the param list."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    _m: list[np.ndarray] = field(default_factory=list, repr=False)
    _v: list[np.ndarray] = field(default_factory=list, repr=False)
    _t: int = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        bias1 = 1.0 - self.beta1 ** self._t
        bias2 = 1.0 - self.beta2 ** self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p -= self.learning_rate * (update + self.weight_decay * p)


def save_mlp(mlp: Mlp, directory: Path | str, extra: dict | None = None) -> None:
    """Write descriptor.json plus one embedding-format file per tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        tensors[f"w{i}"] = w
        tensors[f"b{i}"] = b.reshape(1, -1)
    files = {}
    for name, tensor in tensors.items():
        fname = f"{name}.cosh"
        write_embeddings(EmbeddingMatrix(tensor.astype(np.float32)), directory / fname)
        files[name] = fname
    descriptor = {"dims": mlp.dims, "tensors": files}
    if extra:
        descriptor.update(extra)
    with open(directory / "descriptor.json", "w") as fh:
        json.dump(descriptor, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mlp(directory: Path | str) -> tuple[Mlp, dict]:
    """Read a checkpoint back; returns the network and its descriptor dict."""
    directory = Path(directory)
    with open(directory / "descriptor.json") as fh:
        descriptor = json.load(fh)
    n_layers = len(descriptor["dims"]) - 1
    weights, biases = [], []
    for i in range(n_layers):
        w = read_embeddings(directory / descriptor["tensors"][f"w{i}"])
        b = read_embeddings(directory / descriptor["tensors"][f"b{i}"])
        weights.append(w.data.astype(np.float64))
        biases.append(b.data.astype(np.float64).ravel())
    return Mlp(weights=weights, biases=biases), descriptor
