"""Feed-forward network with hand-written backpropagation.

One class serves both as acoustic model and discriminator. Networks are
immutable: :func:`sgd_step` and :func:`clip_weights` return new instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from advspss.errors import ConfigError

ACTIVATIONS = ("relu", "linear", "logit")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Mlp:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("an Mlp needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ConfigError(f"layer {k}: bias shape {layer.bias.shape} does not match weight {layer.weight.shape}")
        for k in range(len(self.layers) - 1):
            if self.layers[k].out_dim != self.layers[k + 1].in_dim:
                raise ConfigError(
                    f"layer {k} outputs {self.layers[k].out_dim} but layer {k + 1} expects {self.layers[k + 1].in_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            tuple(a + b for a, b in zip(self.weights, other.weights)),
            tuple(a + b for a, b in zip(self.biases, other.biases)),
        )

    def scaled(self, s: float) -> "Gradients":
        return Gradients(tuple(s * w for w in self.weights), tuple(s * b for b in self.biases))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, out_activation: str = "linear") -> Mlp:
    """Glorot-uniform weights, zero biases, ReLU on every hidden layer."""
    if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
        raise ConfigError(f"invalid layer sizes {list(sizes)}")
    layers = []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = int(sizes[k]), int(sizes[k + 1])
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = out_activation if k == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Mlp(tuple(layers))


def _as_batch(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ConfigError(f"input shape {x.shape} incompatible with network input dim {net.input_dim}")
    return x


def _forward_cached(net: Mlp, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    for layer in net.layers:
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(h)
    return acts, pre


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Apply the network frame by frame to ``x`` of shape (T, in)."""
    acts, _ = _forward_cached(net, _as_batch(net, x))
    return acts[-1]


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Gradients of a loss w.r.t. parameters and input, given dL/d(output)."""
    x = _as_batch(net, x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g.reshape(x.shape[0], -1)
    if g.shape != (x.shape[0], net.output_dim):
        raise ConfigError(f"upstream gradient shape {g.shape} != {(x.shape[0], net.output_dim)}")
    acts, pre = _forward_cached(net, x)
    dws, dbs = [], []
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == "relu":
            g = g * (pre[k] > 0.0)
        dws.append(g.T @ acts[k])
        dbs.append(g.sum(axis=0))
        g = g @ layer.weight
    return Gradients(tuple(reversed(dws)), tuple(reversed(dbs))), g


def zero_gradients(net: Mlp) -> Gradients:
    return Gradients(
        tuple(np.zeros_like(layer.weight) for layer in net.layers),
        tuple(np.zeros_like(layer.bias) for layer in net.layers),
    )


def sgd_step(net: Mlp, grads: Gradients, eta: float) -> Mlp:
    if eta < 0:
        raise ConfigError(f"learning rate must be non-negative, got {eta}")
    if len(grads.weights) != len(net.layers):
        raise ConfigError("gradient structure does not match network")
    return Mlp(
        tuple(
            Layer(layer.weight - eta * dw, layer.bias - eta * db, layer.activation)
            for layer, dw, db in zip(net.layers, grads.weights, grads.biases)
        )
    )


def clip_weights(net: Mlp, bound: float) -> Mlp:
    """Clamp every weight and bias into [-bound, bound]."""
    if not bound > 0:
        raise ConfigError(f"clip bound must be positive, got {bound}")
    return Mlp(
        tuple(
            Layer(np.clip(layer.weight, -bound, bound), np.clip(layer.bias, -bound, bound), layer.activation)
            for layer in net.layers
        )
    )


def max_abs_param(net: Mlp) -> float:
    return max(float(np.max(np.abs(p))) for p in net.params())


# -- checkpoint file -------------------------------------------------------

HEADER = "MLP v1"


def save_mlp(net: Mlp, path: str | Path) -> None:
    lines = [HEADER, str(len(net.layers))]
    for layer in net.layers:
        lines.append(f"{layer.out_dim} {layer.in_dim} {layer.activation}")
        lines.append(" ".join(f"{v:.17g}" for v in layer.weight.ravel()))
        lines.append(" ".join(f"{v:.17g}" for v in layer.bias))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mlp(path: str | Path) -> Mlp:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ValueError(f"{path}: line 1: expected header {HEADER!r}")
    try:
        n = int(lines[1])
        layers = []
        for k in range(n):
            base = 2 + 3 * k
            out_dim, in_dim, act = lines[base].split()
            w = np.array(lines[base + 1].split(), dtype=np.float64).reshape(int(out_dim), int(in_dim))
            b = np.array(lines[base + 2].split(), dtype=np.float64).reshape(int(out_dim))
            layers.append(Layer(w, b, act))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed checkpoint ({exc})") from exc
    return Mlp(tuple(layers))
