"""Dense multilayer perceptron with hand-written backprop."""

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class DenseLayer:
    weight: np.ndarray   # (n_in, n_out)
    bias: np.ndarray     # (n_out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("weight/bias shapes are inconsistent")


@dataclass
class MlpModel:
    layers: list
    seed: int = None

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[1]

    def params(self):
        """Flat list of parameter arrays, weight then bias per layer."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def set_params_(self, arrays):
        if len(arrays) != 2 * len(self.layers):
            raise ValueError("wrong number of parameter arrays")
        for i, layer in enumerate(self.layers):
            layer.weight = arrays[2 * i]
            layer.bias = arrays[2 * i + 1]

    def copy(self):
        return MlpModel(layers=[DenseLayer(l.weight.copy(), l.bias.copy(),
                                           l.activation)
                                for l in self.layers], seed=self.seed)


def mlp_init(dims, activations=None, seed=0):
    """He-style uniform init: W ~ U(+-sqrt(6/fan_in)), zero bias."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if activations is None:
        activations = ["relu"] * (len(dims) - 2) + ["identity"]
    if len(activations) != len(dims) - 1:
        raise ValueError(f"{len(dims) - 1} layers need {len(dims) - 1} "
                         f"activations, got {len(activations)}")
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out, act in zip(dims[:-1], dims[1:], activations):
        bound = np.sqrt(6.0 / n_in)
        layers.append(DenseLayer(weight=rng.uniform(-bound, bound, (n_in, n_out)),
                                 bias=np.zeros(n_out), activation=act))
    return MlpModel(layers=layers, seed=seed)


def _activate(pre, kind):
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "tanh":
        return np.tanh(pre)
    return pre


def mlp_forward(model, x):
    """Forward pass; returns (output, cache) with cache feeding backward."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != model input "
                         f"{model.input_dim}")
    cache = []
    out = x
    for layer in model.layers:
        pre = out @ layer.weight + layer.bias
        post = _activate(pre, layer.activation)
        cache.append((out, pre))
        out = post
    if squeeze:
        return out[0], cache
    return out, cache


def mlp_backward(model, cache, d_out):
    """Exact gradients for all parameters plus the input gradient.

    Returns (grads, d_input) where grads is a flat list matching
    ``model.params()`` order.
    """
    if cache is None or len(cache) != len(model.layers):
        raise RuntimeError("forward cache missing or stale; run mlp_forward "
                           "on the same model first")
    d = np.asarray(d_out, dtype=float)
    squeeze = d.ndim == 1
    if squeeze:
        d = d[None, :]
    grads = [None] * (2 * len(model.layers))
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        x_in, pre = cache[i]
        if layer.activation == "relu":
            d = d * (pre > 0)
        elif layer.activation == "tanh":
            d = d * (1.0 - np.tanh(pre) ** 2)
        grads[2 * i] = x_in.T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ layer.weight.T
    if squeeze:
        d = d[0]
    return grads, d
