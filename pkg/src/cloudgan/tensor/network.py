"""Layered networks, forward evaluation and reverse-mode gradients."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .layers import LAYER_TYPES, Context, Layer


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Network:
    """An ordered stack of layers with a declared per-sample input shape."""

    def __init__(self, input_shape, layers: list[Layer], seed: int = 0, name: str = ""):
        self.name = name
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, rng)
            except ValueError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
        self.output_shape = shape

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{layer.kind}.{k}", v) for i, layer in enumerate(self.layers) for k, v in layer.params.items()]

    def parameters(self) -> list[np.ndarray]:
        return [v for _, v in self.named_parameters()]

    def set_parameters(self, values) -> None:
        values = list(values)
        slots = [(layer, k) for layer in self.layers for k in layer.params]
        if len(values) != len(slots):
            raise ShapeError(f"expected {len(slots)} parameter tensors, got {len(values)}")
        for (layer, k), v in zip(slots, values):
            if np.shape(v) != layer.params[k].shape:
                raise ShapeError(f"parameter {k}: shape {np.shape(v)} != {layer.params[k].shape}")
            layer.params[k] = np.array(v, dtype=np.float64)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def __repr__(self):
        return f"Network({self.name!r}, in={self.input_shape}, out={self.output_shape}, params={self.n_params})"


def flatten(tensors) -> np.ndarray:
    if not tensors:
        return np.zeros(0)
    return np.concatenate([np.ravel(t) for t in tensors])


def unflatten(vec: np.ndarray, like) -> list[np.ndarray]:
    out, pos = [], 0
    for t in like:
        out.append(np.asarray(vec[pos:pos + t.size]).reshape(t.shape))
        pos += t.size
    if pos != len(vec):
        raise ShapeError(f"flat vector has {len(vec)} entries, layout needs {pos}")
    return out


@dataclass
class ActivationTrace:
    """Every layer's input plus the cache its backward rule needs."""

    net: Network
    ctx: Context
    inputs: list[np.ndarray] = field(default_factory=list)
    caches: list = field(default_factory=list)
    output: np.ndarray | None = None


def evaluate(net: Network, x, mode: str = "train", precision: str = "full", side=None, reduce=None) -> ActivationTrace:
    """Run the forward pass, keeping every intermediate activation.

    In ``eval`` mode batchnorm uses its running statistics and nothing is
    mutated; in ``train`` mode batchnorm updates its running statistics.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"{net.name or 'network'} expects per-sample shape {net.input_shape}, got {x.shape[1:]}")
    ctx = Context(mode, precision, side=None if side is None else np.asarray(side, dtype=np.float64), reduce=reduce)
    trace = ActivationTrace(net, ctx)
    h = x
    for i, layer in enumerate(net.layers):
        trace.inputs.append(h)
        h, cache = layer.forward(h, ctx)
        trace.caches.append(cache)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"non-finite activation after layer {i} ({layer.kind})")
    trace.output = h
    return trace


def gradients(net: Network, trace: ActivationTrace, loss_grad) -> tuple[list[np.ndarray], np.ndarray]:
    """Back-propagate ``loss_grad`` (dL/d output) through ``trace``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    ``net.parameters()``.
    """
    if trace.net is not net or len(trace.caches) != len(net.layers):
        raise ShapeError("activation trace was not produced by this network")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(f"loss gradient shape {g.shape} != output shape {trace.output.shape}")
    per_layer = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        g, pg = net.layers[i].backward(trace.caches[i], g, trace.ctx)
        per_layer[i] = pg
    grads = [per_layer[i][k] for i, layer in enumerate(net.layers) for k in layer.params]
    return grads, g


def finite_diff_gradients(net: Network, x, loss_fn, h: float = 1e-5, mode: str = "train",
                          precision: str = "full", side=None) -> list[np.ndarray]:
    """Central-difference estimate of dL/dparam for every parameter entry.

    ``loss_fn`` maps the network output to a scalar. The caller's network is
    left untouched (a private copy is perturbed).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = net.copy()
    out = []
    for p in work.parameters():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = loss_fn(evaluate(work, x, mode, precision, side).output)
            flat[j] = orig - h
            f_minus = loss_fn(evaluate(work, x, mode, precision, side).output)
            flat[j] = orig
            gflat[j] = (f_plus - f_minus) / (2.0 * h)
        out.append(g)
    return out


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor) over all entries of two tensor lists."""
    worst = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x), np.asarray(y)
        if x.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


# -- checkpoint text form -------------------------------------------------

def to_text(net: Network) -> str:
    """Serialise architecture, parameters and running statistics as JSON."""
    doc = {
        "format": "cloudgan-network/1",
        "name": net.name,
        "input_shape": list(net.input_shape),
        "layers": [
            {
                "kind": layer.kind,
                "config": layer.config(),
                "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in layer.params.items()},
                "state": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in layer.state.items()},
            }
            for layer in net.layers
        ],
    }
    return json.dumps(doc, indent=1)


def from_text(text: str) -> Network:
    doc = json.loads(text)
    if doc.get("format") != "cloudgan-network/1":
        raise ValueError(f"unrecognised network format {doc.get('format')!r}")
    layers = []
    for entry in doc["layers"]:
        cls = LAYER_TYPES.get(entry["kind"])
        if cls is None:
            raise ValueError(f"unknown layer kind {entry['kind']!r}")
        layers.append(cls(**entry["config"]))
    net = Network(doc["input_shape"], layers, name=doc.get("name", ""))
    for layer, entry in zip(net.layers, doc["layers"]):
        for group, store in (("params", layer.params), ("state", layer.state)):
            for k, blob in entry[group].items():
                store[k] = np.array(blob["data"], dtype=np.float64).reshape(blob["shape"])
    return net
