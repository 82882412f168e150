"""Forward and reverse-mode passes for encoder-decoder emulator networks."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..exceptions import BadLength, NoForwardCache, ShapeMismatch
from . import layers as L
from .spec import receptive_field


@dataclass(eq=False)
class ParameterSet:
    """Kernels (and PReLU slopes / biases) in ``spec.layers()`` order."""

    tensors: List[np.ndarray]
    rng_seed: int = 0

    def copy(self):
        return ParameterSet([t.copy() for t in self.tensors], self.rng_seed)

    @property
    def dtype(self):
        return self.tensors[0].dtype

    def astype(self, dtype):
        return ParameterSet([t.astype(dtype) for t in self.tensors], self.rng_seed)

    def flat(self):
        return np.concatenate([t.ravel() for t in self.tensors])

    def __len__(self):
        return len(self.tensors)


def _param_layout(spec):
    """Per layer: (index of kernel, index of bias or None, index of slope or None)."""
    layout, i = [], 0
    for layer in spec.layers():
        w = i
        i += 1
        b = s = None
        if layer.bias:
            b, i = i, i + 1
        if layer.activation == "prelu":
            s, i = i, i + 1
        layout.append((w, b, s))
    return layout


def init_params(spec, seed=0, dtype=np.float64):
    """Fan-in scaled uniform kernels, U(-sqrt(3/fan_in), sqrt(3/fan_in)).

    Biases start at zero and PReLU slopes at 0.25.
    """
    rng = np.random.default_rng(seed)
    tensors = []
    for layer in spec.layers():
        bound = np.sqrt(3.0 / layer.fan_in)
        tensors.append(rng.uniform(-bound, bound, size=layer.weight_shape))
        if layer.bias:
            tensors.append(np.zeros(layer.out_ch))
        if layer.activation == "prelu":
            tensors.append(np.full((1,), 0.25))
    return ParameterSet([t.astype(dtype) for t in tensors], seed)


def zero_params(spec, dtype=np.float64):
    p = init_params(spec, 0, dtype)
    return ParameterSet([np.zeros_like(t) for t in p.tensors], 0)


def _layer_forward(layer, W, x):
    T = x.shape[1]
    f = layer.factor
    if layer.kind in ("strided_conv", "decim_conv"):
        # conv at full rate then keeping every f-th sample is the same as a strided conv
        return L.conv(x, W, f)
    if layer.kind == "plain_conv":
        return L.conv(x, W, 1)
    if layer.kind == "transposed_conv":
        return L.conv_adjoint(x, W, T * f, f)
    if layer.kind == "interp_conv":
        return L.interp_up(L.conv(x, W, 1), f)
    raise ValueError(layer.kind)


def _layer_backward(layer, W, x, dy):
    """Return (dx, dW) for one layer given the gradient at its (pre-activation) output."""
    T = x.shape[1]
    K = layer.kernel
    f = layer.factor
    if layer.kind in ("strided_conv", "decim_conv"):
        return L.conv_adjoint(dy, W, T, f), L.conv_weight_grad(x, dy, K, f)
    if layer.kind == "plain_conv":
        return L.conv_adjoint(dy, W, T, 1), L.conv_weight_grad(x, dy, K, 1)
    if layer.kind == "transposed_conv":
        return L.conv(dy, W, f), L.conv_weight_grad(dy, x, K, f)
    if layer.kind == "interp_conv":
        dz = L.interp_up_adjoint(dy, f)
        return L.conv_adjoint(dz, W, T, 1), L.conv_weight_grad(x, dz, K, 1)
    raise ValueError(layer.kind)


@dataclass(eq=False)
class ForwardCache:
    """Everything ``backward`` needs from a forward pass."""

    nodes: list
    ops: list
    context: tuple
    batched: bool
    length: int
    layout: list = field(default_factory=list)


def _as_batch(segment, dtype):
    x = getattr(segment, "samples", segment)
    x = np.asarray(x, dtype=dtype)
    batched = x.ndim == 2
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeMismatch(f"expected (T,) or (B, T) input, got {x.shape}")
    return x, batched


def forward_with_cache(spec, params, segment, context=(0, 0), encoder_only=False):
    """Run the network and keep the activations for ``backward``.

    ``segment`` is a Waveform, a (T,) array or a (B, T) batch; ``T`` must be
    a multiple of the network's total resampling factor. Returns the output
    cropped to the core region, shape (J, T_core) or (B, J, T_core), and the
    cache.
    """
    x, batched = _as_batch(segment, params.dtype)
    T = x.shape[1]
    if T % spec.total_factor:
        raise BadLength(f"input length {T} is not a multiple of {spec.total_factor}")
    left, right = context
    if left + right >= T:
        raise BadLength(f"context {context} leaves no core samples in {T}")
    layout = _param_layout(spec)
    tensors = params.tensors
    nodes = [x[:, :, None]]
    ops = []

    def run(li, layer, ids):
        if len(ids) == 1:
            xin = nodes[ids[0]]
        else:
            xin = np.concatenate([nodes[i] for i in ids], axis=2)
        w, b, s = layout[li]
        z = _layer_forward(layer, tensors[w], xin)
        if b is not None:
            z = z + tensors[b]
        slope = tensors[s][0] if s is not None else None
        nodes.append(L.activate(layer.activation, z, slope))
        ops.append((li, layer, tuple(ids), xin, z))
        return len(nodes) - 1

    li = 0
    sources = [0]
    h = 0
    for layer in spec.encoder:
        h = run(li, layer, [h])
        sources.append(h)
        li += 1
    if encoder_only:
        out = nodes[h]
        return out, ForwardCache(nodes, ops, (0, 0), batched, T, layout)
    if spec.embedding is not None:
        h = run(li, spec.embedding, [h])
        li += 1
    n = spec.n_blocks
    for i, layer in enumerate(spec.decoder):
        ids = [h]
        if spec.skips and (i > 0 or spec.embedding is not None):
            ids.append(sources[n - i])
        h = run(li, layer, ids)
        li += 1
    h = run(li, spec.output, [h, 0] if spec.skips else [h])
    out = nodes[h][:, left:T - right].transpose(0, 2, 1)
    if not batched:
        out = out[0]
    return out, ForwardCache(nodes, ops, (left, right), batched, T, layout)


def forward(spec, params, segment, context=(0, 0)):
    """Network output for ``segment`` cropped to the core, see ``forward_with_cache``."""
    return forward_with_cache(spec, params, segment, context)[0]


def backward(spec, params, cache, upstream):
    """Gradients of ``sum(upstream * output)`` for every parameter tensor.

    ``upstream`` has the shape of the cropped output returned by the forward
    pass that produced ``cache``.
    """
    if cache is None or not cache.ops:
        raise NoForwardCache("backward needs the cache of a preceding forward pass")
    tensors = params.tensors
    grads = [np.zeros_like(t) for t in tensors]
    node_grads = [None] * len(cache.nodes)

    up = np.asarray(upstream, dtype=params.dtype)
    if not cache.batched:
        up = up[None]
    last = cache.nodes[-1]
    left, right = cache.context
    B, T, J = last.shape
    if up.shape != (B, J, T - left - right):
        raise ShapeMismatch(f"upstream shape {up.shape} does not match output {(B, J, T - left - right)}")
    full = np.zeros_like(last)
    full[:, left:T - right] = up.transpose(0, 2, 1)
    node_grads[-1] = full

    for k in range(len(cache.ops) - 1, -1, -1):
        li, layer, ids, xin, z = cache.ops[k]
        out_id = k + 1
        dy = node_grads[out_id]
        if dy is None:
            continue
        w, b, s = cache.layout[li]
        slope = tensors[s][0] if s is not None else None
        dz, dslope = L.activate_backward(layer.activation, z, cache.nodes[out_id], dy, slope)
        if s is not None:
            grads[s][0] += dslope
        if b is not None:
            grads[b] += dz.sum(axis=(0, 1))
        dx, dW = _layer_backward(layer, tensors[w], xin, dz)
        grads[w] += dW
        start = 0
        for i in ids:
            c = cache.nodes[i].shape[2]
            part = dx[:, :, start:start + c]
            start += c
            node_grads[i] = part if node_grads[i] is None else node_grads[i] + part
    return grads


def encode(spec, params, segment):
    """Deepest encoder activation, shape (B, T / total_factor, channels)."""
    return forward_with_cache(spec, params, segment, encoder_only=True)[0]


def empirical_receptive_field(spec, params, length=None, seed=0, batch=128, amplitude=1.0):
    """Measure the encoder receptive field by single-sample perturbation.

    For one deepest-encoder sample near the middle of a random input, every
    input sample is perturbed in turn and the output compared bitwise.
    Returns ``(span, changed_indices)`` where ``span`` runs from the first
    to the last influential input sample.
    """
    F = spec.total_factor
    rf = receptive_field(spec)
    if length is None:
        length = F * int(np.ceil((2 * rf + 2 * F) / F))
    rng = np.random.default_rng(seed)
    x = 0.1 * rng.standard_normal(length).astype(params.dtype)
    m = (length // F) // 2
    ref = encode(spec, params, x)[0, m]
    changed = np.zeros(length, dtype=bool)
    for start in range(0, length, batch):
        idx = np.arange(start, min(start + batch, length))
        X = np.repeat(x[None, :], len(idx), axis=0)
        X[np.arange(len(idx)), idx] += amplitude
        out = encode(spec, params, X)[:, m]
        changed[idx] = np.any(out != ref, axis=1)
    hits = np.flatnonzero(changed)
    return int(hits[-1] - hits[0] + 1), hits
