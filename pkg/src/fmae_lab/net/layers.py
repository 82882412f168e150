"""Array kernels for 1-D convolutions, interpolation and activations.

Activations are laid out channels-last, ``(batch, time, channels)``. Kernels
are stored ``(out_channels, in_channels, kernel)`` for ordinary convolutions.
A transposed convolution with weight ``W`` of shape
``(in_channels, out_channels, kernel)`` is the adjoint of the strided
convolution with the same ``W``.
"""
import numpy as np


def same_padding(kernel):
    return (kernel - 1) // 2


def _layout(x, kernel, stride, pad_left, n_out):
    """Zero-pad every batch item and flatten to one long (rows, C) signal.

    Item ``b`` starts at row ``b * Tp`` with ``pad_left`` leading zeros;
    ``Tp`` is a multiple of ``stride`` and long enough for every tap, and
    ``kernel`` spare rows at the end keep every tap slice in bounds.
    """
    B, T, C = x.shape
    Tp = max((n_out - 1) * stride + kernel, pad_left + T)
    Tp = -(-Tp // stride) * stride
    flat = np.zeros((B * Tp + kernel, C), dtype=x.dtype)
    flat[: B * Tp].reshape(B, Tp, C)[:, pad_left:pad_left + T] = x
    return flat, Tp


def _taps(W):
    # (Cout, Cin, K) -> (K, Cin, Cout), contiguous per tap
    return np.ascontiguousarray(W.transpose(2, 1, 0))


def conv(x, W, stride=1, pad_left=None):
    """'Same' strided correlation producing ``T // stride`` samples.

    y[b, t, o] = sum_{c,k} W[o, c, k] x[b, t*stride + k - pad_left, c]
    """
    K = W.shape[2]
    if pad_left is None:
        pad_left = same_padding(K)
    B, T, _ = x.shape
    s = stride
    n_out = T // s
    flat, Tp = _layout(x, K, s, pad_left, n_out)
    rows = B * Tp // s
    taps = _taps(W).astype(x.dtype, copy=False)
    y = flat[0: s * rows: s] @ taps[0]
    for k in range(1, K):
        y += flat[k: k + s * rows: s] @ taps[k]
    return y.reshape(B, Tp // s, -1)[:, :n_out]


def _spread(dy, B, Tp, s, n_out):
    rows = B * Tp // s
    full = np.zeros((rows, dy.shape[2]), dtype=dy.dtype)
    full.reshape(B, Tp // s, -1)[:, :n_out] = dy
    return full


def conv_adjoint(dy, W, T, stride=1, pad_left=None):
    """Transpose of ``conv`` with respect to its input (length ``T``)."""
    K = W.shape[2]
    if pad_left is None:
        pad_left = same_padding(K)
    B, n_out, _ = dy.shape
    s = stride
    C = W.shape[1]
    Tp = max((n_out - 1) * s + K, pad_left + T)
    Tp = -(-Tp // s) * s
    rows = B * Tp // s
    full = _spread(dy, B, Tp, s, n_out)
    taps = _taps(W).astype(dy.dtype, copy=False)
    flat = np.zeros((B * Tp + K, C), dtype=dy.dtype)
    for k in range(K):
        flat[k: k + s * rows: s] += full @ taps[k].T
    return flat[: B * Tp].reshape(B, Tp, C)[:, pad_left:pad_left + T]


def conv_weight_grad(x, dy, kernel, stride=1, pad_left=None):
    """Gradient of ``sum(dy * conv(x, W))`` with respect to ``W``."""
    if pad_left is None:
        pad_left = same_padding(kernel)
    B, n_out, c_out = dy.shape
    s = stride
    flat, Tp = _layout(x, kernel, s, pad_left, n_out)
    rows = B * Tp // s
    full = _spread(dy, B, Tp, s, n_out)
    g = np.empty((c_out, x.shape[2], kernel), dtype=dy.dtype)
    for k in range(kernel):
        g[:, :, k] = full.T @ flat[k: k + s * rows: s]
    return g


def interp_up(z, factor):
    """Linear interpolation by an integer factor; the last sample is held."""
    if factor == 1:
        return z
    nxt = np.concatenate([z[:, 1:], z[:, -1:]], axis=1)
    r = (np.arange(factor, dtype=z.dtype) / factor)[None, None, :, None]
    y = (1 - r) * z[:, :, None, :] + r * nxt[:, :, None, :]
    B, T, _, C = y.shape
    return y.reshape(B, T * factor, C)


def interp_up_adjoint(dy, factor):
    if factor == 1:
        return dy
    B, Tf, C = dy.shape
    d = dy.reshape(B, Tf // factor, factor, C)
    r = (np.arange(factor, dtype=dy.dtype) / factor)[None, None, :, None]
    dz = np.sum((1 - r) * d, axis=2)
    to_next = np.sum(r * d, axis=2)
    dz[:, 1:] += to_next[:, :-1]
    dz[:, -1] += to_next[:, -1]
    return dz


def activate(kind, z, slope=None):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "prelu":
        return np.where(z > 0, z, slope * z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(kind, z, y, dy, slope=None):
    """Return (dz, dslope); dslope is None unless ``kind == 'prelu'``."""
    if kind == "tanh":
        return dy * (1 - y * y), None
    if kind == "prelu":
        neg = z <= 0
        dz = np.where(neg, slope * dy, dy)
        return dz, np.sum(dy * z * neg)
    if kind == "linear":
        return dy, None
    raise ValueError(f"unknown activation {kind!r}")
