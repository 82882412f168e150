"""Training objectives and their gradients with respect to the prediction.

All functions accept arrays of shape (J, T) or batches (B, J, T). For a batch
the value is the mean of the per-item losses, so the gradient carries an
extra ``1/B``.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_same_shape
from .exceptions import ChannelMismatch, ShapeMismatch


@dataclass(eq=False)
class LossValue:
    value: float
    gradient: np.ndarray


def _arrays(target, pred):
    t = getattr(target, "channels", target)
    p = getattr(pred, "channels", pred)
    t = np.asarray(t, dtype=np.result_type(p, np.float32))
    p = np.asarray(p)
    check_same_shape(t, p)
    if t.ndim not in (2, 3):
        raise ShapeMismatch(f"expected (J, T) or (B, J, T), got {t.shape}")
    return t, p


def _count(shape):
    # J*T per item times the number of items
    return int(np.prod(shape))


def mae(target, pred):
    """Mean absolute error; subgradient uses sign(0) = 0."""
    t, p = _arrays(target, pred)
    n = _count(t.shape)
    diff = p - t
    return LossValue(float(np.sum(np.abs(diff)) / n), np.sign(diff) / n)


def mse(target, pred):
    t, p = _arrays(target, pred)
    n = _count(t.shape)
    diff = p - t
    return LossValue(float(np.sum(diff * diff) / n), 2.0 * diff / n)


def _level_weights(table, l_star, batched):
    if batched:
        return np.stack([table.interp(l) for l in np.atleast_1d(l_star)])
    return table.interp(float(l_star))


def fmae(target, pred_normalized, table, l_star):
    """Frequency-and-level-dependent MAE.

    ``pred_normalized`` estimates ``beta_j * target_j``; each channel's L1
    error is weighted by the alpha interpolated at ``l_star`` (one level per
    batch item for batched input).
    """
    t, p = _arrays(target, pred_normalized)
    if t.shape[-2] != table.n_channels:
        raise ChannelMismatch(f"{t.shape[-2]} channels, weight table has {table.n_channels}")
    batched = t.ndim == 3
    a = _level_weights(table, l_star, batched)
    if batched and a.shape[0] != t.shape[0]:
        raise ShapeMismatch(f"{a.shape[0]} levels for a batch of {t.shape[0]}")
    beta = table.beta.astype(p.dtype)[:, None]
    a = a.astype(p.dtype)[..., None]
    diff = p - beta * t
    n = _count(t.shape)
    return LossValue(float(np.sum(np.abs(diff) * a) / n), np.sign(diff) * a / n)


def normalize_target(target, table):
    """Scale each channel by beta, the quantity the FMAE-trained network predicts."""
    t = np.asarray(getattr(target, "channels", target))
    if t.shape[-2] != table.n_channels:
        raise ChannelMismatch(f"{t.shape[-2]} channels, weight table has {table.n_channels}")
    return t * table.beta.astype(t.dtype)[:, None]


def recover_estimate(pred_normalized, table):
    """Undo the channel normalization: ``f_hat_j = f_bar_j / beta_j``."""
    rep = pred_normalized
    p = np.asarray(getattr(rep, "channels", rep))
    if p.shape[-2] != table.n_channels:
        raise ChannelMismatch(f"{p.shape[-2]} channels, weight table has {table.n_channels}")
    out = p / table.beta.astype(p.dtype)[:, None]
    if hasattr(rep, "channels"):
        return type(rep)(out, rep.cfs)
    return out
