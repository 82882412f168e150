"""Estimation of the channel (beta) and channel-by-level (alpha) loss weights."""
import json
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .audmodel import model_forward
from .exceptions import DegenerateChannel, EmptyLevelSet, NonPositiveEntry
from .signals import LevelGrid, normalize_to_spl

logger = logging.getLogger(__name__)

NORM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Frozen weights for the frequency-and-level-dependent MAE.

    ``beta`` has one entry per channel; ``alpha`` is channels x levels and
    averages to one over channels at the highest level.
    """

    grid: LevelGrid
    cfs: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    model_digest: str = ""

    def __post_init__(self):
        for name in ("cfs", "beta", "alpha"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        J = self.beta.shape[0]
        if self.cfs.shape != (J,) or self.alpha.shape != (J, len(self.grid)):
            raise ValueError(
                f"inconsistent shapes: cfs {self.cfs.shape}, beta {self.beta.shape}, "
                f"alpha {self.alpha.shape}, {len(self.grid)} levels"
            )
        for name in ("beta", "alpha"):
            v = getattr(self, name)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise NonPositiveEntry(f"{name} must be finite and positive")
        top = np.mean(self.alpha[:, -1])
        if abs(top - 1.0) > 1e-12:
            raise ValueError(f"alpha at the top level averages {top!r}, expected 1")

    @property
    def n_channels(self):
        return self.beta.shape[0]

    def interp(self, l_star):
        """Interpolated alpha for every channel at level ``l_star``."""
        levels = self.grid.levels
        if l_star <= levels[0]:
            return self.alpha[:, 0].copy()
        if l_star >= levels[-1]:
            return self.alpha[:, -1].copy()
        hi = int(np.searchsorted(levels, l_star, side="left"))
        if levels[hi] == l_star:
            return self.alpha[:, hi].copy()
        lo = hi - 1
        m = (levels[hi] - l_star) / (levels[hi] - levels[lo])
        log_a = m * np.log10(self.alpha[:, lo]) + (1.0 - m) * np.log10(self.alpha[:, hi])
        return 10.0 ** log_a

    def to_json(self):
        # repr() of a Python float is the shortest string that round-trips
        return json.dumps({
            "levels": list(self.grid.levels),
            "cfs": self.cfs.tolist(),
            "beta": self.beta.tolist(),
            "alpha": self.alpha.tolist(),
            "model_digest": self.model_digest,
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(LevelGrid(tuple(d["levels"])), np.array(d["cfs"]), np.array(d["beta"]),
                   np.array(d["alpha"]), d.get("model_digest", ""))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def interp_alpha(table, j, l_star):
    """Log-domain interpolation of alpha for channel ``j`` at level ``l_star``.

    Clamped to the first/last grid column outside the grid, exact at grid
    points.
    """
    return float(table.interp(l_star)[j])


def estimate_beta_bar(model, corpus_by_level, floor=None):
    """Average inverse L1 norm per channel and level.

    ``corpus_by_level`` maps each level to the list of signals already
    normalized to it. Norms below ``floor`` are raised to it before
    inversion; when ``floor`` is None it is ``1e-12 * T * output_scale``
    per signal.
    """
    levels = list(corpus_by_level)
    columns = []
    for level in levels:
        signals = corpus_by_level[level]
        if len(signals) == 0:
            raise EmptyLevelSet(f"no signals at level {level}")
        inv, low = [], []
        for x in signals:
            rep = model_forward(model, x).channels
            norms = np.sum(np.abs(rep), axis=1)
            eps = floor
            if eps is None:
                eps = NORM_FLOOR * rep.shape[1] * getattr(model, "output_scale", 1.0)
            low.append(norms < eps)
            inv.append(1.0 / np.maximum(norms, eps))
        inv, low = np.stack(inv), np.stack(low)
        if low.any():
            logger.warning("level %s: %d channel norms raised to the floor", level, int(low.sum()))
        dead = low.all(axis=0)
        if dead.any():
            raise DegenerateChannel(
                f"channels {np.flatnonzero(dead).tolist()} silent for every signal at level {level}"
            )
        columns.append(np.sum(inv, axis=0) / inv.shape[0])
    return np.stack(columns, axis=1)


def _check_positive(m, name):
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise NonPositiveEntry(f"{name} must be finite and positive")
    return m


def estimate_beta(beta_bar):
    """Per-channel weight: level-wise min-normalized beta_bar, averaged over levels."""
    beta_bar = _check_positive(beta_bar, "beta_bar")
    normalized = beta_bar / beta_bar.min(axis=0, keepdims=True)
    assert np.all(normalized.min(axis=0) == 1.0)
    return np.mean(normalized, axis=1)


def estimate_alpha(beta, beta_bar):
    """Residual channel-by-level weight, averaging to one over channels at the top level."""
    beta = _check_positive(beta, "beta")
    beta_bar = _check_positive(beta_bar, "beta_bar")
    if beta_bar.shape[0] != beta.shape[0]:
        raise ValueError(f"beta has {beta.shape[0]} channels, beta_bar {beta_bar.shape[0]}")
    alpha_bar = beta_bar / beta[:, None]
    J = beta.shape[0]
    return J * alpha_bar / np.sum(alpha_bar[:, -1])


def _corpus_by_level(corpus, grid, n_per_level, seed):
    rng = np.random.default_rng(seed)
    out = {}
    for level in grid.levels:
        if n_per_level is None or n_per_level >= len(corpus):
            chosen = corpus
        else:
            idx = np.sort(rng.choice(len(corpus), size=n_per_level, replace=False))
            chosen = [corpus[i] for i in idx]
        out[level] = [normalize_to_spl(x, level) for x in chosen]
    return out


def estimate_weights(model, corpus, grid, seed=0, n_per_level=None, floor=None):
    """Estimate a WeightTable for ``model`` from ``corpus`` over ``grid``.

    Every signal (or a seeded subset of ``n_per_level`` signals) is
    normalized to each level of the grid and passed through the model.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    beta_bar = estimate_beta_bar(model, _corpus_by_level(corpus, grid, n_per_level, seed), floor)
    beta = estimate_beta(beta_bar)
    alpha = estimate_alpha(beta, beta_bar)
    cfs = getattr(model, "cfs", None)
    if cfs is None:
        cfs = np.arange(beta.shape[0], dtype=float)
    digest = model.digest() if hasattr(model, "digest") else ""
    return WeightTable(grid, np.asarray(cfs), beta, alpha, digest)


class WeightEstimator(BaseEstimator):
    """Estimator wrapper around ``estimate_weights``.

    ``fit(X)`` takes a list of waveforms (the unnormalized training corpus)
    and stores the result in ``table_``, ``beta_`` and ``alpha_``.
    """

    def __init__(self, model, levels=(40, 50, 60, 70, 80, 90, 100, 110, 120),
                 n_per_level=None, random_state=0):
        self.model = model
        self.levels = levels
        self.n_per_level = n_per_level
        self.random_state = random_state

    def fit(self, X, y=None):
        self.table_ = estimate_weights(self.model, X, LevelGrid(tuple(self.levels)),
                                       seed=self.random_state, n_per_level=self.n_per_level)
        self.beta_ = self.table_.beta
        self.alpha_ = self.table_.alpha
        return self

    def interp(self, l_star):
        check_is_fitted(self, "table_")
        return self.table_.interp(l_star)
