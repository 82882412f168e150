"""Estimator wrapper around a trained emulator network."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_signal_batch
from .audmodel import InnerRepresentation
from .loss import recover_estimate
from .net import build_connear_spec, build_waveunet_spec, forward
from .signals import LevelGrid, Waveform, WindowSpec
from .train import TrainingConfig, train_emulator

ARCHITECTURES = {"waveunet": build_waveunet_spec, "connear": build_connear_spec}


def run_network(spec, params, samples, table=None, context=(256, 256)):
    """Emulator response to whole signals of any length.

    The input is zero-padded by ``context`` and up to a multiple of the
    network's resampling factor; the output is cropped back to the input
    length. With a weight table the beta normalization is undone.
    ``samples`` is (T,) or (B, T); the result is (J, T) or (B, J, T).
    """
    x = np.asarray(samples, dtype=params.dtype)
    single = x.ndim == 1
    if single:
        x = x[None]
    T = x.shape[1]
    left, right = context
    F = spec.total_factor
    total = left + T + right
    extra = -total % F
    padded = np.zeros((x.shape[0], total + extra), dtype=x.dtype)
    padded[:, left:left + T] = x
    out = forward(spec, params, padded, (left, right + extra)).astype(np.float64)
    if table is not None:
        out = recover_estimate(out, table)
    return out[0] if single else out


class AuditoryEmulator(BaseEstimator):
    """Convolutional encoder-decoder trained to imitate an auditory model.

    Parameters
    ----------
    model : object
        Reference model with ``forward(Waveform)`` and ``cfs``.
    weight_table : WeightTable, optional
        Required for ``objective="fmae"``.
    architecture : {"waveunet", "connear"}
    n_blocks, kernel, depth : int
        Encoder/decoder size.
    objective, epochs, batch_size, lr, n_segments, dtype
        See ``TrainingConfig``.
    window_len, left_context, right_context : int
    levels : sequence of float
        Level grid for the training data.
    random_state : int

    ``fit(X)`` takes a list of waveforms; ``predict(X)`` maps an
    (n_signals, n_samples) array to (n_signals, J, n_samples).
    """

    def __init__(self, model=None, weight_table=None, architecture="waveunet", n_blocks=4,
                 kernel=21, depth=16, objective="fmae", epochs=30, batch_size=16, lr=1e-4,
                 n_segments=None, dtype="float64", window_len=2048, left_context=256,
                 right_context=256, levels=(40, 50, 60, 70, 80, 90, 100, 110, 120),
                 random_state=0):
        self.model = model
        self.weight_table = weight_table
        self.architecture = architecture
        self.n_blocks = n_blocks
        self.kernel = kernel
        self.depth = depth
        self.objective = objective
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.n_segments = n_segments
        self.dtype = dtype
        self.window_len = window_len
        self.left_context = left_context
        self.right_context = right_context
        self.levels = levels
        self.random_state = random_state

    def _config(self):
        return TrainingConfig(
            objective=self.objective, epochs=self.epochs, batch_size=self.batch_size,
            lr=self.lr, seed=self.random_state,
            window=WindowSpec(self.window_len, self.left_context, self.right_context),
            grid=LevelGrid(tuple(float(v) for v in self.levels)),
            n_segments=self.n_segments, dtype=self.dtype,
        )

    def build_spec(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {sorted(ARCHITECTURES)}")
        J = len(self.model.cfs)
        return ARCHITECTURES[self.architecture](J, n_blocks=self.n_blocks, kernel=self.kernel,
                                                depth=self.depth)

    def fit(self, X, y=None, pairs=None):
        """Train on the corpus ``X`` (list of Waveform or 1-D arrays)."""
        if self.model is None:
            raise ValueError("AuditoryEmulator needs a reference model")
        spec = self.build_spec()
        run = train_emulator(self.model, X, spec, self._config(), self.weight_table, pairs=pairs)
        return self.set_run(run)

    def set_run(self, run):
        """Adopt an existing TrainingRun instead of training."""
        self.run_ = run
        self.spec_ = run.spec
        self.params_ = run.params
        self.table_ = run.weight_table if run.config.objective == "fmae" else None
        self.context_ = (run.config.window.left_context, run.config.window.right_context)
        self.cfs_ = None if self.model is None else np.asarray(self.model.cfs)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return run_network(self.spec_, self.params_, check_signal_batch(X), self.table_,
                           self.context_)

    def forward(self, x):
        """Emulated inner representation of a Waveform."""
        check_is_fitted(self, "params_")
        samples = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
        out = run_network(self.spec_, self.params_, samples, self.table_, self.context_)
        cfs = self.cfs_ if self.cfs_ is not None else np.arange(out.shape[0], dtype=float)
        return InnerRepresentation(out, cfs)

    @property
    def cfs(self):
        check_is_fitted(self, "params_")
        return self.cfs_
