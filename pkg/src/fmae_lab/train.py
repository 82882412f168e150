"""Training loop pairing a reference auditory model with an emulator network."""
import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .audmodel import corpus_key, model_forward
from .exceptions import (
    BadConfig,
    ChannelMismatch,
    ConfigMismatch,
    DigestMismatch,
    DivergenceDetected,
    MissingWeightTable,
)
from .loss import fmae, mae
from .net import (
    AdamState,
    NetworkSpec,
    adam_step,
    backward,
    forward_with_cache,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .signals import LevelGrid, WindowSpec, build_level_dataset, segment_spl, window_with_context
from .weights import WeightTable

logger = logging.getLogger(__name__)

OBJECTIVES = ("mae", "fmae")
_DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of one training run.

    ``n_segments`` caps the number of training segments (None keeps all of
    them). ``dtype`` selects the arithmetic of the optimization loop;
    checkpoints are always written in float64.
    """

    objective: str = "fmae"
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0
    window: WindowSpec = field(default_factory=WindowSpec)
    grid: LevelGrid = field(default_factory=LevelGrid.from_range)
    checkpoint_every: int = 0
    n_segments: Optional[int] = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise BadConfig(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.epochs < 1:
            raise BadConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")
        if self.lr < 0:
            raise BadConfig("lr must be non-negative")
        if self.checkpoint_every < 0:
            raise BadConfig("checkpoint_every must be >= 0")
        if self.n_segments is not None and self.n_segments < 1:
            raise BadConfig("n_segments must be positive")
        if self.dtype not in _DTYPES:
            raise BadConfig(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid.levels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise BadConfig(f"unknown training config field(s): {sorted(unknown)}")
        if "window" in d and not isinstance(d["window"], WindowSpec):
            d["window"] = WindowSpec(**d["window"])
        if "grid" in d and not isinstance(d["grid"], LevelGrid):
            d["grid"] = LevelGrid(tuple(float(v) for v in d["grid"]))
        return cls(**d)

    def differences(self, other):
        """Names of the fields whose values differ from ``other``."""
        a, b = self.to_dict(), other.to_dict()
        return sorted(k for k in a if a[k] != b[k])


@dataclass(eq=False)
class TrainingPair:
    segment: np.ndarray   # (segment_len,) input with context
    target: np.ndarray    # (J, window_len) reference output on the core
    l_star: float         # effective level of the core window
    level: float          # level the parent utterance was normalized to


class TargetCache:
    """Reference outputs keyed by waveform content and model digest."""

    def __init__(self):
        self._store = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def get(self, model, x):
        digest = model.digest() if hasattr(model, "digest") else ""
        key = corpus_key(x, digest)
        if key in self._store:
            self.hits += 1
            return self._store[key]
        self.misses += 1
        out = np.asarray(model_forward(model, x).channels)
        out.setflags(write=False)
        self._store[key] = out
        return out


def _seeds(seed):
    # independent streams for level assignment, pair order and batch order
    return np.random.SeedSequence(seed).spawn(3)


def prepare_pairs(model, corpus, grid, window, seed, cache=None):
    """Level-normalize ``corpus``, run the reference once per utterance and cut windows.

    Targets are sliced out of the full-utterance response, so long-range
    model state is preserved. ``l_star`` is measured on each core window
    (with length compensation to the utterance length). The returned list
    is in a seeded random order.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    cache = TargetCache() if cache is None else cache
    level_seed, order_seed, _ = _seeds(seed)
    pairs = []
    for wave, level in build_level_dataset(corpus, grid, level_seed):
        full = cache.get(model, wave)
        for seg, (start, stop) in window_with_context(wave, window):
            core = wave.samples[start:stop]
            pairs.append(TrainingPair(seg.samples, full[:, start:stop],
                                      segment_spl(core, len(wave)), float(level)))
    order = np.random.default_rng(order_seed).permutation(len(pairs))
    return [pairs[i] for i in order]


@dataclass(eq=False)
class TrainingRun:
    config: TrainingConfig
    spec: NetworkSpec
    params: object
    weight_table: Optional[WeightTable] = None
    loss_curve: List[tuple] = field(default_factory=list)
    checkpoint_id: str = ""
    model_digest: str = ""

    @property
    def steps(self):
        return self.loss_curve[-1][0] if self.loss_curve else 0

    def losses(self):
        return np.array([v for _, v in self.loss_curve])

    def save(self, directory):
        """Write config.json, spec.json, weights.json (fmae), checkpoint.bin and loss.csv."""
        os.makedirs(directory, exist_ok=True)
        meta = {"config": self.config.to_dict(), "model_digest": self.model_digest,
                "checkpoint_id": self.checkpoint_id}
        with open(os.path.join(directory, "config.json"), "w") as fh:
            json.dump(meta, fh, indent=1)
        with open(os.path.join(directory, "spec.json"), "w") as fh:
            json.dump(dataclasses.asdict(self.spec), fh, indent=1)
        if self.weight_table is not None:
            self.weight_table.save(os.path.join(directory, "weights.json"))
        save_checkpoint(os.path.join(directory, "checkpoint.bin"), self.spec,
                        self.params.astype(np.float64), self.steps)
        with open(os.path.join(directory, "loss.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "value"])
            for step, value in self.loss_curve:
                w.writerow([step, repr(value)])
        return directory

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "config.json")) as fh:
            meta = json.load(fh)
        with open(os.path.join(directory, "spec.json")) as fh:
            spec = NetworkSpec.from_dict(json.load(fh))
        cfg = TrainingConfig.from_dict(meta["config"])
        table = None
        wpath = os.path.join(directory, "weights.json")
        if os.path.exists(wpath):
            table = WeightTable.load(wpath)
        params, _ = load_checkpoint(os.path.join(directory, "checkpoint.bin"), spec)
        with open(os.path.join(directory, "loss.csv")) as fh:
            rows = list(csv.reader(fh))[1:]
        curve = [(int(s), float(v)) for s, v in rows]
        return cls(cfg, spec, params, table, curve, meta.get("checkpoint_id", ""),
                   meta.get("model_digest", ""))


def _check_table(model, table, n_channels):
    if table is None:
        raise MissingWeightTable(
            "objective 'fmae' needs a weight table; estimate one with estimate_weights "
            "(or `fmae-lab weights`) on the training model and corpus"
        )
    if table.n_channels != n_channels:
        raise ChannelMismatch(f"weight table has {table.n_channels} channels, model has {n_channels}")
    digest = model.digest() if hasattr(model, "digest") else ""
    if table.model_digest and digest and table.model_digest != digest:
        raise DigestMismatch("weight table was estimated for a different model")


def train_emulator(model, corpus, net_spec, cfg, weight_table=None, pairs=None,
                   run_dir=None, cache=None):
    """Fit an emulator network to ``model`` with Adam under ``cfg.objective``.

    ``pairs`` may be passed to reuse the output of ``prepare_pairs``. For the
    FMAE objective the network learns the beta-normalized representation;
    use ``recover_estimate`` on its output. Raises DivergenceDetected (after
    writing a checkpoint when ``run_dir`` is set) if the loss turns
    non-finite.
    """
    if pairs is None:
        pairs = prepare_pairs(model, corpus, cfg.grid, cfg.window, cfg.seed, cache)
    if cfg.n_segments is not None:
        pairs = pairs[:cfg.n_segments]
    if not pairs:
        raise ValueError("no training segments")
    J = pairs[0].target.shape[0]
    if net_spec.output.out_ch != J:
        raise ChannelMismatch(f"network predicts {net_spec.output.out_ch} channels, model has {J}")
    table = None
    if cfg.objective == "fmae":
        _check_table(model, weight_table, J)
        table = weight_table

    dt = cfg.np_dtype
    X = np.stack([p.segment for p in pairs]).astype(dt)
    Y = np.stack([p.target for p in pairs]).astype(dt)
    levels = np.array([p.l_star for p in pairs])
    context = (cfg.window.left_context, cfg.window.right_context)

    params = init_params(net_spec, cfg.seed, dt)
    state = AdamState(lr=cfg.lr)
    batch_rng = np.random.default_rng(_seeds(cfg.seed)[2])
    digest = model.digest() if hasattr(model, "digest") else ""
    run = TrainingRun(cfg, net_spec, params, table, [], "", digest)
    n = len(pairs)
    step = 0
    for epoch in range(cfg.epochs):
        order = batch_rng.permutation(n)
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            out, cache_ = forward_with_cache(net_spec, params, X[idx], context)
            if table is None:
                loss = mae(Y[idx], out)
            else:
                loss = fmae(Y[idx], out, table, levels[idx])
            step += 1
            if not np.isfinite(loss.value):
                if run_dir is not None:
                    run.save(run_dir)
                raise DivergenceDetected(f"non-finite loss at step {step} (epoch {epoch})")
            run.loss_curve.append((step, loss.value))
            grads = backward(net_spec, params, cache_, loss.gradient)
            adam_step(state, params, grads)
            if run_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(run_dir, f"step{step:07d}.bin"), net_spec,
                                params.astype(np.float64), step)
        logger.info("epoch %d/%d: last loss %.6g", epoch + 1, cfg.epochs, run.loss_curve[-1][1])
    run.checkpoint_id = f"{net_spec.digest()[:16]}-step{step}"
    if run_dir is not None:
        run.save(run_dir)
    return run


def compare_objectives(model, corpus, net_spec, cfg_pair, weight_table, cache=None):
    """Train one MAE and one FMAE emulator that differ only in the objective.

    Returns ``(mae_run, fmae_run)``; both share data, order and initialization.
    """
    a, b = cfg_pair
    diff = a.differences(b)
    if diff != ["objective"]:
        raise ConfigMismatch(
            "configs must differ in the objective only; differing fields: " + (", ".join(diff) or "none")
        )
    pairs = prepare_pairs(model, corpus, a.grid, a.window, a.seed, cache)
    runs = {c.objective: train_emulator(model, corpus, net_spec, c, weight_table, pairs=pairs)
            for c in (a, b)}
    return runs["mae"], runs["fmae"]
