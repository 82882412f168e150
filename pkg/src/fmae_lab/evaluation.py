"""Evaluation battery: SER, level-wise MAE, excitation patterns and report export.

SER values are in dB. A channel whose estimate matches the target exactly
is reported at ``SER_CAP`` (300 dB); a channel whose target is silent has
no defined SER and is reported as NaN together with a SilentTargetChannel
warning.
"""
import csv
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ._validation import check_same_shape
from .audmodel import model_forward
from .exceptions import (
    AxisMismatch,
    CorpusOverlap,
    EmptyEvaluation,
    NyquistViolation,
    ShapeMismatch,
    SilentTargetChannel,
)
from .signals import DEFAULT_SAMPLE_RATE, Waveform, normalize_to_spl

SER_CAP = 300.0
LOG_FLOOR = -300.0
STEADY_STATE_SKIP = 0.05  # s discarded at tone onset


def _channels(rep):
    return np.asarray(getattr(rep, "channels", rep), dtype=np.float64)


def _ser_from_energies(signal, error):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(signal / error)
    out = np.where(error == 0, SER_CAP, np.minimum(out, SER_CAP))
    silent = signal == 0
    if np.any(silent):
        warnings.warn(f"silent target in channel(s) {np.flatnonzero(silent).tolist()}",
                      SilentTargetChannel, stacklevel=3)
        out = np.where(silent, np.nan, out)
    return out


def ser(target, estimate):
    """Per-channel signal-to-error ratio ``20 log10(||f_j|| / ||f_j - f_hat_j||)``."""
    t, e = _channels(target), _channels(estimate)
    check_same_shape(t, e)
    if t.ndim != 2:
        raise ShapeMismatch(f"expected (J, T) representations, got {t.shape}")
    return _ser_from_energies(np.sum(t * t, axis=1), np.sum((t - e) ** 2, axis=1))


@dataclass(eq=False)
class SerMatrix:
    """Channels x levels SER in dB (NaN marks silent target channels)."""

    values: np.ndarray
    cfs: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.cfs = np.asarray(self.cfs, dtype=np.float64)
        self.levels = np.asarray(self.levels, dtype=np.float64)
        if self.values.shape != (self.cfs.shape[0], self.levels.shape[0]):
            raise ShapeMismatch(
                f"SER values {self.values.shape} do not match {len(self.cfs)} CFs x {len(self.levels)} levels"
            )
        if np.any(np.isinf(self.values)) or np.any(self.values > SER_CAP):
            raise ValueError("SER values must be finite and capped")

    def mean_per_level(self):
        return np.nanmean(self.values, axis=0)

    def worst(self):
        return float(np.nanmin(self.values))


def _digests(corpus):
    return {x.digest() if isinstance(x, Waveform) else Waveform(np.asarray(x, float)).digest()
            for x in corpus}


def check_disjoint(test_corpus, train_corpus):
    if train_corpus is None:
        return
    shared = _digests(test_corpus) & _digests(train_corpus)
    if shared:
        raise CorpusOverlap(f"{len(shared)} test signal(s) also appear in the training corpus")


def _responses(model, emulator, test_corpus, level, workers=1, cache=None):
    """(reference, estimate) pairs for every test signal normalized to ``level``."""
    def one(x):
        xn = normalize_to_spl(x, level)
        ref = cache.get(model, xn) if cache is not None else _channels(model_forward(model, xn))
        est = _channels(emulator.forward(xn))
        check_same_shape(ref, est, ("reference", "emulator output"))
        return ref, est

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, test_corpus))
    return [one(x) for x in test_corpus]


def ser_matrix(model, emulator, test_corpus, grid, train_corpus=None, pooling="energy",
               workers=1, cache=None):
    """SER per channel and level over a held-out corpus.

    With ``pooling="energy"`` signal and error energies are summed over
    the test signals before the ratio is taken; ``pooling="db"`` averages
    the per-signal SER values instead.
    """
    test_corpus = list(test_corpus)
    if not test_corpus:
        raise EmptyEvaluation("test corpus is empty")
    if pooling not in ("energy", "db"):
        raise ValueError("pooling must be 'energy' or 'db'")
    check_disjoint(test_corpus, train_corpus)
    cols = []
    for level in grid.levels:
        pairs = _responses(model, emulator, test_corpus, level, workers, cache)
        if pooling == "energy":
            sig = sum(np.sum(r * r, axis=1) for r, _ in pairs)
            err = sum(np.sum((r - e) ** 2, axis=1) for r, e in pairs)
            cols.append(_ser_from_energies(sig, err))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SilentTargetChannel)
                per = np.stack([ser(r, e) for r, e in pairs])
            if np.any(np.all(np.isnan(per), axis=0)):
                warnings.warn("channel silent in every test signal", SilentTargetChannel)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cols.append(np.nanmean(per, axis=0))
    return SerMatrix(np.stack(cols, axis=1), np.asarray(model.cfs), grid.levels)


def delta_ser(a, b):
    """Cellwise ``a - b`` and its grand mean."""
    if a.values.shape != b.values.shape or not (
        np.array_equal(a.cfs, b.cfs) and np.array_equal(a.levels, b.levels)
    ):
        raise AxisMismatch("SER matrices have different CF or level axes")
    d = a.values - b.values
    return d, float(np.nanmean(d))


@dataclass(eq=False)
class MaeCurve:
    levels: np.ndarray
    mae: np.ndarray
    log_mae: np.ndarray
    ge: float


def _guarded_log10(v):
    v = np.asarray(v, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), LOG_FLOOR)


def mae_curve_from_values(levels, mae_values):
    mae_values = np.asarray(mae_values, dtype=np.float64)
    return MaeCurve(np.asarray(levels, dtype=np.float64), mae_values,
                    _guarded_log10(mae_values), float(np.mean(mae_values)))


def log_mae_curve(model, emulator, test_corpus, grid, train_corpus=None, workers=1, cache=None):
    """Pooled MAE per level, its log10 (floored at -300) and GE, the mean MAE over levels."""
    test_corpus = list(test_corpus)
    if not test_corpus:
        raise EmptyEvaluation("test corpus is empty")
    check_disjoint(test_corpus, train_corpus)
    values = []
    for level in grid.levels:
        pairs = _responses(model, emulator, test_corpus, level, workers, cache)
        total = sum(float(np.sum(np.abs(r - e))) for r, e in pairs)
        count = sum(r.size for r, _ in pairs)
        values.append(total / count)
    return mae_curve_from_values(grid.levels, values)


@dataclass(eq=False)
class ExcitationPattern:
    tone_freq: float
    tone_level: float
    rms_per_cf: np.ndarray
    cfs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rms_per_cf = np.asarray(self.rms_per_cf, dtype=np.float64)
        if self.rms_per_cf.ndim != 1 or np.any(self.rms_per_cf < 0):
            raise ValueError("RMS values must form a non-negative vector")

    @property
    def peak_channel(self):
        return int(np.argmax(self.rms_per_cf))


def pure_tone(freq, level, duration, sample_rate=DEFAULT_SAMPLE_RATE):
    """Sine at ``freq`` Hz normalized to ``level`` dB SPL (L2-norm definition)."""
    if not 0 < freq < sample_rate / 2:
        raise NyquistViolation(f"tone at {freq} Hz is not below Nyquist ({sample_rate / 2} Hz)")
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return normalize_to_spl(Waveform(np.sin(2 * np.pi * freq * t), sample_rate), level)


def excitation_pattern(model, tone_freq, tone_level, duration=0.2, sample_rate=None,
                       skip=STEADY_STATE_SKIP):
    """Per-channel RMS of the steady-state response to a pure tone."""
    if sample_rate is None:
        sample_rate = getattr(model, "sample_rate", DEFAULT_SAMPLE_RATE)
    if skip >= duration:
        raise ValueError("tone is shorter than the discarded onset")
    x = pure_tone(tone_freq, tone_level, duration, sample_rate)
    out = _channels(model_forward(model, x))
    steady = out[:, int(round(skip * sample_rate)):]
    rms = np.sqrt(np.mean(steady * steady, axis=1))
    return ExcitationPattern(float(tone_freq), float(tone_level), rms,
                             getattr(model, "cfs", None))


# -- report export -----------------------------------------------------------

def write_matrix_csv(path, values, cfs, levels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cf_hz"] + [repr(float(l)) for l in levels])
        for cf, row in zip(cfs, values):
            w.writerow([repr(float(cf))] + [repr(float(v)) for v in row])


def read_matrix_csv(path):
    """Inverse of ``write_matrix_csv``: returns (values, cfs, levels)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    levels = np.array([float(v) for v in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 1:], body[:, 0], levels


_PLOT_STUB = '''"""Plot the CSV files written next to this script.

Each CSV has one row per CF and one column per level (header
"cf_hz,<level>,..."). Requires matplotlib.
"""
import csv
import glob
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*.csv"))):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    levels = [float(v) for v in rows[0][1:]]
    cfs = [float(r[0]) for r in rows[1:]]
    values = [[float(v) for v in r[1:]] for r in rows[1:]]
    fig, ax = plt.subplots()
    mesh = ax.pcolormesh(levels, cfs, values, shading="nearest")
    ax.set_yscale("log")
    ax.set_xlabel("level (dB SPL)")
    ax.set_ylabel("CF (Hz)")
    ax.set_title(os.path.basename(path))
    fig.colorbar(mesh)
    fig.savefig(path[:-4] + ".png", dpi=120)
'''


def export_report(directory, ser_matrices: Optional[Dict[str, SerMatrix]] = None,
                  mae_curves: Optional[Dict[str, MaeCurve]] = None, delta=None,
                  excitation: Optional[Dict[str, list]] = None, extra=None):
    """Write CSVs, ``summary.json`` and ``plot_report.py`` to ``directory``.

    ``delta`` is an optional ``(name_a, name_b)`` pair of keys into
    ``ser_matrices``; the difference matrix is exported and its mean is
    stored as ``mean_delta_ser`` in the summary. ``excitation`` maps a name
    to a list of ExcitationPattern. Returns the list of written paths.
    """
    ser_matrices = ser_matrices or {}
    mae_curves = mae_curves or {}
    excitation = excitation or {}
    if not (ser_matrices or mae_curves or excitation):
        raise EmptyEvaluation("nothing to export: no SER matrices, MAE curves or excitation patterns")
    os.makedirs(directory, exist_ok=True)
    written = []
    summary = {"schema": "fmae-lab-report/1", "ser": {}, "ge": {}, "log_mae": {}}
    for name, m in ser_matrices.items():
        path = os.path.join(directory, f"ser_{name}.csv")
        write_matrix_csv(path, m.values, m.cfs, m.levels)
        written.append(path)
        summary["ser"][name] = {"mean_per_level": m.mean_per_level().tolist(), "worst": m.worst()}
    if delta is not None:
        a, b = delta
        d, mean = delta_ser(ser_matrices[a], ser_matrices[b])
        path = os.path.join(directory, f"delta_ser_{a}_minus_{b}.csv")
        write_matrix_csv(path, d, ser_matrices[a].cfs, ser_matrices[a].levels)
        written.append(path)
        summary["mean_delta_ser"] = mean
        summary["delta_ser_per_level"] = np.nanmean(d, axis=0).tolist()
    for name, c in mae_curves.items():
        summary["ge"][name] = c.ge
        summary["log_mae"][name] = dict(zip([repr(float(l)) for l in c.levels], c.log_mae.tolist()))
    for name, patterns in excitation.items():
        by_freq = {}
        for p in patterns:
            by_freq.setdefault(p.tone_freq, []).append(p)
        for freq, ps in sorted(by_freq.items()):
            ps = sorted(ps, key=lambda p: p.tone_level)
            cfs = ps[0].cfs if ps[0].cfs is not None else np.arange(len(ps[0].rms_per_cf))
            path = os.path.join(directory, f"excitation_{name}_{int(round(freq))}hz.csv")
            write_matrix_csv(path, np.stack([p.rms_per_cf for p in ps], axis=1), cfs,
                             [p.tone_level for p in ps])
            written.append(path)
    if extra:
        summary.update(extra)
    path = os.path.join(directory, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1)
    written.append(path)
    path = os.path.join(directory, "plot_report.py")
    with open(path, "w") as fh:
        fh.write(_PLOT_STUB)
    written.append(path)
    return written
