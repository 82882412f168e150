"""Ground-truth auditory models: a surrogate cochlea and a precomputed-corpus adapter.

Both model types expose ``forward(Waveform) -> InnerRepresentation`` and a
``digest()`` identifying their parameterization, which is all the rest of the
package relies on.
"""
import json
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import array_digest, check_signal_batch
from .exceptions import (
    MismatchedLengths,
    NotInCorpus,
    RateMismatch,
    SilentInput,
    UnknownTemplate,
)
from .signals import DEFAULT_SAMPLE_RATE, P_REF, normalize_to_spl, read_wav


@dataclass(eq=False)
class InnerRepresentation:
    """J x T matrix of channel outputs with the channels' CFs."""

    channels: np.ndarray
    cfs: np.ndarray

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.cfs = np.asarray(self.cfs, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] != self.cfs.shape[0]:
            raise MismatchedLengths(
                f"channels shape {self.channels.shape} does not match {self.cfs.shape[0]} CFs"
            )
        if self.cfs.shape[0] < 1:
            raise ValueError("need at least one channel")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("inner representation contains non-finite values")

    @property
    def shape(self):
        return self.channels.shape


@dataclass(frozen=True)
class Audiogram:
    freqs: Sequence[float]
    losses: Sequence[float]

    def __post_init__(self):
        if len(self.freqs) != len(self.losses):
            raise MismatchedLengths(
                f"{len(self.freqs)} frequencies but {len(self.losses)} losses"
            )
        f = np.asarray(self.freqs, dtype=float)
        lo = np.asarray(self.losses, dtype=float)
        if len(f) == 0 or np.any(np.diff(f) <= 0):
            raise ValueError("audiogram frequencies must be strictly increasing")
        if np.any(lo < 0) or np.any(lo > 120):
            raise ValueError("hearing losses must lie in [0, 120] dB HL")


@dataclass(eq=False)
class HearingProfile:
    """Per-channel OHC/IHC function, 1 = normal, 0 = complete dysfunction."""

    c_ohc: np.ndarray
    c_ihc: np.ndarray
    cfs: np.ndarray

    def __post_init__(self):
        self.c_ohc = np.asarray(self.c_ohc, dtype=np.float64)
        self.c_ihc = np.asarray(self.c_ihc, dtype=np.float64)
        self.cfs = np.asarray(self.cfs, dtype=np.float64)
        if not (self.c_ohc.shape == self.c_ihc.shape == self.cfs.shape):
            raise MismatchedLengths("c_ohc, c_ihc and cfs must have equal length")
        for name in ("c_ohc", "c_ihc"):
            v = getattr(self, name)
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def normal(cls, cfs):
        cfs = np.asarray(cfs, dtype=np.float64)
        return cls(np.ones_like(cfs), np.ones_like(cfs), cfs)


AUDIOMETRIC_FREQS = (250, 375, 500, 750, 1000, 1500, 2000, 3000, 4000, 6000)

# Bisgaard et al. standard audiograms, dB HL at AUDIOMETRIC_FREQS
_TEMPLATES = {
    "N0": (0, 0, 0, 0, 0, 0, 0, 0, 0, 0),
    "N3": (35, 35, 35, 35, 40, 45, 50, 55, 60, 65),
    "N5": (65, 67.5, 70, 72.5, 75, 80, 80, 80, 80, 80),
    "S1": (10, 10, 10, 10, 10, 10, 15, 30, 55, 70),
}

# Mild losses described in prose for the transmission-line model; expressed
# here as audiograms so they can drive the surrogate.
NAMED_PROFILES = {
    "Flat20": Audiogram((250, 500, 1000, 2000, 4000, 8000), (20,) * 6),
    "Slope20_5": Audiogram((250, 500, 1000, 2000, 4000, 8000), (5, 5, 5, 10, 15, 20)),
}


def standard_audiogram(name):
    """Template audiogram by name: N0, N3, N5, S1 (or Flat20 / Slope20_5)."""
    if name in _TEMPLATES:
        return Audiogram(AUDIOMETRIC_FREQS, _TEMPLATES[name])
    if name in NAMED_PROFILES:
        return NAMED_PROFILES[name]
    raise UnknownTemplate(f"unknown audiogram template {name!r}")


def interpolate_loss(a, cfs):
    """Hearing loss at each CF, linear in dB against log frequency.

    Outside the audiogram's range the nearest audiometric value is held.
    """
    return np.interp(np.log(np.asarray(cfs, dtype=float)), np.log(a.freqs), a.losses)


def audiogram_to_profile(a, cfs, ohc_fraction=2.0 / 3.0, l_max_ohc=60.0, l_max_ihc=40.0):
    """Map an audiogram onto per-CF OHC/IHC parameters.

    The loss at each CF is split into ``ohc_fraction * loss`` (OHC) and the
    remainder (IHC). A component loss ``L`` maps to ``10**(-L / L_max)``,
    clamped to [0, 1]; ``l_max_ohc`` and ``l_max_ihc`` set how quickly the
    parameters fall with loss.
    """
    if not 0.0 <= ohc_fraction <= 1.0:
        raise ValueError("ohc_fraction must lie in [0, 1]")
    cfs = np.asarray(cfs, dtype=np.float64)
    loss = interpolate_loss(a, cfs)
    c_ohc = np.clip(10.0 ** (-(ohc_fraction * loss) / l_max_ohc), 0.0, 1.0)
    c_ihc = np.clip(10.0 ** (-((1.0 - ohc_fraction) * loss) / l_max_ihc), 0.0, 1.0)
    return HearingProfile(c_ohc, c_ihc, cfs)


def erb_space(cf_min, cf_max, n):
    """Logarithmically spaced characteristic frequencies."""
    return np.geomspace(cf_min, cf_max, n)


@dataclass(frozen=True)
class SurrogateModelConfig:
    n_channels: int = 32
    cf_min: float = 125.0
    cf_max: float = 8000.0
    compression_exponent_normal: float = 0.25
    knee_level: float = 30.0
    ihc_cutoff: float = 3000.0
    output_scale: float = 1e3
    sample_rate: int = DEFAULT_SAMPLE_RATE
    max_ohc_gain_loss: float = 20.0

    def __post_init__(self):
        if self.n_channels < 2:
            raise ValueError("the surrogate needs at least 2 channels")
        if not self.cf_min < self.cf_max:
            raise ValueError("cf_min must be below cf_max")
        if not 0 < self.compression_exponent_normal <= 1:
            raise ValueError("compression exponent must lie in (0, 1]")
        if self.cf_max >= self.sample_rate / 2:
            raise ValueError("cf_max must be below Nyquist")

    @property
    def cfs(self):
        return erb_space(self.cf_min, self.cf_max, self.n_channels)

    @property
    def knee_amplitude(self):
        return P_REF * 10.0 ** (self.knee_level / 20.0)


def _compress(v, knee, exponent, gain, exponent_normal):
    """Broken-stick I/O function applied to |v|, bounded by the normal-hearing curve."""
    mag = np.abs(v)
    over = np.maximum(mag, knee) / knee
    normal = np.where(mag <= knee, mag, knee * over ** exponent_normal)
    impaired = gain * np.where(mag <= knee, mag, knee * over ** exponent)
    return np.sign(v) * np.minimum(normal, impaired)


def surrogate_forward(cfg, profile, x):
    """Run the surrogate cochlea on ``x``.

    Per channel: 4th-order gammatone at the CF (ERB bandwidth, unity gain at
    CF), instantaneous broken-stick compression whose exponent and
    below-knee gain depend on ``c_ohc``, half-wave rectification scaled by
    ``c_ihc``, a first-order low-pass at ``ihc_cutoff``, and finally
    multiplication by ``output_scale``. No group-delay compensation.

    The impaired I/O curve is capped by the normal one, so hearing loss can
    only reduce the response and impaired curves merge into the normal curve
    at high levels.
    """
    if x.sample_rate != cfg.sample_rate:
        raise RateMismatch(f"input at {x.sample_rate} Hz, model runs at {cfg.sample_rate} Hz")
    cfs = cfg.cfs
    if profile.cfs.shape != cfs.shape or not np.allclose(profile.cfs, cfs, rtol=1e-12):
        raise MismatchedLengths("hearing profile CFs do not match the model CFs")
    return InnerRepresentation(_filterbank(cfg, profile, x.samples[None, :])[0], cfs)


def _filterbank(cfg, profile, X):
    """Batch version of surrogate_forward on an (n, T) array -> (n, J, T)."""
    fs = cfg.sample_rate
    cfs = cfg.cfs
    knee = cfg.knee_amplitude
    p = cfg.compression_exponent_normal
    lp_b, lp_a = signal.butter(1, cfg.ihc_cutoff, fs=fs)
    out = np.empty((X.shape[0], len(cfs), X.shape[1]))
    for j, cf in enumerate(cfs):
        b, a = signal.gammatone(cf, "iir", fs=fs)
        bm = signal.lfilter(b, a, X, axis=-1)
        c = profile.c_ohc[j]
        exponent = c * p + (1.0 - c)
        gain = 10.0 ** (-(1.0 - c) * cfg.max_ohc_gain_loss / 20.0)
        comp = _compress(bm, knee, exponent, gain, p)
        ihc = profile.c_ihc[j] * np.maximum(comp, 0.0)
        out[:, j, :] = signal.lfilter(lp_b, lp_a, ihc, axis=-1)
    out *= cfg.output_scale
    return out


class SurrogateCochlea(TransformerMixin, BaseEstimator):
    """Deterministic level-compressive cochlea with hearing-loss parameters.

    Parameters
    ----------
    audiogram : str or Audiogram
        Template name (``"N0"``, ``"N3"``, ...) or an explicit audiogram.
    ohc_fraction : float
        Share of the hearing loss attributed to outer hair cells.
    n_channels, cf_min, cf_max, compression_exponent, knee_level,
    ihc_cutoff, output_scale, sample_rate
        See ``SurrogateModelConfig``.

    ``transform`` maps an (n_signals, n_samples) array to
    (n_signals, n_channels, n_samples).
    """

    def __init__(self, audiogram="N0", ohc_fraction=2.0 / 3.0, n_channels=32,
                 cf_min=125.0, cf_max=8000.0, compression_exponent=0.25,
                 knee_level=30.0, ihc_cutoff=3000.0, output_scale=1e3,
                 sample_rate=DEFAULT_SAMPLE_RATE):
        self.audiogram = audiogram
        self.ohc_fraction = ohc_fraction
        self.n_channels = n_channels
        self.cf_min = cf_min
        self.cf_max = cf_max
        self.compression_exponent = compression_exponent
        self.knee_level = knee_level
        self.ihc_cutoff = ihc_cutoff
        self.output_scale = output_scale
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.config_ = SurrogateModelConfig(
            n_channels=self.n_channels, cf_min=self.cf_min, cf_max=self.cf_max,
            compression_exponent_normal=self.compression_exponent,
            knee_level=self.knee_level, ihc_cutoff=self.ihc_cutoff,
            output_scale=self.output_scale, sample_rate=self.sample_rate,
        )
        a = self.audiogram
        if isinstance(a, str):
            a = standard_audiogram(a)
        self.cfs_ = self.config_.cfs
        self.profile_ = audiogram_to_profile(a, self.cfs_, self.ohc_fraction)
        return self

    def _ensure_fitted(self):
        if not hasattr(self, "config_"):
            self.fit()

    def transform(self, X):
        self._ensure_fitted()
        return _filterbank(self.config_, self.profile_, check_signal_batch(X))

    def forward(self, x):
        self._ensure_fitted()
        return surrogate_forward(self.config_, self.profile_, x)

    @property
    def cfs(self):
        self._ensure_fitted()
        return self.cfs_

    def digest(self):
        self._ensure_fitted()
        params = json.dumps(
            {k: (v if not isinstance(v, Audiogram) else [list(v.freqs), list(v.losses)])
             for k, v in sorted(self.get_params().items())},
            sort_keys=True,
        ).encode()
        return array_digest(self.profile_.c_ohc, self.profile_.c_ihc, self.cfs_, extra=params)


# -- precomputed corpora ----------------------------------------------------

TARGET_MAGIC = b"FMAETGT1"


def write_target(path, channels):
    """Write a J x T matrix: 16-byte header (magic, uint32 J, uint32 T) + LE float32."""
    m = np.asarray(channels)
    if m.ndim != 2:
        raise ValueError("target must be a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(TARGET_MAGIC + struct.pack("<II", *m.shape))
        fh.write(m.astype("<f4").tobytes())


def read_target(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != TARGET_MAGIC:
            raise ValueError(f"{path}: not a target file")
        J, T = struct.unpack("<II", header[8:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != J * T:
        raise ValueError(f"{path}: expected {J * T} values, found {data.size}")
    return data.reshape(J, T).astype(np.float64)


def corpus_key(x, model_digest):
    return array_digest(x.samples, extra=f"{x.sample_rate}|{model_digest}".encode())


class CorpusAdapter:
    """Serves externally precomputed model outputs, looked up by waveform content.

    The manifest is JSON::

        {"model_digest": "...", "cfs": [...], "sample_rate": 20000,
         "calibration": 1.0,
         "entries": [{"input_wav_path": "a.wav", "target_path": "a.bin",
                      "model_digest": "...", "spl": 60.0}, ...]}

    Each input is read, normalized to its ``spl`` and hashed together with
    the model digest; ``forward`` only answers for waveforms whose samples
    match one of these bit for bit.
    """

    def __init__(self, manifest_path):
        self.manifest_path = os.fspath(manifest_path)
        with open(self.manifest_path) as fh:
            manifest = json.load(fh)
        base = os.path.dirname(self.manifest_path)
        self.model_digest = manifest["model_digest"]
        self.cfs = np.asarray(manifest["cfs"], dtype=np.float64)
        self.sample_rate = int(manifest.get("sample_rate", DEFAULT_SAMPLE_RATE))
        calibration = manifest.get("calibration", 1.0)
        self._index = {}
        for entry in manifest["entries"]:
            if entry["model_digest"] != self.model_digest:
                raise ValueError(
                    f"entry {entry['input_wav_path']} was produced by another model"
                )
            x = read_wav(os.path.join(base, entry["input_wav_path"]), self.sample_rate, calibration)
            x = normalize_to_spl(x, entry["spl"])
            self._index[corpus_key(x, self.model_digest)] = os.path.join(base, entry["target_path"])

    def __len__(self):
        return len(self._index)

    def forward(self, x):
        path = self._index.get(corpus_key(x, self.model_digest))
        if path is None:
            raise NotInCorpus("waveform not present in the precomputed corpus")
        return InnerRepresentation(read_target(path), self.cfs)

    def digest(self):
        return self.model_digest


def model_forward(model, x):
    """Evaluate a surrogate model or corpus adapter on ``x``."""
    return model.forward(x)


def energy_distribution(model, corpus, grid):
    """Mean channel energy per (channel, level), divided by the smallest cell.

    Each signal is normalized to every level of ``grid`` before the forward
    pass. Returns a J x len(grid) matrix whose minimum is exactly 1.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    cells = []
    for level in grid.levels:
        e = [np.sum(model_forward(model, normalize_to_spl(x, level)).channels ** 2, axis=1)
             for x in corpus]
        cells.append(np.mean(np.stack(e), axis=0))
    energy = np.stack(cells, axis=1)
    lo = energy.min()
    if lo <= 0:
        raise SilentInput("at least one (channel, level) cell has zero energy")
    return energy / lo
