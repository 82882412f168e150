"""Waveforms, sound-pressure levels, synthetic corpora and windowing.

Levels follow the L2-norm convention used throughout the package: a signal
``x`` is at level ``l`` dB SPL when ``||x||_2 == P_REF * 10**(l / 20)``.
This is *not* an RMS level; a longer signal at the same level has a smaller
per-sample amplitude.
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from ._validation import array_digest, check_signal
from .exceptions import InputTooShort, SilentInput, UnsupportedAudio

P_REF = 20e-6  # Pa
DEFAULT_SAMPLE_RATE = 20000


@dataclass(eq=False)
class Waveform:
    """Sampled pressure signal in Pa."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = check_signal(self.samples, "samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate

    def digest(self):
        return array_digest(self.samples, extra=str(self.sample_rate).encode())


@dataclass(frozen=True)
class LevelGrid:
    """Uniform grid of presentation levels in dB SPL."""

    levels: Tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ValueError("a level grid needs at least one level")
        steps = np.diff(levels)
        if np.any(steps <= 0):
            raise ValueError("levels must be strictly increasing")
        if len(steps) and not np.allclose(steps, steps[0]):
            raise ValueError("levels must be uniformly spaced")

    @classmethod
    def from_range(cls, lo=40.0, hi=120.0, step=10.0):
        n = int(round((hi - lo) / step)) + 1
        return cls(tuple(lo + step * i for i in range(n)))

    @property
    def step(self):
        return self.levels[1] - self.levels[0] if len(self.levels) > 1 else 0.0

    @property
    def l_min(self):
        return self.levels[0]

    @property
    def l_max(self):
        return self.levels[-1]

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 2048
    left_context: int = 256
    right_context: int = 256

    def __post_init__(self):
        if self.window_len < 1 or self.left_context < 0 or self.right_context < 0:
            raise ValueError(f"invalid window spec {self}")

    @property
    def segment_len(self):
        return self.left_context + self.window_len + self.right_context


def _as_waveform(x, sample_rate=DEFAULT_SAMPLE_RATE):
    return x if isinstance(x, Waveform) else Waveform(np.asarray(x, dtype=np.float64), sample_rate)


def spl_to_norm(level):
    """L2 norm in Pa of a signal at ``level`` dB SPL."""
    return P_REF * 10.0 ** (level / 20.0)


def measure_spl(x):
    """Level of ``x`` in dB SPL, ``20 log10(||x||_2 / P_REF)``."""
    samples = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(samples)
    if norm == 0:
        raise SilentInput("cannot measure the level of an all-zero signal")
    return 20.0 * np.log10(norm / P_REF)


def normalize_to_spl(x, level):
    """Scale ``x`` so that its L2 norm corresponds to ``level`` dB SPL."""
    x = _as_waveform(x)
    if not np.isfinite(level):
        raise SilentInput(f"level must be finite, got {level}")
    norm = np.linalg.norm(x.samples)
    if norm == 0:
        raise SilentInput("cannot normalize an all-zero signal")
    target = spl_to_norm(level)
    if norm == target:
        return Waveform(x.samples.copy(), x.sample_rate)
    return Waveform(x.samples * (target / norm), x.sample_rate)


def segment_spl(core, reference_length=None):
    """Effective level of a window taken out of a longer signal.

    With ``reference_length`` set, the window's norm is rescaled by
    ``sqrt(reference_length / len(core))`` so that a window of a stationary
    signal reports the level of the signal it was cut from.
    """
    core = np.asarray(core, dtype=np.float64)
    level = measure_spl(core)
    if reference_length is not None:
        level += 10.0 * np.log10(reference_length / core.shape[0])
    return level


def speech_shaping(freqs, corner=500.0, floor=20.0):
    """Amplitude shaping of the speech-shaped noise.

    Octave-band power is flat below ``corner`` and falls 6 dB per octave
    above it, i.e. PSD ~ 1/f below and ~ 1/f**3 above the corner. The
    shaping is held constant below ``floor`` Hz.
    """
    f = np.maximum(np.asarray(freqs, dtype=np.float64), floor)
    psd = np.where(f <= corner, corner / f, (corner / f) ** 3)
    return np.sqrt(psd)


def synth_speech_shaped_noise(duration, seed, sample_rate=DEFAULT_SAMPLE_RATE, syllabic_rate=None,
                              crossover=1000.0):
    """Gaussian noise with a speech-like long-term spectrum (see ``speech_shaping``).

    Parameters
    ----------
    syllabic_rate : float, optional
        If given (Hz), the bands below and above ``crossover`` are
        cross-faded by a slowly varying random weight with this bandwidth,
        so that low- and high-frequency dominated stretches alternate the
        way voiced sounds and fricatives do. The weight is symmetric about
        one half, which leaves the expected long-term spectrum unchanged.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum *= speech_shaping(freqs)
    spectrum[0] = 0.0
    if syllabic_rate is None:
        return Waveform(np.fft.irfft(spectrum, n), sample_rate)
    if syllabic_rate <= 0 or not 0 < crossover < sample_rate / 2:
        raise ValueError("syllabic_rate must be positive and crossover below Nyquist")
    low = np.fft.irfft(np.where(freqs < crossover, spectrum, 0.0), n)
    high = np.fft.irfft(np.where(freqs >= crossover, spectrum, 0.0), n)
    z = np.fft.rfft(rng.standard_normal(n))
    z[freqs > syllabic_rate] = 0.0
    z = np.fft.irfft(z, n)
    z /= np.std(z) if np.std(z) > 0 else 1.0
    w = 0.5 + 0.5 * np.tanh(2.0 * z)
    # mean-square gain of each band is 2 * E[w] = 1
    return Waveform(np.sqrt(2.0) * (np.sqrt(1.0 - w) * low + np.sqrt(w) * high), sample_rate)


def build_level_dataset(corpus, grid, seed):
    """Assign each signal a level drawn uniformly from ``grid`` and normalize it.

    Returns a list of ``(Waveform, level)`` pairs in corpus order.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(grid.levels), size=len(corpus))
    out = []
    for x, i in zip(corpus, idx):
        level = grid.levels[i]
        out.append((normalize_to_spl(x, level), level))
    return out


def window_with_context(x, spec):
    """Cut ``x`` into non-overlapping core windows padded with context.

    Returns ``[(segment, (start, stop)), ...]`` where ``segment`` holds
    ``left_context + window_len + right_context`` samples (zero outside the
    signal) and ``(start, stop)`` is the core range in source coordinates.
    Trailing samples that do not fill a window are dropped.
    """
    x = _as_waveform(x)
    n = len(x)
    w = spec.window_len
    if n < w:
        raise InputTooShort(f"signal has {n} samples, window needs {w}")
    padded = np.concatenate([np.zeros(spec.left_context), x.samples, np.zeros(spec.right_context)])
    out = []
    for start in range(0, n - w + 1, w):
        seg = padded[start:start + spec.segment_len]
        out.append((Waveform(seg.copy(), x.sample_rate), (start, start + w)))
    return out


# -- WAV ingestion ---------------------------------------------------------

def read_wav(path, sample_rate=DEFAULT_SAMPLE_RATE, calibration=1.0):
    """Read a mono WAV file into a Waveform in Pa.

    16-bit integer PCM is mapped to [-1, 1) first, 32-bit float is taken as
    is; both are then multiplied by ``calibration`` (Pa at digital full
    scale). Files at another rate are resampled with ``resample_poly``
    (polyphase FIR, Kaiser-windowed sinc with beta=5.0).
    """
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise UnsupportedAudio(f"{path}: {data.shape[1]} channels, only mono is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudio(f"{path}: unsupported sample format {data.dtype}")
    samples = samples * calibration
    if rate != sample_rate:
        samples = resample(samples, rate, sample_rate)
    return Waveform(samples, sample_rate)


def resample(samples, rate_in, rate_out):
    ratio = Fraction(int(rate_out), int(rate_in))
    return resample_poly(samples, ratio.numerator, ratio.denominator, window=("kaiser", 5.0))


def write_wav(path, x, calibration=1.0):
    """Write a Waveform as 32-bit float WAV (values divided by ``calibration``)."""
    wavfile.write(path, x.sample_rate, (x.samples / calibration).astype(np.float32))
