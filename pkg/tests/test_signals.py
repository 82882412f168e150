import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal as sps
from scipy.io import wavfile

from fmae_lab.exceptions import InputTooShort, SilentInput, UnsupportedAudio
from fmae_lab.signals import (
    P_REF,
    LevelGrid,
    Waveform,
    WindowSpec,
    build_level_dataset,
    measure_spl,
    normalize_to_spl,
    read_wav,
    segment_spl,
    synth_speech_shaped_noise,
    window_with_context,
    write_wav,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
signals = arrays(np.float64, st.integers(1, 300), elements=finite).filter(
    lambda a: np.linalg.norm(a) > 1e-6
)


def test_normalize_94db_is_about_one_pascal():
    y = normalize_to_spl(np.ones(100), 94.0)
    assert np.linalg.norm(y.samples) == pytest.approx(20e-6 * 10 ** (94 / 20), rel=1e-12)
    assert np.linalg.norm(y.samples) == pytest.approx(1.0024, abs=1e-4)


def test_normalize_identity_when_already_at_level():
    x = Waveform(np.array([P_REF * 10 ** 3, 0.0, 0.0]), 20000)
    assert np.linalg.norm(x.samples) == P_REF * 10 ** (60 / 20)
    y = normalize_to_spl(x, 60.0)
    assert np.array_equal(y.samples, x.samples)


def test_normalize_scale_invariant():
    x = synth_speech_shaped_noise(0.05, 3)
    a = normalize_to_spl(x, 70.0).samples
    b = normalize_to_spl(Waveform(7 * x.samples, x.sample_rate), 70.0).samples
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)


def test_measure_spl_reference_points():
    assert measure_spl(np.array([P_REF])) == pytest.approx(0.0, abs=1e-12)
    assert measure_spl(np.array([0.0, 10 * P_REF])) == pytest.approx(20.0, abs=1e-12)
    y = normalize_to_spl(synth_speech_shaped_noise(0.1, 1), 60.0)
    assert measure_spl(y) == pytest.approx(60.0, abs=1e-9)


def test_silent_input_rejected():
    with pytest.raises(SilentInput):
        measure_spl(np.zeros(10))
    with pytest.raises(SilentInput):
        normalize_to_spl(np.zeros(10), 60)
    with pytest.raises(SilentInput):
        normalize_to_spl(np.ones(10), -np.inf)


@settings(max_examples=60, deadline=None)
@given(signals, st.floats(-20, 140))
def test_level_round_trip(x, level):
    assert abs(measure_spl(normalize_to_spl(x, level)) - level) < 1e-9


def test_noise_determinism():
    a = synth_speech_shaped_noise(0.2, 11)
    b = synth_speech_shaped_noise(0.2, 11)
    c = synth_speech_shaped_noise(0.2, 12)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def _octave_power(x, fs, fc):
    f, p = sps.welch(x, fs, nperseg=4096)
    band = (f >= fc / np.sqrt(2)) & (f < fc * np.sqrt(2))
    return np.sum(p[band])


def test_octave_band_tilt_six_db():
    # independent PSD estimate (Welch) over 10 s of noise
    x = synth_speech_shaped_noise(10.0, 5).samples
    ratio = 10 * np.log10(_octave_power(x, 20000, 1000) / _octave_power(x, 20000, 2000))
    assert ratio == pytest.approx(6.0, abs=1.0)
    low = 10 * np.log10(_octave_power(x, 20000, 125) / _octave_power(x, 20000, 250))
    assert abs(low) < 1.0


def _band_balance(x, fs=20000, frame=2000):
    """Per-frame dB ratio of energy above and below 1 kHz."""
    out = []
    for k in range(len(x) // frame):
        s = np.abs(np.fft.rfft(x[k * frame:(k + 1) * frame])) ** 2
        f = np.fft.rfftfreq(frame, 1 / fs)
        out.append(10 * np.log10(s[f >= 1000].sum() / s[f < 1000].sum()))
    return np.array(out)


def test_syllabic_noise_keeps_long_term_tilt_and_alternates():
    x = synth_speech_shaped_noise(10.0, 5, syllabic_rate=4.0).samples
    ratio = 10 * np.log10(_octave_power(x, 20000, 1000) / _octave_power(x, 20000, 2000))
    assert ratio == pytest.approx(6.0, abs=1.0)
    # short-term band balance swings far more than for stationary noise
    still = _band_balance(synth_speech_shaped_noise(10.0, 5).samples)
    moving = _band_balance(x)
    assert still.std() < 2.0 and moving.std() > 5.0
    assert np.array_equal(x, synth_speech_shaped_noise(10.0, 5, syllabic_rate=4.0).samples)
    with pytest.raises(ValueError):
        synth_speech_shaped_noise(1.0, 0, syllabic_rate=0.0)
    with pytest.raises(ValueError):
        synth_speech_shaped_noise(1.0, 0, syllabic_rate=4.0, crossover=10000.0)


def test_level_dataset_single_level():
    corpus = [synth_speech_shaped_noise(0.05, i) for i in range(3)]
    out = build_level_dataset(corpus, LevelGrid((60.0,)), 0)
    assert [l for _, l in out] == [60.0] * 3
    for w, _ in out:
        assert measure_spl(w) == pytest.approx(60.0, abs=1e-9)


def test_level_dataset_counts_are_multinomial():
    grid = LevelGrid.from_range(40, 120, 10)
    corpus = [np.ones(4)] * 900
    levels = [l for _, l in build_level_dataset(corpus, grid, 123)]
    counts = np.array([levels.count(l) for l in grid.levels])
    sigma = np.sqrt(900 * (1 / 9) * (8 / 9))
    assert np.all(np.abs(counts - 100) <= 3 * sigma)
    again = [l for _, l in build_level_dataset(corpus, grid, 123)]
    assert levels == again


def test_level_grid_validation():
    assert LevelGrid.from_range(40, 120, 10).levels[-1] == 120
    with pytest.raises(ValueError):
        LevelGrid((50.0, 40.0))
    with pytest.raises(ValueError):
        LevelGrid(())


def test_window_examples():
    x = np.arange(1, 4097, dtype=float)
    segs = window_with_context(x, WindowSpec(2048, 0, 0))
    assert len(segs) == 2 and all(len(s) == 2048 for s, _ in segs)

    segs = window_with_context(np.ones(2048), WindowSpec(2048, 256, 256))
    assert len(segs) == 1
    s = segs[0][0].samples
    assert len(s) == 2560
    assert np.all(s[:256] == 0) and np.all(s[-256:] == 0) and np.all(s[256:-256] == 1)

    assert len(window_with_context(np.ones(2049), WindowSpec(2048, 0, 0))) == 1
    with pytest.raises(InputTooShort):
        window_with_context(np.ones(100), WindowSpec(2048, 0, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(16, 400), st.integers(1, 64), st.integers(0, 40), st.integers(0, 40))
def test_windows_concatenate_to_prefix(n, w, left, right):
    if n < w:
        return
    x = np.arange(1, n + 1, dtype=float)
    segs = window_with_context(x, WindowSpec(w, left, right))
    cores = np.concatenate([s.samples[left:left + w] for s, _ in segs])
    assert np.array_equal(cores, x[:len(cores)])
    assert len(x) - len(cores) < w
    for s, (a, b) in segs:
        assert np.array_equal(s.samples[left:left + w], x[a:b])


def test_segment_level_length_compensation():
    x = normalize_to_spl(synth_speech_shaped_noise(1.0, 2), 70.0)
    core = x.samples[4096:6144]
    # without compensation a short window of a stationary signal reads low
    assert segment_spl(core) < 70 - 9
    assert segment_spl(core, len(x)) == pytest.approx(70.0, abs=1.5)


def test_wav_round_trip(tmp_path):
    x = normalize_to_spl(synth_speech_shaped_noise(0.05, 0), 60)
    p = tmp_path / "a.wav"
    write_wav(p, x)
    y = read_wav(p)
    np.testing.assert_allclose(y.samples, x.samples.astype(np.float32), rtol=0, atol=0)


def test_wav_int16_and_calibration(tmp_path):
    p = tmp_path / "b.wav"
    wavfile.write(p, 20000, np.array([16384, -16384, 0], dtype=np.int16))
    y = read_wav(p, calibration=2.0)
    np.testing.assert_array_equal(y.samples, [1.0, -1.0, 0.0])


def test_wav_stereo_and_format_rejected(tmp_path):
    p = tmp_path / "s.wav"
    wavfile.write(p, 20000, np.zeros((10, 2), dtype=np.int16))
    with pytest.raises(UnsupportedAudio):
        read_wav(p)
    q = tmp_path / "i32.wav"
    wavfile.write(q, 20000, np.zeros(10, dtype=np.int32))
    with pytest.raises(UnsupportedAudio):
        read_wav(q)


def test_wav_resampled_to_model_rate(tmp_path):
    p = tmp_path / "r.wav"
    t = np.arange(16000) / 16000
    wavfile.write(p, 16000, np.sin(2 * np.pi * 440 * t).astype(np.float32))
    y = read_wav(p, sample_rate=20000)
    assert y.sample_rate == 20000 and len(y) == 20000
    ref = np.sin(2 * np.pi * 440 * np.arange(20000) / 20000)
    assert np.max(np.abs(y.samples[200:-200] - ref[200:-200])) < 1e-3
