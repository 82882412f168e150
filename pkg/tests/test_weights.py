import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fmae_lab.audmodel import InnerRepresentation, SurrogateCochlea
from fmae_lab.exceptions import DegenerateChannel, EmptyLevelSet, NonPositiveEntry
from fmae_lab.signals import LevelGrid, Waveform, synth_speech_shaped_noise
from fmae_lab.weights import (
    WeightEstimator,
    WeightTable,
    estimate_alpha,
    estimate_beta,
    estimate_beta_bar,
    estimate_weights,
    interp_alpha,
)


class Fixed:
    """Model returning a stored matrix per input (keyed by the first sample)."""

    def __init__(self, outputs):
        self.outputs = outputs

    def forward(self, x):
        out = self.outputs[float(x.samples[0])]
        return InnerRepresentation(out, np.arange(1.0, 1 + len(out)))


class Identity:
    def __init__(self, J=3):
        self.cfs = np.arange(1.0, J + 1)

    def forward(self, x):
        return InnerRepresentation(np.repeat(x.samples[None], len(self.cfs), axis=0), self.cfs)


def _w(v):
    return Waveform(np.array([v, 0.0]), 20000)


def test_beta_bar_examples():
    m = Fixed({1.0: np.array([[4.0]]), 2.0: np.array([[2.0]])})
    assert estimate_beta_bar(m, {60: [_w(1.0)]})[0, 0] == 0.25
    assert estimate_beta_bar(m, {60: [_w(2.0), _w(1.0)]})[0, 0] == 0.375
    m10 = Fixed({1.0: np.array([[40.0]]), 2.0: np.array([[20.0]])})
    assert estimate_beta_bar(m10, {60: [_w(2.0), _w(1.0)]})[0, 0] == pytest.approx(0.0375, rel=1e-15)


def test_beta_bar_errors():
    m = Fixed({1.0: np.array([[0.0], [1.0]])})
    with pytest.raises(EmptyLevelSet):
        estimate_beta_bar(m, {60: []})
    with pytest.raises(DegenerateChannel):
        estimate_beta_bar(m, {60: [_w(1.0)]})


def test_beta_examples():
    bb = np.array([[0.1, 0.1], [1.0, 1.0]])
    np.testing.assert_allclose(estimate_beta(bb), [1.0, 10.0], rtol=1e-15)
    assert np.all(estimate_beta(np.full((4, 3), 0.3)) == 1.0)
    assert np.array_equal(estimate_beta(np.array([[0.2, 5.0, 1.0]])), [1.0])
    with pytest.raises(NonPositiveEntry):
        estimate_beta(np.array([[0.0, 1.0]]))


def test_alpha_examples():
    bb = np.array([[0.1, 0.1], [1.0, 1.0]])
    np.testing.assert_allclose(estimate_alpha(estimate_beta(bb), bb), np.ones((2, 2)), rtol=1e-15)
    bb = np.array([[100.0, 1.0]])  # ||f||_1 = 0.01 at l_min and 1 at l_max
    np.testing.assert_allclose(estimate_alpha(estimate_beta(bb), bb), [[100.0, 1.0]], rtol=1e-15)


def _table(alpha, levels, beta=None):
    alpha = np.asarray(alpha, dtype=float)
    J = alpha.shape[0]
    return WeightTable(LevelGrid(tuple(levels)), np.arange(1.0, J + 1),
                       np.ones(J) if beta is None else beta, alpha)


def test_interp_examples():
    t = _table([[100.0, 1.0]], (40.0, 50.0))
    assert interp_alpha(t, 0, 45.0) == pytest.approx(10.0, rel=1e-14)
    assert interp_alpha(t, 0, 40.0) == 100.0
    assert interp_alpha(t, 0, 30.0) == 100.0
    assert interp_alpha(t, 0, 60.0) == 1.0


def test_table_rejects_bad_normalization_and_entries():
    with pytest.raises(ValueError):
        _table([[2.0, 2.0]], (40.0, 50.0))
    with pytest.raises(NonPositiveEntry):
        _table([[0.0, 1.0]], (40.0, 50.0))


def test_identity_model_weights():
    grid = LevelGrid.from_range(40, 120, 10)
    corpus = [synth_speech_shaped_noise(0.02, i) for i in range(3)]
    t = estimate_weights(Identity(3), corpus, grid)
    np.testing.assert_allclose(t.beta, 1.0, rtol=1e-12)
    expected = 10 ** ((120 - np.asarray(grid.levels)) / 20)
    for j in range(3):
        np.testing.assert_allclose(t.alpha[j], expected, rtol=1e-9)


def test_single_level_grid_weights():
    t = estimate_weights(Identity(2), [synth_speech_shaped_noise(0.02, 0)], LevelGrid((60.0,)))
    assert t.alpha.shape == (2, 1)
    np.testing.assert_allclose(t.alpha, 1.0, rtol=1e-15)


def test_estimation_deterministic_and_round_trip(tmp_path):
    m = SurrogateCochlea("N3", n_channels=8)
    corpus = [synth_speech_shaped_noise(0.1, i) for i in range(4)]
    grid = LevelGrid.from_range(40, 120, 20)
    a = estimate_weights(m, corpus, grid, seed=1, n_per_level=2)
    b = estimate_weights(m, corpus, grid, seed=1, n_per_level=2)
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.beta, b.beta)
    a.save(tmp_path / "w.json")
    c = WeightTable.load(tmp_path / "w.json")
    assert np.array_equal(c.alpha, a.alpha) and np.array_equal(c.beta, a.beta)
    assert c.model_digest == m.digest()


def test_surrogate_weights_properties():
    m = SurrogateCochlea("N3", n_channels=8)
    corpus = [synth_speech_shaped_noise(0.1, i) for i in range(3)]
    t = estimate_weights(m, corpus, LevelGrid.from_range())
    assert abs(np.mean(t.alpha[:, -1]) - 1.0) <= 1e-12
    # channel norms grow with level, so alpha falls with level
    assert np.all(np.diff(t.alpha, axis=1) <= 0)
    assert np.all(t.beta >= 1.0)


def test_weight_estimator_wraps_function():
    m = SurrogateCochlea("N0", n_channels=4)
    corpus = [synth_speech_shaped_noise(0.05, i) for i in range(2)]
    est = WeightEstimator(m, levels=(40, 80, 120)).fit(corpus)
    ref = estimate_weights(m, corpus, LevelGrid((40.0, 80.0, 120.0)))
    assert np.array_equal(est.alpha_, ref.alpha)
    assert np.array_equal(est.interp(80.0), ref.alpha[:, 1])
    assert est.get_params()["levels"] == (40, 80, 120)


pos = st.floats(1e-3, 1e3)


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)), elements=pos),
       st.floats(1e-3, 1e3))
def test_weight_identities(bb, k):
    beta = estimate_beta(bb)
    alpha = estimate_alpha(beta, bb)
    levels = tuple(40.0 + 10 * i for i in range(bb.shape[1]))
    t = WeightTable(LevelGrid(levels), np.arange(1.0, bb.shape[0] + 1), beta, alpha)
    assert abs(np.mean(alpha[:, -1]) - 1.0) <= 1e-12
    for i, l in enumerate(levels):
        assert np.array_equal(t.interp(l), alpha[:, i])
    # scale cancellation: beta_bar / k leaves beta and alpha unchanged
    np.testing.assert_allclose(estimate_beta(bb / k), beta, rtol=1e-12)
    np.testing.assert_allclose(estimate_alpha(estimate_beta(bb / k), bb / k), alpha, rtol=1e-12)


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, (3, 4), elements=pos), st.integers(0, 2), st.floats(0.01, 0.99),
       st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_log_linearity(bb, seg, u1, u2, u3):
    beta = estimate_beta(bb)
    t = WeightTable(LevelGrid((40.0, 50.0, 60.0, 70.0)), np.arange(1.0, 4), beta,
                    estimate_alpha(beta, bb))
    lo = 40.0 + 10 * seg
    ls = sorted(lo + 10 * u for u in (u1, u2, u3))
    if ls[2] - ls[0] < 1e-6:
        return
    y = [np.log10(t.interp(l)) for l in ls]
    slope = (y[2] - y[0]) / (ls[2] - ls[0])
    np.testing.assert_allclose(y[1], y[0] + slope * (ls[1] - ls[0]), atol=1e-9, rtol=0)
