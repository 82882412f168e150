"""Acceptance criteria 1-9, each reporting one PASS/FAIL line.

Criteria 6, 8 and 9 train two full desk-scale emulators (twice for 9) and
are marked ``slow``; the trained runs are shared through a module fixture.
"""
import time

import numpy as np
import pytest

from conftest import record
from fmae_lab.audmodel import SurrogateCochlea, energy_distribution
from fmae_lab.emulator import AuditoryEmulator
from fmae_lab.evaluation import delta_ser, excitation_pattern, log_mae_curve, ser_matrix
from fmae_lab.loss import fmae, mae, normalize_target, recover_estimate
from fmae_lab.net import (
    LayerSpec,
    NetworkSpec,
    backward,
    build_connear_spec,
    build_waveunet_spec,
    empirical_receptive_field,
    forward,
    forward_with_cache,
    init_params,
    receptive_field,
)
from fmae_lab.net.gradcheck import check_network, directional_errors
from fmae_lab.signals import LevelGrid, WindowSpec, synth_speech_shaped_noise
from fmae_lab.train import TrainingConfig, compare_objectives
from fmae_lab.weights import WeightTable, estimate_weights

GRID = LevelGrid.from_range(40, 120, 10)


# -- 1. equation fidelity -------------------------------------------------------

def test_criterion_1_equation_fidelity():
    rng = np.random.default_rng(1)
    worst_ulp, exact = 0.0, True
    for i in range(1000):
        J, T = rng.integers(1, 9), rng.integers(1, 65)
        t = rng.normal(size=(J, T)) * 10.0 ** rng.uniform(-3, 3)
        p = rng.normal(size=(J, T)) * 10.0 ** rng.uniform(-3, 3)
        ones = WeightTable(GRID, np.arange(1.0, J + 1), np.ones(J), np.ones((J, len(GRID))))
        a = fmae(t, p, ones, rng.uniform(30, 130)).value
        b = mae(t, p).value
        worst_ulp = max(worst_ulp, abs(a - b) / np.spacing(b))
        beta = 10.0 ** rng.uniform(-2, 2, J)
        tb = WeightTable(GRID, np.arange(1.0, J + 1), beta, np.ones((J, len(GRID))))
        # beta is applied by multiplication and removed by division: exact for every sample
        exact &= np.array_equal(recover_estimate(normalize_target(t, tb), tb), t * beta[:, None] / beta[:, None])
        exact &= bool(np.allclose(recover_estimate(normalize_target(t, tb), tb), t, rtol=1e-15, atol=0))
    ok = worst_ulp <= 4 and exact
    record(1, ok, f"max |fmae-mae| = {worst_ulp:.1f} ulp over 1000 matrices; recover exact = {exact}")
    assert ok


# -- 2. weight identities ---------------------------------------------------------

def test_criterion_2_weight_identities():
    corpus = [synth_speech_shaped_noise(0.2, i) for i in range(4)]
    tables = [estimate_weights(SurrogateCochlea(p, n_channels=16), corpus, GRID) for p in ("N0", "N3", "N5")]
    worst_norm, worst_col, grid_exact, clamp_ok = 0.0, 0.0, True, True
    rng = np.random.default_rng(2)
    for t in tables:
        worst_norm = max(worst_norm, abs(np.mean(t.alpha[:, -1]) - 1.0))
        for i, l in enumerate(GRID.levels):
            grid_exact &= np.array_equal(t.interp(l), t.alpha[:, i])
        clamp_ok &= np.array_equal(t.interp(GRID.levels[0] - 15.0), t.alpha[:, 0])
        clamp_ok &= np.array_equal(t.interp(GRID.levels[-1] + 15.0), t.alpha[:, -1])
        for _ in range(200):
            k = rng.integers(0, len(GRID) - 1)
            ls = np.sort(GRID.levels[k] + 10 * rng.uniform(0, 1, 3))
            if ls[2] - ls[0] < 1e-3:
                continue
            y = np.stack([np.log10(t.interp(l)) for l in ls])
            line = y[0] + (y[2] - y[0]) * (ls[1] - ls[0]) / (ls[2] - ls[0])
            worst_col = max(worst_col, float(np.max(np.abs(y[1] - line))))
    ok = worst_norm <= 1e-12 and grid_exact and worst_col <= 1e-9 and clamp_ok
    record(2, ok, f"|mean alpha_lmax - 1| = {worst_norm:.1e}, collinearity {worst_col:.1e}, "
                  f"grid exact = {grid_exact}, clamping = {clamp_ok}")
    assert ok


# -- 3. gradient correctness ------------------------------------------------------

def _gradient_specs():
    yield "connear", build_connear_spec(3, n_blocks=2, kernel=3, depth=4)
    yield "waveunet", build_waveunet_spec(3, n_blocks=2, kernel=3, depth=4)
    enc = (LayerSpec("decim_conv", 4, 1, 3, 2, "prelu", bias=True),
           LayerSpec("strided_conv", 3, 3, 3, 2, "tanh"))
    dec = (LayerSpec("transposed_conv", 4, 3, 3, 2, "prelu", bias=True),
           LayerSpec("interp_conv", 3, 6, 3, 2, "tanh"))
    yield "mixed", NetworkSpec(enc, dec, LayerSpec("plain_conv", 3, 4, 2, 1, "linear", bias=True),
                               None, True, "mixed")
    dec_emb = (LayerSpec("transposed_conv", 4, 6, 3, 2, "prelu", bias=True),
               LayerSpec("interp_conv", 3, 6, 3, 2, "linear"))
    yield "mixed-emb", NetworkSpec(enc, dec_emb, LayerSpec("plain_conv", 1, 4, 2, 1, "tanh"),
                                   LayerSpec("plain_conv", 2, 3, 3, 1, "prelu"), True, "mixed-emb")
    yield "connear-noskip", build_connear_spec(3, n_blocks=3, kernel=5, depth=3, skips=False)


def _fmae_pipeline_error(spec, seed):
    """Worst FD error of the FMAE loss through the network, per-item levels."""
    rng = np.random.default_rng(seed)
    J = spec.out_channels
    p = init_params(spec, seed)
    x = rng.normal(size=(3, 32))
    ctx = (4, 4)
    target = rng.normal(size=(3, J, 24))
    beta = 10.0 ** rng.uniform(0, 1, J)
    bb = 10.0 ** rng.uniform(-1, 1, (J, len(GRID)))
    alpha = bb * len(bb) / bb[:, -1].sum()
    table = WeightTable(GRID, np.arange(1.0, J + 1), beta, alpha)
    levels = rng.uniform(35, 125, 3)
    out, cache = forward_with_cache(spec, p, x, ctx)
    grads = backward(spec, p, cache, fmae(target, out, table, levels).gradient)
    errs = directional_errors(lambda q: fmae(target, forward(spec, q, x, ctx), table, levels).value,
                              p, grads, seed=seed)
    return float(errs.max())


def test_criterion_3_gradients():
    t0 = time.time()
    errors = {}
    for i, (name, spec) in enumerate(_gradient_specs()):
        p = init_params(spec, i + 1)
        x = np.random.default_rng(i).normal(size=(2, 32))
        errors[name] = check_network(spec, p, x, (4, 4), seed=i)
        errors[name + "+fmae"] = _fmae_pipeline_error(spec, 100 + i)
    dt = time.time() - t0
    worst = max(errors.values())
    ok = worst < 1e-5 and len(errors) >= 5 and dt < 120
    record(3, ok, f"worst relative error {worst:.2e} over {len(errors)} configurations, {dt:.0f}s")
    assert ok, errors


# -- 4. receptive field -----------------------------------------------------------

def test_criterion_4_receptive_field():
    t0 = time.time()
    got = {}
    for name, spec in (("connear", build_connear_spec(4, depth=4)),
                       ("waveunet", build_waveunet_spec(4, depth=4))):
        span, _ = empirical_receptive_field(spec, init_params(spec, 0))
        got[name] = (span, receptive_field(spec))
    dt = time.time() - t0
    ok = got["connear"] == (946, 946) and got["waveunet"] == (1261, 1261) and dt < 60
    record(4, ok, f"empirical/formula RF connear {got['connear']}, waveunet {got['waveunet']}, {dt:.0f}s")
    assert ok


# -- 5. energy skew ----------------------------------------------------------------

def _energy_map():
    m = SurrogateCochlea("N3", n_channels=16)
    corpus = [synth_speech_shaped_noise(0.5, 500 + i) for i in range(4)]
    return energy_distribution(m, corpus, GRID)


def test_criterion_5_energy_skew():
    t0 = time.time()
    e = _energy_map()
    dt = time.time() - t0
    ratio = e.max() / e.min()
    monotone = bool(np.all(np.diff(e, axis=1) > 0))
    ok = ratio >= 1e6 and monotone and dt < 120
    record(5, ok, f"max/min energy ratio {ratio:.2e}, monotone in level = {monotone}, {dt:.0f}s")
    assert ok


# -- 6-9. desk-scale training ------------------------------------------------------
# Frozen configuration; thresholds were checked against this exact seeded run
# before being fixed (see the decisions ledger for the calibration numbers).
PROFILE = "N5"
J = 16
N_SEGMENTS = 2000
EPOCHS = 30
WINDOW = WindowSpec(1024, 128, 128)
TRAIN_SECONDS = 1.0
N_TEST = 6
TONE_FREQS = (500.0, 1000.0, 2000.0, 4000.0)
TONE_LEVELS = tuple(float(l) for l in range(40, 101, 10))


def _headline(seed=0):
    """Train both objectives on identical data and evaluate; returns every reported number."""
    t0 = time.time()
    model = SurrogateCochlea(PROFILE, n_channels=J)
    per = int(TRAIN_SECONDS * 20000) // WINDOW.window_len
    corpus = [synth_speech_shaped_noise(TRAIN_SECONDS, 1000 + i) for i in range(-(-N_SEGMENTS // per))]
    test = [synth_speech_shaped_noise(TRAIN_SECONDS, 900000 + i) for i in range(N_TEST)]
    table = estimate_weights(model, corpus[:50], GRID, seed=seed)
    spec = build_waveunet_spec(J, n_blocks=4, kernel=21, depth=16)
    base = dict(epochs=EPOCHS, batch_size=16, lr=1e-3, seed=seed, window=WINDOW, grid=GRID,
                n_segments=N_SEGMENTS, dtype="float32")
    runs = compare_objectives(model, corpus, spec,
                              (TrainingConfig("mae", **base), TrainingConfig("fmae", **base)), table)
    out = {"model": model, "table": table, "loss": {}, "ser": {}, "ge": {}, "emulators": {}}
    for run in runs:
        name = run.config.objective
        emu = AuditoryEmulator(model).set_run(run)
        out["emulators"][name] = emu
        out["loss"][name] = run.loss_curve
        out["ser"][name] = ser_matrix(model, emu, test, GRID, train_corpus=corpus)
        out["ge"][name] = log_mae_curve(model, emu, test, GRID).ge
    out["seconds"] = time.time() - t0
    return out


@pytest.fixture(scope="module")
def headline():
    return _headline()


@pytest.mark.slow
def test_criterion_6_headline_trend(headline):
    s_mae, s_fmae = headline["ser"]["mae"], headline["ser"]["fmae"]
    d, mean_d = delta_ser(s_fmae, s_mae)
    lvl = list(GRID.levels)
    i40, i120 = lvl.index(40.0), lvl.index(120.0)
    gain40 = s_fmae.mean_per_level()[i40] - s_mae.mean_per_level()[i40]
    d40, d120 = np.nanmean(d[:, i40]), np.nanmean(d[:, i120])
    a = gain40 >= 5.0
    b = d40 > d120
    c = s_fmae.worst() > s_mae.worst()
    fast = headline["seconds"] <= 30 * 60
    ok = a and b and c and fast
    record(6, ok, f"(a) 40 dB gain {gain40:.2f} dB, (b) dSER 40 dB {d40:.2f} vs 120 dB {d120:.2f}, "
                  f"(c) worst SER fmae {s_fmae.worst():.2f} vs mae {s_mae.worst():.2f}, "
                  f"mean dSER {mean_d:.2f} dB, {headline['seconds'] / 60:.1f} min")
    assert a, "FMAE does not gain 5 dB at 40 dB"
    assert b, "benefit does not shrink from 40 to 120 dB"
    assert c, "FMAE worst case is not better"
    assert fast


@pytest.mark.slow
def test_criterion_7_ge_reported_not_asserted(headline):
    ge = headline["ge"]
    record(7, True, f"GE mae {ge['mae']:.4g}, fmae {ge['fmae']:.4g} "
                    f"({'fmae larger' if ge['fmae'] > ge['mae'] else 'fmae not larger'}; ordering not asserted)")


def _nearest_cfs(cfs, f):
    d = np.abs(np.log(cfs / f))
    return set(np.flatnonzero(d <= d.min() * (1 + 1e-6) + 1e-12).tolist())


@pytest.mark.slow
def test_criterion_8_excitation_patterns(headline):
    t0 = time.time()
    model = headline["model"]
    ref_ok, hits = True, {"mae": 0, "fmae": 0}
    cells = 0
    for f in TONE_FREQS:
        near = _nearest_cfs(model.cfs, f)
        for l in TONE_LEVELS:
            peak = excitation_pattern(model, f, l).peak_channel
            ref_ok &= peak in near
            cells += 1
            for name, emu in headline["emulators"].items():
                hits[name] += excitation_pattern(emu, f, l).peak_channel == peak
    dt = time.time() - t0
    frac = {k: v / cells for k, v in hits.items()}
    ok = ref_ok and frac["fmae"] >= 0.8 and dt < 300
    record(8, ok, f"reference at nearest CF = {ref_ok}; argmax agreement fmae {frac['fmae']:.0%}, "
                  f"mae {frac['mae']:.0%} (recorded only), {dt:.0f}s")
    assert ref_ok and frac["fmae"] >= 0.8 and dt < 300


@pytest.mark.slow
def test_criterion_9_determinism(headline):
    again = _headline()
    e1, e2 = _energy_map(), _energy_map()
    same = np.array_equal(e1, e2)
    for name in ("mae", "fmae"):
        same &= headline["loss"][name] == again["loss"][name]
        same &= np.array_equal(headline["ser"][name].values, again["ser"][name].values)
        same &= headline["ge"][name] == again["ge"][name]
        same &= all(np.array_equal(a, b) for a, b in zip(headline["emulators"][name].params_.tensors,
                                                          again["emulators"][name].params_.tensors))
    same &= np.array_equal(headline["table"].alpha, again["table"].alpha)
    record(9, bool(same), "energy map, weights, loss curves, parameters, SER and GE "
                          + ("bit-identical on repeat" if same else "differ on repeat"))
    assert same
