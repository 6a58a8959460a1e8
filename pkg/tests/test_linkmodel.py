import numpy as np
import pytest

from sicdd.linkmodel import (LinkConfig, ToeplitzOperator, TapSet, cd_transfer, derive_taps,
                             make_frame, noise_free_output, rc_pulse, rc_spectrum, simulate_link,
                             spectral_efficiency, tx_power, unit_power, upsample_state,
                             default_alphabet, TruncationWarning)
from sicdd.modem import build_alphabet


def test_toeplitz_matches_dense(rng):
    psi = rng.normal(size=7) + 1j * rng.normal(size=7)
    op = ToeplitzOperator(psi, 6)
    xt = rng.normal(size=op.shape[1]) + 1j * rng.normal(size=op.shape[1])
    assert op.shape == (12, 18)
    assert np.allclose(op.apply(xt), op.dense() @ xt, atol=1e-12)
    with pytest.raises(ValueError):
        op.apply(xt[:-1])


def test_upsample_layout():
    xt = upsample_state([1, 2], [3])
    assert np.array_equal(xt, [0, 1, 0, 2, 0, 3])


def test_global_phase_invariance(rng):
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    x = rng.normal(size=8) + 0j
    s0 = rng.normal(size=2) + 0j
    z = noise_free_output(s0, x, psi)
    assert np.allclose(noise_free_output(-s0, -x, psi), z)
    assert np.allclose(noise_free_output(1j * s0, 1j * x, psi), z)


def test_pulse_unit_energy():
    for a in (0.0, 0.2, 1.0):
        f = np.linspace(-1, 1, 200001)
        G = rc_spectrum(a, f)
        assert abs(np.trapezoid(G ** 2, f) - 1) < 1e-4
    t = np.linspace(-2000, 2000, 2 ** 21)
    g = rc_pulse(0.2, 1.0, t)
    assert abs(np.trapezoid(g ** 2, t) - 1) < 1e-3
    # the removable singularity is finite and continuous
    ts = 1 / (2 * 0.2)
    assert np.isclose(rc_pulse(0.2, 1, ts), rc_pulse(0.2, 1, ts + 1e-7), rtol=1e-4)


def test_cd_allpass():
    f = np.linspace(-50e9, 50e9, 101)
    H = cd_transfer(f, -2.168e-23, 30)
    assert np.allclose(np.abs(H), 1)
    assert np.allclose(cd_transfer(f, -2.168e-23, 0), 1)


def test_default_taps_energy():
    ts = derive_taps(LinkConfig())
    assert ts.K == 203
    assert ts.energy_fraction >= 0.9998


def test_short_taps_warn():
    with pytest.warns(TruncationWarning):
        derive_taps(LinkConfig(taps_half=2))


def test_back_to_back_sinc_taps():
    ts = derive_taps(LinkConfig(alpha=0.0, L=0.0, taps_half=5))
    t = (np.arange(ts.K) - 5) / 2
    assert np.allclose(ts.psi.real, np.sinc(t), atol=1e-3)


def test_config_validation():
    for kw in (dict(B=0), dict(alpha=1.5), dict(L=-1), dict(Nos_rx=4), dict(Nos_sim=3),
               dict(taps_half=0), dict(N0B=0)):
        with pytest.raises(ValueError):
            LinkConfig(**kw)


def test_ask_power_and_se():
    assert unit_power(build_alphabet("ASK", 4), 0.0) == pytest.approx(5.0)
    assert spectral_efficiency(1.0, 0.2) == pytest.approx(1 / 1.2)
    with pytest.raises(ValueError):
        spectral_efficiency(-1, 0.2)


def test_frame_power_matches_snr(rng):
    cfg = LinkConfig(alpha=0.2, taps_half=20)
    ts = derive_taps(cfg)
    A = default_alphabet("4-ASK")
    frs = [make_frame(A, 2000, 6.0, ts, cfg, rng) for _ in range(4)]
    _, snr = tx_power([f.x for f in frs], cfg)
    assert abs(snr - 6.0) < 0.15


def test_synthesis_agrees_with_direct_path(rng):
    """The oversampled waveform path equals the direct rate-2 model when the
    tap span covers the pulse (back-to-back sinc, filter is a no-op)."""
    cfg = LinkConfig(alpha=0.0, L=0.0, taps_half=41, fast_path=False)
    ts = derive_taps(cfg)
    x = rng.choice([-1.0, 1.0], size=300) + 0j
    s0 = rng.choice([-1.0, 1.0], size=41) + 0j
    a = simulate_link(x, s0, ts, cfg, rng).z
    b = noise_free_output(s0, x, ts.psi)
    mid = slice(100, 500)
    assert np.max(np.abs(a[mid] - b[mid])) < 0.05 * np.max(b)


def test_noise_variance(rng):
    cfg = LinkConfig(alpha=0.0, taps_half=3, N0B=2.5)
    ts = derive_taps(cfg)
    fr = simulate_link(np.ones(20000), np.ones(3), ts, cfg, rng, snr_db=0)
    assert np.var(fr.y - fr.z) == pytest.approx(2.5, rel=0.03)


def test_tapset_csv_roundtrip(tmp_path, rng):
    ts = TapSet(psi=rng.normal(size=5) + 1j * rng.normal(size=5))
    ts.to_csv(tmp_path / "t.csv")
    assert np.allclose(TapSet.from_csv(tmp_path / "t.csv").psi, ts.psi)
