import numpy as np
import pytest

from taperqed.bloch import transmitted_flux
from taperqed.emission import CouplerChannel
from taperqed.transmission import (
    amplitude, beat_length, contrast_scan, engineered_extinction, lineshape, lineshape_fwhm, off_resonance,
    on_resonance, ratio, single_mode_closed_form,
)


def random_channel(rng, n):
    f = rng.dirichlet(np.ones(n + 1))[:n]  # sum below one
    g = rng.dirichlet(np.ones(n + 1))[:n] / 2
    beta = 6.0 + np.sort(rng.uniform(0, 3, n))[::-1]
    return CouplerChannel(f, g, beta, rng.uniform(-np.pi, np.pi, n))


def test_single_mode_full_transmission_off_resonance():
    ch = CouplerChannel([1.0], [0.2], [7.0], [0.0])
    assert np.allclose(off_resonance(ch, np.linspace(0, 20, 50)), 1.0)


def test_two_mode_beating():
    ch = CouplerChannel([0.5, 0.5], [0.0, 0.0], [7.0, 6.0], [0.0, 0.0])
    z = np.linspace(0, 10, 201)
    assert np.allclose(off_resonance(ch, z), np.cos(0.5 * z) ** 2, atol=1e-14)
    Lp = beat_length(ch)
    assert Lp == pytest.approx(np.pi)
    assert off_resonance(ch, [Lp, 3 * Lp]) == pytest.approx([0, 0], abs=1e-14)


def test_no_dipole_leaves_transmission_unchanged(rng):
    ch = random_channel(rng, 3)
    ch0 = CouplerChannel(ch.f, np.zeros(3), ch.beta, ch.phi)
    z = np.linspace(0, 10, 101)
    assert np.array_equal(on_resonance(ch0, z, 1.3), off_resonance(ch0, z))


def test_perfect_extinction():
    ch = CouplerChannel([1.0], [0.5], [7.0], [0.4])
    assert on_resonance(ch, np.linspace(0, 9, 31), 2.0) == pytest.approx(np.zeros(31), abs=1e-28)


def test_single_mode_reduction(rng):
    for _ in range(200):
        f, g = rng.uniform(0, 1), rng.uniform(0, 0.5)
        ch = CouplerChannel([f], [g], [rng.uniform(1, 20)], [rng.uniform(-np.pi, np.pi)])
        z, z0 = rng.uniform(-20, 20, 7), rng.uniform(-20, 20)
        assert np.max(np.abs(on_resonance(ch, z, z0) - single_mode_closed_form(f, g))) <= 1e-12


def test_single_nonzero_f_reduction(rng):
    ch = CouplerChannel([0.0, 0.7, 0.0], [0.1, 0.3, 0.05], [8.0, 7.0, 6.5], [0.1, 0.2, 0.3])
    z = np.linspace(0, 10, 41)
    assert np.allclose(on_resonance(ch, z, 2.2), single_mode_closed_form(0.7, 0.3), atol=1e-12, rtol=0)


def test_passivity(rng):
    for _ in range(300):
        ch = random_channel(rng, rng.integers(1, 5))
        z = rng.uniform(0, 30, 50)
        F = on_resonance(ch, z, rng.uniform(0, 10), rng.uniform(-3, 3))
        assert F.max() <= 1 + 1e-9 and F.min() >= 0


def test_expansion_is_hermitian(rng):
    ch = random_channel(rng, 3)
    z, z0 = 4.2, 1.7
    # |t|^2 expanded into the double sum over supermode pairs
    w = np.sqrt(ch.f * ch.gamma)
    L = 1.0
    a = ch.f * np.exp(1j * ch.beta * z)
    s = -2 * L * w * np.exp(1j * ch.phi) * np.exp(1j * ch.beta * (z - z0)) * np.sum(
        w * np.exp(-1j * ch.phi) * np.exp(1j * ch.beta * z0))
    terms = np.add.outer(a + s, np.zeros(3)) * np.conj(np.add.outer(np.zeros(3), a + s))
    total = terms.sum()
    assert abs(total.imag) <= 1e-12
    assert total.real == pytest.approx(on_resonance(ch, z, z0)[0], abs=1e-12)


def test_beat_period_of_f0():
    ch = CouplerChannel([0.3, 0.6], [0.1, 0.2], [9.0, 7.5], [0.0, 1.0])
    period = 2 * np.pi / 1.5
    z = np.linspace(0, 5, 77)
    assert np.allclose(off_resonance(ch, z + period), off_resonance(ch, z), atol=1e-12)
    assert beat_length(ch) == pytest.approx(period / 2)


def test_ratio_sentinel():
    r = ratio([0.5, 0.2], [0.0, 0.4])
    assert r[0] == np.inf and r[1] == pytest.approx(0.5)


def test_scan_flags_zero_f0():
    ch = CouplerChannel([0.5, 0.5], [0.2, 0.1], [7.0, 6.0], [0.0, 0.0])
    z = np.array([0.0, np.pi, 2.0])
    s = contrast_scan(ch, z, 0.5)
    assert s.flagged.tolist() == [False, True, False]
    assert np.isnan(s.dT[1]) and s.extrema["n_flagged"] == 1
    assert np.allclose(s.dT[[0, 2]], (s.F - s.F0)[[0, 2]] / s.F0[[0, 2]])


def test_lineshape_far_detuned(rng):
    ch = random_channel(rng, 2)
    F0 = off_resonance(ch, 3.0)[0]
    assert np.all(np.abs(lineshape(ch, 3.0, 1.0, [-1e3, 1e3]) - F0) < 1e-5)


def test_lineshape_symmetric_for_real_channel():
    ch = CouplerChannel([0.6, 0.3], [0.3, 0.1], [7.0, 6.0], [0.0, 0.0])
    d = np.linspace(0, 5, 26)
    # with z = z0 = 0 every phase factor is real
    assert np.allclose(lineshape(ch, 0.0, 0.0, d), lineshape(ch, 0.0, 0.0, -d), atol=1e-14)


def test_lineshape_width(rng):
    for _ in range(10):
        ch = random_channel(rng, 2)
        w = lineshape_fwhm(ch, rng.uniform(0, 5), rng.uniform(0, 3))
        assert 0.5 <= w <= 2.0


def test_single_mode_lineshape_closed_form():
    ch = CouplerChannel([1.0], [0.5], [7.0], [0.0])
    d = np.linspace(-4, 4, 81)
    L = 1 / (1 - 2j * d)
    assert np.allclose(lineshape(ch, 1.0, 0.3, d), np.abs(1 - 2 * 0.5 * L) ** 2, atol=1e-14)
    assert np.allclose(lineshape(ch, 1.0, 0.3, d), 4 * d**2 / (1 + 4 * d**2), atol=1e-14)


def test_extinction_trivial():
    assert engineered_extinction([1.0], [0.0]).extinction == pytest.approx(0.0, abs=1e-15)
    assert engineered_extinction([1.0], [0.25]).extinction == pytest.approx(0.75, abs=1e-15)
    assert engineered_extinction([1.0], [0.5]).extinction == pytest.approx(1.0, abs=1e-15)


def test_extinction_is_worst_case(rng):
    f, g = np.array([0.8, 0.2]), np.array([0.42, 0.05])
    res = engineered_extinction(f, g)
    ch = CouplerChannel(f, g, [8.0, 8.0 - np.sqrt(3)], [0.0, 0.0])
    z0 = rng.uniform(0, 50, 200)
    z = rng.uniform(0, 50, 200)
    worst = max(np.max(on_resonance(ch, zz, a) / off_resonance(ch, zz)) for zz, a in zip(z, z0))
    assert worst <= res.worst_ratio + 1e-9
    assert res.extinction == pytest.approx(1 - res.worst_ratio)


@pytest.mark.parametrize("n", [2, 3])
def test_bloch_oracle_across_detuning(rng, n):
    ch = random_channel(rng, n)
    z, z0 = rng.uniform(0, 8), rng.uniform(0, 4)
    for delta in np.linspace(-5, 5, 11):
        exact = on_resonance(ch, z, z0, delta)[0]
        ode = transmitted_flux(ch.f, ch.gamma, ch.beta, ch.phi, z, z0, delta, drive=1e-3)
        assert ode == pytest.approx(exact, rel=1e-4)


def test_bloch_oracle_reciprocal_phase_free(rng):
    ch = random_channel(rng, 2)
    a = transmitted_flux(ch.f, ch.gamma, ch.beta, ch.phi, 3.0, 1.0)
    b = transmitted_flux(ch.f, ch.gamma, ch.beta, ch.phi, 3.0, 1.0, chi=rng.uniform(-3, 3, 2))
    assert a == pytest.approx(b, rel=1e-9)


def test_amplitude_shapes():
    ch = CouplerChannel([0.5, 0.4], [0.2, 0.1], [7.0, 6.0], [0.0, 0.0])
    assert amplitude(ch, np.linspace(0, 1, 5), 0.2).shape == (5,)


def scan_at(default_sweep, w):
    from taperqed.pipeline import transmission_curves
    res, _ = default_sweep
    return transmission_curves(res.point(w), res.radiation, res.config.sweep)


def nearest(scan, dz):
    return int(np.argmin(np.abs(scan.z - scan.z0 - dz)))


def test_beat_length_220(default_sweep):
    assert scan_at(default_sweep, 220.0)["L_pi"] == pytest.approx(3.3, rel=0.1)


def test_suppression_near_five_microns(default_sweep):
    s = scan_at(default_sweep, 220.0)["scan"]
    i = nearest(s, 5.0)
    assert s.F[i] == pytest.approx(0.40, abs=0.1)
    assert s.F0[i] == pytest.approx(0.96, abs=0.05)
    assert s.ratio[i] <= 0.6


@pytest.mark.xfail(strict=True, reason="enhancement reaches about 10-13, not 30; see ledger")
def test_enhancement_near_thirty(default_sweep):
    s = scan_at(default_sweep, 220.0)["scan"]
    i = nearest(s, 1.65)
    assert s.F0[i] < 0.01 and s.ratio[i] >= 20


@pytest.mark.xfail(strict=True, reason="min contrast at 300 nm is about -12 %, not -20 %; see ledger")
def test_contrast_300(default_sweep):
    s = scan_at(default_sweep, 300.0)["scan"]
    assert np.nanmin(s.dT) == pytest.approx(-0.20, abs=0.05)


@pytest.mark.xfail(strict=True, reason="80:20 worst case is about 0.84 with solver beta-factors; see ledger")
def test_eighty_twenty_above_088(default_sweep):
    res, _ = default_sweep
    t = res.point(300.0).rate_table("x", res.radiation)
    g = [t.gamma[t.labels.index(lab)] for lab in ("hEx_I", "hEx_II")]
    assert engineered_extinction([0.8, 0.2], g).extinction > 0.88
