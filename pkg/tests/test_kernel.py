import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lfpp.kernel import (BumpProfile, HankelConvergenceError, KernelError, DimensionConstants, build_kernel,
                         bump_spectrum, hankel_transform, kappa_exact, kappa_hat, kappa_increment,
                         kernel_spectrum, named_bump, radial_bessel, surface_area)


@pytest.fixture(scope="module")
def bump2():
    return BumpProfile.canonical(2)


@pytest.fixture(scope="module")
def spec2(bump2):
    return bump_spectrum(bump2)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_gaussian_is_its_own_fourier_transform(d):
    k = np.linspace(0.0, 3.0, 31)
    got = hankel_transform(lambda r: np.exp(-math.pi * r * r), d, k, r_max=8.0).values
    assert np.max(np.abs(got - np.exp(-math.pi * k * k))) < 1e-6


@pytest.mark.parametrize("d", [2, 3])
def test_transform_round_trip(d):
    profile = lambda r: np.exp(-math.pi * r * r) * (1 + r * r)
    k = np.linspace(0.0, 6.0, 400)
    fwd = hankel_transform(profile, d, k, r_max=8.0)
    r = np.linspace(0.0, 1.5, 16)
    back = hankel_transform(fwd, d, r, r_max=6.0).values
    assert np.max(np.abs(back - profile(r))) < 1e-5


def test_ball_indicator_against_quadrature(oracles):
    ks = sorted(oracles["ball_ft_d3"], key=float)
    got = hankel_transform(lambda r: np.where(r < 1, 1.0, 0.0), 3, np.array([float(k) for k in ks]),
                           r_max=1.0, breakpoints=[1.0]).values
    want = np.array([oracles["ball_ft_d3"][k] for k in ks])
    assert np.allclose(got, want, rtol=1e-8, atol=1e-12)


def test_hankel_tail_certificate_raises():
    with pytest.raises(HankelConvergenceError) as info:
        hankel_transform(lambda r: 1.0 / (1.0 + r * r), 2, np.array([0.5]), r_max=10.0)
    assert info.value.tail_bound > 0


def test_dimension_constants():
    assert surface_area(2) == pytest.approx(2 * math.pi)
    assert surface_area(3) == pytest.approx(4 * math.pi)
    c = DimensionConstants.for_dimension(3)
    assert c.c_d * c.surface_factor == pytest.approx(1.0)
    z = np.array([0.0, 0.3, 2.0, 7.5])
    assert np.allclose(radial_bessel(3, z), np.where(z == 0, 1.0, np.sin(z) / np.where(z == 0, 1, z)))


def test_bump_constant_and_spectrum(bump2, spec2, oracles):
    assert bump2.scale == pytest.approx(oracles["bump_constant_d2"], rel=1e-12)
    assert BumpProfile.canonical(3).scale == pytest.approx(oracles["bump_constant_d3"], rel=1e-12)
    for s, v in oracles["bump_ft_d2"].items():
        assert spec2(np.array([float(s)]))[0] == pytest.approx(v, rel=1e-8, abs=1e-14)


def test_bump_normalization_error():
    b = BumpProfile.from_function(lambda r: np.exp(-1 / np.maximum(1 - r * r, 1e-300)), 2, normalize=False)
    with pytest.raises(KernelError, match="bump normalization violated"):
        b.check()
    with pytest.raises(KernelError):
        build_kernel(0.1, b)


def test_named_bumps():
    assert named_bump("standard", 2) is BumpProfile.canonical(2)
    assert named_bump("gevrey2", 3).name == "gevrey2"
    with pytest.raises(KernelError):
        named_bump("triangle", 2)


def test_kappa_hat_matches_quadrature_oracle(spec2, oracles):
    got = kappa_hat(1.0, spec2, np.array([1.0])).values[0]
    assert got == pytest.approx(oracles["kappa_hat_d2_eps1_k1"], rel=1e-8)
    got = kappa_hat(0.5, spec2, np.array([2.0])).values[0]
    assert got == pytest.approx(oracles["kappa_hat_d2_eps0.5_k2"], rel=1e-8)


def test_kappa_at_origin_against_space_domain(bump2, oracles):
    assert kappa_exact(1.0, 100.0, 0.0, bump2) == pytest.approx(oracles["kappa_space_d2_eps1_R100_x0"], abs=1e-8)
    assert kappa_exact(0.1, 1.0, 0.0, bump2) == pytest.approx(math.log(10.0), abs=1e-8)


def test_kappa_offset_against_space_domain(bump2, oracles):
    got = kappa_exact(0.1, 1.0, 0.5, bump2)
    assert got == pytest.approx(oracles["kappa_space_d2_eps0.1_R1_x0.5"], rel=1e-7)


def test_kappa_additive_in_scale_ranges(bump2):
    x = 0.3
    whole = kappa_exact(0.05, 2.0, x, bump2)
    parts = kappa_exact(0.05, 0.4, x, bump2) + kappa_exact(0.4, 2.0, x, bump2)
    assert whole == pytest.approx(parts, abs=1e-9)


def test_kappa_increment_consistent_with_kappa(bump2):
    x = 0.2
    inc = kappa_increment(0.05, x, bump2, R=3.0)
    assert inc == pytest.approx(kappa_exact(0.05, 3.0, 0.0, bump2) - kappa_exact(0.05, 3.0, x, bump2), abs=1e-8)


def test_kappa_hat_monotone_in_epsilon(spec2):
    k = np.geomspace(0.1, 20, 30)
    vals = [kappa_hat(e, spec2, k).values for e in (0.05, 0.1, 0.2, 0.4)]
    for a, b in zip(vals, vals[1:]):
        assert np.all(a >= b)


def test_kappa_hat_zero_frequency_needs_R(spec2):
    with pytest.raises(KernelError):
        kappa_hat(0.1, spec2, np.array([0.0]))
    v = kappa_hat(0.1, spec2, np.array([0.0]), R=1.0).values[0]
    assert v > 0


@pytest.mark.parametrize("d", [2, 3])
def test_kernel_mass_and_decay(d):
    k = build_kernel(0.2, BumpProfile.canonical(d))
    assert abs(k.mass - 1.0) < 1e-6
    r = np.geomspace(0.5, 50, 100)
    assert np.all(np.abs(k(r)) * r ** (2 * d - 1) <= k.decay_constant * (1 + 1e-9))
    if d == 3:
        assert k.tail_powers[0] == 2 * d


def test_kernel_spectrum_at_zero_is_mass(bump2):
    assert kernel_spectrum(0.3, bump2, np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-9)


def test_spectrum_cache_persists(tmp_path, monkeypatch):
    from lfpp import kernel as kmod
    monkeypatch.setenv("LFPP_CACHE_DIR", str(tmp_path))
    b = BumpProfile.gevrey(2, 1.5)
    kmod._SPECTRA.clear()
    s1 = bump_spectrum(b)
    files = list(tmp_path.glob("*.npy"))
    assert len(files) == 1
    kmod._SPECTRA.clear()
    s2 = bump_spectrum(b)
    assert np.array_equal(s1.values, s2.values)


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(0.01, 2.0), k=st.floats(0.05, 20.0))
def test_kappa_hat_scaling_property(eps, k):
    # Beyond eps*k ~ 20 the energy is below the relative tail certificate.
    assume(eps * k <= 20.0)
    spec = bump_spectrum(BumpProfile.canonical(2))
    lhs = kappa_hat(eps, spec, np.array([k])).values[0]
    rhs = eps**2 * kappa_hat(1.0, spec, np.array([eps * k])).values[0]
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=20, deadline=None)
@given(eps=st.sampled_from([0.05, 0.1, 0.25, 0.5]), r=st.floats(0.01, 3.0))
def test_kernel_scaling_property(eps, r):
    b = BumpProfile.canonical(2)
    k1, ke = build_kernel(1.0, b), build_kernel(eps, b)
    ref = eps**-2 * k1(np.array([r]))[0]
    if abs(ref) > 1e-10:
        assert ke(np.array([eps * r]))[0] == pytest.approx(ref, rel=1e-5)
