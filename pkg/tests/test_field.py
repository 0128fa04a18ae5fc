import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpp.errors import ResourceLimitError
from lfpp.field import (FieldError, FieldSample, GridSpec, anchor_field, layer_edges, mollify,
                        rescale_field_check, sample_layers, sample_spectral_lgf, sample_white_noise_field,
                        smooth_step, sphere_average, sphere_average_field, truncated_mass, truncated_mollify,
                        truncation_radii)
from lfpp.kernel import BumpProfile, build_kernel


@pytest.fixture(scope="module")
def grid64():
    return GridSpec.from_box(2, 64, 4.0)


def test_grid_validation():
    with pytest.raises(FieldError):
        GridSpec(2, 48, 0.1)
    with pytest.raises(FieldError):
        GridSpec(1, 64, 0.1)
    with pytest.raises(ResourceLimitError):
        GridSpec(3, 1024, 0.1)
    g = GridSpec.from_box(2, 64, 4.0)
    assert g.box_size == 4.0 and g.n_sites == 4096
    assert g.site_of((0.0, 0.0)) == (32, 32)
    assert np.allclose(g.position(g.site_of((0.5, -1.0))), (0.5, -1.0))


def test_spectral_field_is_deterministic(grid64):
    a = sample_spectral_lgf(grid64, 11)
    b = sample_spectral_lgf(grid64, 11)
    c = sample_spectral_lgf(grid64, 12)
    assert a.values.tobytes() == b.values.tobytes()
    assert not np.array_equal(a.values, c.values)


def test_anchor_sets_unit_sphere_average_to_zero(grid64):
    s = sample_spectral_lgf(grid64, 3)
    assert abs(sphere_average(s, (0.0, 0.0), 1.0)) < 1e-12
    assert anchor_field(s) is s


def test_unanchored_field_has_zero_mean(grid64):
    s = sample_spectral_lgf(grid64, 4, anchor=False)
    assert abs(s.values.mean()) < 1e-12


def test_sphere_average_of_affine_function_is_center_value(grid64):
    x = grid64.axis()
    X, Y = np.meshgrid(x, x, indexing="ij")
    s = FieldSample(grid64, 2.0 + 0.3 * X - 0.7 * Y, 0.0, "spectral", 0)
    assert sphere_average(s, (0.25, -0.5), 1.0) == pytest.approx(2.0 + 0.3 * 0.25 + 0.7 * 0.5, abs=1e-12)


def test_sphere_average_field_matches_pointwise_for_smooth_field(grid64):
    x = grid64.axis()
    X, Y = np.meshgrid(x, x, indexing="ij")
    k = 2 * math.pi / grid64.box_size
    s = FieldSample(grid64, np.cos(k * X) + np.sin(2 * k * Y), 0.0, "spectral", 0)
    field = sphere_average_field(s, 0.5)
    c = grid64.site_of((0.0, 0.0))
    assert field[c] == pytest.approx(sphere_average(s, (0.0, 0.0), 0.5), abs=2e-3)


def test_sphere_errors(grid64):
    s = sample_spectral_lgf(grid64, 1)
    with pytest.raises(FieldError):
        sphere_average(s, (0.0, 0.0), grid64.spacing)
    with pytest.raises(FieldError):
        sphere_average(s, (1.5, 0.0), 1.0)


def test_mollify_multiplies_plane_waves_by_kernel_spectrum(grid64):
    k = build_kernel(0.25, BumpProfile.canonical(2))
    x = grid64.axis()
    X, _ = np.meshgrid(x, x, indexing="ij")
    freq = 3 / grid64.box_size
    s = FieldSample(grid64, np.cos(2 * math.pi * freq * X), 0.0, "spectral", 0)
    out = mollify(s, k)
    assert np.allclose(out.values, k.spectrum(np.array([freq]))[0] * s.values, atol=1e-12)
    assert out.epsilon == 0.25 and out.meta["tail_mass_beyond_half_box"] < 1e-4


def test_mollify_rejects_underresolved_kernel(grid64):
    with pytest.raises(FieldError):
        mollify(sample_spectral_lgf(grid64, 0), build_kernel(0.05, BumpProfile.canonical(2)))


def test_layer_edges():
    e = layer_edges(0.1, 1.0)
    assert e[0] == 0.1 and e[-1] == 1.0 and np.all(np.diff(e) > 0)
    with pytest.raises(FieldError):
        layer_edges(1.0, 0.5)


def test_white_noise_variance_is_log_ratio():
    g = GridSpec.from_box(2, 64, 8.0)
    b = BumpProfile.canonical(2)
    eps, R = 0.25, 2.0
    vals = np.array([np.mean(sample_white_noise_field(g, eps, R, b, s).values ** 2) for s in range(60)])
    assert abs(vals.mean() - math.log(R / eps)) < 4 * vals.std(ddof=1) / math.sqrt(vals.size) + 0.02


def test_white_noise_layers_sum_to_field():
    g = GridSpec.from_box(2, 64, 8.0)
    b = BumpProfile.canonical(2)
    stack = sample_layers(g, 0.25, 2.0, b, 5)
    f = sample_white_noise_field(g, 0.25, 2.0, b, 5)
    assert np.allclose(sum(stack.layers), f.values, atol=1e-12)
    assert np.all(np.diff(stack.t_layers) < 0)


def test_white_noise_preconditions(grid64):
    b = BumpProfile.canonical(2)
    with pytest.raises(FieldError):
        sample_white_noise_field(grid64, 0.05, 0.5, b, 0)
    with pytest.raises(FieldError):
        sample_white_noise_field(grid64, 0.25, 2.0, b, 0)


def test_smooth_step():
    r = np.array([0.0, 0.5, 0.75, 1.0, 2.0])
    s = smooth_step(r, 0.5, 1.0)
    assert s[0] == 1 and s[1] == 1 and s[3] == 0 and s[4] == 0 and 0 < s[2] < 1
    assert s[2] == pytest.approx(0.5)


def test_truncated_mass_and_mollify(grid64):
    k = build_kernel(0.125, BumpProfile.canonical(2))
    inner, outer = truncation_radii(0.125, "bar_sqrt_eps")
    assert outer == pytest.approx(math.sqrt(0.125))
    z = truncated_mass(k, inner, outer)
    assert abs(z - 1) < 1e-2
    s = sample_spectral_lgf(grid64, 2)
    hat = truncated_mollify(s, k, "hat_log_power")
    # The log-power cutoff lies beyond the torus, so only the 1/Z factor remains.
    assert np.allclose(hat.values * hat.meta["Z_eps"], mollify(s, k).values, atol=1e-12)
    bar = truncated_mollify(s, k, "bar_sqrt_eps")
    assert np.max(np.abs(bar.values - hat.values)) < 0.05
    with pytest.raises(FieldError):
        truncation_radii(0.1, "sharp")


def test_rescale_check_needs_ensemble(grid64):
    with pytest.raises(FieldError):
        rescale_field_check([sample_spectral_lgf(grid64, s) for s in range(5)], 0.5)


def test_rescale_check_passes_for_log_correlated_field():
    g = GridSpec.from_box(2, 128, 4.0)
    ens = [sample_spectral_lgf(g, s, anchor=False) for s in range(240)]
    rep = rescale_field_check(ens, 0.5)
    assert rep.passed and rep.n_samples == 240


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.integers(0, 63))
def test_sphere_average_field_is_translation_equivariant(seed, shift):
    g = GridSpec.from_box(2, 64, 4.0)
    s = sample_spectral_lgf(g, seed, anchor=False)
    a = sphere_average_field(s, 0.25)
    b = sphere_average_field(s.with_values(np.roll(s.values, shift, axis=0)), 0.25)
    assert np.allclose(np.roll(a, shift, axis=0), b, atol=1e-12)
