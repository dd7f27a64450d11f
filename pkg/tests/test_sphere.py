"""Transform correctness against independent oracles.

The forward transform is checked against a naive O(B^4) quadrature sum built
on scipy's spherical harmonics (an implementation we did not write), and the
yaw correlation against brute-force rotate-then-inner-product over all grid
yaws. Everything else (round trips, Parseval, equivariance) follows from
those plus algebraic identities.
"""

import numpy as np
import pytest
from scipy.special import sph_harm_y

from conftest import packing, random_band_limited_image, random_spectrum
from sphereloc.errors import ConfigError, InvalidInputError, ShapeMismatchError
from sphereloc.sphere import (
    CorrelationProfile,
    RotationZ,
    SHSpectrum,
    SphericalImage,
    coeff_index,
    degree_energies,
    grid_colatitudes,
    grid_inner_product,
    grid_longitudes,
    quadrature_weights,
    refine_peak,
    rotate_z,
    sh_forward,
    sh_inverse,
    shift_longitude,
    spectrum_energy,
    wrap_angle,
    yaw_convolve,
)


def naive_forward(image):
    """O(B^4) quadrature projection using scipy's basis functions."""
    b = image.band_limit
    theta = grid_colatitudes(b)[:, None]
    phi = grid_longitudes(b)[None, :]
    weights = quadrature_weights(b)[:, None] * (np.pi / b)
    coeffs = np.zeros((image.channels, b * b), dtype=np.complex128)
    for l in range(b):
        for m in range(-l, l + 1):
            basis = np.conj(sph_harm_y(l, m, theta, phi))
            for c in range(image.channels):
                coeffs[c, coeff_index(l, m)] = np.sum(weights * image.data[:, :, c] * basis)
    return coeffs


class TestQuadrature:
    def test_moment_conditions(self):
        # exactness for sin(t)*cos(kt), k < 2B, is what makes transforms exact
        for b in (2, 3, 16, 64):
            w = quadrature_weights(b)
            theta = grid_colatitudes(b)
            k = np.arange(2 * b)
            target = np.where(k % 2 == 0, 2.0 / np.where(k == 1, 1.0, 1.0 - k.astype(float) ** 2), 0.0)
            got = np.cos(np.outer(k, theta)) @ w
            np.testing.assert_allclose(got, target, atol=1e-13)

    def test_weights_positive_sum_two(self):
        for b in (2, 16, 128):
            w = quadrature_weights(b)
            assert np.all(w > 0)
            assert abs(w.sum() - 2.0) < 1e-13


class TestLegendreBasis:
    def test_table_matches_scipy_basis(self):
        from sphereloc.sphere import _legendre_table

        b = 12
        table = _legendre_table(b)
        theta = grid_colatitudes(b)
        rng = np.random.default_rng(3)
        for _ in range(60):
            l = int(rng.integers(0, b))
            m = int(rng.integers(-l, l + 1))
            # at phi = 0 the harmonic reduces to the normalized Legendre value
            expected = sph_harm_y(l, m, theta, 0.0).real
            np.testing.assert_allclose(table[:, b - 1 + m, l], expected, atol=1e-12)


class TestForward:
    def test_constant_image(self):
        b = 8
        img = SphericalImage(np.ones((2 * b, 2 * b)))
        spec = sh_forward(img)
        assert abs(spec.coeffs[0, 0] - np.sqrt(4 * np.pi)) < 1e-12
        rest = np.delete(spec.coeffs[0], 0)
        assert np.abs(rest).max() < 1e-12

    def test_y10_sample_gives_unit_coefficient(self):
        b = 8
        theta = grid_colatitudes(b)[:, None]
        phi = grid_longitudes(b)[None, :]
        img = SphericalImage(sph_harm_y(1, 0, theta, phi).real)
        spec = sh_forward(img)
        assert abs(spec.coeffs[0, coeff_index(1, 0)] - 1.0) < 1e-12

    def test_matches_naive_quadrature_oracle_band_limited(self):
        b = 8
        img = random_band_limited_image(b, channels=2, seed=11)
        np.testing.assert_allclose(sh_forward(img).coeffs, naive_forward(img), atol=1e-9)

    def test_matches_naive_quadrature_oracle_general_input(self):
        # also for inputs that are NOT band-limited: both sides are the same sum
        b = 6
        rng = np.random.default_rng(7)
        img = SphericalImage(rng.normal(size=(2 * b, 2 * b, 1)))
        np.testing.assert_allclose(sh_forward(img).coeffs, naive_forward(img), atol=1e-9)

    def test_linearity(self):
        b = 16
        f = random_band_limited_image(b, seed=1)
        g = random_band_limited_image(b, seed=2)
        combo = SphericalImage(2.5 * f.data - 1.25 * g.data)
        expected = 2.5 * sh_forward(f).coeffs - 1.25 * sh_forward(g).coeffs
        np.testing.assert_allclose(sh_forward(combo).coeffs, expected, atol=1e-10)

    def test_real_input_symmetry(self):
        b = 16
        img = random_band_limited_image(b, seed=5)
        coeffs = sh_forward(img).coeffs[0]
        _, orders = packing(b)
        pos = np.nonzero(orders > 0)[0]
        neg = pos - 2 * orders[pos]
        np.testing.assert_allclose(
            coeffs[neg], ((-1.0) ** orders[pos]) * np.conj(coeffs[pos]), atol=1e-12
        )


class TestRoundTrip:
    @pytest.mark.parametrize("b", [2, 8, 16])
    def test_band_limited_round_trip(self, b):
        spec = random_spectrum(b, channels=3, seed=b)
        img = sh_inverse(spec)
        back = sh_forward(img)
        np.testing.assert_allclose(back.coeffs, spec.coeffs, atol=1e-10)
        again = sh_inverse(back)
        np.testing.assert_allclose(again.data, img.data, atol=1e-10)

    def test_parseval(self):
        b = 16
        img = random_band_limited_image(b, channels=2, seed=9)
        energy = spectrum_energy(sh_forward(img))
        assert abs(grid_inner_product(img, img) - energy) < 1e-9 * energy

    def test_zero_spectrum_gives_zero_image(self):
        spec = SHSpectrum(np.zeros(16, dtype=np.complex128), 4)
        assert np.all(sh_inverse(spec).data == 0.0)


class TestRotateZ:
    def test_phase_example_quarter_turn(self):
        # a pure (l=1, m=1) spectrum picks up exactly exp(-i pi/2)
        b = 4
        coeffs = np.zeros(b * b, dtype=np.complex128)
        coeffs[coeff_index(1, 1)] = 1.0
        out = rotate_z(SHSpectrum(coeffs, b), RotationZ(np.pi / 2))
        assert abs(out.coeffs[0, coeff_index(1, 1)] - np.exp(-1j * np.pi / 2)) < 1e-15

    def test_preserves_degree_energies(self):
        spec = random_spectrum(12, channels=2, seed=4)
        rotated = rotate_z(spec, 1.234)
        np.testing.assert_allclose(degree_energies(rotated), degree_energies(spec), atol=1e-12)

    def test_composition(self):
        spec = random_spectrum(8, seed=6)
        once = rotate_z(rotate_z(spec, 0.7), 1.9)
        direct = rotate_z(spec, 2.6)
        np.testing.assert_allclose(once.coeffs, direct.coeffs, atol=1e-12)

    def test_matches_longitude_shift_on_grid(self):
        b = 16
        img = random_band_limited_image(b, seed=13)
        steps = 5
        shifted = shift_longitude(img, steps)
        via_harmonics = sh_inverse(rotate_z(sh_forward(img), steps * np.pi / b))
        np.testing.assert_allclose(shifted.data, via_harmonics.data, atol=1e-9)


class TestYawConvolve:
    def test_self_correlation_peaks_at_zero_with_energy(self):
        spec = random_spectrum(16, channels=2, seed=21)
        profile = yaw_convolve(spec, spec)
        assert profile.peak_index == 0
        assert abs(profile.peak_value - spectrum_energy(spec)) < 1e-9 * spectrum_energy(spec)
        assert profile.peak_value == np.max(profile.values)
        assert profile.n_samples == 32

    def test_peak_at_every_applied_grid_rotation(self):
        b = 8
        spec = random_spectrum(b, seed=22)
        for k in range(2 * b):
            rotated = rotate_z(spec, k * np.pi / b)
            assert yaw_convolve(spec, rotated).peak_index == k

    def test_matches_rotate_and_inner_product_oracle(self):
        # values[k] must equal <rotate_z(f, alpha_k), h> on the grid; computed
        # here by exact column rolls and quadrature inner products instead
        b = 8
        f_img = random_band_limited_image(b, channels=2, seed=30)
        h_img = random_band_limited_image(b, channels=2, seed=31)
        profile = yaw_convolve(sh_forward(f_img), sh_forward(h_img))
        oracle = np.array(
            [grid_inner_product(shift_longitude(f_img, k), h_img) for k in range(2 * b)]
        )
        np.testing.assert_allclose(profile.values, oracle, atol=1e-9)

    def test_equivariance_circular_shift(self):
        b = 16
        rng = np.random.default_rng(40)
        for trial in range(8):
            f = random_spectrum(b, seed=100 + trial)
            h = random_spectrum(b, seed=200 + trial)
            k = int(rng.integers(0, 2 * b))
            base = yaw_convolve(f, h).values
            shifted = yaw_convolve(rotate_z(f, k * np.pi / b), h).values
            np.testing.assert_allclose(shifted, np.roll(base, -k), atol=1e-8)

    def test_band_limit_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            yaw_convolve(random_spectrum(8), random_spectrum(16))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            yaw_convolve(random_spectrum(8, channels=1), random_spectrum(8, channels=2))


class TestPeakRefinement:
    def test_recovers_exact_parabola_vertex(self):
        n = 32
        true_pos = 10.3
        idx = np.arange(n)
        values = 5.0 - (idx - true_pos) ** 2
        profile = CorrelationProfile(values=values, peak_index=int(np.argmax(values)), peak_value=float(values.max()))
        assert abs(refine_peak(profile) - true_pos) < 1e-12

    def test_flat_profile_stays_on_grid(self):
        values = np.zeros(16)
        profile = CorrelationProfile(values=values, peak_index=0, peak_value=0.0)
        assert refine_peak(profile) == 0.0


class TestValidation:
    def test_non_finite_image_rejected(self):
        data = np.ones((8, 8))
        data[3, 3] = np.nan
        with pytest.raises(InvalidInputError):
            SphericalImage(data)

    def test_odd_grid_rejected(self):
        with pytest.raises(ShapeMismatchError):
            SphericalImage(np.ones((7, 7)))

    def test_non_square_grid_rejected(self):
        with pytest.raises(ShapeMismatchError):
            SphericalImage(np.ones((8, 10)))

    def test_band_limit_cap(self):
        with pytest.raises(ConfigError):
            SphericalImage(np.ones((2 * 129, 2 * 129)))

    def test_coefficient_count_enforced(self):
        with pytest.raises(ShapeMismatchError):
            SHSpectrum(np.zeros(10, dtype=np.complex128), 4)

    def test_coeff_index_rejects_bad_order(self):
        with pytest.raises(ShapeMismatchError):
            coeff_index(2, 3)

    def test_wrap_angle(self):
        assert wrap_angle(np.pi) == np.pi
        assert wrap_angle(-np.pi) == np.pi
        assert abs(wrap_angle(3 * np.pi / 2) + np.pi / 2) < 1e-12
