"""Shared test helpers: seeded band-limited signals with the real-image symmetry."""

import numpy as np

from sphereloc.sphere import SHSpectrum, sh_inverse


def packing(band_limit):
    """(degree, order) per flat slot, independent of the library's internals."""
    degrees = np.repeat(np.arange(band_limit), 2 * np.arange(band_limit) + 1)
    orders = np.concatenate([np.arange(-l, l + 1) for l in range(band_limit)])
    return degrees, orders


def random_spectrum(band_limit, channels=1, seed=0, scale=1.0):
    """Random coefficients satisfying coeff(l,-m) = (-1)^m conj(coeff(l,m))."""
    rng = np.random.default_rng(seed)
    n = band_limit**2
    coeffs = scale * (rng.normal(size=(channels, n)) + 1j * rng.normal(size=(channels, n)))
    _, orders = packing(band_limit)
    m0 = orders == 0
    coeffs[:, m0] = coeffs[:, m0].real
    pos = np.nonzero(orders > 0)[0]
    neg = pos - 2 * orders[pos]  # idx(l, m) - 2m == idx(l, -m)
    coeffs[:, neg] = ((-1.0) ** orders[pos]) * np.conj(coeffs[:, pos])
    return SHSpectrum(coeffs, band_limit)


def random_band_limited_image(band_limit, channels=1, seed=0, scale=1.0):
    return sh_inverse(random_spectrum(band_limit, channels, seed=seed, scale=scale))
