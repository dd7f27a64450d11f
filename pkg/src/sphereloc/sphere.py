"""Harmonic transforms on the 2B x 2B equiangular sphere grid.

Sampling convention
-------------------
A band limit B puts 2B colatitude rings at theta_j = pi*(2j+1)/(4B) (pole-free,
symmetric about the equator) and 2B longitude columns at phi_k = pi*k/B. Basis
functions are orthonormal spherical harmonics with the Condon-Shortley phase:

    Y_l^m(theta, phi) = Pbar_l^m(cos theta) * exp(i m phi),   0 <= l < B, |m| <= l

where Pbar includes the sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!) normalization. The
colatitude quadrature weights solve the moment conditions

    sum_j w_j cos(k theta_j) = integral_0^pi cos(k t) sin t dt,  k = 0..2B-1

in closed form (the grid is the DCT-II node set, so the weights are a scaled
DCT-III of the moment sequence). Products of two band-limited Legendre factors
stay below trigonometric degree 2B, so forward/inverse transforms are exact for
band-limited inputs up to floating-point rounding.

Coefficients are packed per channel in degree-major order: index l*l + l + m.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InvalidInputError, ShapeMismatchError

DEFAULT_BAND_LIMIT = 64
MAX_BAND_LIMIT = 128


@dataclass(frozen=True, eq=False)
class SphericalImage:
    """Real-valued samples on the 2B x 2B equiangular grid.

    data has shape (2B, 2B, channels): ring j (colatitude) by column k
    (longitude). truncated marks renders whose footprint left the source
    raster; it does not affect any transform.
    """

    data: np.ndarray
    truncated: bool = False

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ShapeMismatchError(f"expected (2B, 2B[, C]) samples, got shape {data.shape}")
        h, w, _ = data.shape
        if h == 0 or h != w or h % 2:
            raise ShapeMismatchError(f"grid must be square with even side, got {h} x {w}")
        if h // 2 > MAX_BAND_LIMIT:
            raise ConfigError(f"band limit {h // 2} exceeds maximum {MAX_BAND_LIMIT}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("image samples must all be finite")
        object.__setattr__(self, "data", data)

    @property
    def band_limit(self) -> int:
        return self.data.shape[0] // 2

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class SHSpectrum:
    """Packed harmonic coefficients, exactly band_limit**2 per channel.

    coeffs has shape (channels, band_limit**2), complex128, flat index
    l*l + l + m. Spectra of real images satisfy
    coeffs[:, idx(l, -m)] == (-1)**m * conj(coeffs[:, idx(l, m)]).
    """

    coeffs: np.ndarray
    band_limit: int

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim == 1:
            coeffs = coeffs[None, :]
        if coeffs.ndim != 2:
            raise ShapeMismatchError(f"expected (channels, B*B) coefficients, got {coeffs.shape}")
        if self.band_limit < 1:
            raise ConfigError(f"band limit must be positive, got {self.band_limit}")
        if coeffs.shape[1] != self.band_limit**2:
            raise ShapeMismatchError(
                f"band limit {self.band_limit} needs {self.band_limit**2} coefficients "
                f"per channel, got {coeffs.shape[1]}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class RotationZ:
    """Rotation about the vertical axis; yaw stored in [0, 2*pi)."""

    yaw: float

    def __post_init__(self) -> None:
        yaw = float(self.yaw)
        if not np.isfinite(yaw):
            raise InvalidInputError("yaw must be finite")
        object.__setattr__(self, "yaw", yaw % (2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class CorrelationProfile:
    """Correlation over the 2B candidate yaws alpha_k = pi*k/B."""

    values: np.ndarray
    peak_index: int
    peak_value: float

    @property
    def n_samples(self) -> int:
        return len(self.values)

    def yaw_at(self, index: float) -> float:
        """Yaw angle for a (possibly fractional) profile index, in (-pi, pi]."""
        yaw = 2.0 * np.pi * index / self.n_samples
        return wrap_angle(yaw)


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = float(np.mod(angle + np.pi, 2.0 * np.pi) - np.pi)
    return np.pi if wrapped == -np.pi else wrapped


def coeff_index(degree: int, order: int) -> int:
    """Flat coefficient index for (degree l, order m), |m| <= l."""
    if abs(order) > degree:
        raise ShapeMismatchError(f"|order| {abs(order)} exceeds degree {degree}")
    return degree * degree + degree + order


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=32)
def grid_colatitudes(band_limit: int) -> np.ndarray:
    j = np.arange(2 * band_limit)
    return _readonly(np.pi * (2 * j + 1) / (4 * band_limit))


@lru_cache(maxsize=32)
def grid_longitudes(band_limit: int) -> np.ndarray:
    return _readonly(np.pi * np.arange(2 * band_limit) / band_limit)


@lru_cache(maxsize=32)
def quadrature_weights(band_limit: int) -> np.ndarray:
    """Colatitude weights making the grid exact for band-limited integrands."""
    n = 2 * band_limit
    k = np.arange(n)
    moments = np.zeros(n)
    even = k[::2].astype(np.float64)
    moments[::2] = 2.0 / (1.0 - even**2)
    scale = moments / np.where(k == 0, float(n), n / 2.0)
    theta = grid_colatitudes(band_limit)
    return _readonly(np.cos(np.outer(k, theta)).T @ scale)


@lru_cache(maxsize=32)
def _packing(band_limit: int) -> tuple[np.ndarray, np.ndarray]:
    """(degree, order) per flat coefficient slot."""
    degrees = np.repeat(np.arange(band_limit), 2 * np.arange(band_limit) + 1)
    orders = np.concatenate([np.arange(-l, l + 1) for l in range(band_limit)])
    return _readonly(degrees), _readonly(orders)


@lru_cache(maxsize=32)
def _rect_index(band_limit: int) -> np.ndarray:
    """Flat index into the (2B-1, B) rectangular (order, degree) layout."""
    degrees, orders = _packing(band_limit)
    return _readonly((band_limit - 1 + orders) * band_limit + degrees)


@lru_cache(maxsize=8)
def _legendre_table(band_limit: int) -> np.ndarray:
    """Orthonormal associated Legendre values at the grid colatitudes.

    Shape (2B, 2B-1, B) indexed (ring, B-1+order, degree); zero where the
    degree is below |order|. Rows for negative orders carry the (-1)**m
    symmetry factor, so Y_l^m(theta_j, phi) = table[j, B-1+m, l]*exp(i m phi)
    for every m. Built by the standard stable three-term recurrence.
    """
    b = band_limit
    theta = grid_colatitudes(b)
    x, s = np.cos(theta), np.sin(theta)
    table = np.zeros((2 * b, 2 * b - 1, b))
    pmm = np.full(2 * b, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(b):
        if m > 0:
            pmm = pmm * (-np.sqrt((2 * m + 1) / (2.0 * m))) * s
        col = b - 1 + m
        table[:, col, m] = pmm
        prev2 = pmm
        if m + 1 < b:
            prev1 = np.sqrt(2 * m + 3.0) * x * pmm
            table[:, col, m + 1] = prev1
            for l in range(m + 2, b):
                a_lm = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b_lm = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
                cur = a_lm * (x * prev1 - b_lm * prev2)
                table[:, col, l] = cur
                prev2, prev1 = prev1, cur
        if m > 0:
            table[:, b - 1 - m, :] = (-1.0 if m % 2 else 1.0) * table[:, col, :]
    return _readonly(table)


@lru_cache(maxsize=32)
def _yaw_synthesis(band_limit: int) -> np.ndarray:
    """exp(i m alpha_k) for alpha_k = pi*k/B, shape (2B, 2B-1)."""
    alphas = grid_longitudes(band_limit)
    orders = np.arange(-(band_limit - 1), band_limit)
    return _readonly(np.exp(1j * np.outer(alphas, orders)))


def sh_forward(image: SphericalImage) -> SHSpectrum:
    """Forward transform: quadrature projection onto every Y_l^m, l < B.

    Exact (to rounding) for band-limited inputs; for general inputs it
    computes the quadrature sums over the grid as-is.
    """
    b = image.band_limit
    fft = np.fft.fft(image.data, axis=1)
    orders = np.arange(-(b - 1), b)
    per_order = fft[:, orders % (2 * b), :]
    weights = quadrature_weights(b) * (np.pi / b)
    rect = np.einsum("j,jml,jmc->cml", weights, _legendre_table(b), per_order, optimize=True)
    coeffs = rect.reshape(image.channels, -1)[:, _rect_index(b)]
    return SHSpectrum(coeffs, b)


def sh_inverse(spectrum: SHSpectrum) -> SphericalImage:
    """Inverse transform back to grid samples (real part).

    sh_inverse(sh_forward(f)) == f up to rounding whenever f is band-limited.
    """
    b = spectrum.band_limit
    channels = spectrum.channels
    rect = np.zeros((channels, (2 * b - 1) * b), dtype=np.complex128)
    rect[:, _rect_index(b)] = spectrum.coeffs
    rect = rect.reshape(channels, 2 * b - 1, b)
    per_order = np.einsum("jml,cml->jmc", _legendre_table(b), rect, optimize=True)
    bins = np.zeros((2 * b, 2 * b, channels), dtype=np.complex128)
    orders = np.arange(-(b - 1), b)
    bins[:, orders % (2 * b), :] = per_order
    samples = np.fft.ifft(bins, axis=1) * (2 * b)
    return SphericalImage(np.ascontiguousarray(samples.real))


def rotate_z(spectrum: SHSpectrum, rotation: RotationZ | float) -> SHSpectrum:
    """Rotate about the vertical axis: coeff_l^m <- exp(-i m yaw) * coeff_l^m.

    Exact for any yaw; per-degree energies are preserved.
    """
    if not isinstance(rotation, RotationZ):
        rotation = RotationZ(rotation)
    _, orders = _packing(spectrum.band_limit)
    phases = np.exp(-1j * orders * rotation.yaw)
    return SHSpectrum(spectrum.coeffs * phases, spectrum.band_limit)


def shift_longitude(image: SphericalImage, steps: int) -> SphericalImage:
    """Roll the grid eastward by an integer number of longitude columns.

    Equivalent to rotate_z by steps*pi/B, but exact on samples (a pure
    permutation) even for non-band-limited images.
    """
    return SphericalImage(np.roll(image.data, int(steps), axis=1), truncated=image.truncated)


def yaw_convolve(f: SHSpectrum, h: SHSpectrum) -> CorrelationProfile:
    """Correlation of two spectra over all 2B grid yaws, summed over channels.

    values[k] = Re sum_{l,m} conj(f_l^m) h_l^m exp(i m alpha_k); the argmax
    recovers the yaw taking f onto h: if h == rotate_z(f, alpha_k) the peak
    lands on index k.
    """
    if f.band_limit != h.band_limit:
        raise ShapeMismatchError(f"band limits differ: {f.band_limit} vs {h.band_limit}")
    if f.channels != h.channels:
        raise ShapeMismatchError(f"channel counts differ: {f.channels} vs {h.channels}")
    b = f.band_limit
    prod = np.sum(np.conj(f.coeffs) * h.coeffs, axis=0)
    _, orders = _packing(b)
    bins = orders + (b - 1)
    z = np.bincount(bins, weights=prod.real, minlength=2 * b - 1).astype(np.complex128)
    z += 1j * np.bincount(bins, weights=prod.imag, minlength=2 * b - 1)
    values = (_yaw_synthesis(b) @ z).real
    peak = int(np.argmax(values))
    return CorrelationProfile(values=_readonly(values), peak_index=peak, peak_value=float(values[peak]))


def refine_peak(profile: CorrelationProfile) -> float:
    """Sub-grid peak location by quadratic fit through the 3 samples around it.

    Returns a fractional index in profile coordinates (wraps circularly).
    """
    values = profile.values
    n = profile.n_samples
    i = profile.peak_index
    v_minus = values[(i - 1) % n]
    v_plus = values[(i + 1) % n]
    denom = v_minus - 2.0 * values[i] + v_plus
    if abs(denom) < 1e-12 * max(1.0, abs(values[i])):
        return float(i)
    delta = 0.5 * (v_minus - v_plus) / denom
    return i + float(np.clip(delta, -0.5, 0.5))


def degree_energies(spectrum: SHSpectrum) -> np.ndarray:
    """Per-degree power P_l = sum_m |coeff_l^m|**2, shape (channels, B).

    Invariant under rotate_z for any yaw.
    """
    power = np.abs(spectrum.coeffs) ** 2
    starts = np.arange(spectrum.band_limit) ** 2
    return np.add.reduceat(power, starts, axis=1)


def spectrum_energy(spectrum: SHSpectrum) -> float:
    """Total squared coefficient magnitude over all channels."""
    return float(np.sum(np.abs(spectrum.coeffs) ** 2))


def grid_inner_product(a: SphericalImage, b: SphericalImage) -> float:
    """Quadrature-weighted inner product over the sphere, summed over channels.

    Equals sum of conj(a_hat)*b_hat (Parseval) when both are band-limited.
    """
    if a.band_limit != b.band_limit or a.channels != b.channels:
        raise ShapeMismatchError("operands must share grid size and channels")
    weights = quadrature_weights(a.band_limit) * (np.pi / a.band_limit)
    return float(np.einsum("j,jkc,jkc->", weights, a.data, b.data))
