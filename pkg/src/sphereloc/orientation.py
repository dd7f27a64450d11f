"""Yaw estimation between two spherical views of the same place.

The estimate is the rotation about the vertical axis that best aligns the
reference view with the query view, found by evaluating the correlation at
all 2B grid yaws in the harmonic domain and locating the continuous peak by
trigonometric interpolation of the profile (the samples fully determine it).
Zonal (order-0) coefficients are invariant under yaw and are
removed before correlating, so a strong mean level cannot flatten the
profile or inflate the confidence denominator.

With a descriptor config whose backend is "sconv-vlad", the correlation runs
on the first filter stage's feature maps instead of raw intensity; the stage
is exactly equivariant to yaw rolls, so the peak location is preserved while
degrees below 2 (which carry almost no yaw signal) are suppressed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptor import DescriptorConfig, sconv_layers
from .errors import DegenerateInputError, ShapeMismatchError
from .sphere import (
    CorrelationProfile,
    SHSpectrum,
    SphericalImage,
    sh_forward,
    wrap_angle,
    yaw_convolve,
    _packing,
)

_OVERSAMPLE = 16


@dataclass(frozen=True, eq=False)
class YawEstimate:
    """Estimated yaw in (-pi, pi], a confidence in [0, 1], and the profile."""

    yaw: float
    confidence: float
    profile: CorrelationProfile


def _strip_zonal(spectrum: SHSpectrum) -> SHSpectrum:
    _, orders = _packing(spectrum.band_limit)
    coeffs = spectrum.coeffs.copy()
    coeffs[:, orders == 0] = 0.0
    return SHSpectrum(coeffs, spectrum.band_limit)


def _correlation_input(image: SphericalImage, cfg: DescriptorConfig | None) -> SHSpectrum:
    if cfg is not None and cfg.backend == "sconv-vlad":
        features = sconv_layers(image, cfg)[0]
        return sh_forward(SphericalImage(features))
    return sh_forward(image)


def _continuous_peak(profile: CorrelationProfile) -> float:
    """Continuous yaw of the profile maximum.

    The 2B profile samples fully determine a trigonometric polynomial of
    degree < B. Zero-padding its Fourier series localizes the maximum on a
    16x finer grid, then Newton steps on the polynomial itself converge to
    the continuous peak to machine precision.
    """
    values = profile.values
    n = values.size
    spectrum = np.fft.fft(values)
    dense_n = n * _OVERSAMPLE
    padded = np.zeros(dense_n, dtype=complex)
    half = n // 2
    padded[:half] = spectrum[:half]
    padded[-half:] = spectrum[half:]
    dense = np.fft.ifft(padded).real * _OVERSAMPLE
    alpha = 2.0 * np.pi * int(np.argmax(dense)) / dense_n

    freqs = np.fft.fftfreq(n, d=1.0 / n)
    step_cap = 2.0 * np.pi / dense_n
    for _ in range(4):
        phases = np.exp(1j * freqs * alpha)
        d1 = float(np.real(np.sum(1j * freqs * spectrum * phases)) / n)
        d2 = float(np.real(np.sum(-(freqs ** 2) * spectrum * phases)) / n)
        if d2 >= 0.0:
            break
        step = d1 / d2
        if abs(step) > step_cap:
            step = np.copysign(step_cap, step)
        alpha -= step
        if abs(step) < 1e-14:
            break
    return wrap_angle(alpha)


def estimate_yaw(
    query: SphericalImage,
    reference: SphericalImage,
    cfg: DescriptorConfig | None = None,
) -> YawEstimate:
    """Rotation about the vertical axis taking the reference onto the query."""
    if query.band_limit != reference.band_limit:
        raise ShapeMismatchError(
            f"band limits differ: {query.band_limit} vs {reference.band_limit}"
        )
    if query.channels != reference.channels:
        raise ShapeMismatchError(
            f"channel counts differ: {query.channels} vs {reference.channels}"
        )
    for name, image in (("query", query), ("reference", reference)):
        if float(np.ptp(image.data)) < 1e-12:
            raise DegenerateInputError(f"{name} view is constant, yaw is undefined")

    f_hat = _strip_zonal(_correlation_input(reference, cfg))
    h_hat = _strip_zonal(_correlation_input(query, cfg))
    profile = yaw_convolve(f_hat, h_hat)

    norm = float(np.linalg.norm(profile.values))
    if norm < 1e-12:
        raise DegenerateInputError("correlation profile is flat, yaw is undefined")
    confidence = min(1.0, max(0.0, profile.peak_value / norm))
    return YawEstimate(yaw=_continuous_peak(profile), confidence=confidence, profile=profile)
