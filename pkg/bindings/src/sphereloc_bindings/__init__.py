"""Flat plain-array bindings over the sphereloc library.

Every function here takes and returns plain numpy arrays, floats, and
tuples; no library dataclass crosses the boundary, so external training
pipelines can call in with whatever array machinery they already have.
Each binding is semantically identical to its library counterpart and
bit-identical on float64 inputs.

Array intake follows one zero-copy rule, embodied by ArrayView/view_of:
C-contiguous float32 or float64 input buffers are borrowed as-is; any
other dtype or layout is converted to a fresh C-contiguous float64 copy.
"""

from dataclasses import dataclass

import numpy as np

import sphereloc as _core
from sphereloc import (
    DescriptorConfig,
    FeaturePair,
    GanBatch,
    LossParams,
    PlaceDescriptor,
    ShapeMismatchError,
    SHSpectrum,
    SphericalImage,
    TripletTuple,
)

__version__ = _core.__version__

_FLOAT_KINDS = (np.float32, np.float64)


@dataclass(frozen=True)
class ArrayView:
    """Shape, element type, and the contiguous buffer a binding will read.

    borrowed is True when data shares the caller's memory (no copy was
    made); False when intake converted to a fresh float64 buffer.
    """

    shape: tuple
    dtype: np.dtype
    data: np.ndarray
    borrowed: bool


def view_of(array) -> ArrayView:
    """Apply the zero-copy rule to one input array.

    C-contiguous float32/float64 arrays are wrapped without copying;
    everything else is converted to a fresh C-contiguous float64 buffer.
    """
    arr = np.asarray(array)
    if arr.dtype not in _FLOAT_KINDS or not arr.flags["C_CONTIGUOUS"]:
        copied = np.ascontiguousarray(arr, dtype=np.float64)
        return ArrayView(copied.shape, copied.dtype, copied, borrowed=False)
    return ArrayView(arr.shape, arr.dtype, arr, borrowed=np.shares_memory(arr, array))


def _image(array) -> SphericalImage:
    return SphericalImage(view_of(array).data)


def _complex(array) -> np.ndarray:
    arr = np.asarray(array)
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.complex128)
    if arr.ndim == 1:
        arr = arr[None, :]
    return np.ascontiguousarray(arr, dtype=np.complex128)


def sh_forward(image) -> np.ndarray:
    """Harmonic coefficients of a (2B, 2B[, C]) equiangular grid: complex,
    shape (C, B**2) or (B**2,) for single-channel input, slot l*l + l + m."""
    coeffs = np.array(_core.sh_forward(_image(image)).coeffs)
    return coeffs[0] if coeffs.shape[0] == 1 else coeffs


def sh_inverse(coeffs) -> np.ndarray:
    """Grid samples from (C, B**2) or (B**2,) coefficients; band limit is
    inferred from the coefficient count."""
    arr = _complex(coeffs)
    band = int(round(arr.shape[-1] ** 0.5))
    if band * band != arr.shape[-1]:
        raise ValueError(f"coefficient count {arr.shape[-1]} is not a square")
    data = np.array(_core.sh_inverse(SHSpectrum(arr, band)).data)
    return data[:, :, 0] if data.shape[2] == 1 else data


def extract_descriptor(image, backend: str = "sconv-vlad", **config) -> np.ndarray:
    """Place descriptor values for one view; config fields mirror the
    library's descriptor configuration (num_layers, kernels_per_layer,
    vlad_clusters, weight_seed, weight_file)."""
    cfg = DescriptorConfig(backend=backend, **config)
    return np.array(_core.extract_descriptor(_image(image), cfg).values)


def similarity(a, b) -> float:
    """Cosine similarity between two descriptor value vectors."""
    va, vb = view_of(a), view_of(b)
    return _core.similarity(
        PlaceDescriptor(va.data, backend="bound", band_limit=0),
        PlaceDescriptor(vb.data, backend="bound", band_limit=0),
    )


def estimate_yaw(query, reference) -> tuple[float, float]:
    """(yaw_rad, confidence): rotation about the vertical axis taking the
    reference view onto the query view."""
    est = _core.estimate_yaw(_image(query), _image(reference))
    return est.yaw, est.confidence


def _matched(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{name_a} has shape {a.shape} but {name_b} has shape {b.shape}"
        )


def orth_loss(z_g, z_c, absolute: bool = False) -> float:
    vg, vc = view_of(z_g), view_of(z_c)
    _matched("z_g", vg.data, "z_c", vc.data)
    return _core.orth_loss(FeaturePair(vg.data, vc.data), absolute=absolute)


def gan_loss(d_real, d_fake) -> float:
    return _core.gan_loss(GanBatch(np.asarray(d_real, dtype=np.float64),
                                   np.asarray(d_fake, dtype=np.float64)))


def recon_loss(x, x_hat) -> float:
    vx, vh = view_of(x), view_of(x_hat)
    _matched("x", vx.data, "x_hat", vh.data)
    return _core.recon_loss(SphericalImage(vx.data), SphericalImage(vh.data))


def cdtm_loss(gan: float, orth: float, recon: float) -> float:
    return _core.cdtm_loss(gan, orth, recon)


def individual_loss(anchor, positives, negatives, rotated=(),
                    lambda1: float = 0.5, lambda2: float = 0.5) -> float:
    t = TripletTuple(anchor=view_of(anchor).data,
                     rotated=[view_of(r).data for r in rotated],
                     positives=[view_of(p).data for p in positives],
                     negatives=[view_of(n).data for n in negatives])
    return _core.individual_loss(t, LossParams(lambda1=lambda1, lambda2=lambda2))


def cross_domain_loss(anchor, positives, negatives, lambda3: float = 1.0) -> float:
    t = TripletTuple(anchor=view_of(anchor).data,
                     positives=[view_of(p).data for p in positives],
                     negatives=[view_of(n).data for n in negatives])
    return _core.cross_domain_loss(t, LossParams(lambda3=lambda3))


def pem_loss(lv: float, ls: float, lc: float) -> float:
    return _core.pem_loss(lv, ls, lc)


_BOUND = (
    sh_forward,
    sh_inverse,
    extract_descriptor,
    similarity,
    estimate_yaw,
    orth_loss,
    gan_loss,
    recon_loss,
    cdtm_loss,
    individual_loss,
    cross_domain_loss,
    pem_loss,
)


def bind_all() -> dict:
    """Name-to-callable map of every bound operation."""
    return {fn.__name__: fn for fn in _BOUND}


__all__ = ["ArrayView", "bind_all", "view_of", "__version__"] + [
    fn.__name__ for fn in _BOUND
]
