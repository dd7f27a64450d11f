"""Viewpoint-invariant place descriptors for spherical views.

Two backends share one contract (unit-norm float64 vector, deterministic
under a fixed seed, invariant to grid-yaw rotation of the input):

power-spectrum
    Concatenated per-degree energies P_l = sum_m |f_hat_l^m|^2 per channel,
    L2-normalized. Rotation about the vertical axis only changes coefficient
    phases, so the energies are exactly invariant. D = band_limit * channels.

sconv-vlad
    A cascade of num_layers spherical filter banks (per-degree gains applied
    in the harmonic domain, magnitude nonlinearity on the grid between
    stages) followed by soft-assignment VLAD over vlad_clusters seeded unit
    centers, aggregated over the below-horizon rings with quadrature
    weighting, signed-sqrt flattened and L2-normalized; the result is then
    calibrated (anchor and whitening, below) and mapped through a seeded
    tensor-power sketch. D = the sketch dimension (4096).

    The fixed gains pass only degrees 0 through 6: responses at each grid
    point then summarize overall tint and scene layout over a wide cap
    around that direction instead of fine texture. Fine-texture statistics
    are stationary, so any orderless aggregate of them converges to the
    same vector for every view of a world; tint and wide-cap layout are
    what actually separate places (the degree-0/1 content matters because
    ground color is the strongest place cue an overhead world offers, and
    it reaches the pattern through the magnitude nonlinearity even though
    the aggregation later removes the per-view feature mean). Layers after
    the first are band identities plus a small seeded perturbation, so
    depth does not erode the layout signal.

    Raw aggregates of any two views share a large common-mode component
    (projection geometry, horizon fill, the texture-noise spectrum), which
    would give unrelated places a strongly positive cosine. The weights
    therefore include a calibration pair fitted on a seeded ensemble of
    views rendered from seeded synthetic scenes: the anchor (ensemble mean,
    subtracted) recenters unrelated pairs near zero, and a ridge-regularized
    ZCA whitening of the ensemble covariance flattens the shared variance
    directions so the background cosine distribution is narrow as well as
    centered. The final tensor-power sketch raises the cosine between any
    two descriptors to _SKETCH_DEGREE (odd, so the sign survives) up to
    O(1/sqrt(D)) hashing noise: matched pairs keep a cosine near 1 while
    the centered background distribution is crushed toward zero, which is
    the contrast a likelihood built from clamped cosines needs. Everything
    derives deterministically from weight_seed plus fixed constants; no
    data-driven training is involved beyond these fixed seeded statistics.

Both backends first roll the input to a canonical longitude (the
lexicographically largest rotation of the column-sum sequence, a pure
permutation), so inputs that differ by a whole number of grid columns
produce bit-identical descriptors.

similarity() evaluates the cosine of two unit vectors as 1 - ||a - b||^2/2,
which is exact (1.0) for identical descriptors and exact (0.0) for
orthogonal unit basis vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    ShapeMismatchError,
)
from .sphere import (
    SHSpectrum,
    SphericalImage,
    degree_energies,
    grid_colatitudes,
    quadrature_weights,
    sh_forward,
    sh_inverse,
)

MAX_DESCRIPTOR_DIM = 4096
WEIGHT_MAGIC = b"SCVW"
WEIGHT_VERSION = 1
_BAND_LOW = 0
_BAND_HIGH = 6
_REFINE_SCALE = 0.1
_ASSIGN_SHARPNESS = 8.0
_CAL_SCENES = 12
_CAL_VIEWS_PER_SCENE = 16
_CAL_EXTENT_M = 600.0
_CAL_LANDMARKS = 7
_CAL_ALT_RANGE = (30.0, 150.0)
_WHITEN_RIDGE = 0.1
_SKETCH_DIM = 4096
_SKETCH_DEGREE = 9
_SKETCH_SEED = 3511

BACKENDS = ("power-spectrum", "sconv-vlad")


@dataclass(frozen=True)
class DescriptorConfig:
    backend: str = "sconv-vlad"
    num_layers: int = 4
    kernels_per_layer: int = 8
    vlad_clusters: int = 32
    weight_seed: int = 7
    weight_file: str | None = None

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}, expected one of {BACKENDS}")
        if self.num_layers < 1 or self.kernels_per_layer < 1 or self.vlad_clusters < 2:
            raise ConfigError("need num_layers >= 1, kernels_per_layer >= 1, vlad_clusters >= 2")
        if self.vlad_clusters * self.kernels_per_layer > MAX_DESCRIPTOR_DIM:
            raise ConfigError(
                f"descriptor dimension {self.vlad_clusters * self.kernels_per_layer} "
                f"exceeds cap {MAX_DESCRIPTOR_DIM}"
            )


@dataclass(frozen=True, eq=False)
class PlaceDescriptor:
    """Unit-norm descriptor vector plus the backend that produced it."""

    values: np.ndarray
    backend: str
    band_limit: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ShapeMismatchError("descriptor must be a non-empty 1-D vector")
        if values.size > MAX_DESCRIPTOR_DIM:
            raise ConfigError(f"descriptor dimension {values.size} exceeds {MAX_DESCRIPTOR_DIM}")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class SconvWeights:
    """Fixed filter-bank weights.

    gains: per layer, shape (C_out, C_in, band_limit), per-degree gains.
    centers: (vlad_clusters, kernels_per_layer) unit rows.
    anchor: (D,) mean aggregate over the seeded calibration ensemble,
        subtracted before whitening (D = vlad_clusters * kernels_per_layer).
    whiten: (D, D) ridge-regularized ZCA transform of the calibration
        ensemble covariance, applied after the anchor subtraction.
    """

    gains: tuple[np.ndarray, ...]
    centers: np.ndarray
    anchor: np.ndarray
    whiten: np.ndarray


def canonical_longitude_shift(image: SphericalImage) -> int:
    """Column index that starts the lexicographically largest rotation of the
    per-column sum sequence. Column sums are permuted, never recomputed, by a
    roll, so rolled inputs resolve to the same canonical grid."""
    sums = image.data.sum(axis=(0, 2))
    n = sums.size
    candidates = np.flatnonzero(sums == sums.max())
    offset = 1
    while candidates.size > 1 and offset < n:
        probe = sums[(candidates + offset) % n]
        candidates = candidates[probe == probe.max()]
        offset += 1
    return int(candidates[0])


def _canonicalize(image: SphericalImage) -> SphericalImage:
    shift = canonical_longitude_shift(image)
    if shift == 0:
        return image
    return SphericalImage(np.roll(image.data, -shift, axis=1), truncated=image.truncated)


def _gain_band(band_limit: int) -> np.ndarray:
    lo = min(_BAND_LOW, band_limit - 1)
    hi = min(_BAND_HIGH, band_limit - 1)
    band = np.zeros(band_limit)
    band[lo:hi + 1] = 1.0
    return band


def _degree_index(band_limit: int) -> np.ndarray:
    return np.repeat(np.arange(band_limit), 2 * np.arange(band_limit) + 1)


def _run_sconv(image: SphericalImage, gains: tuple[np.ndarray, ...]) -> list[np.ndarray]:
    degrees = _degree_index(image.band_limit)
    maps = []
    grid = image
    for g in gains:
        spec = sh_forward(grid)
        mixed = np.einsum("oin,in->on", g[:, :, degrees], spec.coeffs, optimize=True)
        stage = np.abs(sh_inverse(SHSpectrum(mixed, image.band_limit)).data)
        maps.append(stage)
        grid = SphericalImage(stage)
    return maps


def _aggregate(features: np.ndarray, band_limit: int, centers: np.ndarray) -> np.ndarray:
    """Soft-assignment VLAD over the below-horizon rings, signed-sqrt
    flattened and L2-normalized (calibration not yet applied). Features are
    recentered on their per-view weighted mean first, which cancels the
    common response level so the residual pattern is what gets matched;
    without it distant views of similar overall tint score spuriously
    high."""
    theta = grid_colatitudes(band_limit)
    ground = theta > np.pi / 2.0
    ring_w = quadrature_weights(band_limit)[ground]
    local = features[ground].reshape(-1, features.shape[2])
    weights = np.repeat(ring_w, features.shape[1])
    mean = (weights[:, None] * local).sum(axis=0) / weights.sum()
    local = local - mean
    unit = local / np.maximum(np.linalg.norm(local, axis=1, keepdims=True), 1e-12)
    logits = _ASSIGN_SHARPNESS * unit @ centers.T
    logits -= logits.max(axis=1, keepdims=True)
    assign = np.exp(logits)
    assign /= assign.sum(axis=1, keepdims=True)
    assign *= weights[:, None]
    vlad = assign.T @ local - assign.sum(axis=0)[:, None] * centers
    flat = vlad.reshape(-1)
    flat = np.sign(flat) * np.sqrt(np.abs(flat))
    norm = float(np.linalg.norm(flat))
    if norm < 1e-12:
        raise DegenerateInputError("image carries no signal in the filter band")
    return flat / norm


@lru_cache(maxsize=32)
def _sketch_hashes(dim: int, tag: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed count-sketch hash pair (bucket index, sign) for a given input
    dimension. Derived from constants, never from data, so every process
    maps equal vectors to equal sketches."""
    rng = np.random.default_rng([_SKETCH_SEED, dim, _SKETCH_DIM, tag])
    buckets = rng.integers(0, _SKETCH_DIM, size=dim)
    signs = rng.choice([-1.0, 1.0], size=dim)
    return buckets, signs


def _count_sketch(vec: np.ndarray, buckets: np.ndarray, signs: np.ndarray) -> np.ndarray:
    out = np.zeros(_SKETCH_DIM)
    np.add.at(out, buckets, signs * vec)
    return out


def _poly_sketch(unit: np.ndarray, degree: int) -> np.ndarray:
    """Tensor-power sketch: the cosine of two sketched vectors approximates
    the cosine of the inputs raised to `degree` (odd degrees keep the sign).
    Matched pairs stay near 1 while weak background resemblance is crushed
    toward zero, which is exactly the contrast a likelihood built from
    clamped cosines needs. Sketch noise is O(1/sqrt(_SKETCH_DIM))."""
    acc = unit
    for stage in range(degree - 1):
        fa = np.fft.rfft(_count_sketch(acc, *_sketch_hashes(acc.size, 2 * stage)))
        fb = np.fft.rfft(_count_sketch(unit, *_sketch_hashes(unit.size, 2 * stage + 1)))
        acc = np.fft.irfft(fa * fb, n=_SKETCH_DIM)
    return acc / max(float(np.linalg.norm(acc)), 1e-12)


def _draw_gains(rng: np.random.Generator, band_limit: int, channels: int,
                num_layers: int, kernels: int, clusters: int):
    """Seeded gains and VLAD centers, advancing the caller's rng stream."""
    band = _gain_band(band_limit)
    gains = []
    c_in = channels
    for layer in range(num_layers):
        g = rng.normal(size=(kernels, c_in, band_limit)) * band
        if layer > 0:
            identity = np.zeros_like(g)
            for out in range(kernels):
                identity[out, out % c_in] = band
            g = identity + _REFINE_SCALE * g
        gains.append(g)
        c_in = kernels
    centers = rng.normal(size=(clusters, kernels))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return tuple(gains), centers


@lru_cache(maxsize=16)
def _generated_gains(band_limit: int, channels: int, num_layers: int,
                     kernels: int, clusters: int, seed: int):
    """The cheap part of the weight set, enough for the filter cascade."""
    rng = np.random.default_rng(seed)
    return _draw_gains(rng, band_limit, channels, num_layers, kernels, clusters)


def _calibration_aggregates(rng: np.random.Generator, gains: tuple[np.ndarray, ...],
                            centers: np.ndarray, band_limit: int,
                            channels: int) -> np.ndarray:
    """Aggregates of views rendered from seeded synthetic scenes, spanning
    the supported altitude range. Imported lazily so the cheap gain path
    stays free of the scene generator."""
    from .projection import MATCHING_CAP_DEG, Pose, RenderSpec, render_view
    from .world import SyntheticWorldSpec, generate_world

    spec = RenderSpec(output_size=2 * band_limit, cap_deg=MATCHING_CAP_DEG)
    margin = _CAL_ALT_RANGE[1]
    log_lo, log_hi = np.log(_CAL_ALT_RANGE[0]), np.log(_CAL_ALT_RANGE[1])
    mix = None
    if channels != 3:
        mix = rng.normal(size=(channels, 3)) / np.sqrt(3.0)
    rows = []
    for _ in range(_CAL_SCENES):
        scene = generate_world(SyntheticWorldSpec(
            extent_m=(_CAL_EXTENT_M, _CAL_EXTENT_M),
            landmark_count=_CAL_LANDMARKS,
            seed=int(rng.integers(2 ** 31)),
        ))
        for _ in range(_CAL_VIEWS_PER_SCENE):
            x, y = rng.uniform(margin, _CAL_EXTENT_M - margin, size=2)
            altitude = float(np.exp(rng.uniform(log_lo, log_hi)))
            view = render_view(scene, Pose(float(x), float(y), altitude), spec)
            if mix is not None:
                view = SphericalImage(view.data @ mix.T)
            rows.append(_aggregate(_run_sconv(view, gains)[-1], band_limit, centers))
    return np.array(rows)


@lru_cache(maxsize=16)
def _generated_weights(band_limit: int, channels: int, num_layers: int,
                       kernels: int, clusters: int, seed: int) -> SconvWeights:
    rng = np.random.default_rng(seed)
    gains, centers = _draw_gains(rng, band_limit, channels, num_layers, kernels, clusters)
    ensemble = _calibration_aggregates(rng, gains, centers, band_limit, channels)
    anchor = ensemble.mean(axis=0)
    eigvals, eigvecs = np.linalg.eigh(np.cov(ensemble.T))
    eigvals = np.maximum(eigvals, 0.0) + _WHITEN_RIDGE * max(eigvals[-1], 1e-12)
    whiten = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    return SconvWeights(gains=gains, centers=centers, anchor=anchor, whiten=whiten)


def generate_weights(cfg: DescriptorConfig, band_limit: int, channels: int = 3) -> SconvWeights:
    """The seeded weight set the config implies for inputs of this shape."""
    return _generated_weights(
        band_limit, channels, cfg.num_layers, cfg.kernels_per_layer,
        cfg.vlad_clusters, cfg.weight_seed,
    )


def _resolve_weights(cfg: DescriptorConfig, band_limit: int, channels: int) -> SconvWeights:
    if cfg.weight_file is None:
        return _generated_weights(
            band_limit, channels, cfg.num_layers, cfg.kernels_per_layer,
            cfg.vlad_clusters, cfg.weight_seed,
        )
    return load_weights(cfg.weight_file, cfg, band_limit, channels)


def sconv_layers(image: SphericalImage, cfg: DescriptorConfig) -> list[np.ndarray]:
    """Grid feature maps after each filter stage (used by VLAD aggregation
    and by feature-domain yaw correlation). Each stage commutes with
    grid-yaw rolls of the input."""
    if cfg.weight_file is None:
        gains, _ = _generated_gains(image.band_limit, image.channels, cfg.num_layers,
                                    cfg.kernels_per_layer, cfg.vlad_clusters, cfg.weight_seed)
    else:
        gains = _resolve_weights(cfg, image.band_limit, image.channels).gains
    return _run_sconv(image, gains)


def extract_descriptor(image: SphericalImage, cfg: DescriptorConfig | None = None) -> PlaceDescriptor:
    """Compute the configured descriptor; rejects images with no signal."""
    cfg = cfg or DescriptorConfig()
    canonical = _canonicalize(image)
    if cfg.backend == "power-spectrum":
        raw = degree_energies(sh_forward(canonical)).reshape(-1)
    else:
        weights = _resolve_weights(cfg, image.band_limit, image.channels)
        maps = _run_sconv(canonical, weights.gains)
        scale = max(1.0, float(np.max(np.abs(image.data))))
        spans = np.ptp(maps[-1].reshape(-1, maps[-1].shape[2]), axis=0)
        if float(spans.max()) < 1e-9 * scale:
            # every kernel map is spatially flat: all such inputs collapse
            # to one pattern-free aggregate, so reject rather than match
            raise DegenerateInputError("image carries no spatial signal in the filter band")
        raw = weights.whiten @ (_aggregate(maps[-1], image.band_limit, weights.centers)
                                - weights.anchor)
    norm = float(np.linalg.norm(raw))
    if norm < 1e-12:
        raise DegenerateInputError("image carries no signal for this backend")
    values = raw / norm
    if cfg.backend == "sconv-vlad":
        values = _poly_sketch(values, _SKETCH_DEGREE)
    return PlaceDescriptor(values=values, backend=cfg.backend, band_limit=image.band_limit)


def similarity(a: PlaceDescriptor, b: PlaceDescriptor) -> float:
    """Cosine of the two unit descriptors, in [-1, 1]."""
    if a.backend != b.backend:
        raise ShapeMismatchError(f"backends differ: {a.backend} vs {b.backend}")
    if a.values.shape != b.values.shape:
        raise ShapeMismatchError(f"dimensions differ: {a.dim} vs {b.dim}")
    diff = a.values - b.values
    value = 1.0 - 0.5 * float(diff @ diff)
    return max(-1.0, min(1.0, value))


# ---------------------------------------------------------------------------
# Weight file: 16-byte header (magic "SCVW", u32 version, u32 layer count,
# u32 cluster count, little-endian) followed by a flat little-endian float32
# array: each layer's gains in C-order (C_out, C_in, band_limit), then the
# VLAD centers (clusters, kernels_per_layer), the anchor vector (D,), and
# the whitening matrix (D, D) in C-order, with D = clusters * kernels.

def save_weights(path: str | Path, weights: SconvWeights) -> None:
    header = WEIGHT_MAGIC + struct.pack("<III", WEIGHT_VERSION, len(weights.gains),
                                        weights.centers.shape[0])
    payload = [g.astype("<f4").tobytes() for g in weights.gains]
    payload.append(weights.centers.astype("<f4").tobytes())
    payload.append(weights.anchor.astype("<f4").tobytes())
    payload.append(weights.whiten.astype("<f4").tobytes())
    Path(path).write_bytes(header + b"".join(payload))


def load_weights(path: str | Path, cfg: DescriptorConfig, band_limit: int,
                 channels: int) -> SconvWeights:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: weight file shorter than its 16-byte header")
    if raw[:4] != WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {WEIGHT_MAGIC!r}")
    version, layer_count, clusters = struct.unpack("<III", raw[4:16])
    if version != WEIGHT_VERSION:
        raise FormatError(f"{path}: unsupported weight file version {version}")
    if layer_count != cfg.num_layers or clusters != cfg.vlad_clusters:
        raise ConfigError(
            f"{path}: file holds {layer_count} layers / {clusters} clusters, "
            f"config expects {cfg.num_layers} / {cfg.vlad_clusters}"
        )
    values = np.frombuffer(raw[16:], dtype="<f4")
    shapes = []
    c_in = channels
    for _ in range(layer_count):
        shapes.append((cfg.kernels_per_layer, c_in, band_limit))
        c_in = cfg.kernels_per_layer
    dim = clusters * cfg.kernels_per_layer
    shapes.append((clusters, cfg.kernels_per_layer))
    shapes.append((dim,))
    shapes.append((dim, dim))
    expected = sum(int(np.prod(s)) for s in shapes)
    if values.size != expected:
        raise ConfigError(
            f"{path}: payload holds {values.size} floats, config implies {expected}"
        )
    arrays = []
    cursor = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(values[cursor:cursor + count].reshape(shape).astype(np.float64))
        cursor += count
    return SconvWeights(gains=tuple(arrays[:-3]), centers=arrays[-3],
                        anchor=arrays[-2], whiten=arrays[-1])
