"""Seeded synthetic overhead worlds for benchmarks and tests.

The background is built from three layers confined to mid-gray levels
[72, 184]: a mosaic of land-cover parcels (nearest-seed regions roughly
100 m across, each with its own well-separated tint, like fields or
districts), a finer sub-parcel mosaic (roughly 45 m) that breaks up
parcel interiors, and multi-octave value noise for grain. Every
neighborhood therefore carries a color-and-boundary signature of its own
position, not just stationary texture. Landmarks are star-convex
polygons whose channels sit in [0, 7] or [249, 255], so every landmark
pixel differs from every background pixel by at least 64 levels in every
channel. Generation is a pure function of the spec (bit-identical
rasters for equal seeds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .projection import OverheadMap

BACKGROUND_LOW = 72
BACKGROUND_HIGH = 184
LANDMARK_DARK = (0, 7)
LANDMARK_BRIGHT = (249, 255)

_PALETTE = [
    (1, 1, 1), (0, 1, 1), (1, 0, 1), (1, 1, 0),
    (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 0),
]  # 1 -> bright band, 0 -> dark band

PARCEL_SIZE_M = 100.0
SUBPARCEL_SIZE_M = 45.0


@dataclass(frozen=True)
class SyntheticWorldSpec:
    extent_m: tuple[float, float] = (1000.0, 500.0)
    gsd: float = 1.0
    landmark_count: int = 10
    texture_octaves: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.extent_m[0] <= 0 or self.extent_m[1] <= 0:
            raise ConfigError(f"extent must be positive, got {self.extent_m}")
        if self.gsd <= 0:
            raise ConfigError(f"gsd must be positive, got {self.gsd}")
        if self.landmark_count < 0:
            raise ConfigError("landmark_count must be >= 0")
        if self.texture_octaves < 1:
            raise ConfigError("texture_octaves must be >= 1")


def _noise_octave(h: int, w: int, cell_px: float, rng: np.random.Generator) -> np.ndarray:
    grid_h = int(np.ceil(h / cell_px)) + 1
    grid_w = int(np.ceil(w / cell_px)) + 1
    lattice = rng.random((grid_h, grid_w))
    rows = np.arange(h) / cell_px
    cols = np.arange(w) / cell_px
    r0 = rows.astype(np.int64)
    c0 = cols.astype(np.int64)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = lattice[r0]
    bottom = lattice[r0 + 1]
    return (top[:, c0] * (1 - fr) * (1 - fc) + top[:, c0 + 1] * (1 - fr) * fc
            + bottom[:, c0] * fr * (1 - fc) + bottom[:, c0 + 1] * fr * fc)


def _value_noise(h: int, w: int, octaves: int, rng: np.random.Generator) -> np.ndarray:
    base_cell = max(8.0, max(h, w) / 8.0)
    total = np.zeros((h, w))
    amplitude = 1.0
    for octave in range(octaves):
        cell = max(1.5, base_cell / 2**octave)
        total += amplitude * _noise_octave(h, w, cell, rng)
        amplitude *= 0.5
    span = total.max() - total.min()
    return (total - total.min()) / span if span > 0 else np.zeros_like(total)


def _spread_tints(count: int, rng: np.random.Generator) -> np.ndarray:
    """Pick count colors in the background band with large pairwise
    separation (greedy max-min over a seeded candidate pool), so no two
    parcels look alike by accident."""
    pool = rng.integers(BACKGROUND_LOW, BACKGROUND_HIGH, size=(8 * count, 3),
                        endpoint=True).astype(np.float64)
    chosen = [int(rng.integers(len(pool)))]
    d2 = ((pool - pool[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((pool - pool[nxt]) ** 2).sum(axis=1))
    return pool[chosen]


def _parcel_map(h: int, w: int, gsd: float, rng: np.random.Generator,
                size_m: float, ramp_amplitude: float = 0.0) -> np.ndarray:
    """Tint image (h, w, 3) of nearest-seed land-cover regions.

    With ramp_amplitude > 0 each region also gets a linear brightness ramp
    in a seeded random direction (think plowed-field shading), so flat
    region interiors are not translation-symmetric: two windows inside the
    same region at different spots no longer look identical."""
    count = max(4, int(round(h * w * gsd * gsd / size_m**2)))
    seeds_x = rng.uniform(0.0, w, count)
    seeds_y = rng.uniform(0.0, h, count)
    tints = _spread_tints(count, rng)
    angles = rng.uniform(0.0, 2.0 * np.pi, count)
    slopes = ramp_amplitude * rng.uniform(0.4, 1.0, count) / (0.6 * size_m / gsd)
    cols = np.arange(w)[None, :]
    rows = np.arange(h)[:, None]
    best_d2 = np.full((h, w), np.inf)
    owner = np.zeros((h, w), dtype=np.int64)
    for i in range(count):
        d2 = (cols - seeds_x[i]) ** 2 + (rows - seeds_y[i]) ** 2
        closer = d2 < best_d2
        best_d2[closer] = d2[closer]
        owner[closer] = i
    out = tints[owner]
    if ramp_amplitude > 0.0:
        shade = (np.cos(angles[owner]) * slopes[owner] * (cols - seeds_x[owner])
                 + np.sin(angles[owner]) * slopes[owner] * (rows - seeds_y[owner]))
        out = out + np.clip(shade, -ramp_amplitude, ramp_amplitude)[:, :, None]
    return out


def _fill_polygon(raster: np.ndarray, verts: np.ndarray, color: np.ndarray) -> None:
    """Paint a polygon given (x=col, y=row) float vertices; even-odd rule."""
    h, w = raster.shape[:2]
    c_lo = max(0, int(np.floor(verts[:, 0].min())))
    c_hi = min(w - 1, int(np.ceil(verts[:, 0].max())))
    r_lo = max(0, int(np.floor(verts[:, 1].min())))
    r_hi = min(h - 1, int(np.ceil(verts[:, 1].max())))
    if c_lo > c_hi or r_lo > r_hi:
        return
    px = np.arange(c_lo, c_hi + 1)[None, :]
    py = np.arange(r_lo, r_hi + 1)[:, None]
    inside = np.zeros((r_hi - r_lo + 1, c_hi - c_lo + 1), dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > py) != (y2 > py)
        x_at = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        inside ^= crosses & (px < x_at)
    raster[r_lo:r_hi + 1, c_lo:c_hi + 1][inside] = color


def generate_world(spec: SyntheticWorldSpec) -> OverheadMap:
    """Deterministically build the textured raster described by spec."""
    rng = np.random.default_rng(spec.seed)
    w = int(round(spec.extent_m[0] / spec.gsd))
    h = int(round(spec.extent_m[1] / spec.gsd))
    if w < 2 or h < 2:
        raise ConfigError("extent/gsd give a raster smaller than 2 x 2")

    parcels = _parcel_map(h, w, spec.gsd, rng, PARCEL_SIZE_M, ramp_amplitude=26.0)
    subparcels = _parcel_map(h, w, spec.gsd, rng, SUBPARCEL_SIZE_M)
    # one shared grain field: luminance-only texture keeps parcel chroma clean
    noise = _value_noise(h, w, spec.texture_octaves, rng)
    grain = BACKGROUND_LOW + noise * (BACKGROUND_HIGH - BACKGROUND_LOW)
    raster = np.empty((h, w, 3), dtype=np.uint8)
    for channel in range(3):
        levels = 0.35 * grain + 0.45 * parcels[:, :, channel] + 0.2 * subparcels[:, :, channel]
        raster[:, :, channel] = np.clip(np.round(levels), BACKGROUND_LOW, BACKGROUND_HIGH)

    placed: list[tuple[float, float, float]] = []
    for i in range(spec.landmark_count):
        radius_px = rng.uniform(25.0, 70.0) / spec.gsd
        radius_px = min(radius_px, 0.2 * min(h, w))
        center = None
        for _ in range(128):
            margin = radius_px + 4.0
            if 2 * margin >= min(h, w):
                margin = min(h, w) / 4.0
            cx = rng.uniform(margin, w - margin)
            cy = rng.uniform(margin, h - margin)
            if all((cx - px) ** 2 + (cy - py) ** 2 > (radius_px + pr) ** 2
                   for px, py, pr in placed):
                center = (cx, cy)
                break
        if center is None:
            center = (rng.uniform(radius_px, w - radius_px), rng.uniform(radius_px, h - radius_px))
        placed.append((center[0], center[1], radius_px))

        n_verts = int(rng.integers(3, 8))
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, n_verts))
        radii = radius_px * rng.uniform(0.55, 1.0, n_verts)
        verts = np.stack(
            [center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)], axis=1
        )
        bands = _PALETTE[i % len(_PALETTE)]
        color = np.array(
            [rng.integers(*(LANDMARK_BRIGHT if b else LANDMARK_DARK), endpoint=True) for b in bands],
            dtype=np.uint8,
        )
        _fill_polygon(raster, verts, color)

    return OverheadMap(raster=raster, gsd=spec.gsd, origin=(0.0, 0.0))
