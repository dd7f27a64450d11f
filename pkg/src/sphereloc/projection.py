"""Rendering spherical and nadir views of an overhead raster.

World frame: x and y in meters, z up. Raster pixel (row r, col c) sits at
world (origin_x + c*gsd, origin_y + r*gsd); only relative offsets
(pose - origin) enter any computation. Longitude 0 points along +x and
increases toward +y.

A camera at altitude H above flat ground (z = 0) sees, for a sample
direction with depression angle d below the horizon, the ground point at
range H/tan(d) along its bearing. Directions at or above the horizon carry
no ground information and return the fill value; with sky_crop enabled the
band within cap_deg of the horizon is filled too, which bounds the ground
footprint (grazing rays otherwise hit arbitrarily far away). The matching
footprint radius of a pose is its altitude (the 45-degree cone).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InvalidInputError, OutOfBoundsError
from .sphere import MAX_BAND_LIMIT, SphericalImage, grid_colatitudes, grid_longitudes

SIDECAR_FIELDS = ("gsd_m_per_px", "origin_x_m", "origin_y_m", "crs_note")

# Elevation cap recommended for place-matching renders. Grazing rays reach
# altitude/tan(cap) along the ground, so 30 degrees bounds the view to about
# 1.7x altitude: views stay local and position-specific at every level of an
# altitude hierarchy instead of being dominated by far-field content shared
# between neighboring poses.
MATCHING_CAP_DEG = 30.0


@dataclass(frozen=True, eq=False)
class OverheadMap:
    """8-bit RGB overhead raster with ground sampling distance and world origin."""

    raster: np.ndarray
    gsd: float
    origin: tuple[float, float] = (0.0, 0.0)
    crs_note: str = "local-meters"

    def __post_init__(self) -> None:
        raster = np.asarray(self.raster)
        if raster.dtype != np.uint8:
            raise InvalidInputError(f"raster must be uint8, got {raster.dtype}")
        if raster.ndim != 3 or raster.shape[2] != 3:
            raise InvalidInputError(f"raster must be (H, W, 3), got {raster.shape}")
        if raster.shape[0] < 2 or raster.shape[1] < 2:
            raise InvalidInputError("raster needs at least 2 x 2 pixels")
        if not (float(self.gsd) > 0.0 and np.isfinite(self.gsd)):
            raise ConfigError(f"gsd must be positive, got {self.gsd}")
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "gsd", float(self.gsd))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]

    @property
    def extent_m(self) -> tuple[float, float]:
        """(x extent, y extent) in meters."""
        return (self.width * self.gsd, self.height * self.gsd)

    @cached_property
    def _unit_raster(self) -> np.ndarray:
        return self.raster.astype(np.float64) / 255.0


@dataclass(frozen=True)
class Pose:
    """Camera pose: position in meters, yaw/pitch in radians.

    pitch exists for robustness perturbations only; the pipeline assumes a
    nadir-stabilized camera.
    """

    x: float
    y: float
    altitude: float
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.altitude, self.yaw, self.pitch)
        if not all(np.isfinite(v) for v in values):
            raise InvalidInputError("pose fields must be finite")
        if self.altitude <= 0.0:
            raise InvalidInputError(f"altitude must be positive, got {self.altitude}")


@dataclass(frozen=True)
class RenderSpec:
    """Rendering options.

    mode: "spherical" (full equiangular panorama) or "pinhole-nadir"
    (orthographic-style crop of side 2*altitude, rotated by yaw).
    output_size: grid side; for spherical renders this fixes the band limit
    at output_size // 2.
    """

    mode: str = "spherical"
    output_size: int = 128
    sky_crop: bool = True
    cap_deg: float = 10.0
    fill: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in ("spherical", "pinhole-nadir"):
            raise ConfigError(f"unknown render mode {self.mode!r}")
        if self.output_size < 4 or self.output_size % 2:
            raise ConfigError(f"output_size must be even and >= 4, got {self.output_size}")
        if self.output_size // 2 > MAX_BAND_LIMIT:
            raise ConfigError(f"output_size {self.output_size} exceeds band limit cap")
        if not 0.0 <= self.cap_deg < 90.0:
            raise ConfigError(f"cap_deg must be in [0, 90), got {self.cap_deg}")
        if not 0.0 <= self.fill <= 1.0:
            raise ConfigError(f"fill must be in [0, 1], got {self.fill}")

    @property
    def band_limit(self) -> int:
        return self.output_size // 2


def footprint_radius(pose: Pose) -> float:
    """Matching footprint radius in meters: altitude * tan(45 deg)."""
    return pose.altitude


def _check_footprint(map_: OverheadMap, pose: Pose) -> None:
    x0, y0 = map_.origin
    hull_x = (x0, x0 + (map_.width - 1) * map_.gsd)
    hull_y = (y0, y0 + (map_.height - 1) * map_.gsd)
    nearest_x = min(max(pose.x, hull_x[0]), hull_x[1])
    nearest_y = min(max(pose.y, hull_y[0]), hull_y[1])
    radius = footprint_radius(pose)
    if (pose.x - nearest_x) ** 2 + (pose.y - nearest_y) ** 2 > radius * radius:
        raise OutOfBoundsError(
            f"footprint of pose ({pose.x:.1f}, {pose.y:.1f}, alt {pose.altitude:.1f}) "
            "lies entirely outside the raster"
        )


def _bilinear(unit_raster: np.ndarray, cols: np.ndarray, rows: np.ndarray, fill: float):
    """Bilinear sample; points outside the pixel-center hull get fill exactly.

    Returns (values, inside_mask); values shape cols.shape + (3,).
    """
    h, w = unit_raster.shape[:2]
    inside = (cols >= 0.0) & (cols <= w - 1.0) & (rows >= 0.0) & (rows <= h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r = np.clip(rows, 0.0, h - 1.0)
    c0 = np.minimum(c.astype(np.int64), w - 2)
    r0 = np.minimum(r.astype(np.int64), h - 2)
    fc = (c - c0)[..., None]
    fr = (r - r0)[..., None]
    v00 = unit_raster[r0, c0]
    v01 = unit_raster[r0, c0 + 1]
    v10 = unit_raster[r0 + 1, c0]
    v11 = unit_raster[r0 + 1, c0 + 1]
    values = (v00 * (1 - fr) * (1 - fc) + v01 * (1 - fr) * fc
              + v10 * fr * (1 - fc) + v11 * fr * fc)
    values[~inside] = fill
    return values, inside


@lru_cache(maxsize=16)
def _spherical_rig(band_limit: int, cap_deg: float, sky_crop: bool):
    """Per-ring ground ranges (in altitude units) and the kept-ray mask."""
    theta = grid_colatitudes(band_limit)
    depression = theta - np.pi / 2.0
    floor = np.deg2rad(cap_deg) if sky_crop else 0.0
    kept = depression > floor
    ranges = np.zeros_like(theta)
    ranges[kept] = 1.0 / np.tan(depression[kept])
    ranges.flags.writeable = False
    kept.flags.writeable = False
    return ranges, kept


def ground_point(pose: Pose, colatitude: float, longitude: float) -> tuple[float, float] | None:
    """Ground intersection of one sample ray, or None at/above the horizon.

    Exposed for geometry checks; ignores sky_crop. colatitude pi is straight
    down and returns exactly (pose.x, pose.y); colatitude 3*pi/4 (45 degrees
    off nadir) hits at range exactly equal to the altitude.
    """
    depression = colatitude - np.pi / 2.0
    if depression <= 0.0:
        return None
    rng = pose.altitude / np.tan(depression) if depression < np.pi / 2.0 else 0.0
    bearing = longitude + pose.yaw
    return (pose.x + rng * np.cos(bearing), pose.y + rng * np.sin(bearing))


def render_view(map_: OverheadMap, pose: Pose, spec: RenderSpec | None = None) -> SphericalImage:
    """Render the view of the map from a pose.

    Only (pose - origin) enters the arithmetic, so translating both together
    reproduces the exact same bytes. Grid-aligned yaws take an index-roll
    path, so rotating the pose by a whole number of longitude steps equals a
    column roll of the unrotated render, bit for bit. Raises
    OutOfBoundsError when the pose footprint misses the raster entirely;
    partial overlap fills with spec.fill and sets the truncated flag.
    """
    spec = spec or RenderSpec()
    _check_footprint(map_, pose)
    if spec.mode == "pinhole-nadir":
        return _render_pinhole(map_, pose, spec)
    return _render_spherical(map_, pose, spec)


def _render_spherical(map_: OverheadMap, pose: Pose, spec: RenderSpec) -> SphericalImage:
    b = spec.band_limit
    size = spec.output_size
    ranges, kept = _spherical_rig(b, spec.cap_deg, spec.sky_crop)
    if pose.pitch != 0.0:
        return _render_tilted(map_, pose, spec, kept)

    lon = grid_longitudes(b)
    turns = pose.yaw / (np.pi / b)
    whole = np.round(turns)
    if abs(turns - whole) < 1e-9:
        cos_b = np.roll(np.cos(lon), -int(whole) % size)
        sin_b = np.roll(np.sin(lon), -int(whole) % size)
    else:
        bearing = lon + pose.yaw
        cos_b, sin_b = np.cos(bearing), np.sin(bearing)

    rel_x = pose.x - map_.origin[0]
    rel_y = pose.y - map_.origin[1]
    ground_range = pose.altitude * ranges[kept]
    cols = (rel_x + np.outer(ground_range, cos_b)) / map_.gsd
    rows = (rel_y + np.outer(ground_range, sin_b)) / map_.gsd
    values, inside = _bilinear(map_._unit_raster, cols, rows, spec.fill)

    data = np.full((size, size, 3), spec.fill)
    data[kept] = values
    return SphericalImage(data, truncated=bool(not np.all(inside)))


def _render_tilted(map_: OverheadMap, pose: Pose, spec: RenderSpec, kept: np.ndarray) -> SphericalImage:
    # perturbation path: full direction-vector ray cast, no fast yaw handling
    b = spec.band_limit
    size = spec.output_size
    theta = grid_colatitudes(b)[:, None]
    phi = grid_longitudes(b)[None, :]
    dx = np.sin(theta) * np.cos(phi)
    dy = np.sin(theta) * np.sin(phi) * np.ones_like(dx)
    dz = np.cos(theta) * np.ones_like(dx)
    cp, sp = np.cos(pose.pitch), np.sin(pose.pitch)
    dx, dz = cp * dx + sp * dz, -sp * dx + cp * dz
    cy, sy = np.cos(pose.yaw), np.sin(pose.yaw)
    dx, dy = cy * dx - sy * dy, sy * dx + cy * dy

    hits = dz < -1e-12
    scale = np.zeros_like(dz)
    scale[hits] = pose.altitude / -dz[hits]
    cols = (pose.x - map_.origin[0] + scale * dx) / map_.gsd
    rows = (pose.y - map_.origin[1] + scale * dy) / map_.gsd
    values, inside = _bilinear(map_._unit_raster, cols, rows, spec.fill)
    keep = hits & kept[:, None]
    data = np.full((size, size, 3), spec.fill)
    data[keep] = values[keep]
    return SphericalImage(data, truncated=bool(not np.all(inside[keep])))


def _render_pinhole(map_: OverheadMap, pose: Pose, spec: RenderSpec) -> SphericalImage:
    size = spec.output_size
    half = pose.altitude
    axis = (np.arange(size) + 0.5) * (2.0 * half / size) - half
    u = axis[None, :]  # along +x at yaw 0
    v = axis[:, None]  # along +y at yaw 0
    cy, sy = np.cos(pose.yaw), np.sin(pose.yaw)
    wx = pose.x - map_.origin[0] + cy * u - sy * v
    wy = pose.y - map_.origin[1] + sy * u + cy * v
    values, inside = _bilinear(map_._unit_raster, wx / map_.gsd, wy / map_.gsd, spec.fill)
    return SphericalImage(values, truncated=bool(not np.all(inside)))


# ---------------------------------------------------------------------------
# File formats: binary PPM (P6, maxval 255) raster + JSON sidecar.

def write_ppm(path: str | Path, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.dtype != np.uint8 or raster.ndim != 3 or raster.shape[2] != 3:
        raise InvalidInputError("PPM writer expects a (H, W, 3) uint8 raster")
    h, w = raster.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed; a single whitespace byte ends the header
    tokens, pos = [], 0
    while len(tokens) < 4:
        match = re.match(rb"(?:\s|#[^\n]*\n)*(\S+)", raw[pos:])
        if not match:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(match.group(1))
        pos += match.end()
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PPM header field") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}, expected 255")
    pixels = raw[pos + 1:]
    if len(pixels) < w * h * 3:
        raise FormatError(f"{path}: expected {w * h * 3} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels[: w * h * 3], dtype=np.uint8).reshape(h, w, 3).copy()


def write_sidecar(path: str | Path, map_: OverheadMap) -> None:
    payload = {
        "gsd_m_per_px": map_.gsd,
        "origin_x_m": map_.origin[0],
        "origin_y_m": map_.origin[1],
        "crs_note": map_.crs_note,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_sidecar(path: str | Path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: sidecar is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: sidecar must be a JSON object")
    for fieldname in SIDECAR_FIELDS:
        if fieldname not in payload:
            raise FormatError(f"{path}: sidecar missing field {fieldname!r}")
    return payload


def load_map(raster_path: str | Path, sidecar_path: str | Path) -> OverheadMap:
    raster = read_ppm(raster_path)
    meta = read_sidecar(sidecar_path)
    return OverheadMap(
        raster=raster,
        gsd=meta["gsd_m_per_px"],
        origin=(meta["origin_x_m"], meta["origin_y_m"]),
        crs_note=str(meta["crs_note"]),
    )


def save_map(map_: OverheadMap, raster_path: str | Path, sidecar_path: str | Path) -> None:
    write_ppm(raster_path, map_.raster)
    write_sidecar(sidecar_path, map_)
