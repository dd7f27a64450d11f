"""Global re-localization on an overhead map by coarse-to-fine particle
filtering, plus a single-level brute-force baseline.

The search starts with a lattice of particles whose spacing matches the view
footprint at the highest altitude of a geometric schedule (alpha * H1 down
to H1 over l_max levels). Each level renders a view at every particle,
weighs particles by descriptor similarity against that level's query view,
then culls the lowest-weight tail and systematic-resamples the survivors
with position jitter before descending. Descriptors are yaw-invariant, so
particles carry position only; the winning match's yaw is recovered
afterwards by harmonic correlation.

Weighing is embarrassingly parallel over particles: set SPHERELOC_THREADS
to a worker count to fan renders and descriptor extraction out over a
thread pool (collection order, and therefore every result, stays
deterministic).
"""

from __future__ import annotations

import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .descriptor import (
    DescriptorConfig,
    PlaceDescriptor,
    extract_descriptor,
    similarity,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    InvalidInputError,
    OutOfBoundsError,
)
from .orientation import estimate_yaw
from .projection import MATCHING_CAP_DEG, OverheadMap, Pose, RenderSpec, render_view
from .sphere import SphericalImage, wrap_angle

DEFAULT_THRESHOLD_M = 20.0


@dataclass(frozen=True)
class HierarchyConfig:
    """Coarse-to-fine schedule and particle-filter knobs.

    weight_floor is the evidence cutoff: a clamped cosine below it reads as
    noise, not as a weak match, and contributes weight 0. When every
    particle falls below the floor the level has no evidence at all and the
    set re-seeds uniform with the divergence flag raised. neff_threshold is
    an absolute effective-particle count; a finest-level posterior whose
    effective sample size never exceeds it has collapsed onto a single
    hypothesis and is likewise flagged."""

    alpha: float = 3.0
    l_max: int = 3
    base_altitude: float = 40.0
    r_olp: float = 0.65
    keep_fraction: float = 0.8
    cull_fraction: float = 0.2
    neff_threshold: float = 1.5
    weight_floor: float = 0.1
    max_iters_per_level: int = 1
    particle_cap: int = 1_000_000

    def __post_init__(self) -> None:
        if self.alpha <= 1.0:
            raise ConfigError(f"alpha must exceed 1, got {self.alpha}")
        if self.l_max < 1:
            raise ConfigError(f"l_max must be >= 1, got {self.l_max}")
        if self.base_altitude <= 0.0:
            raise ConfigError("base_altitude must be positive")
        if not 0.0 <= self.r_olp < 1.0:
            raise ConfigError(f"r_olp must be in [0, 1), got {self.r_olp}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if not 0.10 <= self.cull_fraction <= 0.30:
            raise ConfigError(
                f"cull_fraction must be in [0.10, 0.30], got {self.cull_fraction}"
            )
        if self.neff_threshold < 1.0:
            raise ConfigError("neff_threshold is an effective-particle count, >= 1")
        if not 0.0 <= self.weight_floor < 1.0:
            raise ConfigError(f"weight_floor must be in [0, 1), got {self.weight_floor}")
        if self.max_iters_per_level < 1:
            raise ConfigError("max_iters_per_level must be >= 1")
        if self.particle_cap < 1:
            raise ConfigError("particle_cap must be >= 1")

    def altitude(self, level: int) -> float:
        """Altitude of a level: geometric from alpha*H1 (level 0) down to H1
        (level l_max - 1); a single-level schedule flies at alpha*H1."""
        if not 0 <= level < self.l_max:
            raise InvalidInputError(f"level {level} outside [0, {self.l_max})")
        if self.l_max == 1:
            return self.alpha * self.base_altitude
        exponent = (self.l_max - 1 - level) / (self.l_max - 1)
        return self.base_altitude * self.alpha ** exponent


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a localization run needs besides the map and queries."""

    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    render: RenderSpec = field(
        default_factory=lambda: RenderSpec(output_size=64, cap_deg=MATCHING_CAP_DEG)
    )
    threshold_m: float = DEFAULT_THRESHOLD_M
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.threshold_m <= 0.0:
            raise ConfigError("threshold_m must be positive")


@dataclass(frozen=True)
class Particle:
    x: float
    y: float
    weight: float
    level: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.weight) and self.weight >= 0.0):
            raise InvalidInputError(f"particle weight must be finite and >= 0, got {self.weight}")
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidInputError("particle position must be finite")


@dataclass(frozen=True, eq=False)
class ParticleSet:
    particles: tuple[Particle, ...]
    normalized: bool = False
    rng_seed: int = 0
    step: int = 0
    diverged: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "particles", tuple(self.particles))
        if self.normalized:
            total = math.fsum(p.weight for p in self.particles)
            if abs(total - 1.0) > 1e-9:
                raise ContractError(f"normalized set sums to {total!r}, not 1")

    @property
    def count(self) -> int:
        return len(self.particles)

    def positions(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.particles], dtype=np.float64)

    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.particles], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """One weighing iteration: the set as it stood after normalization."""

    level: int
    altitude: float
    n_eff: float
    n_evals: int
    particles: np.ndarray  # (N, 3) columns x, y, weight


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    estimate: tuple[float, float]
    yaw: float
    n_descriptor_evals: int
    success: bool
    diverged: bool
    trace: tuple[TraceRecord, ...]


class DescriptorCache:
    """Memo for descriptors of (x, y, altitude) renders of one map.

    Reference views at fixed lattice positions repeat across queries, so a
    shared cache amortizes their rendering cost; keys quantize to a
    micrometer so only genuinely identical poses alias."""

    def __init__(self) -> None:
        self._store: dict = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._store)

    @staticmethod
    def key(x: float, y: float, altitude: float) -> tuple:
        return (round(float(x), 6), round(float(y), 6), round(float(altitude), 6))

    def get_or_compute(self, key: tuple, factory: Callable[[], object]):
        with self._lock:
            if key in self._store:
                return self._store[key]
        value = factory()
        with self._lock:
            self._store.setdefault(key, value)
        return value


def _lattice(origin: tuple[float, float], extent: tuple[float, float], count: int) -> np.ndarray:
    """count points on a uniform grid over the extent, row-major from the
    origin corner, aspect-matched so cells stay near square."""
    m1, m2 = extent
    nx = max(1, round(math.sqrt(count * m1 / max(m2, 1e-12))))
    ny = math.ceil(count / nx)
    xs = origin[0] + (np.arange(nx) + 0.5) * m1 / nx
    ys = origin[1] + (np.arange(ny) + 0.5) * m2 / ny
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    return grid[:count]


def _initial_count(map_: OverheadMap, cfg: HierarchyConfig) -> int:
    m1, m2 = map_.extent_m
    spacing = cfg.alpha * cfg.base_altitude * (1.0 - cfg.r_olp)
    return math.ceil(m1 * m2 / spacing ** 2)


def init_particles(map_: OverheadMap, cfg: HierarchyConfig, rng_seed: int = 0) -> ParticleSet:
    """Uniform-weight lattice sized so footprints at the coarsest altitude
    tile the map at the configured overlap."""
    count = _initial_count(map_, cfg)
    if count > cfg.particle_cap:
        raise ConfigError(
            f"initial particle count {count} exceeds cap {cfg.particle_cap}"
        )
    points = _lattice(map_.origin, map_.extent_m, count)
    weight = 1.0 / count
    particles = tuple(Particle(float(x), float(y), weight, 0) for x, y in points)
    return ParticleSet(particles=particles, normalized=True, rng_seed=rng_seed)


def _worker_count() -> int:
    raw = os.environ.get("SPHERELOC_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _descriptor_at(map_: OverheadMap, x: float, y: float, altitude: float,
                   cfg: PipelineConfig, cache: DescriptorCache | None) -> PlaceDescriptor | None:
    """Descriptor of the view at a position, or None when the position sees
    nothing usable (off-map footprint or signal-free view)."""

    def compute():
        try:
            view = render_view(map_, Pose(x, y, altitude), cfg.render)
            return extract_descriptor(view, cfg.descriptor)
        except (OutOfBoundsError, DegenerateInputError):
            return None

    if cache is None:
        return compute()
    return cache.get_or_compute(cache.key(x, y, altitude), compute)


def weigh_particles(ps: ParticleSet, query_desc: PlaceDescriptor, map_: OverheadMap,
                    cfg: PipelineConfig, level: int,
                    cache: DescriptorCache | None = None) -> ParticleSet:
    """Weight <- max(0, similarity to the query) at the level's altitude,
    then normalize. Similarities under the configured weight_floor count as
    no evidence; an all-zero outcome re-seeds uniform weights and marks the
    set diverged."""
    altitude = cfg.hierarchy.altitude(level)

    def score(particle: Particle) -> float:
        desc = _descriptor_at(map_, particle.x, particle.y, altitude, cfg, cache)
        if desc is None:
            return 0.0
        return max(0.0, similarity(desc, query_desc))

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = np.fromiter(pool.map(score, ps.particles), dtype=np.float64, count=ps.count)
    else:
        raw = np.fromiter((score(p) for p in ps.particles), dtype=np.float64, count=ps.count)

    raw[raw < cfg.hierarchy.weight_floor] = 0.0
    total = float(np.sum(raw))
    diverged = ps.diverged
    if total <= 0.0:
        raw = np.full(ps.count, 1.0 / ps.count)
        diverged = True
    else:
        raw = raw / total
    particles = tuple(
        Particle(p.x, p.y, float(w), level) for p, w in zip(ps.particles, raw)
    )
    return ParticleSet(particles=particles, normalized=True, rng_seed=ps.rng_seed,
                       step=ps.step, diverged=diverged)


def effective_sample_size(ps: ParticleSet) -> float:
    """1 / sum of squared normalized weights, in [1, N]."""
    if not ps.normalized:
        raise ContractError("effective sample size needs normalized weights")
    return float(1.0 / np.sum(ps.weights() ** 2))


def resample_and_descend(ps: ParticleSet, cfg: HierarchyConfig, level: int) -> ParticleSet:
    """Cull the lowest-weight tail, systematic-resample the survivors down
    to ceil(count * keep_fraction), jitter positions with sigma = a quarter
    of the next level's altitude, and step to that level."""
    if level >= cfg.l_max - 1:
        raise InvalidInputError(f"level {level} has no finer level to descend to")
    n = ps.count
    cull = int(math.floor(n * cfg.cull_fraction))
    target = int(math.ceil(n * cfg.keep_fraction))
    weights = ps.weights()
    order = np.argsort(weights, kind="stable")
    survivors = np.sort(order[cull:])
    surv_weights = weights[survivors]
    total = float(surv_weights.sum())
    if total <= 0.0:
        surv_weights = np.full(survivors.size, 1.0 / survivors.size)
    else:
        surv_weights = surv_weights / total

    rng = np.random.default_rng([ps.rng_seed, ps.step])
    picks = (np.arange(target) + rng.uniform()) / target
    cumulative = np.cumsum(surv_weights)
    cumulative[-1] = 1.0
    chosen = survivors[np.searchsorted(cumulative, picks)]

    positions = ps.positions()[chosen]
    new_altitude = cfg.altitude(level + 1)
    positions = positions + rng.normal(0.0, new_altitude / 4.0, size=positions.shape)

    weight = 1.0 / target
    particles = tuple(
        Particle(float(x), float(y), weight, level + 1) for x, y in positions
    )
    return ParticleSet(particles=particles, normalized=True, rng_seed=ps.rng_seed,
                       step=ps.step + 1, diverged=ps.diverged)


def _snapshot(ps: ParticleSet) -> np.ndarray:
    data = np.empty((ps.count, 3))
    data[:, :2] = ps.positions()
    data[:, 2] = ps.weights()
    return data


def _estimate_pose_yaw(map_: OverheadMap, estimate: tuple[float, float],
                       query_view: SphericalImage, altitude: float,
                       cfg: PipelineConfig) -> float:
    """Heading of the query view against the map's reference frame: a +yaw
    heading turn rolls the rendered content the opposite way, so the pose
    yaw is the negated image-domain estimate."""
    try:
        reference = render_view(map_, Pose(estimate[0], estimate[1], altitude), cfg.render)
        return wrap_angle(-estimate_yaw(query_view, reference).yaw)
    except (OutOfBoundsError, DegenerateInputError):
        return 0.0


def localize_hierarchical(map_: OverheadMap, query_views: Sequence[SphericalImage],
                          cfg: PipelineConfig | None = None,
                          ground_truth: tuple[float, float] | None = None,
                          cache: DescriptorCache | None = None) -> LocalizationResult:
    """Run the full coarse-to-fine search.

    query_views holds one view per level, widest footprint (highest
    altitude) first. The estimate is the weighted mean of the finest-level
    particles; success compares it against ground_truth at the configured
    distance threshold. The run is flagged diverged when weighing ever
    finds no evidence at all (every similarity under the weight floor) or
    when the finest-level effective sample size never exceeds
    neff_threshold, meaning the posterior collapsed onto one hypothesis."""
    cfg = cfg or PipelineConfig()
    h = cfg.hierarchy
    if len(query_views) != h.l_max:
        raise InvalidInputError(
            f"need {h.l_max} query views (one per level), got {len(query_views)}"
        )
    ps = init_particles(map_, h, rng_seed=cfg.rng_seed)
    trace: list[TraceRecord] = []
    evals = 0
    finest_converged = False
    for level in range(h.l_max):
        query_desc = extract_descriptor(query_views[level], cfg.descriptor)
        for _ in range(h.max_iters_per_level):
            ps = weigh_particles(ps, query_desc, map_, cfg, level, cache)
            evals += ps.count
            n_eff = effective_sample_size(ps)
            trace.append(TraceRecord(level, h.altitude(level), n_eff, evals, _snapshot(ps)))
            if level == h.l_max - 1 and n_eff > h.neff_threshold:
                finest_converged = True
        if level < h.l_max - 1:
            ps = resample_and_descend(ps, h, level)

    weights = ps.weights()
    positions = ps.positions()
    mean = weights @ positions
    estimate = (float(mean[0]), float(mean[1]))
    diverged = ps.diverged or not finest_converged
    success = False
    if ground_truth is not None:
        dist = math.hypot(estimate[0] - ground_truth[0], estimate[1] - ground_truth[1])
        success = dist <= cfg.threshold_m
    yaw = _estimate_pose_yaw(map_, estimate, query_views[-1], h.altitude(h.l_max - 1), cfg)
    return LocalizationResult(estimate=estimate, yaw=yaw, n_descriptor_evals=evals,
                              success=success, diverged=diverged, trace=tuple(trace))


def localize_bruteforce(map_: OverheadMap, query_view: SphericalImage, altitude: float,
                        cfg: PipelineConfig | None = None,
                        ground_truth: tuple[float, float] | None = None,
                        cache: DescriptorCache | None = None) -> LocalizationResult:
    """Evaluate every lattice cell at one altitude; the estimate is the best
    cell's center."""
    cfg = cfg or PipelineConfig()
    m1, m2 = map_.extent_m
    spacing = altitude * (1.0 - cfg.hierarchy.r_olp)
    count = math.ceil(m1 * m2 / spacing ** 2)
    if count > cfg.hierarchy.particle_cap:
        raise ConfigError(f"lattice of {count} cells exceeds cap {cfg.hierarchy.particle_cap}")
    points = _lattice(map_.origin, map_.extent_m, count)
    query_desc = extract_descriptor(query_view, cfg.descriptor)

    def score(point) -> float:
        desc = _descriptor_at(map_, float(point[0]), float(point[1]), altitude, cfg, cache)
        if desc is None:
            return 0.0
        return max(0.0, similarity(desc, query_desc))

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = np.fromiter(pool.map(score, points), dtype=np.float64, count=count)
    else:
        raw = np.fromiter((score(p) for p in points), dtype=np.float64, count=count)

    raw[raw < cfg.hierarchy.weight_floor] = 0.0
    best = int(np.argmax(raw))
    estimate = (float(points[best, 0]), float(points[best, 1]))
    total = float(raw.sum())
    norm = raw / total if total > 0.0 else np.full(count, 1.0 / count)
    snapshot = np.concatenate([points, norm[:, None]], axis=1)
    n_eff = float(1.0 / np.sum(norm ** 2))
    trace = (TraceRecord(0, altitude, n_eff, count, snapshot),)
    success = False
    if ground_truth is not None:
        dist = math.hypot(estimate[0] - ground_truth[0], estimate[1] - ground_truth[1])
        success = dist <= cfg.threshold_m
    yaw = _estimate_pose_yaw(map_, estimate, query_view, altitude, cfg)
    return LocalizationResult(estimate=estimate, yaw=yaw, n_descriptor_evals=count,
                              success=success, diverged=total <= 0.0, trace=trace)


def predicted_speedup(cfg: HierarchyConfig) -> float:
    """Analytic brute-force / hierarchical evaluation-count ratio: the
    coarse lattice is alpha^2 times sparser, and each descent keeps 0.8 of
    the previous count, giving alpha^2 / sum_{i<l_max} 0.8^i."""
    decay = sum(0.8 ** i for i in range(cfg.l_max))
    return cfg.alpha ** 2 / decay


def export_trace_jsonl(trace: Sequence[TraceRecord], path: str | Path) -> None:
    """One JSON object per weighing iteration: level, altitude, N_eff,
    cumulative eval count, and the particle array as [x, y, weight] rows."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in trace:
            handle.write(json.dumps({
                "level": record.level,
                "altitude": record.altitude,
                "n_eff": record.n_eff,
                "n_evals": record.n_evals,
                "particles": [[float(v) for v in row] for row in record.particles],
            }) + "\n")
