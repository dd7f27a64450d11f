"""Retrieval metrics, trajectory ingestion, and the localization benchmark.

A QuerySet pairs rendered query views (with their ground-truth poses)
against a reference index of descriptors at known poses. recall_at_n and
roc_curve score the retrieval side; run_benchmark times the hierarchical
and brute-force localizers over the same queries and emits a small report
table. Trajectories arrive as CSV (one header line, columns timestamp_s,
x_m, y_m, altitude_m, yaw_rad) and are resampled to a fixed rate before
rendering.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .descriptor import PlaceDescriptor, extract_descriptor, similarity
from .errors import ConfigError, FormatError, InvalidInputError
from .localizer import (
    DescriptorCache,
    PipelineConfig,
    localize_bruteforce,
    localize_hierarchical,
)
from .orientation import estimate_yaw
from .projection import OverheadMap, Pose, render_view
from .sphere import wrap_angle
from .world import SyntheticWorldSpec, generate_world  # noqa: F401  (re-export)

TRAJECTORY_HEADER = ("timestamp_s", "x_m", "y_m", "altitude_m", "yaw_rad")
REPORT_COLUMNS = ("method", "acc_threshold", "success_rate", "mean_time_s", "mean_evals")
QUERY_DUMP_COLUMNS = ("query_id", "best_match_id", "similarity", "dist_m", "yaw_err_rad")
DEFAULT_ACC_THRESHOLDS = (0.9, 0.8, 0.7)


@dataclass(frozen=True, eq=False)
class QuerySet:
    """Rendered queries with ground truth, against a reference index."""

    queries: tuple
    references: tuple
    threshold_m: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "references", tuple(self.references))
        if not self.queries or not self.references:
            raise InvalidInputError("query set needs at least one query and one reference")
        if self.threshold_m <= 0.0:
            raise ConfigError(f"threshold_m must be positive, got {self.threshold_m}")


def build_reference_index(map_: OverheadMap, altitude: float,
                          cfg: PipelineConfig | None = None,
                          cache: DescriptorCache | None = None) -> tuple:
    """Descriptors on the brute-force lattice at one altitude, as
    (descriptor, pose) pairs ordered row-major from the map origin. Cells
    whose footprint leaves the raster are skipped."""
    from .localizer import _descriptor_at, _lattice

    cfg = cfg or PipelineConfig()
    spacing = altitude * (1.0 - cfg.hierarchy.r_olp)
    m1, m2 = map_.extent_m
    count = math.ceil(m1 * m2 / spacing ** 2)
    if count > cfg.hierarchy.particle_cap:
        raise ConfigError(f"reference lattice of {count} cells exceeds cap")
    points = _lattice(map_.origin, map_.extent_m, count)
    refs = []
    for x, y in points:
        desc = _descriptor_at(map_, float(x), float(y), altitude, cfg, cache)
        if desc is not None:
            refs.append((desc, Pose(float(x), float(y), altitude)))
    return tuple(refs)


def _similarity_table(qs: QuerySet, cfg: PipelineConfig) -> np.ndarray:
    """(n_queries, n_references) cosine similarities."""
    ref_descs = [d for d, _ in qs.references]
    table = np.empty((len(qs.queries), len(ref_descs)))
    for i, (view, _) in enumerate(qs.queries):
        q = extract_descriptor(view, cfg.descriptor)
        table[i] = [similarity(q, r) for r in ref_descs]
    return table


def _within_threshold(qs: QuerySet, query_idx: int, ref_idx: int) -> bool:
    gt = qs.queries[query_idx][1]
    ref_pose = qs.references[ref_idx][1]
    return math.hypot(ref_pose.x - gt.x, ref_pose.y - gt.y) <= qs.threshold_m


def recall_at_n(qs: QuerySet, n: int, cfg: PipelineConfig | None = None) -> float:
    """Fraction of queries whose n most-similar references include one
    within threshold_m of the ground-truth pose."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    cfg = cfg or PipelineConfig()
    table = _similarity_table(qs, cfg)
    hits = 0
    for i in range(len(qs.queries)):
        top = np.argsort(-table[i], kind="stable")[:n]
        hits += any(_within_threshold(qs, i, int(j)) for j in top)
    return hits / len(qs.queries)


def roc_curve(qs: QuerySet, thresholds: Sequence[float],
              cfg: PipelineConfig | None = None) -> list[tuple[float, float]]:
    """(fpr, tpr) per similarity threshold for the top-1 classifier.

    A query's label is whether its most-similar reference lies within
    threshold_m of ground truth; the classifier accepts when the top-1
    similarity reaches the threshold. Empty classes contribute rate 0."""
    if list(thresholds) != sorted(thresholds):
        raise InvalidInputError("thresholds must be sorted ascending")
    cfg = cfg or PipelineConfig()
    table = _similarity_table(qs, cfg)
    best = np.argmax(table, axis=1)
    scores = table[np.arange(len(best)), best]
    labels = np.array([_within_threshold(qs, i, int(j)) for i, j in enumerate(best)])
    points = []
    for t in thresholds:
        accepted = scores >= t
        tp = int(np.sum(accepted & labels))
        fp = int(np.sum(accepted & ~labels))
        pos = int(labels.sum())
        neg = len(labels) - pos
        tpr = tp / pos if pos else 0.0
        fpr = fp / neg if neg else 0.0
        points.append((fpr, tpr))
    return points


def _parse_float(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise FormatError(f"line {line_no}: {token!r} is not a number") from exc


def read_trajectory(path: str | Path) -> np.ndarray:
    """Rows (timestamp, x, y, altitude, yaw) from the CSV; strictly
    increasing timestamps enforced."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("trajectory file is empty") from None
        if tuple(h.strip() for h in header) != TRAJECTORY_HEADER:
            raise FormatError(
                f"expected header {','.join(TRAJECTORY_HEADER)}, got {','.join(header)}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRAJECTORY_HEADER):
                raise FormatError(f"line {line_no}: expected {len(TRAJECTORY_HEADER)} fields")
            rows.append([_parse_float(tok, line_no) for tok in row])
    if not rows:
        raise FormatError("trajectory has no data rows")
    data = np.array(rows)
    if np.any(np.diff(data[:, 0]) <= 0.0):
        raise FormatError("timestamps must be strictly increasing")
    return data


def interpolate_trajectory(data: np.ndarray, rate_hz: float = 1.0) -> list[Pose]:
    """Linear resample to a fixed rate, endpoints inclusive; yaw follows the
    shortest arc so paths crossing the +-pi seam stay continuous."""
    if rate_hz <= 0.0:
        raise ConfigError("rate_hz must be positive")
    t = data[:, 0]
    span = t[-1] - t[0]
    count = int(math.floor(span * rate_hz + 1e-9)) + 1
    samples = t[0] + np.arange(count) / rate_hz
    xs = np.interp(samples, t, data[:, 1])
    ys = np.interp(samples, t, data[:, 2])
    alts = np.interp(samples, t, data[:, 3])
    yaw_steps = np.concatenate([[data[0, 4]], np.cumsum([
        wrap_angle(b - a) for a, b in zip(data[:-1, 4], data[1:, 4])
    ]) + data[0, 4]])
    yaws = np.interp(samples, t, yaw_steps)
    return [Pose(float(x), float(y), float(a), yaw=float(wrap_angle(w)))
            for x, y, a, w in zip(xs, ys, alts, yaws)]


def ingest_trajectory(path: str | Path, map_: OverheadMap,
                      cfg: PipelineConfig | None = None, rate_hz: float = 1.0,
                      threshold_m: float | None = None,
                      cache: DescriptorCache | None = None) -> QuerySet:
    """Parse, resample, and render a trajectory into a QuerySet.

    The reference index is built at the median query altitude, on the same
    lattice the brute-force localizer scans."""
    cfg = cfg or PipelineConfig()
    poses = interpolate_trajectory(read_trajectory(path), rate_hz)
    queries = tuple((render_view(map_, pose, cfg.render), pose) for pose in poses)
    ref_altitude = float(np.median([p.altitude for p in poses]))
    references = build_reference_index(map_, ref_altitude, cfg, cache)
    return QuerySet(queries=queries, references=references,
                    threshold_m=cfg.threshold_m if threshold_m is None else threshold_m)


def _match_confidence(map_: OverheadMap, estimate: tuple[float, float], altitude: float,
                      query_desc: PlaceDescriptor, cfg: PipelineConfig,
                      cache: DescriptorCache | None) -> float:
    from .localizer import _descriptor_at

    desc = _descriptor_at(map_, estimate[0], estimate[1], altitude, cfg, cache)
    if desc is None:
        return 0.0
    return max(0.0, similarity(desc, query_desc))


def run_benchmark(map_: OverheadMap, qs: QuerySet, cfg: PipelineConfig | None = None,
                  acc_thresholds: Sequence[float] = DEFAULT_ACC_THRESHOLDS,
                  cache: DescriptorCache | None = None) -> list[dict]:
    """Hierarchical vs brute-force over the query poses.

    Per query and method this re-renders the per-level views at the stored
    ground-truth pose, localizes, and scores the match confidence as the
    similarity between the query and the map rendered at the estimate. A
    localization counts as a success at acceptance level a when it lands
    within threshold_m and its confidence reaches a, so stricter acceptance
    can only lower the rate. Rows follow REPORT_COLUMNS."""
    cfg = cfg or PipelineConfig()
    h = cfg.hierarchy
    cache = cache if cache is not None else DescriptorCache()
    fine_alt = h.altitude(h.l_max - 1)
    outcomes = {"hier": [], "brute": []}
    times = {"hier": [], "brute": []}
    evals = {"hier": [], "brute": []}
    for view, pose in qs.queries:
        gt = (pose.x, pose.y)
        views = [render_view(map_, Pose(pose.x, pose.y, h.altitude(l), yaw=pose.yaw),
                             cfg.render) for l in range(h.l_max)]
        query_desc = extract_descriptor(views[-1], cfg.descriptor)
        for method in ("hier", "brute"):
            start = time.perf_counter()
            if method == "hier":
                res = localize_hierarchical(map_, views, cfg, ground_truth=gt, cache=cache)
            else:
                res = localize_bruteforce(map_, views[-1], fine_alt, cfg,
                                          ground_truth=gt, cache=cache)
            times[method].append(time.perf_counter() - start)
            evals[method].append(res.n_descriptor_evals)
            conf = _match_confidence(map_, res.estimate, fine_alt, query_desc, cfg, cache)
            dist = math.hypot(res.estimate[0] - gt[0], res.estimate[1] - gt[1])
            outcomes[method].append((dist <= qs.threshold_m, conf))
    rows = []
    for method in ("hier", "brute"):
        for acc in acc_thresholds:
            ok = [within and conf >= acc for within, conf in outcomes[method]]
            rows.append({
                "method": method,
                "acc_threshold": acc,
                "success_rate": sum(ok) / len(ok),
                "mean_time_s": float(np.mean(times[method])),
                "mean_evals": float(np.mean(evals[method])),
            })
    return rows


def write_report(rows: Sequence[dict], path: str | Path, fmt: str = "csv") -> None:
    """Benchmark rows to CSV (exact REPORT_COLUMNS order) or JSON."""
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in REPORT_COLUMNS})
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as handle:
            json.dump([{k: row[k] for k in REPORT_COLUMNS} for row in rows], handle, indent=2)
            handle.write("\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}, expected csv or json")


def export_query_dump(map_: OverheadMap, qs: QuerySet, path: str | Path,
                      cfg: PipelineConfig | None = None) -> None:
    """Per-query retrieval CSV: top-1 reference, its similarity, its
    distance to ground truth, and the yaw error of aligning the query to it.
    recall@1 and the ROC curve are recomputable from these rows."""
    cfg = cfg or PipelineConfig()
    table = _similarity_table(qs, cfg)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(QUERY_DUMP_COLUMNS)
        for i, (view, gt) in enumerate(qs.queries):
            j = int(np.argmax(table[i]))
            ref_pose = qs.references[j][1]
            dist = math.hypot(ref_pose.x - gt.x, ref_pose.y - gt.y)
            ref_view = render_view(map_, ref_pose, cfg.render)
            est = wrap_angle(-estimate_yaw(view, ref_view).yaw)
            yaw_err = abs(wrap_angle(est - wrap_angle(gt.yaw - ref_pose.yaw)))
            writer.writerow([i, j, repr(float(table[i, j])), repr(dist), repr(yaw_err)])
