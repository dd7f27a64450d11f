"""Trajectory ingestion and the retrieval/benchmark harness, end to end.

Writes a short flight as CSV, ingests it against a synthetic map, scores
recall and ROC, and compares hierarchical vs brute-force localization:

    python3 demos/benchmark.py
"""

import tempfile
from pathlib import Path

from sphereloc import (
    DescriptorCache,
    PipelineConfig,
    SyntheticWorldSpec,
    generate_world,
    ingest_trajectory,
    recall_at_n,
    roc_curve,
    run_benchmark,
)

FLIGHT = """\
timestamp_s,x_m,y_m,altitude_m,yaw_rad
0.0,80.0,80.0,40.0,0.0
3.0,200.0,150.0,40.0,0.3
6.0,320.0,200.0,40.0,0.1
"""


def main():
    world = generate_world(SyntheticWorldSpec(extent_m=(400.0, 300.0),
                                              landmark_count=6, seed=3))
    cfg = PipelineConfig(rng_seed=0)
    cache = DescriptorCache()

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "flight.csv"
        path.write_text(FLIGHT)
        qs = ingest_trajectory(path, world, cfg, cache=cache)

    print(f"{len(qs.queries)} queries at 1 Hz, {len(qs.references)} reference cells")
    for n in (1, 3, 5):
        print(f"recall@{n}: {recall_at_n(qs, n, cfg):.2f}")
    for threshold, (fpr, tpr) in zip((0.5, 0.9),
                                     roc_curve(qs, [0.5, 0.9], cfg)):
        print(f"roc @ sim>={threshold}: fpr {fpr:.2f}, tpr {tpr:.2f}")

    rows = run_benchmark(world, qs, cfg, cache=cache)
    print(f"{'method':>7} {'acc':>5} {'success':>8} {'mean s':>8} {'evals':>7}")
    for row in rows:
        print(f"{row['method']:>7} {row['acc_threshold']:5.1f} "
              f"{row['success_rate']:8.2f} {row['mean_time_s']:8.3f} "
              f"{row['mean_evals']:7.0f}")


if __name__ == "__main__":
    main()
