"""Recover the relative yaw between two spherical views by correlation.

Renders the same spot twice, once heading east and once turned by a random
angle, then estimates the turn from image content alone:

    python3 demos/yaw_recovery.py
"""

import numpy as np

from sphereloc import (
    Pose,
    RenderSpec,
    SyntheticWorldSpec,
    estimate_yaw,
    generate_world,
    render_view,
    wrap_angle,
)


def main():
    world = generate_world(SyntheticWorldSpec(extent_m=(400.0, 300.0),
                                              landmark_count=6, seed=3))
    spec = RenderSpec(output_size=128)
    rng = np.random.default_rng(12)

    print(f"{'true turn':>12} {'estimated':>12} {'error':>10} {'confidence':>11}")
    for _ in range(5):
        x = rng.uniform(100.0, 300.0)
        y = rng.uniform(80.0, 220.0)
        theta = wrap_angle(rng.normal(0.0, np.pi / 2.0))
        reference = render_view(world, Pose(x, y, 40.0), spec)
        query = render_view(world, Pose(x, y, 40.0, yaw=theta), spec)
        est = estimate_yaw(query, reference)
        recovered = wrap_angle(-est.yaw)  # heading turn rolls content backward
        err = abs(wrap_angle(recovered - theta))
        print(f"{np.degrees(theta):+11.2f}d {np.degrees(recovered):+11.2f}d "
              f"{np.degrees(err):9.4f}d {est.confidence:11.3f}")


if __name__ == "__main__":
    main()
