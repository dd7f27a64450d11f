"""Generate a synthetic world, render spherical views, compare descriptors.

Run from the repository root after installing the package:

    python3 demos/quickstart.py
"""

import numpy as np

from sphereloc import (
    DescriptorConfig,
    Pose,
    RenderSpec,
    SyntheticWorldSpec,
    extract_descriptor,
    generate_world,
    render_view,
    similarity,
)


def main():
    world = generate_world(SyntheticWorldSpec(extent_m=(400.0, 300.0),
                                              landmark_count=6, seed=3))
    print(f"world raster {world.raster.shape}, gsd {world.gsd} m/px")

    spec = RenderSpec(output_size=64, cap_deg=30.0)
    pose = Pose(200.0, 150.0, 40.0)
    for altitude in (40.0, 80.0, 120.0):
        view = render_view(world, Pose(pose.x, pose.y, altitude), spec)
        footprint = 2.0 * altitude * np.tan(np.deg2rad(60.0))
        print(f"altitude {altitude:5.0f} m -> grid {view.data.shape[:2]}, "
              f"footprint ~{footprint:.0f} m")

    cfg = DescriptorConfig()
    here = extract_descriptor(render_view(world, pose, spec), cfg)
    nearby = extract_descriptor(render_view(world, Pose(210.0, 150.0, 40.0), spec), cfg)
    far = extract_descriptor(render_view(world, Pose(80.0, 60.0, 40.0), spec), cfg)
    print(f"descriptor dim {here.dim}")
    print(f"similarity 10 m away:  {similarity(here, nearby):+.4f}")
    print(f"similarity 170 m away: {similarity(here, far):+.4f}")


if __name__ == "__main__":
    main()
