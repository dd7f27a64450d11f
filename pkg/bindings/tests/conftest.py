import json
import math
from pathlib import Path

import pytest

from sphereloc import read_ppm
from sphereloc.cli import main as cli_main

BAND = 32
POSE = (120.0, 80.0, 40.0)
YAWS = (0.0, math.pi / 4, math.pi / 2, math.pi)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Shared fixture corpus built entirely through the CLI: one synthetic
    map, one rendered view per yaw in YAWS at a fixed pose, and the CLI's
    own orientation report for each view against the yaw-0 reference."""
    root = tmp_path_factory.mktemp("corpus")
    prefix = root / "world"
    rc = cli_main(["synth", "--extent", "240,160", "--gsd", "1",
                   "--landmarks", "4", "--seed", "5", "--out", str(prefix)])
    assert rc == 0
    map_args = ["--map", str(prefix) + ".ppm", "--sidecar", str(prefix) + ".json"]

    views = {}
    for i, yaw in enumerate(YAWS):
        out = root / f"view_{i}.ppm"
        pose = f"{POSE[0]},{POSE[1]},{POSE[2]},{yaw}"
        rc = cli_main(["render", *map_args, "--pose", pose,
                       "--band-limit", str(BAND), "--out", str(out)])
        assert rc == 0
        views[yaw] = read_ppm(out).astype(float) / 255.0

    orient = {}
    for i, yaw in enumerate(YAWS[1:], start=1):
        out = root / f"orient_{i}.json"
        rc = cli_main(["orient", "--query", str(root / f"view_{i}.ppm"),
                       "--reference", str(root / "view_0.ppm"), "--out", str(out)])
        assert rc == 0
        orient[yaw] = json.loads(Path(out).read_text())

    return {"views": views, "orient": orient, "yaws": YAWS}
