import csv
import json
import math

import numpy as np
import pytest

from sphereloc.cli import main
from sphereloc.evaluation import QUERY_DUMP_COLUMNS, REPORT_COLUMNS
from sphereloc.projection import OverheadMap, save_map


@pytest.fixture(scope="module")
def world_files(tmp_path_factory):
    """One small synthetic world written through the CLI itself."""
    prefix = str(tmp_path_factory.mktemp("world") / "w")
    rc = main(["synth", "--extent", "240,160", "--landmarks", "4",
               "--seed", "5", "--out", prefix])
    assert rc == 0
    return prefix + ".ppm", prefix + ".json"


@pytest.fixture(scope="module")
def view_pair(world_files, tmp_path_factory):
    """Two renders at the same spot, yaw 0 and yaw pi/2."""
    raster, sidecar = world_files
    out_dir = tmp_path_factory.mktemp("views")
    paths = []
    for name, yaw in (("a.ppm", 0.0), ("b.ppm", math.pi / 2.0)):
        out = str(out_dir / name)
        rc = main(["render", "--map", raster, "--sidecar", sidecar,
                   "--pose", f"120,80,40,{yaw}", "--band-limit", "32", "--out", out])
        assert rc == 0
        paths.append(out)
    return paths


def run_json(capsys, argv):
    rc = main(argv)
    out = capsys.readouterr().out
    return rc, json.loads(out)


def localize_args(world_files, *extra):
    raster, sidecar = world_files
    return ["localize", "--map", raster, "--sidecar", sidecar,
            "--band-limit", "16", "--seed", "0", *extra]


class TestSynth:
    def test_outputs_and_summary(self, world_files, capsys, tmp_path):
        prefix = str(tmp_path / "again")
        rc, summary = run_json(capsys, ["synth", "--extent", "240,160",
                                        "--landmarks", "4", "--seed", "5",
                                        "--out", prefix])
        assert rc == 0
        assert summary["extent_m"] == [240.0, 160.0]
        with open(world_files[0], "rb") as a, open(summary["raster"], "rb") as b:
            assert a.read() == b.read()
        assert (json.loads(open(world_files[1]).read())
                == json.loads(open(summary["sidecar"]).read()))

    def test_different_seed_changes_raster(self, world_files, tmp_path, capsys):
        prefix = str(tmp_path / "other")
        rc = main(["synth", "--extent", "240,160", "--landmarks", "4",
                   "--seed", "6", "--out", prefix])
        capsys.readouterr()
        assert rc == 0
        with open(world_files[0], "rb") as a, open(prefix + ".ppm", "rb") as b:
            assert a.read() != b.read()

    def test_invalid_extent_exits_2(self, tmp_path, capsys):
        rc = main(["synth", "--extent=-100,50", "--out", str(tmp_path / "bad")])
        assert rc == 2
        assert capsys.readouterr().err.strip()

    def test_garbled_extent_exits_2(self, tmp_path, capsys):
        rc = main(["synth", "--extent", "wide", "--out", str(tmp_path / "bad")])
        capsys.readouterr()
        assert rc == 2


class TestRender:
    def test_uniform_map_renders_uniform(self, tmp_path, capsys):
        flat = OverheadMap(raster=np.full((120, 120, 3), 128, dtype=np.uint8), gsd=1.0)
        save_map(flat, tmp_path / "flat.ppm", tmp_path / "flat.json")
        out = str(tmp_path / "view.ppm")
        rc = main(["render", "--map", str(tmp_path / "flat.ppm"),
                   "--sidecar", str(tmp_path / "flat.json"),
                   "--pose", "60,60,30", "--band-limit", "16", "--out", out])
        capsys.readouterr()
        assert rc == 0
        with open(out, "rb") as handle:
            handle.readline(), handle.readline(), handle.readline()
            assert set(handle.read()) == {128}

    def test_altitude_changes_footprint(self, world_files, tmp_path, capsys):
        raster, sidecar = world_files
        outs = []
        for alt in (15, 45):
            out = str(tmp_path / f"v{alt}.ppm")
            rc = main(["render", "--map", raster, "--sidecar", sidecar,
                       "--pose", f"120,80,{alt}", "--band-limit", "16", "--out", out])
            assert rc == 0
            outs.append(out)
        capsys.readouterr()
        with open(outs[0], "rb") as a, open(outs[1], "rb") as b:
            assert a.read() != b.read()

    def test_out_of_map_pose_exits_2(self, world_files, capsys, tmp_path):
        raster, sidecar = world_files
        rc = main(["render", "--map", raster, "--sidecar", sidecar,
                   "--pose", "-500,80,40", "--out", str(tmp_path / "v.ppm")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestOrient:
    def test_identical_inputs_give_zero_yaw(self, view_pair, capsys):
        rc, result = run_json(capsys, ["orient", "--query", view_pair[0],
                                       "--reference", view_pair[0]])
        assert rc == 0
        assert set(result) == {"yaw_deg", "confidence"}
        assert abs(result["yaw_deg"]) < 1e-6
        assert 0.0 <= result["confidence"] <= 1.0

    def test_quarter_turn_pair(self, view_pair, capsys):
        rc, result = run_json(capsys, ["orient", "--query", view_pair[1],
                                       "--reference", view_pair[0]])
        assert rc == 0
        grid_step_deg = 360.0 / 64.0
        assert abs(abs(result["yaw_deg"]) - 90.0) <= grid_step_deg

    def test_out_file_matches_stdout(self, view_pair, capsys, tmp_path):
        out = tmp_path / "yaw.json"
        rc, result = run_json(capsys, ["orient", "--query", view_pair[0],
                                       "--reference", view_pair[1],
                                       "--out", str(out)])
        assert rc == 0
        assert json.loads(out.read_text()) == result


class TestLocalize:
    def test_single_pose_success(self, world_files, capsys):
        rc, result = run_json(capsys, localize_args(
            world_files, "--pose", "120,80,40,0.2", "--method", "hier"))
        assert rc == 0
        assert result["success"] and not result["diverged"]
        assert result["dist_m"] <= result["threshold_m"]
        assert result["n_descriptor_evals"] > 0
        assert set(result) >= {"method", "estimate_m", "yaw_rad", "dist_m",
                               "success", "diverged", "n_descriptor_evals"}

    def test_brute_and_hier_agree_within_a_cell(self, world_files, capsys):
        estimates = {}
        for method in ("hier", "brute"):
            rc, result = run_json(capsys, localize_args(
                world_files, "--pose", "120,80,40,0.2", "--method", method))
            assert rc == 0 and result["success"]
            estimates[method] = result["estimate_m"]
        cell = 40.0 * (1.0 - 0.65)
        dx = estimates["hier"][0] - estimates["brute"][0]
        dy = estimates["hier"][1] - estimates["brute"][1]
        assert math.hypot(dx, dy) <= cell * math.sqrt(2.0)

    def test_seed_fixes_output(self, world_files, capsys):
        texts = []
        for _ in range(2):
            rc = main(localize_args(world_files, "--pose", "90,60,40", "--seed", "3"))
            assert rc == 0
            texts.append(capsys.readouterr().out)
        assert texts[0] == texts[1]

    def test_trace_export(self, world_files, capsys, tmp_path):
        trace_path = tmp_path / "trace.jsonl"
        rc = main(localize_args(world_files, "--pose", "120,80,40",
                                "--trace-out", str(trace_path)))
        capsys.readouterr()
        assert rc == 0
        records = [json.loads(line) for line in trace_path.read_text().splitlines()]
        assert [r["level"] for r in records] == [0, 1, 2]
        assert all(set(r) == {"level", "altitude", "n_eff", "n_evals", "particles"}
                   for r in records)

    def test_unsuccessful_run_still_exits_0(self, world_files, capsys):
        rc, result = run_json(capsys, localize_args(
            world_files, "--pose", "120,80,40", "--threshold", "0.001"))
        assert rc == 0
        assert result["success"] is False

    def test_trajectory_mode(self, world_files, capsys, tmp_path):
        traj = tmp_path / "traj.csv"
        traj.write_text("timestamp_s,x_m,y_m,altitude_m,yaw_rad\n"
                        "0.0,90.0,60.0,40.0,0.0\n1.0,120.0,80.0,40.0,0.1\n")
        rc, results = run_json(capsys, localize_args(
            world_files, "--trajectory", str(traj), "--backend", "power-spectrum"))
        assert rc == 0
        assert len(results) == 2
        assert all("estimate_m" in r and "diverged" in r for r in results)

    def test_pose_and_trajectory_are_exclusive(self, world_files, capsys):
        rc = main(localize_args(world_files, "--pose", "1,1,40",
                                "--trajectory", "x.csv"))
        assert rc == 2
        assert capsys.readouterr().err.strip()
        assert main(localize_args(world_files)) == 2
        capsys.readouterr()

    def test_bad_config_exits_2(self, world_files, capsys):
        rc = main(localize_args(world_files, "--pose", "1,1,40", "--cull", "0.5"))
        capsys.readouterr()
        assert rc == 2

    def test_internal_invariant_exits_3(self, world_files, capsys, monkeypatch):
        from sphereloc.errors import ContractError

        def broken(*args, **kwargs):
            raise ContractError("weights lost normalization")

        monkeypatch.setattr("sphereloc.cli.localize_hierarchical", broken)
        rc = main(localize_args(world_files, "--pose", "120,80,40"))
        capsys.readouterr()
        assert rc == 3


@pytest.fixture(scope="module")
def traj_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("bench") / "traj.csv"
    path.write_text("timestamp_s,x_m,y_m,altitude_m,yaw_rad\n"
                    "0.0,70.0,60.0,40.0,0.0\n2.0,170.0,100.0,40.0,0.2\n")
    return str(path)


class TestBenchmark:
    def test_report_and_dump(self, world_files, traj_file, capsys, tmp_path):
        raster, sidecar = world_files
        report = tmp_path / "report.csv"
        dump = tmp_path / "dump.csv"
        rc, rows = run_json(capsys, [
            "benchmark", "--map", raster, "--sidecar", sidecar,
            "--trajectory", traj_file, "--backend", "power-spectrum",
            "--band-limit", "16", "--out", str(report), "--format", "csv",
            "--dump", str(dump),
        ])
        assert rc == 0
        assert len(rows) == 6
        evals = {r["method"]: r["mean_evals"] for r in rows}
        assert evals["hier"] < evals["brute"]
        with open(report, newline="") as handle:
            reader = csv.DictReader(handle)
            assert reader.fieldnames == list(REPORT_COLUMNS)
            assert len(list(reader)) == 6
        with open(dump, newline="") as handle:
            assert tuple(next(csv.reader(handle))) == QUERY_DUMP_COLUMNS

    def test_json_report(self, world_files, traj_file, capsys, tmp_path):
        raster, sidecar = world_files
        report = tmp_path / "report.json"
        rc, rows = run_json(capsys, [
            "benchmark", "--map", raster, "--sidecar", sidecar,
            "--trajectory", traj_file, "--backend", "power-spectrum",
            "--band-limit", "16", "--out", str(report), "--format", "json",
        ])
        assert rc == 0
        assert json.loads(report.read_text()) == rows

    def test_bad_trajectory_exits_2(self, world_files, capsys, tmp_path):
        raster, sidecar = world_files
        bad = tmp_path / "bad.csv"
        bad.write_text("time,x,y\n1,2,3\n")
        rc = main(["benchmark", "--map", raster, "--sidecar", sidecar,
                   "--trajectory", str(bad)])
        capsys.readouterr()
        assert rc == 2


class TestArgumentHandling:
    def test_unknown_flag_rejected(self, capsys):
        rc = main(["synth", "--out", "x", "--frobnicate", "1"])
        capsys.readouterr()
        assert rc == 2

    def test_missing_subcommand(self, capsys):
        rc = main([])
        capsys.readouterr()
        assert rc == 2

    def test_missing_required_flag(self, capsys):
        rc = main(["render", "--pose", "1,1,40"])
        capsys.readouterr()
        assert rc == 2

    def test_help_exits_0(self, capsys):
        rc = main(["--help"])
        capsys.readouterr()
        assert rc == 0

    def test_missing_map_file_exits_2(self, capsys, tmp_path):
        rc = main(["render", "--map", str(tmp_path / "absent.ppm"),
                   "--sidecar", str(tmp_path / "absent.json"),
                   "--pose", "1,1,40", "--out", str(tmp_path / "v.ppm")])
        capsys.readouterr()
        assert rc == 2
