import subprocess
import sys

import numpy as np
import pytest

from aquastereo import formats
from aquastereo.cli import EXIT_IO, EXIT_MISMATCH, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main
from aquastereo.rigs import rectified_rig, standard_rig
from aquastereo.simulator import NoiseSpec, SceneSpec, board_grid, default_board_poses, synthesize_corners


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rig = standard_rig(64, 48)
    formats.save_config(d / "rig.cfg", rig, SceneSpec(cell_size=0.04), NoiseSpec(intensity_sigma=0.005, seed=3))
    assert main(["simulate", "--config", str(d / "rig.cfg"), "--out", str(d / "sim")]) == EXIT_OK
    return d, rig


def run(*args):
    return main([str(a) for a in args])


def test_simulate_outputs_and_determinism(work, tmp_path):
    d, rig = work
    names = ("left.pgm", "right.pgm", "truth.pfm", "truth_match.csv", "scene_meta.txt")
    assert run("simulate", "--config", d / "rig.cfg", "--out", tmp_path) == EXIT_OK
    for n in names:
        assert (tmp_path / n).read_bytes() == (d / "sim" / n).read_bytes()
    meta = (tmp_path / "scene_meta.txt").read_text()
    assert "width = 64" in meta and "noise_seed = 3" in meta
    assert run("simulate", "--config", d / "rig.cfg", "--out", tmp_path / "b", "--noise-seed", 4) == EXIT_OK
    assert (tmp_path / "b" / "left.pgm").read_bytes() != (d / "sim" / "left.pgm").read_bytes()


def test_match(work, tmp_path, capsys):
    d, _ = work
    s = d / "sim"
    code = run("match", "--rig", d / "rig.cfg", "--left", s / "left.pgm", "--right", s / "right.pgm",
               "--zmin", 1.2, "--zmax", 4.0, "--window", 7, "--out", tmp_path / "d.pfm",
               "--cloud", tmp_path / "c.ply")
    assert code == EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("valid=") and "coverage=" in line and "median_gap=" in line
    depth = formats.read_pfm(tmp_path / "d.pfm")
    truth = formats.read_pfm(s / "truth.pfm")
    ok = depth > 0
    assert ok.sum() > 1000 and np.median(np.abs(depth[ok] - truth[ok])) < 0.05
    assert len(formats.read_ply(tmp_path / "c.ply")) == ok.sum()
    code = run("match", "--rig", d / "rig.cfg", "--left", s / "left.pgm", "--right", s / "right.pgm",
               "--zmin", 1.2, "--zmax", 4.0, "--window", 7, "--metric", "sad", "--threshold", 0.1,
               "--out", tmp_path / "sad.pfm")
    assert code == EXIT_OK


def test_match_usage_errors(work, tmp_path):
    d, _ = work
    s = d / "sim"
    base = ["match", "--rig", d / "rig.cfg", "--left", s / "left.pgm", "--right", s / "right.pgm",
            "--out", tmp_path / "x.pfm"]
    assert run(*base, "--zmin", 3, "--zmax", 3) == EXIT_USAGE
    assert run(*base, "--zmin", 1, "--zmax", 3, "--window", 6) == EXIT_USAGE
    assert run(*base[:6], tmp_path / "missing.pgm", *base[7:], "--zmin", 1, "--zmax", 3) == EXIT_IO
    small = np.zeros((48, 63), dtype=np.uint8)
    formats.write_pgm(tmp_path / "small.pgm", small)
    assert run(*base[:6], tmp_path / "small.pgm", *base[7:], "--zmin", 1, "--zmax", 3) == EXIT_MISMATCH
    with pytest.raises(SystemExit) as info:
        run("match", "--rig", d / "rig.cfg")
    assert info.value.code == EXIT_USAGE


def test_search_domain(work, tmp_path):
    d, _ = work
    out = tmp_path / "dom.csv"
    assert run("search-domain", "--rig", d / "rig.cfg", "--camera", "L", "--pixel", "30,20",
               "--zmin", 1, "--zmax", 4, "--K", 2, "--out", out) == EXIT_OK
    samples, rows = formats.read_search_domain(out)
    assert samples.shape[0] == 2 and rows.shape[0] > 0
    assert run("search-domain", "--rig", d / "rig.cfg", "--camera", "L", "--pixel", "30,20",
               "--zmin", 4, "--zmax", 1, "--out", out) == EXIT_USAGE
    assert run("search-domain", "--rig", d / "rig.cfg", "--camera", "R", "--pixel", "300,20",
               "--zmin", 1, "--zmax", 4, "--out", out) == EXIT_USAGE


def test_search_domain_rectified_rows_are_constant(tmp_path):
    formats.save_config(tmp_path / "rect.cfg", rectified_rig())
    out = tmp_path / "dom.csv"
    assert run("search-domain", "--rig", tmp_path / "rect.cfg", "--camera", "L", "--pixel", "200,100",
               "--zmin", 1, "--zmax", 10, "--K", 8, "--r", 0, "--out", out) == EXIT_OK
    samples, rows = formats.read_search_domain(out)
    assert np.allclose(samples[:, 2], 100.0, atol=1e-9)
    assert set(rows[:, 0]) == {100}


def test_calibrate(tmp_path, capsys):
    rig = standard_rig()
    poses, pts = default_board_poses(), board_grid(4, 5, 0.05)
    formats.write_observations(tmp_path / "obs.csv", synthesize_corners(rig, poses, pts))
    formats.save_config(tmp_path / "start.cfg", rig.with_media(n_water=1.34))
    code = run("calibrate", "--rig", tmp_path / "start.cfg", "--obs", tmp_path / "obs.csv",
               "--free", "n_water", "--out", tmp_path / "out.cfg")
    assert code == EXIT_OK
    assert "converged=true" in capsys.readouterr().out
    assert formats.load_config(tmp_path / "out.cfg").rig.media.n_water == pytest.approx(1.33, abs=1e-9)
    assert run("calibrate", "--rig", tmp_path / "start.cfg", "--obs", tmp_path / "obs.csv",
               "--free", "focal", "--out", tmp_path / "x.cfg") == EXIT_USAGE

    few = [o for o in synthesize_corners(rig, poses, pts) if o.view_id == 0][:3]
    formats.write_observations(tmp_path / "few.csv", few)
    assert run("calibrate", "--rig", tmp_path / "start.cfg", "--obs", tmp_path / "few.csv",
               "--out", tmp_path / "x.cfg") == EXIT_SOLVER


def test_env(tmp_path, capsys):
    rig = standard_rig()
    formats.save_config(tmp_path / "rig.cfg", rig)
    args = ["env", "--rig", tmp_path / "rig.cfg", "--temperature", 20, "--salinity", 35,
            "--depth", 0, "--wavelength", 589.3]
    assert run(*args) == EXIT_OK
    n = float(capsys.readouterr().out.strip().split("=")[1])
    assert abs(n - 1.3393) < 1e-3
    assert run(*args, "--apply") == EXIT_USAGE
    assert run(*args, "--apply", "--out", tmp_path / "new.cfg") == EXIT_OK
    new = formats.load_config(tmp_path / "new.cfg").rig
    assert new.media.n_water == n
    assert new == rig.with_media(n_water=n)
    assert run("env", "--rig", tmp_path / "rig.cfg", "--temperature", 200, "--salinity", 35,
               "--depth", 0, "--wavelength", 589.3) == EXIT_USAGE


def test_bad_config_exit_code(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("[left]\nfz = 1\n")
    assert run("env", "--rig", tmp_path / "bad.cfg", "--temperature", 20, "--salinity", 35,
               "--depth", 0, "--wavelength", 589.3) == EXIT_USAGE
    assert "bad.cfg:2" in capsys.readouterr().err


def test_module_entry_point(work):
    d, _ = work
    p = subprocess.run([sys.executable, "-m", "aquastereo", "env", "--rig", str(d / "rig.cfg"),
                        "--temperature", "10", "--salinity", "0", "--depth", "0",
                        "--wavelength", "550"], capture_output=True, text=True)
    assert p.returncode == 0 and p.stdout.startswith("n_water=")
