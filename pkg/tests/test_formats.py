import numpy as np
import pytest

from aquastereo import formats
from aquastereo.errors import ConfigError, FileFormatError
from aquastereo.matcher import PointCloud
from aquastereo.search_domain import build_search_domain, epipolar_locus
from aquastereo.simulator import NoiseSpec, SceneSpec, board_grid, default_board_poses, synthesize_corners


def test_pgm_8bit_and_16bit(tmp_path, rng):
    a = rng.integers(0, 256, size=(7, 9)).astype(np.uint8)
    formats.write_pgm(tmp_path / "a.pgm", a)
    assert np.array_equal(formats.read_pgm(tmp_path / "a.pgm"), a)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5")
    b = rng.integers(0, 65536, size=(5, 4)).astype(np.uint16)
    formats.write_pgm(tmp_path / "b.pgm", b)
    assert np.array_equal(formats.read_pgm(tmp_path / "b.pgm"), b)
    f = rng.uniform(size=(6, 6))
    formats.write_pgm(tmp_path / "f.pgm", f)
    back = formats.read_pgm(tmp_path / "f.pgm", normalize=True)
    assert np.max(np.abs(back - f)) <= 0.5 / 65535 + 1e-12


def test_pgm_rejects_garbage(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(FileFormatError):
        formats.read_pgm(tmp_path / "x.pgm")
    (tmp_path / "y.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(FileFormatError):
        formats.read_pgm(tmp_path / "y.pgm")


def test_pfm_roundtrip(tmp_path, rng):
    d = rng.uniform(1, 3, size=(5, 8))
    d[0, 0] = 0.0
    d[2, 3] = np.nan
    formats.write_pfm(tmp_path / "d.pfm", d)
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n8 5\n-1")
    back = formats.read_pfm(tmp_path / "d.pfm")
    assert back.dtype == np.float32 and back.shape == (5, 8)
    assert back[2, 3] == 0.0 and back[0, 0] == 0.0
    assert np.allclose(back[1:], np.nan_to_num(d[1:]).astype(np.float32))


def test_ply_roundtrip(tmp_path):
    cloud = PointCloud(np.array([[0.1, -0.2, 2.5], [1.0, 2.0, 3.0]]), np.array([0.5, 0.25]),
                       np.array([1e-4, 0.0]))
    formats.write_ply(tmp_path / "c.ply", cloud)
    text = (tmp_path / "c.ply").read_text()
    assert text.startswith("ply\nformat ascii 1.0\n") and "element vertex 2" in text
    back = formats.read_ply(tmp_path / "c.ply")
    assert np.allclose(back.points, cloud.points, rtol=1e-9)
    assert np.allclose(back.intensity, cloud.intensity) and np.allclose(back.gap, cloud.gap)
    formats.write_ply(tmp_path / "e.ply", PointCloud())
    assert len(formats.read_ply(tmp_path / "e.ply")) == 0


def test_config_roundtrip_is_exact(tmp_path, water_rig):
    scene = SceneSpec(cell_size=0.02, plane_translation=[0.1, 0.0, 2.5])
    noise = NoiseSpec(0.1, 0.01, 77)
    formats.save_config(tmp_path / "rig.cfg", water_rig, scene, noise)
    cfg = formats.load_config(tmp_path / "rig.cfg")
    assert cfg.rig == water_rig
    assert cfg.noise == noise
    assert cfg.scene.cell_size == 0.02 and np.array_equal(cfg.scene.plane_translation, [0.1, 0.0, 2.5])
    assert formats.format_config(cfg.rig, cfg.scene, cfg.noise) == formats.format_config(water_rig, scene, noise)


def test_config_errors_carry_line_numbers(water_rig):
    text = formats.format_config(water_rig).splitlines()
    k = text.index("[port]")
    bad = text[: k + 1] + ["fz = 3"] + text[k + 1 :]
    with pytest.raises(ConfigError) as info:
        formats.parse_config("\n".join(bad), "rig.cfg")
    assert info.value.line == k + 2 and "fz" in str(info.value) and "rig.cfg:" in str(info.value)
    with pytest.raises(ConfigError):
        formats.parse_config("\n".join(text + ["[camera3]"]))
    with pytest.raises(ConfigError):
        formats.parse_config("\n".join(t.replace("thickness = 0.01", "thickness = -1") for t in text))
    with pytest.raises(ConfigError):
        formats.parse_config("\n".join(t for t in text if not t.startswith("fx")))
    with pytest.raises(ConfigError):
        formats.parse_config("\n".join(t.replace("width = 320", "width = wide") for t in text))


def test_observation_csv_roundtrip(tmp_path, water_rig):
    obs = synthesize_corners(water_rig, default_board_poses(), board_grid(4, 5, 0.05))
    formats.write_observations(tmp_path / "o.csv", obs)
    assert formats.read_observations(tmp_path / "o.csv") == obs
    (tmp_path / "bad.csv").write_text("view,cam\n")
    with pytest.raises(ConfigError):
        formats.read_observations(tmp_path / "bad.csv")


def test_truth_match_and_domain_csv(tmp_path, water_rig, rng):
    tm = np.full((4, 5, 2), np.nan)
    tm[1, 2] = (10.25, 3.5)
    tm[3, 0] = (0.125, 1.0)
    formats.write_truth_match(tmp_path / "t.csv", tm)
    assert np.array_equal(formats.read_truth_match(tmp_path / "t.csv", 5, 4), tm, equal_nan=True)

    locus = epipolar_locus(water_rig, "left", (160, 120), 1.0, 4.0, 8)
    dom = build_search_domain(locus, 1)
    formats.write_search_domain(tmp_path / "d.csv", locus, dom)
    samples, rows = formats.read_search_domain(tmp_path / "d.csv")
    assert samples.shape == (8, 4) and np.array_equal(rows, dom.rows)
