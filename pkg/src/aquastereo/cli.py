"""``aquastereo`` command line.

Exit codes: 0 ok, 2 usage or config error, 3 file I/O error, 4 image size
mismatch, 5 solver failure (including a calibration that did not converge).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .calibration import FREE_NAMES, CalibrationProblem, calibrate, initial_board_poses
from .errors import (
    AquaStereoError,
    ConfigError,
    ConvergenceFailure,
    FileFormatError,
    ImageSizeMismatch,
    IndexOutOfPhysicalRange,
    SingularNormalEquations,
)
from .matcher import MatchParams, coverage, match_dense, to_point_cloud
from .optics import EnvironmentSample, water_refractive_index
from .search_domain import build_search_domain, epipolar_locus
from .simulator import NoiseSpec, SceneSpec, render_stereo_pair

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH, EXIT_SOLVER = 0, 2, 3, 4, 5

_FREE_ALIASES = {"tilt": "port_tilt"}


class UsageError(Exception):
    pass


def _pixel(text):
    try:
        u, v = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected U,V, got {text!r}") from None
    return u, v


def _cmd_simulate(args):
    cfg = formats.load_config(args.config)
    scene = cfg.scene or SceneSpec()
    noise = cfg.noise or NoiseSpec()
    if args.noise_seed is not None:
        noise = NoiseSpec(noise.pixel_sigma, noise.intensity_sigma, args.noise_seed)
    try:
        pair = render_stereo_pair(cfg.rig, scene, noise)
    except ValueError as exc:
        raise ConfigError(str(exc), args.config) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_pgm(out / "left.pgm", pair.left)
    formats.write_pgm(out / "right.pgm", pair.right)
    formats.write_pfm(out / "truth.pfm", pair.truth.depth)
    formats.write_truth_match(out / "truth_match.csv", pair.truth_match)
    h, w = pair.left.shape
    valid = pair.truth.depth[pair.truth.valid]
    lo, hi = (float(valid.min()), float(valid.max())) if valid.size else (0.0, 0.0)
    meta = [
        f"width = {w}",
        f"height = {h}",
        f"scene = {scene.kind}",
        f"noise_seed = {noise.seed}",
        f"intensity_sigma = {noise.intensity_sigma!r}",
        f"valid_depth = {valid.size}",
        f"depth_min = {lo!r}",
        f"depth_max = {hi!r}",
    ]
    (out / "scene_meta.txt").write_text("\n".join(meta) + "\n")
    print(f"wrote {out}/{{left.pgm,right.pgm,truth.pfm,truth_match.csv,scene_meta.txt}}")
    return EXIT_OK


def _cmd_match(args):
    if not args.zmin < args.zmax or args.zmin <= 0:
        raise UsageError(f"need 0 < --zmin < --zmax, got {args.zmin} and {args.zmax}")
    try:
        params = MatchParams(args.window, args.metric, args.K, args.r, args.threshold, args.lr)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rig = formats.load_config(args.rig).rig
    left = formats.read_pgm(args.left, normalize=True)
    right = formats.read_pgm(args.right, normalize=True)
    depth, _ = match_dense(rig, left, right, args.zmin, args.zmax, params)
    formats.write_pfm(args.out, depth.depth)
    if args.cloud:
        formats.write_ply(args.cloud, to_point_cloud(rig, depth, left))
    valid = int(np.count_nonzero(depth.valid))
    gap = float(np.median(depth.residual[depth.valid])) if valid else float("nan")
    print(f"valid={valid} coverage={100.0 * coverage(depth, args.window):.2f}% median_gap={gap:.3g}")
    return EXIT_OK


def _free_set(text):
    free = {"board_poses"}
    for name in filter(None, (s.strip() for s in text.split(","))):
        name = _FREE_ALIASES.get(name, name)
        if name not in FREE_NAMES:
            raise UsageError(
                f"unknown --free name {name!r}; choose from port_offset,tilt,thickness,n_water"
            )
        free.add(name)
    return free


def _cmd_calibrate(args):
    free = _free_set(args.free)
    rig = formats.load_config(args.rig).rig
    obs = formats.read_observations(args.obs)
    if not obs:
        raise ConfigError("no observations", args.obs)
    try:
        poses = initial_board_poses(rig, obs)
    except ValueError as exc:
        # too few corners in a view to seed its pose: the problem is under-determined
        raise SingularNormalEquations(str(exc)) from None
    report = calibrate(CalibrationProblem(rig, obs, poses, free))
    formats.save_config(args.out, report.rig)
    print(f"rms_px={report.rms_px:.6g} iters={report.iterations} "
          f"converged={str(report.converged).lower()}")
    return EXIT_OK if report.converged else EXIT_SOLVER


def _cmd_search_domain(args):
    if not args.zmin < args.zmax or args.zmin <= 0:
        raise UsageError(f"need 0 < --zmin < --zmax, got {args.zmin} and {args.zmax}")
    if args.K < 2 or args.r < 0:
        raise UsageError("--K must be >= 2 and --r >= 0")
    rig = formats.load_config(args.rig).rig
    intr = rig.camera(args.camera).intrinsics
    if not intr.in_bounds(*args.pixel):
        raise UsageError(f"pixel {args.pixel} outside the {intr.width}x{intr.height} image")
    locus = epipolar_locus(rig, args.camera, args.pixel, args.zmin, args.zmax, args.K)
    domain = build_search_domain(locus, args.r)
    formats.write_search_domain(args.out, locus, domain)
    print(f"samples={len(locus.depths)} intervals={domain.rows.shape[0]} area={domain.size}")
    return EXIT_OK


def _cmd_env(args):
    cfg = formats.load_config(args.rig)
    try:
        env = EnvironmentSample(args.temperature, args.salinity, args.depth, args.wavelength)
        n = water_refractive_index(env, cfg.rig.index_coefficients)
    except (ValueError, IndexOutOfPhysicalRange) as exc:
        raise UsageError(str(exc)) from None
    print(f"n_water={n!r}")
    if args.apply:
        if not args.out:
            raise UsageError("--apply needs --out")
        formats.save_config(args.out, cfg.rig.with_media(n_water=n), cfg.scene, cfg.noise)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="aquastereo", description="Flat-port underwater stereo.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic stereo pair with ground truth")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--noise-seed", type=int)
    s.set_defaults(func=_cmd_simulate)

    m = sub.add_parser("match", help="dense refractive matching to a depth map")
    m.add_argument("--rig", required=True)
    m.add_argument("--left", required=True)
    m.add_argument("--right", required=True)
    m.add_argument("--zmin", type=float, required=True)
    m.add_argument("--zmax", type=float, required=True)
    m.add_argument("--window", type=int, default=11)
    m.add_argument("--metric", choices=("zncc", "sad"), default="zncc")
    m.add_argument("--K", type=int, default=32)
    m.add_argument("--r", type=int, default=2)
    m.add_argument("--threshold", type=float, default=0.7)
    m.add_argument("--lr", type=float, default=1.0)
    m.add_argument("--out", required=True)
    m.add_argument("--cloud")
    m.set_defaults(func=_cmd_match)

    c = sub.add_parser("calibrate", help="refine housing parameters from corner observations")
    c.add_argument("--rig", required=True)
    c.add_argument("--obs", required=True)
    c.add_argument("--free", default="port_offset,thickness,n_water")
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_calibrate)

    d = sub.add_parser("search-domain", help="export a refracted locus and its search domain")
    d.add_argument("--rig", required=True)
    d.add_argument("--camera", choices=("L", "R"), required=True)
    d.add_argument("--pixel", type=_pixel, required=True)
    d.add_argument("--zmin", type=float, required=True)
    d.add_argument("--zmax", type=float, required=True)
    d.add_argument("--K", type=int, default=32)
    d.add_argument("--r", type=int, default=2)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_search_domain)

    e = sub.add_parser("env", help="water index for an environment sample")
    e.add_argument("--rig", required=True)
    e.add_argument("--temperature", type=float, required=True)
    e.add_argument("--salinity", type=float, required=True)
    e.add_argument("--depth", type=float, required=True)
    e.add_argument("--wavelength", type=float, required=True)
    e.add_argument("--apply", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=_cmd_env)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ImageSizeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SingularNormalEquations, ConvergenceFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AquaStereoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
