"""Housing calibration from underwater checkerboard corners.

In-air intrinsics and camera poses are taken as known. The solver refines the
port (offset, tilt, glass thickness), the water index and the board poses by
damped Gauss-Newton on refractive reprojection error, with central-difference
Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConvergenceFailure, SingularNormalEquations
from .geometry import PortPlane
from .optics import StereoRig
from .projection import NOT_CONVERGED, OK, back_project_batch, forward_project_batch

RIG_PARAMS = ("port_offset", "port_tilt", "thickness", "n_water")
FREE_NAMES = RIG_PARAMS + ("board_poses",)
_SIZES = {"port_offset": 1, "port_tilt": 2, "thickness": 1, "n_water": 1}

REL_STEP = 1e-7
ABS_STEP = 1e-9
# local rotation increments have zero value; their step is relative to 1 rad
ANGLE_SCALE = 1.0
CONDITION_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class BoardPose:
    """Board-to-world transform: ``x_world = rotation @ x_board + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def perturbed(self, rotvec, dt):
        r = Rotation.from_rotvec(rotvec).as_matrix() @ self.rotation
        return BoardPose(r, self.translation + dt)


@dataclass(frozen=True)
class CornerObservation:
    view_id: int
    camera: str
    board_point: tuple
    pixel: tuple

    def __post_init__(self):
        cam = {"L": "left", "R": "right"}.get(self.camera, self.camera)
        if cam not in ("left", "right"):
            raise ValueError(f"camera must be left/right (L/R), got {self.camera!r}")
        object.__setattr__(self, "camera", cam)
        bp = tuple(float(c) for c in self.board_point)
        if len(bp) != 3 or bp[2] != 0.0:
            raise ValueError("board points must lie on the z = 0 board plane")
        object.__setattr__(self, "board_point", bp)
        object.__setattr__(self, "pixel", tuple(float(c) for c in self.pixel))
        object.__setattr__(self, "view_id", int(self.view_id))


@dataclass(eq=False)
class CalibrationProblem:
    rig0: StereoRig
    observations: list
    board_poses0: list
    free_params: frozenset = frozenset({"port_offset", "thickness", "n_water", "board_poses"})

    def __post_init__(self):
        self.free_params = frozenset(self.free_params)
        unknown = self.free_params - set(FREE_NAMES)
        if unknown:
            raise ValueError(f"unknown free parameters: {sorted(unknown)}")
        views = {o.view_id for o in self.observations}
        if not self.board_poses0:
            raise ValueError("at least one board view is required")
        if views and max(views) >= len(self.board_poses0) or any(v < 0 for v in views):
            raise ValueError("observation view_id without a matching board pose")

    @property
    def parameter_count(self):
        n = sum(_SIZES[k] for k in RIG_PARAMS if k in self.free_params)
        if "board_poses" in self.free_params:
            n += 6 * len(self.board_poses0)
        return n


@dataclass(eq=False)
class CalibrationReport:
    rig: StereoRig
    board_poses: list
    rms_px: float
    initial_rms_px: float
    iterations: int
    converged: bool
    per_parameter_sigma: np.ndarray
    parameter_names: list
    cost_history: list = field(default_factory=list)


def reprojection_residuals(rig, board_poses, observations):
    """Refractive reprojection error, (u, v) per observation in observation order."""
    m = len(observations)
    res = np.zeros(2 * m)
    if m == 0:
        return res
    world = np.array([board_poses[o.view_id].apply(o.board_point) for o in observations])
    observed = np.array([o.pixel for o in observations])
    cams = np.array([o.camera for o in observations])
    for camera in ("left", "right"):
        idx = np.nonzero(cams == camera)[0]
        if idx.size == 0:
            continue
        uv, _, status = forward_project_batch(rig, camera, world[idx])
        bad = np.nonzero(status != OK)[0]
        if bad.size:
            first = int(idx[bad].min())
            code = int(status[np.searchsorted(idx, first)])
            if code == NOT_CONVERGED:
                raise ConvergenceFailure(f"observation {first}: projection did not converge", first)
            raise ValueError(f"observation {first}: board point cannot be projected (code {code})")
        r = uv - observed[idx]
        res[2 * idx] = r[:, 0]
        res[2 * idx + 1] = r[:, 1]
    return res


def rms(residuals):
    r = np.asarray(residuals)
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


def finite_difference_jacobian(fun, n_params, steps, scheme="central"):
    """Jacobian of ``fun(delta)`` at ``delta = 0`` with per-parameter ``steps``.

    A central column whose backward probe leaves the feasible set (for example
    a glass thickness pushed through zero) is taken one-sided instead.
    """
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown scheme {scheme!r}")
    f0 = fun(np.zeros(n_params)) if scheme == "forward" else None
    cols = []
    for j in range(n_params):
        e = np.zeros(n_params)
        e[j] = steps[j]
        if scheme == "forward":
            cols.append((fun(e) - f0) / steps[j])
            continue
        try:
            cols.append((fun(e) - fun(-e)) / (2.0 * steps[j]))
        except (ValueError, ConvergenceFailure):
            if f0 is None:
                f0 = fun(np.zeros(n_params))
            try:
                cols.append((fun(e) - f0) / steps[j])
            except (ValueError, ConvergenceFailure):
                cols.append((f0 - fun(-e)) / steps[j])
    return np.stack(cols, axis=1)


def _tilt_basis(normal):
    a = np.array([0.0, 1.0, 0.0]) if abs(normal[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = a - (a @ normal) * normal
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(normal, e1)


class _State:
    """Current rig and board poses plus the local increment parameterisation."""

    def __init__(self, rig, poses, free):
        self.rig, self.poses, self.free = rig, list(poses), free
        self.names = []
        for k in RIG_PARAMS:
            if k in free:
                self.names += [k] if _SIZES[k] == 1 else [f"{k}[{i}]" for i in range(_SIZES[k])]
        if "board_poses" in free:
            for v in range(len(poses)):
                self.names += [f"view{v}.rot{i}" for i in range(3)]
                self.names += [f"view{v}.t{i}" for i in range(3)]

    def scales(self):
        port, media = self.rig.port, self.rig.media
        out = []
        for k in RIG_PARAMS:
            if k not in self.free:
                continue
            if k == "port_offset":
                out.append(abs(port.inner_offset))
            elif k == "port_tilt":
                out += [ANGLE_SCALE, ANGLE_SCALE]
            elif k == "thickness":
                out.append(port.thickness)
            else:
                out.append(media.n_water)
        if "board_poses" in self.free:
            for p in self.poses:
                out += [ANGLE_SCALE] * 3 + list(np.abs(p.translation))
        return np.array(out)

    def moved(self, delta):
        delta = np.asarray(delta, dtype=np.float64)
        rig, i = self.rig, 0
        port, media = rig.port, rig.media
        normal, offset, thickness, n_water = port.normal, port.inner_offset, port.thickness, media.n_water
        for k in RIG_PARAMS:
            if k not in self.free:
                continue
            if k == "port_offset":
                offset = offset + delta[i]
            elif k == "port_tilt":
                e1, e2 = _tilt_basis(normal)
                rot = Rotation.from_rotvec(delta[i] * e1 + delta[i + 1] * e2).as_matrix()
                normal = rot @ normal
                normal = normal / np.linalg.norm(normal)
            elif k == "thickness":
                thickness = thickness + delta[i]
            else:
                n_water = n_water + delta[i]
            i += _SIZES[k]
        new_rig = rig
        if (normal is not port.normal or offset != port.inner_offset
                or thickness != port.thickness):
            new_rig = new_rig.replace(port=PortPlane(normal, offset, thickness))
        if n_water != media.n_water:
            new_rig = new_rig.with_media(n_water=n_water)
        poses = self.poses
        if "board_poses" in self.free:
            poses = [
                p.perturbed(delta[i + 6 * v : i + 6 * v + 3], delta[i + 6 * v + 3 : i + 6 * v + 6])
                for v, p in enumerate(self.poses)
            ]
        s = _State.__new__(_State)
        s.rig, s.poses, s.free, s.names = new_rig, poses, self.free, self.names
        return s


def _check_rank(jac):
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms <= 1e-12 * max(norms.max(), 1e-300)):
        dead = int(np.argmin(norms))
        raise SingularNormalEquations(f"parameter {dead} has no effect on the residuals")
    sv = np.linalg.svd(jac / norms, compute_uv=False)
    if sv[-1] <= sv[0] / CONDITION_LIMIT:
        raise SingularNormalEquations(
            f"normal equations are rank deficient (condition {sv[0] / sv[-1]:.3g})"
        )


def calibrate(problem: CalibrationProblem, max_iters=100, gradient_tol=1e-10, step_tol=1e-12,
              initial_damping=1e-3) -> CalibrationReport:
    """Minimise half the squared refractive reprojection error."""
    obs = problem.observations
    n_res = 2 * len(obs)
    n_par = problem.parameter_count
    if n_par == 0:
        raise ValueError("no free parameters")
    if n_res < n_par + 6:
        raise SingularNormalEquations(
            f"{n_res} residuals cannot determine {n_par} parameters (need >= {n_par + 6})"
        )

    state = _State(problem.rig0, problem.board_poses0, problem.free_params)
    # damping metric frozen at the start so a weak parameter cannot grow its own trust region
    sc = np.maximum(state.scales(), ABS_STEP)

    def residual_at(s):
        return reprojection_residuals(s.rig, s.poses, obs)

    r = residual_at(state)
    cost = 0.5 * float(r @ r)
    initial_rms = rms(r)
    history = [cost]
    lam = initial_damping
    converged = False
    iterations = 0
    jac = None
    while iterations < max_iters:
        iterations += 1
        steps = np.maximum(REL_STEP * state.scales(), ABS_STEP)
        jac = finite_difference_jacobian(lambda d: residual_at(state.moved(d)), n_par, steps)
        _check_rank(jac)
        grad = jac.T @ r
        if np.max(np.abs(grad)) < gradient_tol:
            converged = True
            break
        a = jac.T @ jac
        # isotropic damping in scale-normalised coordinates: weakly observed
        # parameters move only once the well-determined ones have settled
        diag = np.max(np.diag(a) * sc * sc) / (sc * sc)
        xnorm = float(np.linalg.norm(state.scales()))
        stepped = False
        while True:
            delta = np.linalg.solve(a + lam * np.diag(diag), -grad)
            if np.linalg.norm(delta) <= step_tol * (xnorm + step_tol):
                converged = True
                break
            try:
                trial = state.moved(delta)
                r_new = residual_at(trial)
                cost_new = 0.5 * float(r_new @ r_new)
            except (ConvergenceFailure, ValueError):
                cost_new = np.inf
            if cost_new <= cost:
                state, r, cost = trial, r_new, cost_new
                history.append(cost)
                lam = max(lam / 3.0, 1e-15)
                stepped = True
                break
            lam *= 10.0
            if lam > 1e20:
                break
        if converged or not stepped:
            converged = converged or lam > 1e20
            break

    sigma = np.full(n_par, np.nan)
    if jac is not None and n_res > n_par:
        try:
            cov = np.linalg.inv(jac.T @ jac) * (2.0 * cost / (n_res - n_par))
            sigma = np.sqrt(np.abs(np.diag(cov)))
        except np.linalg.LinAlgError:
            pass
    return CalibrationReport(
        rig=state.rig,
        board_poses=state.poses,
        rms_px=rms(r),
        initial_rms_px=initial_rms,
        iterations=iterations,
        converged=converged,
        per_parameter_sigma=sigma,
        parameter_names=list(state.names),
        cost_history=history,
    )


def _homography(src, dst):
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.asarray(rows, dtype=np.float64))
    return vt[-1].reshape(3, 3)


def initial_board_poses(rig, observations, n_views=None, refine=True):
    """Board pose guesses from a homography on water-ray directions.

    The refracted rays are treated as if they left the camera center, which is
    good enough to start the pose-only refinement that follows.
    """
    if n_views is None:
        n_views = max(o.view_id for o in observations) + 1
    poses = []
    for v in range(n_views):
        chosen = None
        for camera in ("left", "right"):
            sel = [o for o in observations if o.view_id == v and o.camera == camera]
            if len(sel) >= 4:
                chosen = camera, sel
                break
        if chosen is None:
            raise ValueError(f"view {v} has fewer than 4 corners in either camera")
        camera, sel = chosen
        cam = rig.camera(camera)
        _, dirs, ok = back_project_batch(rig, camera, np.array([o.pixel for o in sel]))
        local = dirs @ cam.pose.rotation.T
        norm_xy = local[:, :2] / local[:, 2:3]
        h = _homography([o.board_point[:2] for o in sel], norm_xy)
        scale = 1.0 / np.linalg.norm(h[:, 0])
        if (h[:, 2] * scale)[2] < 0:
            scale = -scale
        r1, r2, t = h[:, 0] * scale, h[:, 1] * scale, h[:, 2] * scale
        u, _, vt = np.linalg.svd(np.stack([r1, r2, np.cross(r1, r2)], axis=1))
        r_cam = u @ vt
        if np.linalg.det(r_cam) < 0:
            r_cam = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        rot = cam.pose.rotation.T @ r_cam
        trans = cam.pose.rotation.T @ (t - cam.pose.translation)
        poses.append(BoardPose(rot, trans))
    if refine:
        report = calibrate(
            CalibrationProblem(rig, observations, poses, frozenset({"board_poses"})),
            max_iters=50,
        )
        poses = report.board_poses
    return poses

