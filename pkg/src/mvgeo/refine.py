"""Direct 7DoF pose refinement against the multi-view reprojection term.

Optimizes a single vehicle's pose so its clamped reprojections agree with
the matched 2D boxes across views (the geometric consistency objective).
The focal term needs a detector heatmap and is deliberately excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .association import MultiViewAnnotation
from .box3d import Pose7DoF
from .camera import Camera, wrap_angle
from .errors import NonDifferentiablePoint, NoUsableViews
from .mvloss import loss_gradient, reprojection_giou_term

DIM_BOUNDS = (0.5, 30.0)
Z_BOUNDS = (0.0, 5.0)
_STALL_LIMIT = 20

GRADIENT_DESCENT = "gradient-descent-with-backtracking"
NELDER_MEAD = "nelder-mead"

# Initial Nelder-Mead simplex offsets per parameter (m / rad); yaw gets a
# 5 degree vertex.
_SIMPLEX_STEPS = np.array([1.0, 1.0, 0.3, 0.3, 0.3, 0.3, math.radians(5.0)])


@dataclass(frozen=True)
class RefineConfig:
    max_iters: int = 200
    term_tol: float = 1e-8
    step_tol: float = 1e-6
    optimizer: str = NELDER_MEAD
    translation_scale: float = 1.0
    angle_scale: float = 1.0
    # Final term above this triggers the yaw-scan escalation round (the
    # noiseless objective is exactly 0 at a consistent pose, so a larger
    # value signals a local minimum worth escaping).
    escalation_threshold: float = 1e-4
    record_trajectory: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.term_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.optimizer not in (GRADIENT_DESCENT, NELDER_MEAD):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class RefineResult:
    pose: Pose7DoF
    initial_term: float
    final_term: float
    iterations: int
    converged: bool
    trajectory: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.final_term > self.initial_term + 1e-12:
            raise ValueError("refinement must not worsen the objective")

    def to_dict(self) -> dict:
        return {
            "initial_term": self.initial_term,
            "final_term": self.final_term,
            "iterations": self.iterations,
            "converged": self.converged,
            "trajectory": list(self.trajectory),
        }


def _params(pose: Pose7DoF) -> np.ndarray:
    return np.array([pose.x, pose.y, pose.z, pose.l, pose.w, pose.h, pose.yaw])


def _clip_params(params: np.ndarray) -> np.ndarray:
    out = params.copy()
    out[2] = min(max(out[2], Z_BOUNDS[0]), Z_BOUNDS[1])
    out[3:6] = np.clip(out[3:6], DIM_BOUNDS[0], DIM_BOUNDS[1])
    out[6] = wrap_angle(out[6])
    return out


def _pose(params: np.ndarray) -> Pose7DoF:
    p = _clip_params(params)
    return Pose7DoF(x=p[0], y=p[1], z=p[2], l=p[3], w=p[4], h=p[5], yaw=p[6])


def _make_objective(cameras, annotation, exclude_camera):
    def objective(params: np.ndarray) -> float:
        try:
            term, _, _ = reprojection_giou_term(
                cameras, _pose(params), annotation, exclude_camera)
        except NoUsableViews:
            return 2.0          # worst possible value of mean(1 - GIoU)
        return term
    return objective


def refine_pose(cameras: dict[str, Camera], init: Pose7DoF,
                annotation: MultiViewAnnotation,
                cfg: RefineConfig = RefineConfig(),
                exclude_camera: str | None = None) -> RefineResult:
    """Minimize the reprojection GIoU term over the 7 pose parameters.

    Dimensions are kept in [0.5, 30] m and z in [0, 5] m by projection; yaw
    wraps on the circle. Accepted steps never increase the term. Raises
    NoUsableViews when the initial pose cannot be scored at all.
    """
    objective = _make_objective(cameras, annotation, exclude_camera)
    # Scoring the init raises NoUsableViews out of the refinement proper.
    reprojection_giou_term(cameras, init, annotation, exclude_camera)
    init = _pose(_params(init))          # project the start into bounds
    initial_term = objective(_params(init))

    if initial_term <= cfg.term_tol:
        return RefineResult(pose=init, initial_term=initial_term,
                            final_term=initial_term, iterations=0,
                            converged=True,
                            trajectory=(initial_term,) if cfg.record_trajectory else ())

    if cfg.optimizer == NELDER_MEAD:
        return _refine_nelder_mead(objective, init, initial_term, cfg)
    return _refine_gradient_descent(objective, cameras, init, annotation,
                                    exclude_camera, initial_term, cfg)


def _refine_nelder_mead(objective, init: Pose7DoF, initial_term: float,
                        cfg: RefineConfig) -> RefineResult:
    """Staged Nelder-Mead.

    Stage A holds the dimensions fixed and solves (x, y, z, yaw); stage B
    polishes all seven parameters. Freezing the dimensions first avoids the
    shallow valley where width trades off against yaw under near-symmetric
    rigs. If the result is still above the escalation threshold, a wide yaw
    line-scan restarts both stages from the most promising heading.
    """
    x0 = _params(init)
    dims = x0[3:6].copy()
    scale = np.ones(7)
    scale[:6] *= cfg.translation_scale
    scale[6] *= cfg.angle_scale
    full_steps = _SIMPLEX_STEPS * scale
    pose_steps = full_steps[[0, 1, 2, 6]]
    state = {"iterations": 0, "last_success": False}
    trajectory = [initial_term]

    def record(value: float) -> None:
        trajectory.append(min(value, trajectory[-1]))

    def run(func, x, steps):
        simplex = np.vstack([x, x + np.diag(steps)])
        result = minimize(
            func, x, method="Nelder-Mead",
            options={"maxiter": cfg.max_iters, "fatol": cfg.term_tol,
                     "xatol": cfg.step_tol, "initial_simplex": simplex,
                     "adaptive": True})
        state["iterations"] += result.nit
        state["last_success"] = bool(result.success)
        return result

    def pose_only(q):
        return objective(np.concatenate([q[:3], dims, q[3:4]]))

    def solve_from(x_start) -> tuple[float, np.ndarray]:
        stage_a = run(pose_only, x_start[[0, 1, 2, 6]], pose_steps)
        x_mid = np.concatenate([stage_a.x[:3], dims, stage_a.x[3:4]])
        record(float(stage_a.fun))
        if objective(x_start) < stage_a.fun:
            x_mid = x_start
        stage_b = run(objective, x_mid, full_steps)
        record(float(stage_b.fun))
        return float(stage_b.fun), stage_b.x

    best_val, x = solve_from(x0)
    if best_val > initial_term:
        best_val, x = initial_term, x0

    if best_val > max(cfg.escalation_threshold, cfg.term_tol):
        deltas = np.radians(np.linspace(-60.0, 60.0, 41))
        scan = [pose_only(np.concatenate([x[:3], [x[6] + d]])) for d in deltas]
        x_scan = x.copy()
        x_scan[3:6] = dims
        x_scan[6] += deltas[int(np.argmin(scan))]
        value, candidate = solve_from(x_scan)
        if value < best_val:
            best_val, x = value, candidate

    converged = state["last_success"] or best_val <= cfg.term_tol
    return RefineResult(
        pose=_pose(x), initial_term=initial_term, final_term=best_val,
        iterations=state["iterations"], converged=converged,
        trajectory=tuple(trajectory) if cfg.record_trajectory else ())


def _refine_gradient_descent(objective, cameras, init: Pose7DoF, annotation,
                             exclude_camera, initial_term: float,
                             cfg: RefineConfig) -> RefineResult:
    x = _params(init)
    value = initial_term
    trajectory = [value]
    step_scales = np.array([cfg.translation_scale] * 6 + [cfg.angle_scale])
    stalls = 0
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iters + 1):
        try:
            grad = loss_gradient(cameras, _pose(x), annotation, exclude_camera)
        except NonDifferentiablePoint:
            break
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < 1e-12:
            converged = True
            break
        step = 1.0
        accepted = False
        direction = -grad * step_scales
        for _ in range(30):
            candidate = _clip_params(x + step * direction)
            cand_val = objective(candidate)
            if cand_val <= value - 1e-4 * step * grad_norm ** 2 * min(step_scales):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            stalls += 1
            if stalls >= _STALL_LIMIT:
                break
            continue
        stalls = 0
        step_norm = float(np.linalg.norm(candidate - x))
        x, value = candidate, cand_val
        trajectory.append(value)
        if value <= cfg.term_tol or step_norm <= cfg.step_tol:
            converged = True
            break

    return RefineResult(
        pose=_pose(x), initial_term=initial_term, final_term=value,
        iterations=iterations, converged=converged,
        trajectory=tuple(trajectory) if cfg.record_trajectory else ())
