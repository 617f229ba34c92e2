"""Bundled benchmark systems: the actuated bouncing ball and the planar
collision-resilient multicopter."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    HYBRID_TIME,
    CostFunctional,
    HybridArc,
    HybridSystemDef,
    MotionPlanProblem,
    ProjectedSet,
)
from .simulation import InputLibrary, box_sampler

# membership slack for closed sets and for "on the surface" conditions
SET_TOL = 1e-9
CONTACT_TOL = 1e-6


def _point_set(x0, tol=SET_TOL) -> ProjectedSet:
    x0 = np.asarray(x0, dtype=float)
    x0.setflags(write=False)
    return ProjectedSet(
        contains=lambda x: bool(np.linalg.norm(np.asarray(x) - x0) <= tol),
        sample=lambda rng: x0.copy(),
    )


# -- actuated bouncing ball --------------------------------------------------


@dataclass(frozen=True)
class BouncingBallParams:
    gamma: float = 9.81
    lam: float = 0.8
    u_max: float = 5.0
    height_max: float = 20.0
    speed_max: float = 20.0
    max_flow_duration: float = 0.5
    x0: tuple = (15.0, 0.0)
    xf: tuple = (10.0, 0.0)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")


def bouncing_ball_system(params: BouncingBallParams = BouncingBallParams()) -> HybridSystemDef:
    gamma, lam = params.gamma, params.lam
    H, V = params.height_max, params.speed_max

    def flow_map(x, u):
        return np.array([x[1], -gamma])

    def jump_map(x, u):
        return np.array([x[0], -lam * x[1] + u[0]])

    def flow_set(x, u):
        return x[0] >= -SET_TOL

    def jump_set(x, u):
        return abs(x[0]) <= CONTACT_TOL and x[1] <= SET_TOL and u[0] >= -SET_TOL

    def inflatable(delta):
        def flow_inflated(x, u):
            return x[0] >= -delta - SET_TOL

        def jump_inflated(x, u):
            # distance from x to the ray {x1 = 0, x2 <= 0}, and from u to [0, inf)
            dx = math.hypot(x[0], max(x[1], 0.0))
            return dx <= delta + CONTACT_TOL and u[0] >= -delta - SET_TOL

        return flow_inflated, jump_inflated

    flow_box = box_sampler([0.0, -V], [H, V])
    jump_box = box_sampler([-V], [0.0])

    return HybridSystemDef(
        n=2,
        m=1,
        flow_set=flow_set,
        flow_map=flow_map,
        jump_set=jump_set,
        jump_map=jump_map,
        flow_proj=ProjectedSet(lambda x: x[0] >= -SET_TOL, flow_box),
        jump_proj=ProjectedSet(
            lambda x: abs(x[0]) <= CONTACT_TOL and x[1] <= SET_TOL,
            lambda rng: np.array([0.0, jump_box(rng)[0]]),
        ),
        bounding_box=((0.0, H), (-V, V)),
        flow_margin=lambda x, u: x[0],
        flow_exit=lambda x: x[0] <= CONTACT_TOL and x[1] <= 0.0,
        inflatable=inflatable,
        name="bouncing_ball",
    )


def bouncing_ball_problem(params: BouncingBallParams = BouncingBallParams()) -> MotionPlanProblem:
    xf = np.asarray(params.xf, dtype=float)

    def unsafe(x, u):
        return x[0] >= 20.0 and u[0] >= 5.0

    return MotionPlanProblem(
        system=bouncing_ball_system(params),
        initial_set=_point_set(params.x0),
        final_distance=lambda x: float(np.linalg.norm(np.asarray(x)[:2] - xf)),
        unsafe=unsafe,
        cost=HYBRID_TIME,
        name="bouncing_ball",
    )


def bouncing_ball_library(params: BouncingBallParams = BouncingBallParams()) -> InputLibrary:
    # f ignores the input, so flows use u = 0
    return InputLibrary(
        flow_value_sampler=lambda rng: np.zeros(1),
        max_flow_duration=params.max_flow_duration,
        jump_value_sampler=box_sampler([0.0], [params.u_max]),
    )


# -- hybrid-time auxiliary states --------------------------------------------


def auxiliary_cost(arc: HybridArc) -> float:
    """Increment of ``tau + k`` along an arc whose last two states are the
    ordinary-time and jump-count auxiliaries."""
    return float(arc.x[-1, -2] + arc.x[-1, -1] - arc.x[0, -2] - arc.x[0, -1])


AUXILIARY_TIME = CostFunctional(auxiliary_cost, name="auxiliary_hybrid_time")


def auxiliary_extension(problem: MotionPlanProblem, tau_max: float = 10.0, k_max: int = 5) -> MotionPlanProblem:
    """Append ordinary time ``tau`` and jump count ``k`` to the state so the
    hybrid-time cost can be read off the final state."""
    s = problem.system
    n = s.n

    def lift(pred):
        return lambda xb, u: xb[n] >= -SET_TOL and xb[n + 1] >= -SET_TOL and pred(xb[:n], u)

    def flow_map(xb, u):
        return np.concatenate((s.flow_map(xb[:n], u), (1.0, 0.0)))

    def jump_map(xb, u):
        return np.concatenate((s.jump_map(xb[:n], u), (xb[n], xb[n + 1] + 1.0)))

    def extend_sampler(sampler):
        def sample(rng):
            base = sampler(rng)
            return np.concatenate((base, (tau_max * rng.random(), float(rng.integers(0, k_max + 1)))))

        return sample

    def proj(ps: ProjectedSet) -> ProjectedSet:
        return ProjectedSet(
            lambda xb: xb[n] >= -SET_TOL and xb[n + 1] >= -SET_TOL and ps.contains(xb[:n]),
            extend_sampler(ps.sample),
        )

    inflatable = None
    if s.inflatable is not None:
        def inflatable(delta):
            fl, jp = s.inflatable(delta)
            return lift(fl), lift(jp)

    system = HybridSystemDef(
        n=n + 2,
        m=s.m,
        flow_set=lift(s.flow_set),
        flow_map=flow_map,
        jump_set=lift(s.jump_set),
        jump_map=jump_map,
        flow_proj=proj(s.flow_proj),
        jump_proj=proj(s.jump_proj),
        bounding_box=tuple(s.bounding_box) + ((0.0, tau_max), (0.0, float(k_max))),
        flow_margin=(lambda xb, u: s.flow_margin(xb[:n], u)) if s.flow_margin else None,
        flow_exit=(lambda xb: s.flow_exit(xb[:n])) if s.flow_exit else None,
        inflatable=inflatable,
        inflation=s.inflation,
        name=s.name + "_aux",
    )
    x0 = problem.initial_set
    return MotionPlanProblem(
        system=system,
        initial_set=ProjectedSet(
            lambda xb: xb[n] == 0.0 and xb[n + 1] == 0.0 and x0.contains(xb[:n]),
            lambda rng: np.concatenate((x0.sample(rng), (0.0, 0.0))),
        ),
        final_distance=lambda xb: problem.final_distance(xb[:n]),
        unsafe=lambda xb, u: problem.unsafe(xb[:n], u),
        cost=AUXILIARY_TIME,
        name=problem.name + "_aux",
    )


# -- collision-resilient multicopter ----------------------------------------


@dataclass(frozen=True)
class Wall:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("walls must have positive width and height")

    def signed_distance(self, px: float, py: float) -> float:
        """Euclidean distance outside the rectangle, minus the penetration
        depth inside it."""
        dx = max(self.x_min - px, 0.0, px - self.x_max)
        dy = max(self.y_min - py, 0.0, py - self.y_max)
        if dx > 0.0 or dy > 0.0:
            return math.hypot(dx, dy)
        return -min(px - self.x_min, self.x_max - px, py - self.y_min, self.y_max - py)

    def faces(self):
        """``(normal, start, end)`` for each face, left/right before bottom/top."""
        return [
            ((-1.0, 0.0), (self.x_min, self.y_min), (self.x_min, self.y_max)),
            ((1.0, 0.0), (self.x_max, self.y_min), (self.x_max, self.y_max)),
            ((0.0, -1.0), (self.x_min, self.y_min), (self.x_max, self.y_min)),
            ((0.0, 1.0), (self.x_min, self.y_max), (self.x_max, self.y_max)),
        ]


@dataclass(frozen=True)
class WallContact:
    wall_id: int
    normal: tuple
    tangent: tuple

    def to_frame(self, v) -> tuple[float, float]:
        n, t = self.normal, self.tangent
        return v[0] * n[0] + v[1] * n[1], v[0] * t[0] + v[1] * t[1]

    def from_frame(self, vn: float, vt: float) -> np.ndarray:
        n, t = self.normal, self.tangent
        return np.array([vn * n[0] + vt * t[0], vn * n[1] + vt * t[1]])


def wall_contact(walls: Sequence[Wall], p, tol: float = CONTACT_TOL) -> Optional[WallContact]:
    """Face of the first wall whose boundary contains ``p`` (within ``tol``).

    On a corner the lower wall id wins, then x-faces before y-faces. The
    normal points into free space; the tangent is the normal rotated by -90
    degrees.
    """
    px, py = float(p[0]), float(p[1])
    for wid, w in enumerate(walls):
        if abs(w.signed_distance(px, py)) > tol:
            continue
        if abs(px - w.x_min) <= tol and w.y_min - tol <= py <= w.y_max + tol:
            n = (-1.0, 0.0)
        elif abs(px - w.x_max) <= tol and w.y_min - tol <= py <= w.y_max + tol:
            n = (1.0, 0.0)
        elif abs(py - w.y_min) <= tol:
            n = (0.0, -1.0)
        else:
            n = (0.0, 1.0)
        return WallContact(wid, n, (n[1], -n[0]))
    return None


@dataclass(frozen=True)
class MulticopterParams:
    e: float = 0.43
    kappa: float = 0.20
    walls: tuple = (
        Wall(2.8, 3.2, 2.5, 5.0),
        Wall(1.6, 2.0, 0.0, 1.0),
    )
    arena: tuple = ((0.0, 6.0), (0.0, 5.0))
    u_max: float = 3.0
    v_max: float = 2.0
    a_max: float = 2.0
    max_flow_duration: float = 0.5
    x0: tuple = (1.0, 2.0, 0.0, 0.0, 0.0, 0.0)
    goal: tuple = (5.0, 4.0)

    def __post_init__(self):
        if not 0 < self.e < 1:
            raise ValueError("restitution e must lie in (0, 1)")
        (ax0, ax1), (ay0, ay1) = self.arena
        for w in self.walls:
            if w.x_min < ax0 or w.x_max > ax1 or w.y_min < ay0 or w.y_max > ay1:
                raise ValueError(f"wall {w} leaves the arena")


def load_walls(path) -> tuple:
    """Read ``[{x_min, x_max, y_min, y_max}, ...]`` from a JSON file."""
    doc = json.loads(Path(path).read_text())
    return tuple(Wall(**{k: float(w[k]) for k in ("x_min", "x_max", "y_min", "y_max")}) for w in doc)


def collision_velocity(contact: WallContact, v, e: float, kappa: float) -> np.ndarray:
    """Post-impact velocity from the normal/tangential restitution law."""
    vn, vt = contact.to_frame(v)
    assert vn != 0.0, "impact law evaluated with zero normal velocity"
    vn_plus = -e * vn
    vt_plus = vt + kappa * (-e - 1.0) * math.atan(vt / vn) * vn
    return contact.from_frame(vn_plus, vt_plus)


def multicopter_system(params: MulticopterParams = MulticopterParams()) -> HybridSystemDef:
    walls = tuple(params.walls)
    e, kappa = params.e, params.kappa
    (ax0, ax1), (ay0, ay1) = params.arena
    vm, am = params.v_max, params.a_max

    def margin(x, u=None):
        if not walls:
            return math.inf
        px, py = x[0], x[1]
        return min(w.signed_distance(px, py) for w in walls)

    def flow_map(x, u):
        return np.array([x[2], x[3], x[4], x[5], u[0], u[1]])

    def flow_set(x, u):
        return margin(x) >= -SET_TOL

    def in_jump(x):
        c = wall_contact(walls, x)
        return c is not None and c.to_frame(x[2:4])[0] < 0.0

    def jump_map(x, u):
        c = wall_contact(walls, x)
        out = np.zeros(6)
        out[:2] = x[:2]
        out[2:4] = collision_velocity(c, x[2:4], e, kappa)
        return out

    def flow_exit(x):
        c = wall_contact(walls, x)
        if c is None:
            return False
        vn, _ = c.to_frame(x[2:4])
        an, _ = c.to_frame(x[4:6])
        return vn < 0.0 or (vn == 0.0 and an < 0.0)

    def inflatable(delta):
        def flow_inflated(x, u):
            return margin(x) >= -delta - SET_TOL

        def jump_inflated(x, u):
            px, py = x[0], x[1]
            for w in walls:
                for n, a, b in w.faces():
                    # distance from p to the face segment
                    qx = min(max(px, min(a[0], b[0])), max(a[0], b[0]))
                    qy = min(max(py, min(a[1], b[1])), max(a[1], b[1]))
                    dp = math.hypot(px - qx, py - qy)
                    vn = x[2] * n[0] + x[3] * n[1]
                    if math.hypot(dp, max(vn, 0.0)) <= delta + CONTACT_TOL:
                        return True
            return False

        return flow_inflated, jump_inflated

    flow_box = box_sampler([ax0, ay0, -vm, -vm, -am, -am], [ax1, ay1, vm, vm, am, am])

    def sample_flow(rng):
        while True:
            x = flow_box(rng)
            if margin(x) >= 0.0:
                return x

    faces = [(wid, n, a, b) for wid, w in enumerate(walls) for n, a, b in w.faces()]
    lengths = np.array([math.hypot(b[0] - a[0], b[1] - a[1]) for _, _, a, b in faces])
    weights = lengths / lengths.sum() if len(faces) else lengths

    def sample_jump(rng):
        k = int(rng.choice(len(faces), p=weights))
        _, n, a, b = faces[k]
        s = rng.random()
        p = (a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]))
        vn = -vm * (1.0 - rng.random())
        vt = vm * (2.0 * rng.random() - 1.0)
        t = (n[1], -n[0])
        v = (vn * n[0] + vt * t[0], vn * n[1] + vt * t[1])
        acc = am * (2.0 * rng.random(2) - 1.0)
        return np.array([p[0], p[1], v[0], v[1], acc[0], acc[1]])

    return HybridSystemDef(
        n=6,
        m=2,
        flow_set=flow_set,
        flow_map=flow_map,
        jump_set=lambda x, u: in_jump(x),
        jump_map=jump_map,
        flow_proj=ProjectedSet(lambda x: margin(x) >= -SET_TOL, sample_flow),
        jump_proj=ProjectedSet(in_jump, sample_jump),
        bounding_box=((ax0, ax1), (ay0, ay1), (-vm, vm), (-vm, vm), (-am, am), (-am, am)),
        flow_margin=margin,
        flow_exit=flow_exit,
        inflatable=inflatable,
        name="multicopter",
    )


def multicopter_problem(params: MulticopterParams = MulticopterParams()) -> MotionPlanProblem:
    system = multicopter_system(params)
    (ax0, ax1), (ay0, ay1) = params.arena
    walls = tuple(params.walls)
    goal = np.asarray(params.goal, dtype=float)

    def unsafe(x, u):
        px, py = x[0], x[1]
        if px <= ax0 or px >= ax1 or py <= ay0 or py >= ay1:
            return True
        return any(w.signed_distance(px, py) < -SET_TOL for w in walls)

    return MotionPlanProblem(
        system=system,
        initial_set=_point_set(params.x0),
        final_distance=lambda x: float(math.hypot(x[0] - goal[0], x[1] - goal[1])),
        unsafe=unsafe,
        cost=HYBRID_TIME,
        name="multicopter",
    )


def multicopter_library(params: MulticopterParams = MulticopterParams()) -> InputLibrary:
    # the impact map ignores the input, so jumps use u = 0
    return InputLibrary(
        flow_value_sampler=box_sampler([-params.u_max] * 2, [params.u_max] * 2),
        max_flow_duration=params.max_flow_duration,
        jump_value_sampler=lambda rng: np.zeros(2),
    )
