"""Forward propagation of hybrid dynamics with a constant-input library."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    CostFunctional,
    HybridSystemDef,
    Predicate,
    SolutionPair,
    HybridArc,
)


class PropagationError(RuntimeError):
    """Raised when a state cannot be propagated (outside both regimes,
    step budget exhausted, ...)."""


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float = 1e-2
    boundary_tol: float = 1e-9
    max_steps: int = 100_000

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.boundary_tol > 0:
            raise ValueError("boundary_tol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True, eq=False)
class InputLibrary:
    """Constant flow inputs with durations in ``(0, max_flow_duration]`` and
    jump input values, both drawn uniformly."""

    flow_value_sampler: Callable[[np.random.Generator], np.ndarray]
    max_flow_duration: float
    jump_value_sampler: Callable[[np.random.Generator], np.ndarray]

    def __post_init__(self):
        if not self.max_flow_duration > 0:
            raise ValueError("max_flow_duration must be positive")


def box_sampler(low, high) -> Callable[[np.random.Generator], np.ndarray]:
    """Uniform sampler over the box ``[low, high]`` (degenerate sides allowed)."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if low.shape != high.shape or np.any(high < low):
        raise ValueError("invalid box bounds")
    span = high - low

    def sample(rng: np.random.Generator) -> np.ndarray:
        return low + span * rng.random(low.shape)

    return sample


def sample_flow_input(lib: InputLibrary, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    value = np.asarray(lib.flow_value_sampler(rng), dtype=float)
    # rng.random() is in [0, 1), so the duration lands in (0, T_m]
    duration = lib.max_flow_duration * (1.0 - rng.random())
    return value, duration


def sample_jump_input(lib: InputLibrary, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(lib.jump_value_sampler(rng), dtype=float)


def _rk4(f, x, u, h):
    k1 = f(x, u)
    k2 = f(x + 0.5 * h * k1, u)
    k3 = f(x + 0.5 * h * k2, u)
    k4 = f(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(
    system: HybridSystemDef,
    x0,
    u_const,
    duration: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> SolutionPair:
    """Integrate the flow map with fixed-step RK4 and a constant input.

    Stops at ``duration`` or, if the flow set is left earlier, at the exit
    point found by bisection on ``system.flow_margin`` (or the flow-set
    predicate when no margin is available).
    """
    x = np.asarray(x0, dtype=float)
    u = np.atleast_1d(np.asarray(u_const, dtype=float))
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not system.flow_set(x, u):
        raise PropagationError("initial point is not in the flow set")
    h = cfg.step_size
    n_steps = max(1, math.ceil(duration / h - 1e-9))
    if n_steps > cfg.max_steps:
        raise PropagationError(f"{n_steps} steps exceed max_steps={cfg.max_steps}")

    f = system.flow_map
    margin = system.flow_margin
    inside = (lambda y: margin(y, u) >= 0.0) if margin is not None else (lambda y: system.flow_set(y, u))

    ts = [0.0]
    xs = [x]
    t = 0.0
    for k in range(n_steps):
        dt = h if k < n_steps - 1 else duration - (n_steps - 1) * h
        x_next = _rk4(f, x, u, dt)
        if not inside(x_next):
            t_hit, x_hit = _bracket_exit(f, x, u, dt, inside, margin, cfg.boundary_tol)
            if t_hit > 0.0:
                ts.append(t + t_hit)
                xs.append(x_hit)
            break
        t = (k + 1) * h if k < n_steps - 1 else duration
        x = x_next
        ts.append(t)
        xs.append(x)

    xs = np.asarray(xs)
    us = np.broadcast_to(u, (len(ts), len(u)))
    j = np.zeros(len(ts), dtype=np.int64)
    return SolutionPair(HybridArc(ts, j, xs, check=False), HybridArc(ts, j, us, check=False))


def _bracket_exit(f, x_in, u, dt, inside, margin, tol):
    """Bisect the step ``[0, dt]`` from ``x_in`` for the flow-set exit.

    Returns the time offset and state of the last point found inside the
    flow set; stops once that point is within ``tol`` of the boundary.
    """
    lo, hi = 0.0, dt
    x_lo = x_in
    for _ in range(200):
        if margin is not None and margin(x_lo, u) <= tol:
            break
        if margin is None and hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x_mid = _rk4(f, x_in, u, mid)
        if inside(x_mid):
            lo, x_lo = mid, x_mid
        else:
            hi = mid
    return lo, x_lo


def apply_jump(system: HybridSystemDef, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not system.jump_set(x, u):
        raise PropagationError("state/input pair is not in the jump set")
    return np.asarray(system.jump_map(x, u), dtype=float)


def jump_pair(system: HybridSystemDef, x, u) -> SolutionPair:
    """One-jump solution pair with domain ``{0} x {0, 1}``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x_plus = apply_jump(system, x, u)
    return SolutionPair(
        HybridArc([0.0, 0.0], [0, 1], np.stack((x, x_plus)), check=False),
        HybridArc([0.0, 0.0], [0, 1], np.stack((u, u)), check=False),
    )


@dataclass(frozen=True, eq=False)
class PropagationResult:
    generated: bool
    psi_new: Optional[SolutionPair]
    x_new: Optional[np.ndarray]
    cost_new: float
    regime: str = ""


def touches_unsafe(psi: SolutionPair, unsafe: Predicate) -> bool:
    for x, u in zip(psi.state.x, psi.input.x):
        if unsafe(x, u):
            return True
    return False


def new_state(
    system: HybridSystemDef,
    x_cur,
    cost_cur: float,
    lib: InputLibrary,
    unsafe: Predicate,
    cost: CostFunctional,
    cfg: IntegratorConfig,
    rng: np.random.Generator,
    p_flow: float = 0.5,
) -> PropagationResult:
    """Propagate one flow segment or one jump from ``x_cur``.

    The regime follows from membership of ``x_cur`` in the projected flow
    and jump sets; when both apply a coin with ``P(flow) = p_flow`` decides.
    """
    x_cur = np.asarray(x_cur, dtype=float)
    in_c = system.can_flow(x_cur)
    in_d = system.jump_proj.contains(x_cur)
    if not (in_c or in_d):
        raise PropagationError("state is in neither the flow nor the jump regime")
    flow = in_c if not (in_c and in_d) else bool(rng.random() < p_flow)

    if flow:
        value, duration = sample_flow_input(lib, rng)
        psi = integrate_flow(system, x_cur, value, duration, cfg)
        if len(psi.state) < 2:
            return PropagationResult(False, psi, psi.state.final, cost_cur, "flow")
    else:
        value = sample_jump_input(lib, rng)
        if not system.jump_set(x_cur, value):
            return PropagationResult(False, None, None, cost_cur, "jump")
        psi = jump_pair(system, x_cur, value)

    cost_new = cost_cur + cost(psi.state)
    ok = not touches_unsafe(psi, unsafe)
    return PropagationResult(ok, psi, psi.state.final, cost_new, "flow" if flow else "jump")
