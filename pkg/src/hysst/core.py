"""Hybrid time domains, sampled hybrid arcs and the solution-pair algebra."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

ENDPOINT_TOL = 1e-9


class HybridTime(NamedTuple):
    t: float
    j: int


@dataclass(frozen=True)
class HybridTimeDomain:
    """Union of intervals ``[t_j, t_{j+1}] x {j}`` stored by their boundaries.

    ``boundaries`` is ``(t_0, t_1, ..., t_{J+1})`` with ``t_0 == 0``.
    """

    boundaries: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        if len(b) < 2:
            raise ValueError("a hybrid time domain needs at least two boundaries")
        if b[0] != 0.0:
            raise ValueError("hybrid time domains start at t = 0")
        if any(b1 < b0 for b0, b1 in zip(b, b[1:])):
            raise ValueError("domain boundaries must be nondecreasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_jumps(self) -> int:
        return len(self.boundaries) - 2

    @property
    def max(self) -> HybridTime:
        return HybridTime(self.boundaries[-1], self.n_jumps)

    def intervals(self) -> list[tuple[float, float, int]]:
        b = self.boundaries
        return [(b[j], b[j + 1], j) for j in range(len(b) - 1)]

    def contains(self, t: float, j: int, tol: float = 0.0) -> bool:
        if j < 0 or j > self.n_jumps:
            return False
        return self.boundaries[j] - tol <= t <= self.boundaries[j + 1] + tol


class HybridArc:
    """A hybrid arc recorded as samples ``(t, j, x)``.

    Every interval ``[t_j, t_{j+1}] x {j}`` carries samples at both of its
    endpoints (a single sample for a point interval), with strictly
    increasing times inside an interval. The domain is therefore fully
    determined by the samples.
    """

    __slots__ = ("t", "j", "x")

    def __init__(self, t, j, x, *, check: bool = True):
        t = np.asarray(t, dtype=float)
        j = np.asarray(j, dtype=np.int64)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(t), -1) if len(t) else x.reshape(0, 0)
        self.t, self.j, self.x = t, j, x
        for a in (t, j, x):
            a.setflags(write=False)
        if check:
            self._check()

    def _check(self):
        t, j, x = self.t, self.j, self.x
        if t.ndim != 1 or j.shape != t.shape or x.ndim != 2 or x.shape[0] != t.shape[0]:
            raise ValueError("sample arrays have inconsistent shapes")
        if len(t) == 0:
            raise ValueError("a hybrid arc needs at least one sample")
        if t[0] != 0.0 or j[0] != 0:
            raise ValueError("the first sample must be at hybrid time (0, 0)")
        dj = np.diff(j)
        if np.any((dj != 0) & (dj != 1)):
            raise ValueError("jump indices must increase by at most one between samples")
        dt = np.diff(t)
        same = dj == 0
        if np.any(dt[same] <= 0.0):
            raise ValueError("sample times must strictly increase within an interval")
        if np.any(dt[~same] != 0.0):
            raise ValueError("a jump must occur at a fixed ordinary time")

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return len(self.t)

    @property
    def domain(self) -> HybridTimeDomain:
        starts = np.flatnonzero(np.diff(self.j)) + 1
        return HybridTimeDomain((0.0, *self.t[starts], self.t[-1]))

    @property
    def max_time(self) -> HybridTime:
        return HybridTime(float(self.t[-1]), int(self.j[-1]))

    @property
    def initial(self) -> np.ndarray:
        return self.x[0]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def at(self, t: float, j: int) -> np.ndarray:
        """Value at ``(t, j)``, linearly interpolated between samples."""
        idx = np.flatnonzero(self.j == j)
        if len(idx) == 0:
            raise ValueError(f"jump index {j} not in domain")
        ts = self.t[idx]
        if t < ts[0] or t > ts[-1]:
            raise ValueError(f"time ({t}, {j}) not in domain")
        k = int(np.searchsorted(ts, t))
        if ts[min(k, len(ts) - 1)] == t:
            return self.x[idx[k]].copy()
        a, b = idx[k - 1], idx[k]
        w = (t - self.t[a]) / (self.t[b] - self.t[a])
        return (1.0 - w) * self.x[a] + w * self.x[b]

    def equals(self, other: "HybridArc") -> bool:
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.j, other.j)
            and np.array_equal(self.x, other.x)
        )

    def __repr__(self):
        T, J = self.max_time
        return f"HybridArc(n={self.dim}, samples={len(self)}, max=({T:.6g}, {J}))"

    @classmethod
    def point(cls, x) -> "HybridArc":
        x = np.asarray(x, dtype=float)
        return cls([0.0], [0], x.reshape(1, -1))


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """A state arc and an input arc sampled on the same hybrid time grid."""

    state: HybridArc
    input: HybridArc

    def __post_init__(self):
        if not (
            np.array_equal(self.state.t, self.input.t)
            and np.array_equal(self.state.j, self.input.j)
        ):
            raise ValueError("state and input arcs must share their hybrid time domain")

    @property
    def domain(self) -> HybridTimeDomain:
        return self.state.domain

    @property
    def max_time(self) -> HybridTime:
        return self.state.max_time

    @property
    def is_purely_continuous(self) -> bool:
        return int(self.state.j[-1]) == 0 and len(self.state) > 1

    @property
    def is_purely_discrete(self) -> bool:
        return float(self.state.t[-1]) == 0.0 and int(self.state.j[-1]) > 0

    def equals(self, other: "SolutionPair") -> bool:
        return self.state.equals(other.state) and self.input.equals(other.input)

    @classmethod
    def from_samples(cls, t, j, x, u) -> "SolutionPair":
        arc = HybridArc(t, j, x)
        return cls(arc, HybridArc(arc.t, arc.j, u, check=False))


def _join(first: HybridArc, second: HybridArc, T: float, J: int) -> HybridArc:
    t = np.concatenate((first.t[:-1], second.t + T))
    j = np.concatenate((first.j[:-1], second.j + J))
    x = np.concatenate((first.x[:-1], second.x))
    return HybridArc(t, j, x, check=False)


def concatenate(first: SolutionPair, second: SolutionPair) -> SolutionPair:
    """Concatenate ``second`` to ``first``.

    The domain of the result is ``dom first`` united with ``dom second``
    shifted by ``max dom first``; the value of ``first`` at its maximum is
    replaced by the initial value of ``second``.
    """
    if first.state.dim != second.state.dim or first.input.dim != second.input.dim:
        raise ValueError("dimension mismatch between concatenated pairs")
    if not np.all(np.isfinite(first.state.t)):
        raise ValueError("the first pair must have a compact domain")
    gap = np.max(np.abs(first.state.final - second.state.initial), initial=0.0)
    if gap > ENDPOINT_TOL:
        raise ValueError(f"endpoint mismatch {gap:.3g} exceeds {ENDPOINT_TOL}")
    T, J = first.max_time
    return SolutionPair(
        _join(first.state, second.state, T, J),
        _join(first.input, second.input, T, J),
    )


def concatenate_all(pairs: Sequence[SolutionPair]) -> SolutionPair:
    if not pairs:
        raise ValueError("nothing to concatenate")
    out = pairs[0]
    for p in pairs[1:]:
        out = concatenate(out, p)
    return out


def _cut(arc: HybridArc, T1: float, J1: int, T2: float, J2: int) -> HybridArc:
    t, j, x = arc.t, arc.j, arc.x
    keep = (j >= J1) & (j <= J2)
    keep &= ~((j == J1) & (t < T1))
    keep &= ~((j == J2) & (t > T2))
    idx = np.flatnonzero(keep)
    tt, jj, xx = list(t[idx]), list(j[idx]), list(x[idx])
    # insert interpolated endpoint samples when the cut falls between samples
    if not tt or tt[0] != T1 or jj[0] != J1:
        tt.insert(0, T1)
        jj.insert(0, J1)
        xx.insert(0, arc.at(T1, J1))
    if tt[-1] != T2 or jj[-1] != J2:
        tt.append(T2)
        jj.append(J2)
        xx.append(arc.at(T2, J2))
    return HybridArc(
        np.asarray(tt) - T1, np.asarray(jj) - J1, np.asarray(xx), check=False
    )


def truncate(pair: SolutionPair, start: HybridTime, stop: HybridTime) -> SolutionPair:
    """Restrict ``pair`` to hybrid times between ``start`` and ``stop`` and
    translate the result so that it starts at ``(0, 0)``."""
    T1, J1 = float(start[0]), int(start[1])
    T2, J2 = float(stop[0]), int(stop[1])
    dom = pair.domain
    if not (dom.contains(T1, J1) and dom.contains(T2, J2)):
        raise ValueError("truncation bounds must lie in the domain")
    if T1 > T2 or J1 > J2:
        raise ValueError("truncation bounds must be ordered")
    return SolutionPair(
        _cut(pair.state, T1, J1, T2, J2), _cut(pair.input, T1, J1, T2, J2)
    )


def is_close(a: HybridArc, b: HybridArc, tau: float, eps: float) -> bool:
    """(tau, eps)-closeness of two sampled hybrid arcs."""
    if eps <= 0 or tau < 0:
        raise ValueError("need eps > 0 and tau >= 0")
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return _one_sided_close(a, b, tau, eps) and _one_sided_close(b, a, tau, eps)


def _one_sided_close(a: HybridArc, b: HybridArc, tau: float, eps: float) -> bool:
    for jv in np.unique(a.j[a.t + a.j <= tau]):
        pts = a.x[(a.j == jv) & (a.t + a.j <= tau)]
        other = b.x[b.j == jv]
        if len(other) == 0:
            return False
        d = np.linalg.norm(pts[:, None, :] - other[None, :, :], axis=-1)
        if np.any(d.min(axis=1) >= eps):
            return False
    return True


Predicate = Callable[[np.ndarray, np.ndarray], bool]
StatePredicate = Callable[[np.ndarray], bool]
Sampler = Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True, eq=False)
class ProjectedSet:
    """Membership test plus uniform sampler for a set of states."""

    contains: StatePredicate
    sample: Sampler


@dataclass(frozen=True, eq=False)
class HybridSystemDef:
    """Data ``(C, f, D, g)`` of a hybrid system with inputs.

    ``flow_margin`` is a signed distance-like function: nonnegative on the
    flow set, zero on its boundary; the integrator brackets flow-set exits
    with it. ``flow_exit`` flags states on the boundary of the flow set from
    which no flow is possible (solutions leave the flow set immediately).
    ``inflatable(delta)`` returns the ``(flow_set, jump_set)`` predicates of
    the delta-inflated system.
    """

    n: int
    m: int
    flow_set: Predicate
    flow_map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jump_set: Predicate
    jump_map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    flow_proj: ProjectedSet
    jump_proj: ProjectedSet
    bounding_box: tuple = ()
    flow_margin: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    flow_exit: Optional[StatePredicate] = None
    inflatable: Optional[Callable[[float], tuple[Predicate, Predicate]]] = None
    inflation: float = 0.0
    name: str = "hybrid-system"

    def can_flow(self, x: np.ndarray) -> bool:
        if not self.flow_proj.contains(x):
            return False
        return self.flow_exit is None or not self.flow_exit(x)


def inflate(system: HybridSystemDef, delta_f: float) -> HybridSystemDef:
    """delta_f-inflation of ``system``: flow and jump sets grown by a ball of
    radius ``delta_f`` in both state and input; maps unchanged."""
    if not delta_f > 0:
        raise ValueError("delta_f must be positive")
    if system.inflatable is None:
        raise ValueError(f"system {system.name!r} has no inflatable set description")
    total = system.inflation + delta_f
    flow_set, jump_set = system.inflatable(total)
    return replace(system, flow_set=flow_set, jump_set=jump_set, inflation=total)


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_solution(system: HybridSystemDef, psi: SolutionPair, tol: float) -> ValidationReport:
    """Check the flow and jump conditions of a solution pair on its samples.

    Flow derivatives are checked with the trapezoid rule between consecutive
    samples, so ``tol`` has to absorb an ``O(dt^2)`` truncation term.
    """
    t, j, x = psi.state.t, psi.state.j, psi.state.x
    u = psi.input.x
    bad = []
    if not (system.flow_set(x[0], u[0]) or system.jump_set(x[0], u[0])):
        bad.append(("initial", 0))
    n = len(t)
    for k in range(n - 1):
        if j[k + 1] == j[k]:
            dt = t[k + 1] - t[k]
            fd = (x[k + 1] - x[k]) / dt
            favg = 0.5 * (system.flow_map(x[k], u[k]) + system.flow_map(x[k + 1], u[k]))
            if np.max(np.abs(fd - favg)) > tol:
                bad.append(("flow_map", k))
            interior = k > 0 and j[k - 1] == j[k]
            if interior and not system.flow_set(x[k], u[k]):
                bad.append(("flow_set", k))
        else:
            if not system.jump_set(x[k], u[k]):
                bad.append(("jump_set", k))
            elif np.max(np.abs(x[k + 1] - system.jump_map(x[k], u[k]))) > tol:
                bad.append(("jump_map", k))
    return ValidationReport(not bad, bad)


@dataclass(frozen=True, eq=False)
class CostFunctional:
    """Cost of a state arc. ``additive`` asserts ``c(a|b) == c(a) + c(b)``."""

    evaluate: Callable[[HybridArc], float]
    additive: bool = True
    name: str = "cost"

    def __call__(self, arc: HybridArc) -> float:
        return float(self.evaluate(arc))


def hybrid_time_cost(arc: HybridArc) -> float:
    """``T + J`` at the maximum of the arc's domain."""
    T, J = arc.max_time
    return T + J


HYBRID_TIME = CostFunctional(hybrid_time_cost, name="hybrid_time")


@dataclass(frozen=True, eq=False)
class MotionPlanProblem:
    """Optimal motion planning problem ``(X0, Xf, Xu, H, c)``.

    ``final_distance`` returns the distance from a state to the final set.
    """

    system: HybridSystemDef
    initial_set: ProjectedSet
    final_distance: Callable[[np.ndarray], float]
    unsafe: Predicate
    cost: CostFunctional = HYBRID_TIME
    name: str = "problem"


# -- serialization ---------------------------------------------------------


def pair_to_dict(psi: SolutionPair) -> dict:
    dom = psi.domain
    return {
        "domain": [[a, b, j] for a, b, j in dom.intervals()],
        "states": [[float(t), int(j), *map(float, x)] for t, j, x in zip(psi.state.t, psi.state.j, psi.state.x)],
        "inputs": [[float(t), int(j), *map(float, u)] for t, j, u in zip(psi.input.t, psi.input.j, psi.input.x)],
    }


def pair_from_dict(doc: dict) -> SolutionPair:
    states = doc["states"]
    inputs = doc["inputs"]
    if len(states) != len(inputs):
        raise ValueError("states and inputs must have the same number of samples")
    t = [row[0] for row in states]
    j = [int(row[1]) for row in states]
    x = [row[2:] for row in states]
    u = [row[2:] for row in inputs]
    if [row[0] for row in inputs] != t or [int(row[1]) for row in inputs] != j:
        raise ValueError("input samples must share the state sample grid")
    psi = SolutionPair.from_samples(t, j, x, u)
    declared = [tuple(iv) for iv in doc.get("domain", [])]
    if declared and [(float(a), float(b), int(c)) for a, b, c in declared] != psi.domain.intervals():
        raise ValueError("declared domain does not match the samples")
    return psi


def dumps_pair(psi: SolutionPair) -> str:
    return json.dumps(pair_to_dict(psi))


def loads_pair(text: str) -> SolutionPair:
    return pair_from_dict(json.loads(text))
