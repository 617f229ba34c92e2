"""HySST search: witness-sparsified tree growth for hybrid systems.

Vertex ids are row indices into growable numpy buffers, so every
nearest/best-near query is a single vectorized scan over all vertices.
Ties on cost or distance resolve to the lowest id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    CostFunctional,
    MotionPlanProblem,
    SolutionPair,
    StatePredicate,
    concatenate_all,
    hybrid_time_cost,  # noqa: F401  (re-exported)
)
from .simulation import IntegratorConfig, InputLibrary, PropagationError, new_state

log = logging.getLogger(__name__)

HYSST = "hysst"
BASELINE = "hyrrt_baseline"
MODES = (HYSST, BASELINE)


@dataclass
class PlannerConfig:
    p_n: float = 0.5
    K: int = 2000
    delta_bn: float = 0.5
    delta_s: float = 0.2
    eps_final: float = 0.5
    n_init_roots: int = 1
    seed: int = 0
    mode: str = HYSST
    p_flow_both: float = 0.5
    X_c: Optional[StatePredicate] = None
    X_d: Optional[StatePredicate] = None

    def __post_init__(self):
        if not 0.0 < self.p_n < 1.0:
            # p_n = 1 is accepted as a degenerate flow-only setting
            if self.p_n != 1.0:
                raise ValueError("p_n must lie in (0, 1)")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if not (self.delta_bn > 0 and self.delta_s > 0 and self.eps_final > 0):
            raise ValueError("delta_bn, delta_s and eps_final must be positive")
        if self.n_init_roots < 1:
            raise ValueError("n_init_roots must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == HYSST and self.delta_bn <= 2 * self.delta_s:
            log.warning(
                "delta_bn=%g <= 2*delta_s=%g: the sparsity radius may dominate selection",
                self.delta_bn,
                2 * self.delta_s,
            )


@dataclass(frozen=True)
class Vertex:
    id: int
    state: np.ndarray
    cost: float
    parent: Optional[int]
    active: bool


@dataclass(frozen=True, eq=False)
class Edge:
    source: int
    target: int
    psi: SolutionPair


class SearchTree:
    """Vertices with states and costs, parent edges, and the active/inactive
    partition."""

    def __init__(self, n: int, capacity: int = 256):
        self.n = n
        self._x = np.empty((capacity, n))
        self._c = np.empty(capacity)
        self._alive = np.zeros(capacity, dtype=bool)
        self._active = np.zeros(capacity, dtype=bool)
        self._parent: list[int] = []
        self._n_children: list[int] = []
        self.edges: dict[int, Edge] = {}  # keyed by target vertex
        self._size = 0
        self._members: dict[int, tuple[Callable, np.ndarray]] = {}

    def __len__(self):
        return int(self._alive[: self._size].sum())

    def _grow(self):
        cap = 2 * len(self._c)
        for name in ("_x", "_c", "_alive", "_active"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def add_vertex(self, x, cost: float, parent: Optional[int] = None, psi: Optional[SolutionPair] = None) -> int:
        if self._size == len(self._c):
            self._grow()
        v = self._size
        self._x[v] = x
        self._c[v] = cost
        self._alive[v] = True
        self._active[v] = True
        self._parent.append(-1 if parent is None else parent)
        self._n_children.append(0)
        self._size += 1
        if parent is not None:
            self.edges[v] = Edge(parent, v, psi)
            self._n_children[parent] += 1
        return v

    def remove_leaf(self, v: int) -> Optional[int]:
        """Delete leaf ``v`` and its incoming edge; return its parent."""
        assert self._n_children[v] == 0, "only leaves can be removed"
        self._alive[v] = False
        self._active[v] = False
        p = self._parent[v]
        if p < 0:
            return None
        del self.edges[v]
        self._n_children[p] -= 1
        return p

    def set_active(self, v: int, flag: bool):
        self._active[v] = flag

    def state(self, v: int) -> np.ndarray:
        return self._x[v]

    def cost(self, v: int) -> float:
        return float(self._c[v])

    def parent(self, v: int) -> Optional[int]:
        p = self._parent[v]
        return None if p < 0 else p

    def is_leaf(self, v: int) -> bool:
        return self._n_children[v] == 0

    def is_alive(self, v: int) -> bool:
        return v < self._size and bool(self._alive[v])

    def is_active(self, v: int) -> bool:
        return bool(self._active[v])

    def vertex(self, v: int) -> Vertex:
        return Vertex(v, self._x[v].copy(), self.cost(v), self.parent(v), self.is_active(v))

    def ids(self) -> np.ndarray:
        return np.flatnonzero(self._alive[: self._size])

    def active_ids(self) -> np.ndarray:
        return np.flatnonzero(self._active[: self._size])

    def inactive_ids(self) -> np.ndarray:
        s = self._size
        return np.flatnonzero(self._alive[:s] & ~self._active[:s])

    @property
    def n_active(self) -> int:
        return int(self._active[: self._size].sum())

    @property
    def n_inactive(self) -> int:
        return len(self) - self.n_active

    def membership(self, pred: StatePredicate) -> np.ndarray:
        """Cached ``pred(state)`` for every vertex ever added."""
        key = id(pred)
        entry = self._members.get(key)
        if entry is None or entry[0] is not pred:
            entry = (pred, np.zeros(0, dtype=bool))
        cached = entry[1]
        if len(cached) < self._size:
            extra = [bool(pred(self._x[v])) for v in range(len(cached), self._size)]
            cached = np.concatenate((cached, np.asarray(extra, dtype=bool)))
            self._members[key] = (pred, cached)
        return cached[: self._size]

    def path_to(self, v: int) -> list[int]:
        path = [v]
        while (p := self.parent(path[-1])) is not None:
            path.append(p)
        return path[::-1]

    def to_dict(self, include_pairs: bool = False) -> dict:
        from .core import pair_to_dict

        doc = {
            "vertices": [
                {
                    "id": int(v),
                    "state": [float(a) for a in self._x[v]],
                    "cost": float(self._c[v]),
                    "parent": self.parent(v),
                    "active": self.is_active(v),
                }
                for v in self.ids()
            ],
            "edges": [{"from": e.source, "to": e.target, "psi": e.target} for _, e in sorted(self.edges.items())],
        }
        if include_pairs:
            doc["pairs"] = {str(k): pair_to_dict(e.psi) for k, e in sorted(self.edges.items())}
        return doc


class WitnessSet:
    """Witness points, each with at most one representative vertex."""

    def __init__(self, n: int, capacity: int = 256):
        self.n = n
        self._s = np.empty((capacity, n))
        self.rep = np.full(capacity, -1, dtype=np.int64)
        self.rep_cost = np.full(capacity, np.inf)
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def points(self) -> np.ndarray:
        return self._s[: self._size]

    def add(self, x) -> int:
        if self._size == len(self.rep):
            cap = 2 * self._size
            s = np.empty((cap, self.n))
            s[: self._size] = self._s
            self._s = s
            self.rep = np.concatenate((self.rep, np.full(self._size, -1, dtype=np.int64)))
            self.rep_cost = np.concatenate((self.rep_cost, np.full(self._size, np.inf)))
        w = self._size
        self._s[w] = x
        self._size += 1
        return w

    def nearest(self, x) -> tuple[int, float]:
        if self._size == 0:
            return -1, math.inf
        d = np.sqrt(((self._s[: self._size] - x) ** 2).sum(axis=1))
        w = int(np.argmin(d))
        return w, float(d[w])

    def set_rep(self, w: int, v: int, cost: float):
        self.rep[w] = v
        self.rep_cost[w] = cost

    def to_list(self) -> list[dict]:
        return [
            {"point": [float(a) for a in self._s[w]], "rep": None if self.rep[w] < 0 else int(self.rep[w])}
            for w in range(self._size)
        ]


def is_vertex_locally_the_best(x, cost: float, witnesses: WitnessSet, delta_s: float) -> bool:
    """Admission test: ``x`` opens a new witness or beats the nearest
    witness's representative. May insert a witness."""
    w, d = witnesses.nearest(x)
    if d > delta_s:
        w = witnesses.add(x)
    return witnesses.rep[w] < 0 or cost < witnesses.rep_cost[w]


def prune_dominated_vertices(v_new: int, witnesses: WitnessSet, tree: SearchTree) -> list[int]:
    """Make ``v_new`` the representative of its nearest witness, deactivate
    the previous representative and delete the chain of inactive leaves
    above it. Returns the deleted vertex ids."""
    w, _ = witnesses.nearest(tree.state(v_new))
    v_peer = int(witnesses.rep[w])
    if v_peer >= 0:
        tree.set_active(v_peer, False)
    witnesses.set_rep(w, v_new, tree.cost(v_new))
    removed = []
    while v_peer >= 0 and tree.is_leaf(v_peer) and not tree.is_active(v_peer):
        parent = tree.remove_leaf(v_peer)
        removed.append(v_peer)
        v_peer = -1 if parent is None else parent
    return removed


def random_state(sampler: Callable[[np.random.Generator], np.ndarray], rng: np.random.Generator) -> np.ndarray:
    return np.asarray(sampler(rng), dtype=float)


def _nearest(tree: SearchTree, x_rand, mask: np.ndarray) -> Optional[int]:
    ids = np.flatnonzero(mask)
    if len(ids) == 0:
        return None
    d = ((tree._x[ids] - x_rand) ** 2).sum(axis=1)
    return int(ids[np.argmin(d)])


def best_near_selection(x_rand, tree: SearchTree, delta_bn: float, X_star: Optional[StatePredicate] = None) -> int:
    """Minimum-cost active vertex within ``delta_bn`` of ``x_rand`` inside
    ``X_star``; otherwise the nearest active vertex (preferring ``X_star``)."""
    s = tree._size
    active = tree._active[:s]
    allowed = active & tree.membership(X_star) if X_star is not None else active
    d2 = ((tree._x[:s] - x_rand) ** 2).sum(axis=1)
    near = allowed & (d2 <= delta_bn * delta_bn)
    if near.any():
        costs = np.where(near, tree._c[:s], np.inf)
        return int(np.argmin(costs))
    for mask in (allowed, active):
        if mask.any():
            return int(np.argmin(np.where(mask, d2, np.inf)))
    raise ValueError("no active vertex to select")


def nearest_selection(x_rand, tree: SearchTree, X_star: Optional[StatePredicate] = None) -> int:
    """Baseline selection: nearest active vertex, preferring ``X_star``."""
    s = tree._size
    active = tree._active[:s]
    allowed = active & tree.membership(X_star) if X_star is not None else active
    d2 = ((tree._x[:s] - x_rand) ** 2).sum(axis=1)
    for mask in (allowed, active):
        if mask.any():
            return int(np.argmin(np.where(mask, d2, np.inf)))
    raise ValueError("no active vertex to select")


def tree_init(problem: MotionPlanProblem, n_init_roots: int, delta_s: float, rng: np.random.Generator, mode: str = HYSST):
    """Sample roots from the initial set; keep only the locally best ones."""
    n = problem.system.n
    tree = SearchTree(n)
    witnesses = WitnessSet(n)
    for _ in range(n_init_roots):
        x0 = np.asarray(problem.initial_set.sample(rng), dtype=float)
        if not problem.initial_set.contains(x0):
            raise ValueError("initial-set sampler produced a point outside the set")
        if mode == BASELINE:
            tree.add_vertex(x0, 0.0)
        elif is_vertex_locally_the_best(x0, 0.0, witnesses, delta_s):
            v = tree.add_vertex(x0, 0.0)
            prune_dominated_vertices(v, witnesses, tree)
    return tree, witnesses


@dataclass(frozen=True, eq=False)
class MotionPlan:
    psi: SolutionPair
    path: tuple
    cost: float
    iteration: int
    final_distance: float


def solution_check(tree: SearchTree, problem: MotionPlanProblem, eps_final: float, v: int) -> Optional[MotionPlan]:
    """Plan through ``v`` if it lies within ``eps_final`` of the final set."""
    x = tree.state(v)
    dist = problem.final_distance(x)
    if dist > eps_final:
        return None
    path = tree.path_to(v)
    if len(path) < 2:
        return None
    pairs = [tree.edges[w].psi for w in path[1:]]
    for a, b in zip(pairs, pairs[1:]):
        if a.is_purely_continuous and b.is_purely_continuous:
            x0, u0 = b.state.initial, b.input.x[0]
            assert problem.system.flow_set(x0, u0), "consecutive flows must restart inside the flow set"
    psi = concatenate_all(pairs)
    return MotionPlan(psi, tuple(path), tree.cost(v), -1, dist)


def best_leaf_plan(tree: SearchTree, problem: MotionPlanProblem, eps_final: float) -> Optional[MotionPlan]:
    """Exhaustive variant of :func:`solution_check` over every vertex."""
    best = None
    for v in tree.ids():
        if problem.final_distance(tree.state(v)) <= eps_final and tree.parent(v) is not None:
            if best is None or tree.cost(v) < tree.cost(best):
                best = v
    return None if best is None else solution_check(tree, problem, eps_final, int(best))


@dataclass
class PlanResult:
    tree: SearchTree
    witnesses: WitnessSet
    best: Optional[MotionPlan]
    stats: list = field(default_factory=list)
    n_propagation_errors: int = 0
    n_unsafe: int = 0
    config: Optional[PlannerConfig] = None

    @property
    def found(self) -> bool:
        return self.best is not None

    def tree_dump(self, include_pairs: bool = False) -> dict:
        doc = self.tree.to_dict(include_pairs)
        doc["witnesses"] = self.witnesses.to_list()
        return doc


STATS_HEADER = ("iter", "n_active", "n_inactive", "n_witnesses", "best_cost")


def hysst_plan(
    problem: MotionPlanProblem,
    lib: InputLibrary,
    config: PlannerConfig,
    integrator: IntegratorConfig = IntegratorConfig(),
    on_iteration: Optional[Callable] = None,
) -> PlanResult:
    """Run ``config.K`` iterations of HySST (or the nearest-neighbor baseline).

    ``on_iteration(k, result, event)`` is called after every iteration;
    ``event`` holds the admitted vertex and the ids removed by pruning.
    """
    rng = np.random.default_rng(config.seed)
    system = problem.system
    X_c = config.X_c or system.flow_proj.contains
    X_d = config.X_d or system.jump_proj.contains
    baseline = config.mode == BASELINE
    tree, witnesses = tree_init(problem, config.n_init_roots, config.delta_s, rng, config.mode)
    result = PlanResult(tree, witnesses, None, config=config)
    cost: CostFunctional = problem.cost

    for k in range(1, config.K + 1):
        if rng.random() <= config.p_n:
            x_rand = random_state(system.flow_proj.sample, rng)
            X_star = X_c
        else:
            x_rand = random_state(system.jump_proj.sample, rng)
            X_star = X_d
        if baseline:
            v_cur = nearest_selection(x_rand, tree, X_star)
        else:
            v_cur = best_near_selection(x_rand, tree, config.delta_bn, X_star)

        event = None
        try:
            prop = new_state(
                system, tree.state(v_cur), tree.cost(v_cur), lib, problem.unsafe, cost, integrator, rng, config.p_flow_both
            )
        except PropagationError:
            result.n_propagation_errors += 1
            prop = None

        if prop is not None and prop.psi_new is not None and not prop.generated and len(prop.psi_new.state) > 1:
            result.n_unsafe += 1
        if prop is not None and prop.generated:
            if baseline:
                v_new = tree.add_vertex(prop.x_new, prop.cost_new, v_cur, prop.psi_new)
                event = (v_new, [])
            elif is_vertex_locally_the_best(prop.x_new, prop.cost_new, witnesses, config.delta_s):
                v_new = tree.add_vertex(prop.x_new, prop.cost_new, v_cur, prop.psi_new)
                removed = prune_dominated_vertices(v_new, witnesses, tree)
                event = (v_new, removed)
            if event is not None:
                plan = solution_check(tree, problem, config.eps_final, event[0])
                if plan is not None and (result.best is None or plan.cost < result.best.cost):
                    result.best = MotionPlan(plan.psi, plan.path, plan.cost, k, plan.final_distance)

        best_cost = result.best.cost if result.best is not None else math.inf
        result.stats.append((k, tree.n_active, tree.n_inactive, len(witnesses), best_cost))
        if on_iteration is not None:
            on_iteration(k, result, event)
    return result
