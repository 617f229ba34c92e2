import math

import numpy as np
import pytest

from hysst.core import HybridArc, ProjectedSet, SolutionPair, hybrid_time_cost
from hysst.planner import (
    BASELINE,
    PlannerConfig,
    SearchTree,
    WitnessSet,
    best_leaf_plan,
    best_near_selection,
    hysst_plan,
    is_vertex_locally_the_best,
    prune_dominated_vertices,
    random_state,
    solution_check,
    tree_init,
)
from hysst.core import MotionPlanProblem
from hysst.systems import (
    bouncing_ball_library,
    bouncing_ball_problem,
    bouncing_ball_system,
)


def line_tree(states, costs):
    tree = SearchTree(1)
    for x, c in zip(states, costs):
        tree.add_vertex([x], c)
    return tree


def scan_oracle(tree, x_rand, delta):
    ids = list(tree.active_ids())
    near = [v for v in ids if abs(tree.state(v)[0] - x_rand) <= delta]
    if near:
        return min(near, key=lambda v: (tree.cost(v), v))
    return min(ids, key=lambda v: (abs(tree.state(v)[0] - x_rand), v))


def test_best_near_selection_examples():
    tree = line_tree([0.0, 0.5, 2.0], [5.0, 3.0, 7.0])
    assert best_near_selection(np.array([0.4]), tree, 0.6) == 1 == scan_oracle(tree, 0.4, 0.6)
    assert best_near_selection(np.array([10.0]), tree, 0.6) == 2 == scan_oracle(tree, 10.0, 0.6)
    single = line_tree([3.0], [1.0])
    assert best_near_selection(np.array([-50.0]), single, 0.1) == 0


def test_best_near_selection_against_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(1, 30))
        tree = line_tree(rng.uniform(-5, 5, n), rng.integers(0, 5, n).astype(float))
        for v in range(n):
            if rng.random() < 0.3 and tree.n_active > 1:
                tree.set_active(v, False)
        for _ in range(10):
            x, d = float(rng.uniform(-6, 6)), float(rng.uniform(0.1, 2))
            assert best_near_selection(np.array([x]), tree, d) == scan_oracle(tree, x, d)


def test_best_near_respects_constraint_set():
    tree = line_tree([0.0, 0.5], [1.0, 0.0])
    only_zero = lambda x: x[0] == 0.0  # noqa: E731
    assert best_near_selection(np.array([0.2]), tree, 1.0, only_zero) == 0
    assert best_near_selection(np.array([0.2]), tree, 1.0) == 1


def test_locally_best_examples():
    ws = WitnessSet(1)
    assert is_vertex_locally_the_best(np.array([0.0]), 0.0, ws, 0.5)
    assert len(ws) == 1 and ws.rep[0] == -1
    ws.set_rep(0, 0, 10.0)
    assert is_vertex_locally_the_best(np.array([0.1]), 8.0, ws, 0.5)
    assert not is_vertex_locally_the_best(np.array([0.1]), 12.0, ws, 0.5)
    assert len(ws) == 1
    assert is_vertex_locally_the_best(np.array([0.6]), 12.0, ws, 0.5)
    assert len(ws) == 2


def admit(tree, ws, x, cost, parent, delta_s=0.5):
    assert is_vertex_locally_the_best(np.array(x), cost, ws, delta_s)
    v = tree.add_vertex(x, cost, parent)
    return v, prune_dominated_vertices(v, ws, tree)


def test_prune_removes_dominated_leaf():
    tree, ws = SearchTree(1), WitnessSet(1)
    root, _ = admit(tree, ws, [0.0], 0.0, None)
    a, _ = admit(tree, ws, [5.0], 10.0, root)
    b, removed = admit(tree, ws, [5.1], 8.0, root)
    assert removed == [a]
    assert not tree.is_alive(a)
    assert ws.rep[1] == b
    assert a not in tree.edges


def test_prune_keeps_inactive_parent():
    tree, ws = SearchTree(1), WitnessSet(1)
    root, _ = admit(tree, ws, [0.0], 0.0, None)
    a, _ = admit(tree, ws, [5.0], 10.0, root)
    c, _ = admit(tree, ws, [7.0], 11.0, a)
    b, removed = admit(tree, ws, [5.1], 8.0, root)
    assert removed == []
    assert tree.is_alive(a) and not tree.is_active(a)
    assert tree.path_to(c) == [root, a, c]


def test_prune_cascades_up_the_chain():
    tree, ws = SearchTree(1), WitnessSet(1)
    root, _ = admit(tree, ws, [0.0], 0.0, None)
    a, _ = admit(tree, ws, [5.0], 10.0, root)
    b, _ = admit(tree, ws, [7.0], 11.0, a)
    a2, _ = admit(tree, ws, [5.1], 8.0, root)  # a now inactive, kept for b
    assert not tree.is_active(a) and tree.is_alive(a)
    b2, removed = admit(tree, ws, [7.1], 9.0, a2)
    assert removed == [b, a]
    assert tree.is_alive(root) and tree.is_active(root)
    assert tree.n_inactive == 0


def test_tree_init_examples():
    prob = bouncing_ball_problem()
    rng = np.random.default_rng(0)
    tree, ws = tree_init(prob, 1, 0.3, rng)
    assert len(tree) == 1 and len(ws) == 1 and ws.rep[0] == 0
    np.testing.assert_array_equal(ws.points[0], [15.0, 0.0])

    close = MotionPlanProblem(
        prob.system,
        ProjectedSet(lambda x: True, lambda r: np.array([15.0, 0.0]) + r.uniform(-0.01, 0.01, 2)),
        prob.final_distance,
        prob.unsafe,
    )
    tree, ws = tree_init(close, 2, 0.3, rng)
    assert len(ws) == 1 and len(tree) == 1 and tree.n_active == 1

    wide = MotionPlanProblem(
        prob.system,
        ProjectedSet(lambda x: True, lambda r: r.uniform([0, -20], [20, 20])),
        prob.final_distance,
        prob.unsafe,
    )
    tree, ws = tree_init(wide, 5, 1e-6, rng)
    assert len(ws) == 5 and tree.n_active == 5


def test_random_state_supports(rng):
    s = bouncing_ball_system()
    for _ in range(1000):
        assert random_state(s.jump_proj.sample, rng)[0] == 0.0
    xs = np.array([random_state(s.flow_proj.sample, rng) for _ in range(10_000)])
    # 3 sigma bounds of the mean of U[0,20] and U[-20,20] with 10^4 samples
    assert abs(xs[:, 0].mean() - 10.0) <= 3 * 20 / math.sqrt(12) / 100
    assert abs(xs[:, 1].mean()) <= 3 * 40 / math.sqrt(12) / 100


def test_flow_only_when_p_n_is_one():
    prob = bouncing_ball_problem()
    calls = []
    s = prob.system
    jump_proj = ProjectedSet(s.jump_proj.contains, lambda r: calls.append(1) or s.jump_proj.sample(r))
    from dataclasses import replace

    prob2 = replace(prob, system=replace(s, jump_proj=jump_proj))
    hysst_plan(prob2, bouncing_ball_library(), PlannerConfig(K=200, p_n=1.0))
    assert calls == []


def ball_tree_with_leaves(final_states, costs):
    prob = bouncing_ball_problem()
    tree = SearchTree(2)
    root = tree.add_vertex([15.0, 0.0], 0.0)
    for x, c in zip(final_states, costs):
        t = [0.0, c]
        psi = SolutionPair.from_samples(t, [0, 0], [[15.0, 0.0], x], [[0.0], [0.0]])
        tree.add_vertex(x, c, root, psi)
    return prob, tree


def test_solution_check_tolerance():
    prob, tree = ball_tree_with_leaves([[10.0, 0.0], [10.6, 0.0]], [1.0, 1.0])
    plan = solution_check(tree, prob, 0.5, 1)
    assert plan is not None and plan.cost == 1.0 and plan.path == (0, 1)
    assert solution_check(tree, prob, 0.5, 2) is None


def test_best_leaf_plan_picks_cheapest():
    prob, tree = ball_tree_with_leaves([[10.1, 0.0], [9.9, 0.1]], [5.2, 4.1])
    plan = best_leaf_plan(tree, prob, 0.5)
    assert plan.path == (0, 2) and plan.cost == 4.1


def test_hybrid_time_cost_examples():
    arc = HybridArc([0.0, 1.0, 1.0, 2.0, 2.0, 3.2], [0, 0, 1, 1, 2, 2], np.zeros((6, 1)))
    assert hybrid_time_cost(arc) == pytest.approx(5.2)
    assert hybrid_time_cost(HybridArc.point([1.0])) == 0.0


def test_zero_iterations():
    res = hysst_plan(bouncing_ball_problem(), bouncing_ball_library(), PlannerConfig(K=0))
    assert res.best is None and len(res.tree) == 1 and res.stats == []


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(p_n=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(delta_s=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(mode="rrt*")


def test_config_warns_on_small_neighborhood(caplog):
    with caplog.at_level("WARNING"):
        PlannerConfig(delta_bn=0.2, delta_s=0.2)
    assert "delta_bn" in caplog.text


def test_baseline_keeps_every_vertex():
    res = hysst_plan(bouncing_ball_problem(), bouncing_ball_library(), PlannerConfig(K=300, mode=BASELINE, seed=1))
    assert res.tree.n_inactive == 0
    assert len(res.witnesses) == 0
    assert res.tree.n_active == len(res.tree) > 1


def test_seeded_determinism():
    cfg = PlannerConfig(K=400, seed=11)
    a = hysst_plan(bouncing_ball_problem(), bouncing_ball_library(), cfg)
    b = hysst_plan(bouncing_ball_problem(), bouncing_ball_library(), cfg)
    assert a.tree_dump() == b.tree_dump()
    assert a.stats == b.stats
