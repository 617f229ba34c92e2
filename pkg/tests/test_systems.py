import math

import numpy as np
import pytest

from hysst.core import SolutionPair, concatenate_all, hybrid_time_cost, inflate
from hysst.simulation import IntegratorConfig, integrate_flow, jump_pair
from hysst.systems import (
    BouncingBallParams,
    MulticopterParams,
    Wall,
    WallContact,
    auxiliary_extension,
    bouncing_ball_problem,
    bouncing_ball_system,
    collision_velocity,
    load_walls,
    multicopter_problem,
    multicopter_system,
    wall_contact,
)


def test_bouncing_ball_maps_and_sets():
    s = bouncing_ball_system()
    np.testing.assert_array_equal(s.flow_map(np.array([15.0, 0.0]), np.zeros(1)), [0.0, -9.81])
    np.testing.assert_allclose(s.jump_map(np.array([0.0, -17.1552]), np.array([4.0])), [0.0, 17.72416])
    assert not s.jump_set(np.array([0.0, -1.0]), np.array([-1.0]))
    assert s.jump_set(np.array([0.0, -1.0]), np.array([0.0]))
    assert not s.jump_set(np.array([0.5, -1.0]), np.array([1.0]))


def test_bouncing_ball_params_validated():
    with pytest.raises(ValueError):
        BouncingBallParams(lam=1.0)
    with pytest.raises(ValueError):
        BouncingBallParams(gamma=0.0)


def test_bouncing_ball_unsafe_set():
    prob = bouncing_ball_problem()
    assert prob.unsafe(np.array([20.0, 0.0]), np.array([5.0]))
    assert not prob.unsafe(np.array([20.0, 0.0]), np.array([4.9]))
    assert not prob.unsafe(np.array([19.9, 0.0]), np.array([5.0]))


def test_energy_ratio_at_jumps():
    s = bouncing_ball_system()
    for v in np.linspace(-20, 0, 11):
        post = s.jump_map(np.array([0.0, v]), np.zeros(1))
        assert abs(post[1]) == 0.8 * abs(v)


def test_auxiliary_flow_and_jump():
    prob = auxiliary_extension(bouncing_ball_problem())
    s = prob.system
    psi = integrate_flow(s, [15.0, 0.0, 0.0, 0.0], np.zeros(1), 1.0, IntegratorConfig(step_size=1e-3))
    assert psi.state.final[2] == pytest.approx(1.0, abs=1e-12)
    assert psi.state.final[3] == 0.0
    out = s.jump_map(np.array([0.0, -3.0, 2.0, 0.0]), np.zeros(1))
    np.testing.assert_allclose(out, [0.0, 2.4, 2.0, 1.0])
    assert prob.initial_set.contains(np.array([15.0, 0.0, 0.0, 0.0]))
    assert not prob.initial_set.contains(np.array([15.0, 0.0, 0.1, 0.0]))


def test_auxiliary_cost_matches_hybrid_time(rng):
    base = bouncing_ball_problem()
    aux = auxiliary_extension(base)
    cfg = IntegratorConfig(step_size=1e-2)
    for _ in range(20):
        xb = np.array([float(rng.uniform(1, 15)), float(rng.uniform(-5, 5)), 0.0, 0.0])
        pieces = []
        for _ in range(int(rng.integers(1, 6))):
            if aux.system.jump_set(xb, np.zeros(1)):
                p = jump_pair(aux.system, xb, [float(rng.uniform(0, 5))])
            else:
                p = integrate_flow(aux.system, xb, np.zeros(1), float(rng.uniform(0.05, 1.0)), cfg)
            pieces.append(p)
            xb = p.state.final
        plan = concatenate_all(pieces)
        plain = plan.state.x[:, :2]
        arc = SolutionPair.from_samples(plan.state.t, plan.state.j, plain, plan.input.x).state
        assert abs(aux.cost(plan.state) - hybrid_time_cost(arc)) <= 1e-9
        assert abs(sum(aux.cost(p.state) for p in pieces) - aux.cost(plan.state)) <= 1e-9


def test_multicopter_flow_map():
    s = multicopter_system()
    x = np.arange(6.0)
    np.testing.assert_array_equal(s.flow_map(x, np.array([7.0, 8.0])), [2, 3, 4, 5, 7, 8])


def test_multicopter_jump_set_needs_approach():
    params = MulticopterParams()
    s = multicopter_system(params)
    w = params.walls[0]
    on_right = np.array([w.x_max, 3.0, 0.5, 0.0, 0.0, 0.0])
    assert not s.jump_set(on_right, np.zeros(2))
    on_right[2] = -0.5
    assert s.jump_set(on_right, np.zeros(2))


def test_collision_velocity_values():
    c = WallContact(0, (1.0, 0.0), (0.0, -1.0))
    v = collision_velocity(c, (-1.0, 2.0), 0.43, 0.20)
    np.testing.assert_allclose(v, [0.43, 1.68336], atol=1e-5)


def test_normal_velocity_flips_and_position_kept(rng):
    params = MulticopterParams()
    s = multicopter_system(params)
    for _ in range(500):
        x = s.jump_proj.sample(rng)
        c = wall_contact(params.walls, x)
        vn, _ = c.to_frame(x[2:4])
        assert vn < 0
        out = s.jump_map(x, np.zeros(2))
        assert out[0] == x[0] and out[1] == x[1]
        vn_plus, _ = c.to_frame(out[2:4])
        assert vn_plus == pytest.approx(-params.e * vn, abs=1e-12)
        assert vn_plus > 0


def test_wall_contact_faces():
    w = Wall(1.0, 2.0, 1.0, 3.0)
    c = wall_contact([w], (1.0, 2.0))
    assert c.normal == (-1.0, 0.0) and c.tangent == (0.0, 1.0)
    assert wall_contact([w], (2.0, 2.0)).normal == (1.0, 0.0)
    assert wall_contact([w], (1.5, 1.0)).normal == (0.0, -1.0)
    assert wall_contact([w], (1.5, 3.0)).normal == (0.0, 1.0)
    assert wall_contact([w], (0.5, 2.0)) is None
    # corner: x-face wins; lower wall id wins
    assert wall_contact([w], (1.0, 1.0)).normal == (-1.0, 0.0)
    other = Wall(0.0, 1.0, 0.0, 1.0)
    assert wall_contact([w, other], (1.0, 1.0)).wall_id == 0


def test_frame_round_trip(rng):
    for n in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]:
        c = WallContact(0, n, (n[1], -n[0]))
        for v in rng.normal(size=(100, 2)):
            back = c.from_frame(*c.to_frame(v))
            assert np.abs(back - v).max() <= 1e-12


def test_samplers_respect_supports(rng):
    for prob in (bouncing_ball_problem(), multicopter_problem()):
        s = prob.system
        for _ in range(10_000 if s.n == 2 else 2_000):
            assert s.flow_proj.contains(s.flow_proj.sample(rng))
            assert s.jump_proj.contains(s.jump_proj.sample(rng))
            assert prob.initial_set.contains(prob.initial_set.sample(rng))


def rect_depth(w, p):
    """Analytic penetration depth of p into w (0 outside)."""
    if not (w.x_min < p[0] < w.x_max and w.y_min < p[1] < w.y_max):
        return 0.0
    return min(p[0] - w.x_min, w.x_max - p[0], p[1] - w.y_min, w.y_max - p[1])


def test_multicopter_inflated_flow_set_matches_depth(rng):
    params = MulticopterParams()
    s = multicopter_system(params)
    infl = inflate(s, 0.1)
    for _ in range(5000):
        p = rng.uniform([0, 0], [6, 5])
        x = np.concatenate((p, np.zeros(4)))
        depth = max(rect_depth(w, p) for w in params.walls)
        if abs(depth - 0.1) > 1e-6:
            assert infl.flow_set(x, np.zeros(2)) == (depth <= 0.1)
        if s.flow_set(x, np.zeros(2)):
            assert infl.flow_set(x, np.zeros(2))


def test_unsafe_set_reads_keep_in_arena():
    prob = multicopter_problem()
    u = np.zeros(2)
    assert prob.unsafe(np.array([-0.1, 2.0, 0, 0, 0, 0]), u)
    assert prob.unsafe(np.array([3.0, 5.0, 0, 0, 0, 0]), u)
    assert not prob.unsafe(np.array([1.0, 2.0, 0, 0, 0, 0]), u)
    assert prob.unsafe(np.array([3.0, 3.0, 0, 0, 0, 0]), u)  # inside wall 0
    assert not prob.unsafe(np.array([2.8, 3.0, 0, 0, 0, 0]), u)  # on its face


def test_load_walls(tmp_path):
    path = tmp_path / "walls.json"
    path.write_text('[{"x_min": 1, "x_max": 2, "y_min": 0, "y_max": 1}]')
    assert load_walls(path) == (Wall(1.0, 2.0, 0.0, 1.0),)
    with pytest.raises(ValueError):
        MulticopterParams(walls=(Wall(5.0, 7.0, 0.0, 1.0),))
