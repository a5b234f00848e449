import numpy as np
import pytest

from ampda.data import SyntheticSpec, generate_instance, initial_point
from ampda.oracles import RecoveryInstance, build_problem
from ampda.problem import DomainError, eval_F, eval_F_tilde
from ampda.solver import (
    CONVERGED, INVALID_START, LINE_SEARCH_FAILURE, MAX_ITERS, LineSearchFailure,
    SolverConfig, bb_trial_stepsize, line_search, make_state, proximal_step,
    q_linesearch_value, solve,
)

from conftest import feasible_point, random_instance


def scalar_problem(b, lower=-10.0, upper=10.0, a=1.0, lam=1.0):
    inst = RecoveryInstance(A=[[a]], b=[b], lam=lam, mu=0, lower=[lower], upper=[upper])
    return build_problem(inst, "l1l2")


def test_bb_first_iteration():
    assert bb_trial_stepsize(None, None, 1e-4, 1e4) == 1.0


def test_bb_degenerate():
    dx = np.array([1.0, 0.0])
    assert bb_trial_stepsize(dx, np.array([0.0, 3.0]), 1e-4, 1e4) == 1.0


def test_bb_clamped():
    dx = np.array([1.0])
    assert bb_trial_stepsize(dx, np.array([1e-9]), 1e-4, 1e4) == 1e4
    assert bb_trial_stepsize(dx, np.array([1e9]), 1e-4, 1e4) == 1e-4
    assert bb_trial_stepsize(dx, np.array([-4.0]), 1e-4, 1e4) == 0.25


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(alpha_min=2.0, alpha_max=1.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(sigma=0.0)


def test_proximal_step_scalar():
    # x=2, residual 1, c = 1/2, c^2 f y = 1/2: direction 0.5,
    # v = 2 - 0.5*0.5 = 1.75, threshold 0.5*0.5 = 0.25
    prob = scalar_problem(b=1.0)
    state = make_state(prob, np.array([2.0]))
    assert proximal_step(prob, state, 0.5)[0] == pytest.approx(1.5, abs=1e-15)


def test_proximal_step_fixed_point_at_critical():
    prob = scalar_problem(b=1.0)
    state = make_state(prob, np.array([1.0]))
    for alpha in (0.1, 1.0, 7.0):
        assert proximal_step(prob, state, alpha)[0] == 1.0


def test_proximal_step_stays_in_box(small_instance, variant, rng):
    prob = build_problem(small_instance, variant)
    for _ in range(50):
        state = make_state(prob, feasible_point(rng, small_instance.n))
        assert prob.in_C(proximal_step(prob, state, 10 ** rng.uniform(-3, 3)))


def q_from_conjugates(prob, x_hat, state):
    """Q(x_hat, y, z, 1/g(x_hat)) with g*(y) and h2*(z) from Fenchel-Young at x^k."""
    x, y, z = state.x, state.y, state.z
    g_star = x @ y - prob.eval_g(x)
    h2_star = x @ z - prob.eval_h2(x)
    c = 1.0 / prob.eval_g(x_hat)
    f = prob.eval_f(x_hat)
    return 2 * c * f + c * c * f * (g_star - x_hat @ y) + prob.eval_h1(x_hat) + h2_star - x_hat @ z


def test_q_identity(small_instance, variant, rng):
    prob = build_problem(small_instance, variant)
    for _ in range(200):
        state = make_state(prob, feasible_point(rng, small_instance.n))
        x_hat = feasible_point(rng, small_instance.n)
        q = q_linesearch_value(prob, x_hat, state)
        ref = q_from_conjugates(prob, x_hat, state)
        assert q == pytest.approx(ref, abs=1e-9 * (1 + abs(ref)))
        # sandwich: F(x_hat) <= Q
        F_hat = eval_F(prob, x_hat).value
        assert F_hat <= q + 1e-10 * (1 + abs(q))


def test_q_at_current_point_is_F(small_instance, variant, rng):
    prob = build_problem(small_instance, variant)
    x = feasible_point(rng, small_instance.n)
    state = make_state(prob, x)
    assert q_linesearch_value(prob, x, state) == pytest.approx(state.F_val, rel=1e-14)


def test_q_domain_error(small_problem, small_instance, rng):
    state = make_state(small_problem, feasible_point(rng, small_instance.n))
    with pytest.raises(DomainError):
        q_linesearch_value(small_problem, np.zeros(small_instance.n), state)


def test_line_search_rejects_zero_prox():
    # box [0, 10] with a large pull to the left: alpha = 1, 1/2, 1/4 give x_hat = 0
    prob = scalar_problem(b=-5.0, lower=0.0)
    state = make_state(prob, np.array([1.0]))
    state.alpha_trial = 1.0
    x_hat, alpha, nback, q = line_search(prob, state, SolverConfig())
    assert (nback, alpha) == (3, 0.125)
    assert x_hat[0] == pytest.approx(0.25, abs=1e-15)
    # hand value: 4*(0.5-1) + 0.5*5.25**2 + 0.75*4
    assert q == pytest.approx(-2.0 + 13.78125 + 3.0, rel=1e-14)


def test_line_search_critical_point_zero_step():
    prob = scalar_problem(b=1.0)
    state = make_state(prob, np.array([1.0]))
    state.alpha_trial = 1.0
    x_hat, alpha, nback, _ = line_search(prob, state, SolverConfig())
    assert nback == 0 and alpha == 1.0 and x_hat[0] == 1.0


def test_line_search_failure_cap():
    prob = scalar_problem(b=-5.0, lower=0.0)
    state = make_state(prob, np.array([1.0]))
    state.alpha_trial = 1.0
    with pytest.raises(LineSearchFailure):
        line_search(prob, state, SolverConfig(max_backtracks=2))


def test_solve_critical_start():
    prob = scalar_problem(b=1.0)
    res = solve(prob, np.array([1.0]), keep_vectors=True)
    assert res.status == CONVERGED and res.iterations == 1
    assert res.trace[0].step_norm == 0.0
    assert len(res.trace) == res.iterations + 1


def test_solve_invalid_start(small_problem, small_instance):
    res = solve(small_problem, np.zeros(small_instance.n))
    assert res.status == INVALID_START and res.iterations == 0


def test_solve_max_iters(small_problem, small_instance, rng):
    res = solve(small_problem, feasible_point(rng, small_instance.n), SolverConfig(max_iters=1))
    assert res.status == MAX_ITERS and res.iterations == 1 and len(res.trace) == 2


def test_solve_line_search_failure_keeps_iterate():
    prob = scalar_problem(b=-5.0, lower=0.0)
    res = solve(prob, np.array([1.0]), SolverConfig(max_backtracks=2))
    assert res.status == LINE_SEARCH_FAILURE
    assert res.final_x[0] == 1.0 and res.iterations == 0 and res.trace


def _check_trace(prob, res, config):
    tr = res.trace
    assert len(tr) == res.iterations + 1
    for cur, nxt in zip(tr, tr[1:]):
        tol = 1e-10 * (1 + abs(cur.F_val))
        pen = 0.5 * config.sigma * cur.step_norm ** 2
        assert prob.feasible(nxt.x)
        assert nxt.F_val + pen <= cur.F_val + tol
        assert nxt.F_val <= cur.q_next + tol
        assert cur.q_next + pen <= cur.F_val + tol
        assert cur.alpha_accepted <= cur.alpha_trial <= config.alpha_max
        assert cur.alpha_accepted == cur.alpha_trial * config.gamma ** cur.backtracks
        assert cur.step_norm == pytest.approx(np.linalg.norm(nxt.x - cur.x), rel=1e-15)


def test_solve_small_instances_invariants(rng, variant):
    config = SolverConfig()
    for _ in range(10):
        inst = random_instance(rng, m=8, n=20, mu=2, K=4)
        prob = build_problem(inst, variant)
        res = solve(prob, feasible_point(rng, inst.n), config, keep_vectors=True)
        assert res.status == CONVERGED
        _check_trace(prob, res, config)


def test_solve_synthetic_invariants_and_determinism(variant):
    spec = SyntheticSpec(R=1, variant=variant, seed=3)
    gen = generate_instance(spec)
    prob = build_problem(gen.instance, variant)
    x0, ok, _ = initial_point(gen.instance, variant)
    assert ok
    config = SolverConfig()
    a = solve(prob, x0, config, keep_vectors=True)
    b = solve(prob, x0, config, keep_vectors=True)
    assert a.status == CONVERGED
    _check_trace(prob, a, config)
    assert len(a.trace) == len(b.trace)
    for sa, sb in zip(a.trace, b.trace):
        assert np.array_equal(sa.x, sb.x)
        assert sa.F_val == sb.F_val and sa.alpha_accepted == sb.alpha_accepted


def test_solve_without_vectors_keeps_scalars(small_problem, small_instance, rng):
    res = solve(small_problem, feasible_point(rng, small_instance.n))
    assert res.trace and all(s.x is None for s in res.trace)
    assert all(s.F_val is not None for s in res.trace)


def test_F_tilde_consistency_along_trace(small_problem, small_instance, rng):
    res = solve(small_problem, feasible_point(rng, small_instance.n), keep_vectors=True)
    for s in res.trace:
        assert eval_F_tilde(small_problem, s.x, s.c).value == pytest.approx(s.F_val, rel=1e-12)
