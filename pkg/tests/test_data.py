import numpy as np
import pytest

from ampda.data import (
    ConstructionError, ParseError, SyntheticSpec, generate_instance, initial_point,
    read_instance, read_libsvm, read_trace_csv, recovery_error, write_instance,
    write_libsvm, write_trace_csv,
)
from ampda.oracles import RecoveryInstance, build_problem
from ampda.problem import eval_F
from ampda.solver import solve

from conftest import random_instance


def test_spec_sizes():
    spec = SyntheticSpec(R=1)
    assert (spec.m, spec.n, spec.K_true, spec.mu_true) == (365, 1280, 40, 5)
    assert (spec.K_model, spec.mu_model) == (52, 7)
    assert SyntheticSpec(R=3).K_model == 156
    assert SyntheticSpec(variant="l1l2").lam_model == 5.0
    assert SyntheticSpec(variant="l1sk").lam_model == 0.5
    with pytest.raises(ValueError):
        SyntheticSpec(R=0)


@pytest.fixture(scope="module")
def gen():
    return generate_instance(SyntheticSpec(R=1, variant="l1sk", seed=11))


def test_generated_structure(gen):
    inst = gen.instance
    assert inst.A.shape == (365, 1280) and inst.K == 52 and inst.mu == 7
    np.testing.assert_allclose(np.linalg.norm(inst.A, axis=0), 1.0, atol=1e-12)
    assert np.count_nonzero(gen.x_true) == 40
    assert np.count_nonzero(gen.z_impulse) == 5
    assert set(np.abs(gen.z_impulse[gen.z_impulse != 0])) == {2.0}
    bound = max(5.0, np.abs(gen.x_true).max())
    assert np.all(inst.upper == bound) and np.all(inst.lower == -bound)


def test_generation_draw_order(gen):
    """Replays the documented draw sequence with an independent stream."""
    rng = np.random.default_rng(11)
    m, n = 365, 1280
    A = np.empty((m, n))
    for j in range(n):
        A[:, j] = rng.standard_normal(m)
    A /= np.linalg.norm(A, axis=0)
    supp = rng.choice(n, 40, replace=False)
    vals = rng.standard_normal(40)
    pos = rng.choice(m, 5, replace=False)
    signs = np.sign(rng.standard_normal(5))
    noise = rng.standard_normal(m)
    x = np.zeros(n)
    x[supp] = vals
    z = np.zeros(m)
    z[pos] = 2 * signs
    np.testing.assert_array_equal(gen.instance.A, A)
    np.testing.assert_array_equal(gen.x_true, x)
    np.testing.assert_array_equal(gen.z_impulse, z)
    np.testing.assert_array_equal(gen.instance.b, A @ x - z + 0.01 * noise)


def test_generation_deterministic(gen):
    again = generate_instance(SyntheticSpec(R=1, variant="l1sk", seed=11))
    assert np.array_equal(gen.instance.A, again.instance.A)
    assert np.array_equal(gen.instance.b, again.instance.b)
    other = generate_instance(SyntheticSpec(R=1, variant="l1sk", seed=12))
    assert not np.array_equal(gen.instance.b, other.instance.b)


def test_initial_point_hand_instance():
    inst = RecoveryInstance(A=np.eye(2), b=[2.0, 0.0], lam=1.0, mu=0,
                            lower=[-10, -10], upper=[10, 10])
    x0, ok, margin = initial_point(inst)
    assert list(x0) == [2.0, 0.0]
    assert eval_F(build_problem(inst, "l1l2"), x0).value == 1.0
    assert ok and margin == 2.0


def test_initial_point_mu_zero_normalized(rng):
    inst = random_instance(rng, mu=0, bound=1e3)
    x0, ok, _ = initial_point(inst)
    i = int(np.argmax(np.abs(inst.b @ inst.A)))
    assert np.count_nonzero(x0) == 1
    assert x0[i] == pytest.approx(inst.b @ inst.A[:, i], rel=1e-13)
    assert ok


def test_initial_point_clamped():
    inst = RecoveryInstance(A=np.eye(2), b=[20.0, 1.0], lam=1.0, mu=0,
                            lower=[-3, -3], upper=[3, 3])
    x0, ok, _ = initial_point(inst)
    assert list(x0) == [3.0, 0.0] and ok


def test_initial_point_uses_untruncated_part():
    # the largest entry of b is dropped by T; column 1 matches the rest
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    inst = RecoveryInstance(A=A, b=[9.0, 1.0, 0.5], lam=1.0, mu=1,
                            lower=[-10, -10], upper=[10, 10])
    x0, ok, margin = initial_point(inst)
    assert list(x0) == [0.0, 1.0] and ok
    assert margin == pytest.approx(1 + 0.5 * 1.25 - eval_F(build_problem(inst, "l1l2"), x0).value)


def test_initial_point_sparse_b():
    inst = RecoveryInstance(A=np.eye(3), b=[1.0, 0.0, 0.0], lam=1.0, mu=1,
                            lower=-1, upper=1)
    with pytest.raises(ConstructionError):
        initial_point(inst)


def test_initial_point_zero_denominator():
    # the best column lives entirely on the kept support of b
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    inst = RecoveryInstance(A=A, b=[5.0, 1.0], lam=1.0, mu=1, lower=-1, upper=1)
    with pytest.raises(ConstructionError):
        initial_point(inst)


@pytest.mark.parametrize("variant", ["l1l2", "l1sk"])
def test_initial_point_admissible_synthetic(variant):
    for seed in range(5):
        gen = generate_instance(SyntheticSpec(R=1, variant=variant, seed=seed))
        x0, ok, margin = initial_point(gen.instance, variant)
        assert ok and margin > 0 and np.any(x0)
        assert np.all(x0 >= gen.instance.lower) and np.all(x0 <= gen.instance.upper)


def test_recovery_error():
    x = np.array([1.0, -2.0, 0.0])
    assert recovery_error(x, x) == 0.0
    assert recovery_error(np.zeros(3), x) == 1.0
    assert recovery_error(2 * x, x) == 1.0
    with pytest.raises(ValueError):
        recovery_error(x, np.zeros(3))


def test_read_libsvm_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1.5 1:2.0 3:-1.0\n")
    A, b = read_libsvm(p, 3)
    assert A.tolist() == [[2.0, 0.0, -1.0]] and b.tolist() == [1.5]
    A, _ = read_libsvm(p, 5)
    assert A.shape == (1, 5)


def test_libsvm_round_trip(tmp_path, rng):
    A = rng.standard_normal((7, 9))
    A[rng.random(A.shape) < 0.4] = 0.0
    A[:, -1] = 1.0      # keep the last column so the width is inferred
    b = rng.standard_normal(7)
    p = tmp_path / "rt.txt"
    write_libsvm(p, A, b)
    A2, b2 = read_libsvm(p)
    assert np.array_equal(A, A2) and np.array_equal(b, b2)


@pytest.mark.parametrize("text, lineno", [
    ("1 1:1\n2 2:1 1:1\n", 2),
    ("1 0:1\n", 1),
    ("1 1:x\n", 1),
    ("abc 1:1\n", 1),
    ("1 1:1\n1 2:2 2:3\n", 2),
    ("1 1:1 # comment\n", 1),
])
def test_libsvm_errors(tmp_path, text, lineno):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        read_libsvm(p)
    assert info.value.lineno == lineno
    assert f":{lineno}:" in str(info.value)


def test_libsvm_empty(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("\n")
    with pytest.raises(ParseError):
        read_libsvm(p)


def test_instance_round_trip(tmp_path, rng):
    inst = random_instance(rng)
    x_true = rng.standard_normal(inst.n)
    p = tmp_path / "inst.txt"
    write_instance(p, inst, variant="l1sk", x_true=x_true, seed=5)
    back, info = read_instance(p)
    assert np.array_equal(back.A, inst.A) and np.array_equal(back.b, inst.b)
    assert (back.lam, back.mu, back.K) == (inst.lam, inst.mu, inst.K)
    assert np.array_equal(back.lower, inst.lower)
    assert info == {"variant": "l1sk", "seed": 5, "x_true": info["x_true"]}
    assert np.array_equal(info["x_true"], x_true)


def test_instance_bad_magic(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("hello\n")
    with pytest.raises(ParseError):
        read_instance(p)


def test_trace_csv_round_trip(tmp_path, small_problem, small_instance, rng):
    from conftest import feasible_point
    res = solve(small_problem, feasible_point(rng, small_instance.n))
    p = tmp_path / "trace.csv"
    write_trace_csv(p, res.trace, final_criticality=0.0)
    rows = read_trace_csv(p)
    assert len(rows) == len(res.trace)
    assert [r["F"] for r in rows] == [s.F_val for s in res.trace]
    assert rows[-1]["step_norm"] is None and rows[-1]["criticality"] == 0.0
    header = p.read_text().splitlines()[0].split(",")
    assert header[:6] == ["iter", "F", "step_norm", "alpha", "backtracks", "criticality"]
