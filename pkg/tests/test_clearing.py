import math

import numpy as np
import pytest

from sysrisk import (
    ClearingProblem,
    ClearingSolution,
    DimensionTooLarge,
    InvalidParams,
    NonConvergence,
    brute_force_oracle,
    clear_fixed_point,
    solve_cm1,
    solve_cm2,
    solve_many,
)

CHAIN = dict(
    Pi=[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
    L=[4.0, 4.0, 0.0],
)


def random_problem(rng, d, critical=False):
    Pi = rng.uniform(0, 1, (d, d))
    np.fill_diagonal(Pi, 0.0)
    rows = Pi.sum(axis=1)
    for i in range(d):
        if rows[i] > 0:
            target = 1.0 if (critical and rng.uniform() < 0.5) else rng.uniform(0.3, 1.0)
            Pi[i] *= target / rows[i]
    L = rng.uniform(0.0, 0.5, d)
    if rng.uniform() < 0.2:
        L[rng.integers(d)] = 0.0
    Pi[L == 0.0] = 0.0
    x = rng.uniform(-0.5, 1.0, d)
    gamma = float(rng.uniform(1.05, 4.0))
    return ClearingProblem(x=x, Pi=Pi, L=L, gamma=gamma)


def check_solution(problem, sol: ClearingSolution):
    """Limited liability and the fixed-point residual, per the data contract."""
    assert np.all(sol.y >= -1e-12) and np.all(sol.y <= problem.L + 1e-12)
    assert np.all(sol.b >= -1e-12)
    resid = np.abs(
        np.clip(problem.Pi.T @ sol.y - problem.x - sol.b, 0.0, problem.L) - sol.y
    ).max()
    assert resid <= 1e-8


def test_problem_validation():
    with pytest.raises(InvalidParams):
        ClearingProblem(x=[0.0], Pi=[[0.5]], L=[1.0], gamma=2.0)  # diagonal
    with pytest.raises(InvalidParams):
        ClearingProblem(x=[0, 0], Pi=[[0, 0.7], [0.9, 0]], L=[1, 1], gamma=0.5)
    with pytest.raises(InvalidParams):
        ClearingProblem(x=[0, 0], Pi=[[0, 1.2], [0, 0]], L=[1, 1], gamma=2.0)
    with pytest.raises(InvalidParams):
        ClearingProblem(x=[0, 0], Pi=[[0, 1.0], [0, 0]], L=[0.0, 1.0], gamma=2.0)
    ClearingProblem(x=[0, 0], Pi=[[0, 1.0], [0, 0]], L=[1.0, 0.0], gamma=math.inf)


def test_fixed_point_examples():
    p = ClearingProblem(x=[1.0, 2.0], Pi=np.zeros((2, 2)), L=[0.0, 0.0], gamma=2.0)
    np.testing.assert_allclose(clear_fixed_point(p, [0, 0]), [0, 0])
    p2 = ClearingProblem(x=[-3.0, 10.0], Pi=[[0, 1], [0, 0]], L=[5.0, 0.0], gamma=10.0)
    np.testing.assert_allclose(clear_fixed_point(p2, [0, 0]), [3, 0])
    p3 = ClearingProblem(x=[-4.0, 1.0, 1.0], gamma=1.5, **CHAIN)
    np.testing.assert_allclose(clear_fixed_point(p3, [3, 0, 0]), [1, 0, 0])
    np.testing.assert_allclose(clear_fixed_point(p3, [0, 0, 0]), [4, 3, 0])
    with pytest.raises(InvalidParams):
        clear_fixed_point(p3, [-1.0, 0.0, 0.0])


def test_least_vs_greatest_fixed_point():
    # a self-sustaining cycle: reductions can feed themselves
    p = ClearingProblem(
        x=[0.0, 0.0], Pi=[[0, 1], [1, 0]], L=[5.0, 5.0], gamma=2.0
    )
    np.testing.assert_allclose(clear_fixed_point(p, [0, 0]), [0, 0])
    np.testing.assert_allclose(clear_fixed_point(p, [0, 0], greatest=True), [5, 5])


def test_injection_monotonicity_of_clearing():
    rng = np.random.default_rng(41)
    for _ in range(60):
        d = int(rng.integers(2, 5))
        Pi = rng.uniform(0, 1, (d, d))
        np.fill_diagonal(Pi, 0)
        Pi /= np.maximum(Pi.sum(axis=1, keepdims=True), 1.0) * rng.uniform(1.0, 2.0)
        L = rng.uniform(0, 2, d)
        Pi[L == 0] = 0.0
        p = ClearingProblem(x=rng.uniform(-2, 1, d), Pi=Pi, L=L, gamma=2.0)
        b1 = rng.uniform(0, 1, d)
        b2 = b1 + rng.uniform(0, 1, d)
        y1 = clear_fixed_point(p, b1)
        y2 = clear_fixed_point(p, b2)
        assert np.all(y2 <= y1 + 1e-10)


def test_nonconvergence_on_critical_crawl():
    # a frictionless cycle with a tiny push creeps toward a huge cap and
    # legitimately exhausts the iteration budget
    p = ClearingProblem(
        x=[-1e-3, -1e-3], Pi=[[0, 1], [1, 0]], L=[1e6, 1e6], gamma=2.0
    )
    with pytest.raises(NonConvergence):
        clear_fixed_point(p, [0, 0])


def test_solve_cm1_examples():
    p = ClearingProblem(x=[1.0, 2.0], Pi=np.zeros((2, 2)), L=[0.0, 0.0], gamma=2.0)
    s = solve_cm1(p)
    assert s.value == 0.0 and not s.b.any() and not s.y.any()
    p2 = ClearingProblem(x=[-3.0, 10.0], Pi=[[0, 1], [0, 0]], L=[5.0, 0.0], gamma=10.0)
    s2 = solve_cm1(p2)
    np.testing.assert_allclose(s2.b, [0, 0], atol=1e-12)
    np.testing.assert_allclose(s2.y, [3, 0], atol=1e-12)
    assert s2.value == pytest.approx(-3.0)
    check_solution(p2, s2)
    p3 = ClearingProblem(x=[-4.0, 1.0, 1.0], gamma=1.5, **CHAIN)
    s3 = solve_cm1(p3)
    np.testing.assert_allclose(s3.b, [3, 0, 0], atol=1e-9)
    np.testing.assert_allclose(s3.y, [1, 0, 0], atol=1e-9)
    assert s3.value == pytest.approx(-5.5)
    check_solution(p3, s3)


def test_solve_cm2_examples():
    p = ClearingProblem(x=[1.0, 2.0], Pi=np.zeros((2, 2)), L=[0.0, 0.0], gamma=2.0)
    assert solve_cm2(p).value == 0.0
    p2 = ClearingProblem(x=[-3.0, 10.0], Pi=[[0, 1], [0, 0]], L=[5.0, 0.0], gamma=10.0)
    assert solve_cm2(p2).value == pytest.approx(-3.0)
    p3 = ClearingProblem(x=[-4.0, 1.0, 1.0], gamma=math.inf, **CHAIN)
    s3 = solve_cm2(p3)
    assert not s3.b.any()
    np.testing.assert_allclose(s3.y, [4, 3, 0], atol=1e-12)
    assert s3.value == pytest.approx(-7.0)


def test_oracle_guards_and_trivial_cases():
    with pytest.raises(DimensionTooLarge):
        brute_force_oracle(
            ClearingProblem(x=np.zeros(4), Pi=np.zeros((4, 4)), L=np.zeros(4), gamma=2.0),
            0.1,
        )
    with pytest.raises(InvalidParams):
        brute_force_oracle(
            ClearingProblem(x=np.zeros(2), Pi=np.zeros((2, 2)), L=np.zeros(2), gamma=2.0),
            0.0,
        )
    p = ClearingProblem(x=[-1.0, 0.5], Pi=np.zeros((2, 2)), L=np.zeros(2), gamma=1.5)
    orc = brute_force_oracle(p, 0.05)
    assert not orc.b.any()  # injections are pure cost without contagion links


def test_oracle_agreement_sampled():
    rng = np.random.default_rng(101)
    for trial in range(40):
        d = int(rng.integers(1, 4))
        p = random_problem(rng, d, critical=(trial % 3 == 0))
        for objective, solve in (("cm1", solve_cm1), ("cm2", solve_cm2)):
            sol = solve(p)
            check_solution(p, sol)
            orc = brute_force_oracle(p, 0.01, objective=objective)
            tol = 1e-4 + d * max(1.0, p.gamma) * 0.01
            assert abs(sol.value - orc.value) <= tol


def test_gamma_monotonicity_of_injections_and_value():
    rng = np.random.default_rng(59)
    gammas = [1.2, 1.8, 3.0, math.inf]
    for _ in range(25):
        d = int(rng.integers(2, 4))
        base = random_problem(rng, d)
        sums, values = [], []
        for g in gammas:
            p = ClearingProblem(x=base.x, Pi=base.Pi, L=base.L, gamma=g)
            s = solve_cm1(p)
            sums.append(s.b.sum())
            values.append(s.value)
        for a, b in zip(sums, sums[1:]):
            assert b <= a + 1e-8
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-8


def test_cm1_isotone_in_equity():
    rng = np.random.default_rng(61)
    for _ in range(30):
        d = int(rng.integers(2, 4))
        p = random_problem(rng, d)
        x_lower = p.x - np.abs(rng.normal(size=d))
        p_low = ClearingProblem(x=x_lower, Pi=p.Pi, L=p.L, gamma=p.gamma)
        assert solve_cm1(p).value >= solve_cm1(p_low).value - 1e-9


def test_solve_many_matches_single_and_threads():
    rng = np.random.default_rng(71)
    d = 4
    Pi = rng.uniform(0, 1, (d, d))
    np.fill_diagonal(Pi, 0)
    Pi /= Pi.sum(axis=1, keepdims=True) * 1.25
    L = rng.uniform(0.2, 1.5, d)
    X = rng.uniform(-1.5, 1.0, size=(30, d))
    vals, B, Y = solve_many(Pi, L, 1.5, X, objective="cm1")
    for k in range(X.shape[0]):
        p = ClearingProblem(x=X[k], Pi=Pi, L=L, gamma=1.5)
        s = solve_cm1(p)
        assert vals[k] == pytest.approx(s.value, abs=1e-9)
    vals8, B8, Y8 = solve_many(Pi, L, 1.5, X, objective="cm1", threads=4)
    np.testing.assert_array_equal(vals, vals8)
    np.testing.assert_array_equal(B, B8)
    np.testing.assert_array_equal(Y, Y8)
    # the non-intervening regulator forces zero injections
    vinf, Binf, _ = solve_many(Pi, L, math.inf, X, objective="cm1")
    assert not Binf.any()


def test_problem_json_roundtrip():
    p = ClearingProblem(x=[-1.0, 2.0], Pi=[[0, 0.5], [0.25, 0]], L=[1.0, 2.0], gamma=math.inf)
    doc = p.to_json()
    assert doc["gamma"] == "inf"
    back = ClearingProblem.from_json(doc)
    assert back.to_json() == doc
    p2 = ClearingProblem.from_json({"x": [0.0], "Pi": [[0.0]], "L": [0.0], "gamma": 2.5})
    assert p2.gamma == 2.5
