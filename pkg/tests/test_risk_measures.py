import numpy as np
import pytest

from sysrisk import (
    AVaRSpec,
    FiniteProbSpace,
    InvalidParams,
    NegExpectationSpec,
    Partition,
    RiskMeasureSpec,
    VaRSpec,
    conditional_avar,
    conditional_expectation,
    conditional_var,
    neg_conditional_expectation,
    var,
)


def avar_tail_oracle(F, p, q):
    """Worst expectation of -F over densities bounded by 1/q with block mean 1.

    The optimum puts maximal density on the worst outcomes: fill mass q
    (in normalized terms) from the lowest values up, fractionally at the
    boundary atom.  Independent of the shortfall-identity code path.
    """
    F = np.asarray(F, dtype=float)
    p = np.asarray(p, dtype=float)
    order = np.argsort(F, kind="stable")
    budget = q * p.sum()
    acc = 0.0
    for idx in order:
        take = min(p[idx], budget)
        acc += take * (-F[idx])
        budget -= take
        if budget <= 0:
            break
    return acc / (q * p.sum())


def test_var_examples():
    F = [-1, -2, -3, -4]
    assert var(F, 0.3) == pytest.approx(3.0)
    assert var(F, 0.5) == pytest.approx(2.0)
    assert var([2.5] * 6, 0.7) == pytest.approx(-2.5)
    with pytest.raises(InvalidParams):
        var(F, 1.0)
    with pytest.raises(InvalidParams):
        var([], 0.5)


def test_var_weighted_matches_uniform():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n = int(rng.integers(2, 12))
        F = rng.normal(size=n)
        q = float(rng.uniform(0.05, 0.95))
        assert var(F, q) == var(F, q, probs=np.full(n, 1.0 / n))


def test_conditional_var_examples():
    sp = FiniteProbSpace.uniform(4)
    F = np.array([-1.0, -2, -3, -4])
    G = Partition(((0, 1), (2, 3)), 4)
    np.testing.assert_allclose(conditional_var(sp, F, G, 0.5), [1, 1, 3, 3])
    np.testing.assert_allclose(
        conditional_var(sp, F, Partition.trivial(4), 0.5), np.full(4, var(F, 0.5))
    )
    np.testing.assert_allclose(conditional_var(sp, F, Partition.discrete(4), 0.5), -F)


def test_conditional_avar_examples():
    sp = FiniteProbSpace.uniform(4)
    F = np.array([-1.0, -2, -3, -4])
    np.testing.assert_allclose(
        conditional_avar(sp, F, Partition.trivial(4), 0.25), np.full(4, 4.0)
    )
    np.testing.assert_allclose(
        conditional_avar(sp, np.full(4, -5.0), Partition.trivial(4), 0.3), np.full(4, 5.0)
    )
    G = Partition(((0, 1), (2, 3)), 4)
    np.testing.assert_allclose(conditional_avar(sp, F, G, 0.5), [2, 2, 4, 4])


def test_avar_dominates_var_and_matches_tail_oracle():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = 6
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        F = rng.normal(size=n) * 3
        q = float(rng.choice([0.1, 0.25, 0.5, 0.9]))
        blocks = ((0, 1, 2), (3, 4, 5)) if rng.uniform() < 0.5 else ((0, 1, 2, 3, 4, 5),)
        G = Partition(blocks, n)
        got = conditional_avar(sp, F, G, q)
        v = conditional_var(sp, F, G, q)
        assert np.all(got >= v - 1e-12)
        for blk in G.blocks:
            idx = list(blk)
            want = avar_tail_oracle(F[idx], sp.probs[idx], q)
            assert got[idx[0]] == pytest.approx(want, abs=1e-6)


def test_neg_conditional_expectation():
    sp = FiniteProbSpace.uniform(4)
    triv = Partition.trivial(4)
    np.testing.assert_allclose(
        neg_conditional_expectation(sp, [1, 3, 5, 7], triv), np.full(4, -4.0)
    )
    np.testing.assert_allclose(
        neg_conditional_expectation(sp, np.full(4, 2.0), triv), np.full(4, -2.0)
    )


def test_density_tilt_raises_risk():
    # shifting density mass toward losses increases the reported risk
    rng = np.random.default_rng(23)
    sp = FiniteProbSpace.uniform(6)
    triv = Partition.trivial(6)
    for _ in range(30):
        F = np.sort(rng.normal(size=6))  # ascending: losses first
        den = np.sort(rng.dirichlet(np.ones(6)))[::-1] * 6  # mass on losses
        tilted = neg_conditional_expectation(sp, F, triv, density=den)
        plain = neg_conditional_expectation(sp, F, triv)
        assert np.all(tilted >= plain - 1e-12)


@pytest.mark.parametrize("make", [
    lambda: VaRSpec(q=0.3),
    lambda: AVaRSpec(q=0.3),
    lambda: NegExpectationSpec(),
])
def test_antitone_and_constant_blockwise(make):
    rng = np.random.default_rng(29)
    spec = make()
    for _ in range(50):
        n = 8
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        G = Partition(((0, 1, 2), (3, 4, 5, 6, 7)), n)
        F = rng.normal(size=n)
        H = F - np.abs(rng.normal(size=n))
        assert np.all(spec.evaluate(sp, F, G) <= spec.evaluate(sp, H, G) + 1e-10)
        alpha = np.repeat(rng.normal(size=2), [3, 5])
        np.testing.assert_allclose(spec.evaluate(sp, alpha, G), -alpha, atol=1e-12)


@pytest.mark.parametrize("make", [lambda: VaRSpec(q=0.4), lambda: AVaRSpec(q=0.4)])
def test_positive_homogeneity_blockwise(make):
    rng = np.random.default_rng(31)
    spec = make()
    for _ in range(50):
        n = 6
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        G = Partition(((0, 1, 2), (3, 4, 5)), n)
        F = rng.normal(size=n)
        alpha = np.repeat(rng.uniform(0, 3, size=2), 3)
        lhs = spec.evaluate(sp, alpha * F, G)
        rhs = alpha * spec.evaluate(sp, F, G)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_avar_convexity_randomized():
    rng = np.random.default_rng(37)
    spec = AVaRSpec(q=0.35)
    for _ in range(100):
        n = 8
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        G = Partition(((0, 1, 2, 3), (4, 5, 6, 7)), n)
        F = rng.normal(size=n) * 2
        H = rng.normal(size=n) * 2
        alpha = np.repeat(rng.uniform(size=2), 4)
        mixed = spec.evaluate(sp, alpha * F + (1 - alpha) * H, G)
        bound = alpha * spec.evaluate(sp, F, G) + (1 - alpha) * spec.evaluate(sp, H, G)
        assert np.all(mixed <= bound + 1e-9)


def test_var_not_convex_fixed_counterexample():
    sp = FiniteProbSpace.uniform(4)
    triv = Partition.trivial(4)
    F = np.array([0.0, -10.0, 0.0, 0.0])
    H = np.array([-10.0, 0.0, 0.0, 0.0])
    q = 0.3
    assert var(F, q) == 0.0 and var(H, q) == 0.0
    mixed = conditional_var(sp, 0.5 * F + 0.5 * H, triv, q)
    assert mixed[0] == pytest.approx(5.0)  # far above the convex bound of 0


def test_spec_json_roundtrip():
    for spec in (VaRSpec(q=0.1), AVaRSpec(q=0.9), NegExpectationSpec(),
                 NegExpectationSpec(density=np.array([0.5, 1.5]))):
        back = RiskMeasureSpec.from_json(spec.to_json())
        assert back.to_json() == spec.to_json()
    with pytest.raises(InvalidParams):
        RiskMeasureSpec.from_json({"kind": "nope"})
    with pytest.raises(InvalidParams):
        VaRSpec(q=0.0)
    with pytest.raises(InvalidParams):
        NegExpectationSpec(density=np.array([-1.0, 3.0]))
