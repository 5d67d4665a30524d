import numpy as np
import pytest

from sysrisk import (
    FiniteProbSpace,
    InvalidParams,
    Partition,
    RandomVector,
    ZeroBlockMass,
    conditional_expectation,
    dump_space_vector,
    is_measurable,
    load_space_vector,
    sigma_of_event,
)


def test_space_validation():
    with pytest.raises(InvalidParams):
        FiniteProbSpace([0.5, 0.5, 0.0])
    with pytest.raises(InvalidParams):
        FiniteProbSpace([0.6, 0.6])
    with pytest.raises(InvalidParams):
        FiniteProbSpace([])
    sp = FiniteProbSpace.uniform(4)
    assert sp.n_atoms == 4
    assert sp.expectation([1, 2, 3, 4]) == pytest.approx(2.5)


def test_partition_validation_and_canonical_form():
    with pytest.raises(InvalidParams):
        Partition(((0, 1), (1, 2)), 3)  # overlap
    with pytest.raises(InvalidParams):
        Partition(((0, 1),), 3)  # not a cover
    with pytest.raises(InvalidParams):
        Partition(((0, 1), ()), 2)  # empty block
    a = Partition(((2, 3), (1, 0)), 4)
    b = Partition(((0, 1), (2, 3)), 4)
    assert a == b  # blocks are sorted into canonical order


def test_refinement():
    coarse = Partition(((0, 1, 2, 3),), 4)
    fine = Partition(((0, 1), (2, 3)), 4)
    assert fine.refines(coarse)
    assert not coarse.refines(fine)
    assert Partition.discrete(4).refines(fine)
    assert fine.refines(fine)


def test_sigma_of_event():
    sp4 = FiniteProbSpace.uniform(4)
    assert sigma_of_event(sp4, {0, 1}).blocks == ((0, 1), (2, 3))
    assert sigma_of_event(sp4, set()).blocks == ((0, 1, 2, 3),)
    sp3 = FiniteProbSpace.uniform(3)
    assert sigma_of_event(sp3, {2}).blocks == ((0, 1), (2,))
    with pytest.raises(InvalidParams):
        sigma_of_event(sp3, {5})


def test_is_measurable():
    G = Partition(((0, 1), (2, 3)), 4)
    assert is_measurable([1, 1, 2, 2], G)
    assert not is_measurable([1, 2, 2, 2], G)
    triv = Partition.trivial(4)
    assert is_measurable([3, 3, 3, 3], triv)
    assert not is_measurable([3, 3, 3, 4], triv)


def test_conditional_expectation_block_averages():
    sp = FiniteProbSpace.uniform(4)
    G = Partition(((0, 1), (2, 3)), 4)
    np.testing.assert_allclose(
        conditional_expectation(sp, [1, 3, 5, 7], G), [2, 2, 6, 6]
    )
    np.testing.assert_allclose(
        conditional_expectation(sp, [1, 3, 5, 7], Partition.trivial(4)), [4, 4, 4, 4]
    )


def test_conditional_expectation_with_density():
    sp = FiniteProbSpace.uniform(2)
    got = conditional_expectation(sp, [0, 4], Partition.trivial(2), density=[1.5, 0.5])
    np.testing.assert_allclose(got, [1.0, 1.0])


def test_zero_block_mass():
    sp = FiniteProbSpace.uniform(4)
    G = Partition(((0, 1), (2, 3)), 4)
    with pytest.raises(ZeroBlockMass):
        conditional_expectation(sp, [1, 2, 3, 4], G, density=[0, 0, 2, 2])


def test_density_validation():
    sp = FiniteProbSpace.uniform(2)
    with pytest.raises(InvalidParams):
        conditional_expectation(sp, [1, 2], Partition.trivial(2), density=[-0.5, 2.5])
    with pytest.raises(InvalidParams):
        conditional_expectation(sp, [1, 2], Partition.trivial(2), density=[2.0, 2.0])


def _random_refinement(rng, n):
    """A coarse partition and a finer one splitting some of its blocks."""
    cuts = sorted(rng.choice(np.arange(1, n), size=rng.integers(1, 3), replace=False))
    coarse_blocks = []
    prev = 0
    for c in list(cuts) + [n]:
        coarse_blocks.append(tuple(range(prev, c)))
        prev = c
    fine_blocks = []
    for blk in coarse_blocks:
        if len(blk) > 1 and rng.uniform() < 0.7:
            k = int(rng.integers(1, len(blk)))
            fine_blocks.append(blk[:k])
            fine_blocks.append(blk[k:])
        else:
            fine_blocks.append(blk)
    return Partition(tuple(coarse_blocks), n), Partition(tuple(fine_blocks), n)


def test_tower_property_randomized():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(4, 12))
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        coarse, fine = _random_refinement(rng, n)
        assert fine.refines(coarse)
        F = rng.normal(size=n)
        inner = conditional_expectation(sp, F, fine)
        lhs = conditional_expectation(sp, inner, coarse)
        rhs = conditional_expectation(sp, F, coarse)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_linearity_monotonicity_measurability():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(3, 10))
        sp = FiniteProbSpace(rng.dirichlet(np.ones(n)))
        _, G = _random_refinement(rng, n)
        F = rng.normal(size=n)
        H = rng.normal(size=n)
        a, b = rng.normal(size=2)
        lin = conditional_expectation(sp, a * F + b * H, G)
        np.testing.assert_allclose(
            lin,
            a * conditional_expectation(sp, F, G) + b * conditional_expectation(sp, H, G),
            atol=1e-10,
        )
        lo = conditional_expectation(sp, np.minimum(F, H), G)
        hi = conditional_expectation(sp, np.maximum(F, H), G)
        assert np.all(lo <= hi + 1e-12)
        assert is_measurable(conditional_expectation(sp, F, G), G, atol=1e-10)


def test_random_vector_and_json_roundtrip():
    with pytest.raises(InvalidParams):
        RandomVector([[1.0, np.inf]])
    rv = RandomVector([[1, 2], [3, 4], [5, 6]])
    assert rv.n_atoms == 3 and rv.d == 2
    sp = FiniteProbSpace([0.2, 0.3, 0.5])
    doc = dump_space_vector(sp, rv.values)
    sp2, vals = load_space_vector(doc)
    assert sp2 == sp
    np.testing.assert_array_equal(vals, rv.values)
    with pytest.raises(InvalidParams):
        dump_space_vector(sp, np.zeros((2, 2)))
