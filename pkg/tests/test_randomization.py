import math

import numpy as np
import pytest

from caradj.errors import ValidationError
from caradj.randomization import RandomizationScheme, assign, draw_strata, fixed_strata


def test_draw_strata_degenerate_simplex():
    assert np.all(draw_strata([1.0], 50, 3) == 1)


def test_draw_strata_frequencies():
    probs = [0.2, 0.2, 0.3, 0.3]
    s = draw_strata(probs, 100_000, 42)
    freq = np.bincount(s, minlength=5)[1:] / s.size
    assert np.all(np.abs(freq - probs) <= 0.01)


def test_draw_strata_deterministic_and_validated():
    assert np.array_equal(draw_strata([0.5, 0.5], 100, 9), draw_strata([0.5, 0.5], 100, 9))
    with pytest.raises(ValidationError):
        draw_strata([0.5, 0.6], 10, 1)
    with pytest.raises(ValidationError):
        draw_strata([1.0], 0, 1)


def test_fixed_strata_counts():
    s = fixed_strata([0.2, 0.2, 0.3, 0.3], 1000, 1)
    assert np.bincount(s).tolist() == [0, 200, 200, 300, 300]
    s = fixed_strata([1 / 3, 1 / 3, 1 / 3], 10, 1)
    assert sorted(np.bincount(s)[1:].tolist()) == [3, 3, 4]


def test_permuted_block_pairs():
    a = assign(RandomizationScheme("permuted-block", 0.5, block_size=2), [1, 1, 1, 1], 0)
    assert a.sum() == 2
    assert a[0] + a[1] == 1 and a[2] + a[3] == 1


@pytest.mark.parametrize("b,pi", [(6, 0.5), (4, 0.25), (6, 1 / 3)])
def test_permuted_block_complete_blocks(b, pi):
    strata = np.repeat([1, 2, 3], [37, 60, 11])
    rng = np.random.default_rng(1)
    strata = strata[rng.permutation(strata.size)]
    a = assign(RandomizationScheme("permuted-block", pi, block_size=b), strata, 17)
    for lab in (1, 2, 3):
        arm = a[strata == lab]
        full = arm.size // b * b
        blocks = arm[:full].reshape(-1, b).sum(axis=1)
        assert np.all(blocks == round(b * pi))


def test_biased_coin_balance():
    a = assign(RandomizationScheme("biased-coin", 0.5, bias=2 / 3), np.ones(10_000, dtype=int), 3)
    assert abs(a.mean() - 0.5) <= 0.02


def test_biased_coin_rule():
    # with lambda = 1 the coin is deterministic after the first draw
    a = assign(RandomizationScheme("biased-coin", 0.5, bias=1.0), np.ones(101, dtype=int), 5)
    d = np.cumsum(np.where(a == 1, 1, -1))
    assert set(np.abs(d).tolist()) <= {0, 1}


def test_simple_concentration():
    a = assign(RandomizationScheme("simple", 0.3), np.ones(10_000, dtype=int), 8)
    assert abs(a.mean() - 0.3) <= 4 * math.sqrt(0.3 * 0.7 / 10_000)


def test_per_stratum_targets():
    strata = np.repeat(["a", "b"], 600)
    a = assign(RandomizationScheme("permuted-block", {"a": 0.5, "b": 0.25}, block_size=4), strata, 1)
    assert a[strata == "a"].mean() == 0.5
    assert a[strata == "b"].mean() == 0.25
    with pytest.raises(ValidationError):
        assign(RandomizationScheme("simple", {"a": 0.5}), strata, 1)


def test_scheme_validation():
    with pytest.raises(ValidationError):
        RandomizationScheme("permuted-block", 0.5, block_size=3)
    with pytest.raises(ValidationError):
        RandomizationScheme("biased-coin", 0.5, bias=0.5)
    with pytest.raises(ValidationError):
        RandomizationScheme("biased-coin", 0.4)
    with pytest.raises(ValidationError):
        RandomizationScheme("urn")
    with pytest.raises(ValidationError):
        RandomizationScheme("simple", 1.0)


@pytest.mark.parametrize("variant", ["simple", "permuted-block", "biased-coin"])
def test_assignment_reads_only_strata_and_seed(variant):
    # permuting covariate/outcome columns cannot matter: they are not inputs,
    # so identical (scheme, strata, seed) must give identical output
    strata = np.random.default_rng(2).integers(1, 4, size=300)
    sch = RandomizationScheme(variant, 0.5)
    first = assign(sch, strata, 123)
    assert np.array_equal(first, assign(sch, strata.copy(), 123))
    assert not np.array_equal(first, assign(sch, strata, 124))


@pytest.mark.parametrize("variant", ["simple", "permuted-block", "biased-coin"])
def test_deviation_shrinks_with_n(variant):
    sch = RandomizationScheme(variant, 0.5)
    devs = []
    for n in (100, 1_000, 10_000, 100_000):
        worst = 0.0
        for seed in range(5):
            a = assign(sch, np.ones(n, dtype=int), seed)
            worst = max(worst, abs(a.mean() - 0.5))
        devs.append(worst)
    # envelope 3 / sqrt(n) for simple; the balancing designs keep the
    # imbalance |D| = O_P(1), so |pi_n - 1/2| = |D| / 2n <= 20 / n
    c, rate = (3.0, 0.5) if variant == "simple" else (20.0, 1.0)
    for n, d in zip((100, 1_000, 10_000, 100_000), devs):
        assert d <= c / n**rate
