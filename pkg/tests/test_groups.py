import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invfeat.groups import (CapacityError, action_from_descriptor, block_permutation, cyclic_shift,
                            enumerate_elements, image_euclidean, sample_elements, trivial_group)


def test_identity_leaves_vector_unchanged(s5, rng):
    x = rng.standard_normal(40)
    assert s5.identity.index == 0
    np.testing.assert_array_equal(s5.apply(s5.identity, x), x)


def test_block_swap():
    action = block_permutation(5, 8)
    e = np.eye(8)
    x = np.concatenate([e[0], e[1], np.zeros(24)])
    g = action.find(np.concatenate([np.arange(8, 16), np.arange(0, 8), np.arange(16, 40)]))
    np.testing.assert_array_equal(action.apply(g, x), np.concatenate([e[1], e[0], np.zeros(24)]))


def test_cyclic_shift_by_one():
    action = cyclic_shift(4)
    g = [e for e in action.elements if e.descriptor == (1,)][0]
    np.testing.assert_array_equal(action.apply(g, np.array([1.0, 2, 3, 4])), [4, 1, 2, 3])


def test_enumeration_sizes():
    assert len(enumerate_elements(block_permutation(5, 8))) == 120
    assert len(enumerate_elements(cyclic_shift(8))) == 8
    assert len(enumerate_elements(image_euclidean(28, 28))) == 7 * 7 * 9


def test_enumeration_deterministic_and_duplicate_free(s5):
    a = [g.descriptor for g in enumerate_elements(s5)]
    b = [g.descriptor for g in enumerate_elements(block_permutation(5, 8))]
    assert a == b
    assert len(set(map(tuple, s5.source_maps))) == len(s5)


def test_capacity_errors():
    with pytest.raises(CapacityError):
        block_permutation(9, 2)
    with pytest.raises(CapacityError):
        enumerate_elements(block_permutation(5, 8), cap=100)
    with pytest.raises(CapacityError):
        image_euclidean(28, 28, max_elements=100)


def test_dimension_mismatch(s5):
    with pytest.raises(ValueError):
        s5.apply(s5.identity, np.zeros(39))


def test_cyclic_subgroup_order():
    action = cyclic_shift(1000, order=8)
    assert len(action) == 8
    assert [g.descriptor[0] for g in action.elements] == [125 * r for r in range(8)]
    for a in action.elements:
        for b in action.elements:
            action.compose(a, b)            # closure: raises if missing
    with pytest.raises(ValueError):
        cyclic_shift(1000, order=7)


def test_closure_and_inverses(s5):
    for a in s5.elements[::7]:
        inv = s5.inverse(a)
        assert s5.compose(a, inv).index == 0
        for b in s5.elements[::11]:
            s5.compose(a, b)


def test_sampling_single_from_trivial():
    assert sample_elements(trivial_group(3), 1, 0)[0].index == 0


def test_sampling_full_count_has_duplicates(s5):
    drawn = [g.index for g in sample_elements(s5, len(s5), 3)]
    assert len(drawn) == 120
    assert len(set(drawn)) < 120        # with replacement, 120 draws almost surely repeat


def test_sampling_deterministic(s5):
    a = [g.index for g in sample_elements(s5, 50, 9)]
    b = [g.index for g in sample_elements(s5, 50, 9)]
    assert a == b


def test_sampling_uniform_chi_square(s5):
    # 10^5 draws over 120 cells; every cell within 3 sigma of the binomial mean, and chi^2 sane
    draws = np.array([g.index for g in sample_elements(s5, 100_000, 11)])
    counts = np.bincount(draws, minlength=120)
    p = 1 / 120
    mean, sd = 1e5 * p, math.sqrt(1e5 * p * (1 - p))
    # with 120 cells a few 3-sigma excursions are expected by chance; the chi^2 statistic is the real test
    assert np.mean(np.abs(counts - mean) <= 3 * sd) >= 0.98
    chi2 = float(np.sum((counts - mean) ** 2 / mean))
    from scipy.stats import chi2 as chi2_dist
    assert chi2_dist.sf(chi2, 119) > 1e-3


def test_image_group_identity_and_exactness():
    action = image_euclidean(10, 12)
    g0 = [g for g in action.elements if g.descriptor == (0, 0, 0.0)][0]
    x = np.arange(120.0)
    np.testing.assert_array_equal(action.apply(g0, x), x)
    assert action.exactness == "approximately-unitary"
    translations = image_euclidean(10, 12, angle_range=0)
    assert translations.exactness == "exactly-unitary"
    assert len(translations) == 49
    for g in translations.elements:
        assert sorted(translations.source_map(g)) == list(range(120))


def test_image_translation_is_cyclic():
    action = image_euclidean(3, 4, max_shift=1, angle_range=0)
    g = [e for e in action.elements if e.descriptor == (1, 0, 0.0)][0]
    img = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(action.apply(g, img.ravel()).reshape(3, 4), np.roll(img, 1, axis=1))


def test_descriptor_round_trip():
    for action in (block_permutation(3, 2), cyclic_shift(12, order=4), image_euclidean(6, 6, 1, 10, 5),
                   trivial_group(5)):
        again = action_from_descriptor(action.descriptor())
        np.testing.assert_array_equal(again.source_maps, action.source_maps)


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=40, max_size=40).map(np.array)


@settings(max_examples=60, deadline=None)
@given(x=vectors, i=st.integers(0, 119))
def test_unitarity_and_inverse_property(x, i):
    action = block_permutation(5, 8)
    g = action.elements[i]
    gx = action.apply(g, x)
    assert abs(np.linalg.norm(gx) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))
    np.testing.assert_allclose(action.apply(action.inverse(g), gx), x, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(2, 30), data=st.data())
def test_cyclic_unitarity_property(d, data):
    action = cyclic_shift(d)
    x = np.array(data.draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=d, max_size=d)))
    for g in action.elements:
        gx = action.apply(g, x)
        assert abs(np.linalg.norm(gx) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))
        np.testing.assert_allclose(action.apply(action.inverse(g), gx), x, atol=1e-12)
