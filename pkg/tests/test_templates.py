import math

import numpy as np
import pytest

from invfeat.groups import block_permutation, trivial_group
from invfeat.templates import (SamplingError, TemplateBank, build_projection_table, make_bank,
                               sample_gaussian_rejection, sample_uniform_sphere)
from invfeat import templates as templates_mod


def test_rejection_predicate_holds():
    for seed in range(200):
        t = sample_gaussian_rejection(20, 0.1, seed)
        assert t @ t < 1.1


def test_rejection_deterministic():
    np.testing.assert_array_equal(sample_gaussian_rejection(30, 0.2, 5), sample_gaussian_rejection(30, 0.2, 5))


def test_acceptance_rate_at_least_chi2_bound():
    # acceptance = P(chi2_d / d < 1 + eps) >= 1 - exp(-d eps^2 / 8)
    d, eps, trials = 500, 0.1, 10_000
    rng = np.random.default_rng(0)
    accepted = np.mean(rng.chisquare(d, size=trials) / d < 1 + eps)
    bound = 1 - math.exp(-d * eps ** 2 / 8)
    se = math.sqrt(bound * (1 - bound) / trials)
    assert accepted >= bound - 3 * se


class CountingGenerator(np.random.Generator):
    draws = 0

    def normal(self, *args, **kwargs):
        CountingGenerator.draws += 1
        return super().normal(*args, **kwargs)


class HugeGenerator(np.random.Generator):
    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.full(size, 10.0)


def test_sampler_acceptance_rate_matches_chi2():
    # every call to normal() is one proposal; the accepted fraction must clear the chi^2 bound
    d, eps, accepted = 500, 0.1, 2000
    CountingGenerator.draws = 0
    rng = CountingGenerator(np.random.PCG64(0))
    for _ in range(accepted):
        sample_gaussian_rejection(d, eps, rng)
    proposals = CountingGenerator.draws
    rate = accepted / proposals
    bound = 1 - math.exp(-d * eps ** 2 / 8)
    assert rate >= bound - 3 * math.sqrt(bound * (1 - bound) / proposals)


def test_sampling_error_when_every_proposal_rejects(monkeypatch):
    monkeypatch.setattr(templates_mod, "MAX_REJECTIONS", 5)
    with pytest.raises(SamplingError):
        sample_gaussian_rejection(4, 0.1, HugeGenerator(np.random.PCG64(0)))


def test_invalid_arguments():
    with pytest.raises(ValueError):
        sample_gaussian_rejection(0, 0.1, 0)
    with pytest.raises(ValueError):
        sample_gaussian_rejection(5, 1.0, 0)
    with pytest.raises(ValueError):
        make_bank(5, 0)


def test_uniform_sphere():
    for seed in range(50):
        assert abs(np.linalg.norm(sample_uniform_sphere(17, seed)) - 1) <= 1e-12
    assert all(sample_uniform_sphere(1, s)[0] in (-1.0, 1.0) for s in range(20))
    bank = make_bank(5, 100_000 // 5, kind="uniform-sphere", seed=2)
    coords = bank.templates.ravel()
    # coordinates of a uniform point on S^4 have variance 1/5
    assert abs(coords.mean()) <= 3 * math.sqrt(1 / 5 / coords.size)


def test_bank_prefix_property_and_reproducibility():
    a = make_bank(12, 10, seed=4)
    b = make_bank(12, 25, seed=4)
    np.testing.assert_array_equal(a.templates, b.templates[:10])
    np.testing.assert_array_equal(make_bank(12, 7, seed=4, start=3).templates, b.templates[3:10])
    assert a.s == pytest.approx(1.1)
    assert not a.templates.flags.writeable


def test_trivial_table_equals_bank():
    bank = make_bank(6, 4, seed=0)
    table = build_projection_table(bank, trivial_group(6).elements, trivial_group(6))
    np.testing.assert_array_equal(table.vectors[0], bank.templates)


def test_table_cardinality_and_norms(s5):
    bank = make_bank(40, 25, seed=0)
    table = build_projection_table(bank, s5.elements, s5)
    assert table.vectors.shape == (120, 25, 40)
    assert table.n_elements * table.m == 3000
    norms = np.linalg.norm(table.vectors, axis=2)
    np.testing.assert_allclose(norms, np.broadcast_to(np.linalg.norm(bank.templates, axis=1), norms.shape),
                               atol=1e-12)
    assert not table.vectors.flags.writeable


def test_table_projections_bounded_by_s(s5, xperm):
    bank = make_bank(40, 10, 0.1, seed=3)
    table = build_projection_table(bank, s5.elements, s5)
    assert np.abs(table.project(xperm.points[:500])).max() <= bank.s


def test_table_dimension_mismatch():
    with pytest.raises(ValueError):
        build_projection_table(make_bank(5, 2), block_permutation(2, 3).elements, block_permutation(2, 3))
    bank = make_bank(6, 2)
    table = build_projection_table(bank, trivial_group(6).elements, trivial_group(6))
    with pytest.raises(ValueError):
        table.project(np.zeros(5))


def test_bank_validation():
    with pytest.raises(ValueError):
        TemplateBank(np.zeros((0, 3)), 0.1)
    with pytest.raises(ValueError):
        TemplateBank(np.zeros((2, 3)), 0.1, kind="laplace")
