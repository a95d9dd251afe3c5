import io
import math

import numpy as np
import pytest
from scipy.stats import norm

from invfeat.analysis import (BoundReport, chunked_sampled_ks_pairs, chi2_tail_lower, chi2_tail_upper, clark_max_moments,
                              delta_bounds, dkw_bound, dkw_violation_rate, empirical_chi2_tails,
                              loglog_slope, mc_max_moments, measure_concentration, reports_to_csv,
                              theorem2_sample_sizes, theorem3_bound, theorem3_terms)
from invfeat.features import feature_matrix
from invfeat.groups import enumerate_elements, sample_elements
from invfeat.templates import build_projection_table, make_bank


def test_delta2_arithmetic_oracle():
    _, d2 = delta_bounds(1000, 0.5)
    oracle = math.exp(-1000 * 0.25 / 16) / math.sqrt(1000) + 1.5 * math.exp(-1000 * 0.25 / 8)
    assert d2 == pytest.approx(oracle, rel=1e-12)
    assert d2 < 1e-6


def test_delta1_arithmetic_oracle():
    d, eps = 200, 0.3
    oracle = (math.exp(-d * eps ** 2 / 16) / math.sqrt(d)
              - 0.5 * math.exp(-eps * d / 2) * (1 + eps) ** (d / 2) / math.sqrt(d))
    assert delta_bounds(d, eps)[0] == pytest.approx(oracle, rel=1e-12)


def test_deltas_decrease_in_d():
    ds = np.unique(np.logspace(2, 4, 60).astype(int))
    for eps in (0.3, 0.5, 0.9):
        vals = np.array([delta_bounds(int(d), eps) for d in ds])
        assert np.all(np.diff(vals[:, 0]) < 0) and np.all(np.diff(vals[:, 1]) < 0)


def test_deltas_vanish():
    d1, d2 = delta_bounds(100_000, 0.5)
    assert abs(d1) < 1e-12 and d2 < 1e-12


def test_delta_validation():
    with pytest.raises(ValueError):
        delta_bounds(1, 0.5)
    with pytest.raises(ValueError):
        delta_bounds(10, 1.0)


def test_clark_degenerate_and_independent():
    mu, ez2, var = clark_max_moments(0, 0, 1, 1, 1.0)
    assert (mu, ez2, var) == (0, 1, 1)
    mu, ez2, _ = clark_max_moments(0, 0, 1, 1, 0.0)
    assert mu == pytest.approx(1 / math.sqrt(math.pi))
    assert mu == pytest.approx(math.sqrt(2) * norm.pdf(0))


@pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.5, 0.9])
def test_clark_standardized_second_moment_is_one(rho):
    assert clark_max_moments(0, 0, 1, 1, rho)[1] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("args", [(0.3, -0.2, 1.0, 2.0, 0.4), (1.0, 1.0, 0.5, 1.5, -0.7)])
def test_clark_general_matches_mc(args):
    mu, ez2, _ = clark_max_moments(*args)
    mc = mc_max_moments(*args, draws=200_000, seed=5)
    assert abs(mc["mean"] - mu) <= 4 * mc["mean_se"]
    assert abs(mc["ez2"] - ez2) <= 4 * mc["ez2_se"]


def test_clark_validation():
    with pytest.raises(ValueError):
        clark_max_moments(0, 0, 0, 1, 0)
    with pytest.raises(ValueError):
        clark_max_moments(0, 0, 1, 1, 1.5)


def test_chi2_bounds():
    assert chi2_tail_upper(100, 1e-6) == pytest.approx(1.0)
    up, _ = empirical_chi2_tails(1000, 0.3, 100_000, 3)
    assert up <= chi2_tail_upper(1000, 0.3)
    for k in (2, 3, 10, 100, 1000, 10_000):
        for eps in np.arange(0.1, 1.0, 0.1):
            v = chi2_tail_lower(k, float(eps))
            assert 0 <= v <= 1
    with pytest.raises(ValueError):
        chi2_tail_upper(1, 0.5)


def test_dkw_bound():
    m, delta = 400, 0.05
    gamma = math.sqrt(math.log(2 / delta) / (2 * m))
    assert dkw_bound(m, gamma) == pytest.approx(delta)
    assert dkw_bound(10, 0.01) == 1.0
    assert dkw_bound(100, 0.2) > dkw_bound(200, 0.2) > dkw_bound(200, 0.3)
    rate = dkw_violation_rate(500, 0.1, 2000, 4)
    bound = dkw_bound(500, 0.1)
    assert rate <= bound + 3 * math.sqrt(bound * (1 - bound) / 2000)


def test_theorem2_sizes():
    n, m, G = theorem2_sample_sizes(100, 0.1, 0.2, 0.3, 0.05, 0.05)
    assert n == 10
    assert m == math.ceil(8 * 1.1 ** 2 / 0.04 * math.log(100 / 0.05))
    assert G == math.ceil(18 / 0.09 * math.log(100 * m / 0.05))
    _, m2, _ = theorem2_sample_sizes(200, 0.1, 0.2, 0.3, 0.05, 0.05)
    assert 0 <= m2 - m <= math.ceil(8 * 1.1 ** 2 * math.log(2) / 0.04)
    with pytest.raises(ValueError):
        theorem2_sample_sizes(1, 0.1, 0.1, 0.1, 0.1, 0.1)
    with pytest.raises(ValueError):
        theorem2_sample_sizes(10, 0, 0.1, 0.1, 0.1, 0.1)


def test_theorem2_sizes_achieve_tolerance(s5, xperm):
    # returned sizes, with generous tolerances so they stay small, meet the max-pair error in most trials
    eps0, eps1, eps2, d1, d2 = 0.5, 0.9, 0.9, 0.45, 0.45
    N = 20
    n, m, G = theorem2_sample_sizes(N, eps0, eps1, eps2, d1, d2)
    idx = np.random.default_rng(0).choice(len(xperm), N, replace=False)
    X = xperm.points[idx]
    iu = np.triu_indices(N, 1)
    ref = chunked_sampled_ks_pairs([(X[i], X[j]) for i, j in zip(*iu)], make_bank(40, 2048, 0.1, seed=999),
                                   s5.elements, s5)
    ok = 0
    trials = 50
    for t in range(trials):
        bank = make_bank(40, m, 0.1, seed=10_000 + t)
        table = build_projection_table(bank, sample_elements(s5, G, t), s5)
        F = feature_matrix(X, table, n)
        err = np.abs((F @ F.T)[iu] - ref).max()
        ok += err <= eps0 + eps1 + eps2
    assert ok / trials >= 1 - d1 - d2


def test_theorem3():
    args = dict(N=4000, m=25, nG=120, n=20, L=1.0, C=1.0, V0=1.0, s=1.1, delta=0.05)
    b = theorem3_bound(**args)
    assert math.isfinite(b) and b > 0
    t1 = theorem3_terms(**args)
    t4 = theorem3_terms(**{**args, "N": 16000})
    assert t4["statistical"] == pytest.approx(t1["statistical"] / 2)
    big = theorem3_terms(**{**args, "m": 10**12, "nG": 10**12, "n": 10**12})
    assert b - t1["statistical"] > 0
    assert big["templates"] + big["group"] + big["binning"] < 1e-4
    for key in ("N", "m", "nG", "n"):
        assert theorem3_bound(**{**args, key: args[key] * 2}) < b
    with pytest.raises(ValueError):
        theorem3_bound(**{**args, "delta": 1.5})


def test_measure_concentration_terms(s5, xperm):
    rng = np.random.default_rng(2)
    pairs = [tuple(xperm.points[i] for i in rng.choice(len(xperm), 2)) for _ in range(5)]
    bank = make_bank(40, 16, seed=1)
    full = measure_concentration(pairs, bank, enumerate_elements(s5), s5, 20, reference=512)
    byname = {r.name: r for r in full}
    assert byname["binning"].passed and byname["binning"].empirical <= bank.s / 20 + 1e-9
    assert byname["group"].empirical == 0.0
    sampled = measure_concentration(pairs, bank, sample_elements(s5, 30, 0), s5, 20, reference=512)
    assert {r.name: r for r in sampled}["group"].empirical > 0
    for r in full + sampled:
        assert math.isfinite(r.value) and r.value >= 0


def test_template_term_rate(s5, xperm):
    rng = np.random.default_rng(7)
    pairs = [tuple(xperm.points[i] for i in rng.choice(len(xperm), 2)) for _ in range(3)]
    ref = make_bank(40, 8192, seed=123)
    kref = chunked_sampled_ks_pairs(pairs, ref, s5.elements, s5)
    ms = [8, 16, 32, 64, 128, 256, 512, 1024]
    means = []
    for m in ms:
        vals = []
        for t in range(50):
            bank = make_bank(40, m, seed=50_000 + 1000 * m + t)
            r = measure_concentration(pairs, bank, s5.elements, s5, 20, reference=8192,
                                      reference_values=kref)
            vals.append(r[2].empirical)
        means.append(np.mean(vals))
    assert -0.65 <= loglog_slope(ms, means) <= -0.35


def test_report_csv():
    r = BoundReport("dkw", {"nsamples": 10, "gamma": 0.1}, 0.5, 0.2, True)
    text = reports_to_csv([r])
    assert text.splitlines() == ["bound,inputs,value,empirical,pass", "dkw,nsamples=10;gamma=0.1,0.5,0.2,true"]
    buf = io.StringIO()
    reports_to_csv([BoundReport("x", {}, 1.0)], buf)
    assert buf.getvalue().splitlines()[1] == "x,,1.0,,"
