"""Closed-form bounds and Monte-Carlo oracles for the feature map's guarantees."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from ._seeding import SeedLike, as_generator
from .features import feature_matrix
from .groups import GroupAction, GroupElement
from .kernels import sampled_ks, sampled_ks_per_template
from .templates import TemplateBank, build_projection_table, make_bank

__all__ = [
    "BoundReport",
    "delta_bounds",
    "clark_max_moments",
    "mc_max_moments",
    "chi2_tail_upper",
    "chi2_tail_lower",
    "empirical_chi2_tails",
    "dkw_bound",
    "dkw_violation_rate",
    "theorem2_sample_sizes",
    "theorem3_terms",
    "theorem3_bound",
    "measure_concentration",
    "chunked_sampled_ks",
    "chunked_sampled_ks_pairs",
    "loglog_slope",
    "reports_to_csv",
]


@dataclass
class BoundReport:
    name: str
    inputs: dict
    value: float
    empirical: float | None = None
    passed: bool | None = None

    def row(self) -> list:
        inputs = ";".join(f"{k}={v}" for k, v in self.inputs.items())
        emp = "" if self.empirical is None else repr(float(self.empirical))
        ok = "" if self.passed is None else str(bool(self.passed)).lower()
        return [self.name, inputs, repr(float(self.value)), emp, ok]


def reports_to_csv(reports: Iterable[BoundReport], fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bound", "inputs", "value", "empirical", "pass"])
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue() if fh is None else ""


def _check_eps(epsilon: float):
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


def delta_bounds(d: int, epsilon: float) -> tuple[float, float]:
    """Truncation slack of the expected kernel around ``s - d_G``.

    delta1 = e^{-d eps^2/16}/sqrt(d) - (1/2) e^{-eps d/2} (1+eps)^{d/2} / sqrt(d)
    delta2 = e^{-d eps^2/16}/sqrt(d) + (1+eps) e^{-d eps^2/8}
    """
    if d < 2:
        raise ValueError(f"d must be at least 2, got {d}")
    _check_eps(epsilon)
    head = math.exp(-d * epsilon ** 2 / 16 - 0.5 * math.log(d))
    # (1+eps)^{d/2} e^{-eps d/2} underflows gracefully in log space
    tail = 0.5 * math.exp(-epsilon * d / 2 + (d / 2) * math.log1p(epsilon) - 0.5 * math.log(d))
    delta1 = head - tail
    delta2 = head + (1 + epsilon) * math.exp(-d * epsilon ** 2 / 8)
    return delta1, delta2


def clark_max_moments(muX: float, muY: float, sigmaX: float, sigmaY: float,
                      rho: float) -> tuple[float, float, float]:
    """Mean, second moment and variance of ``max(X, Y)`` for correlated Gaussians (Clark 1961)."""
    if sigmaX <= 0 or sigmaY <= 0:
        raise ValueError("standard deviations must be positive")
    if not -1 <= rho <= 1:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    a2 = sigmaX ** 2 + sigmaY ** 2 - 2 * rho * sigmaX * sigmaY
    if a2 <= 1e-300:
        # X - Y is constant: the max is whichever marginal has the larger mean
        mu, sig = (muX, sigmaX) if muX >= muY else (muY, sigmaY)
        return mu, sig ** 2 + mu ** 2, sig ** 2
    a = math.sqrt(a2)
    alpha = (muX - muY) / a
    cdf_p, cdf_m, pdf = norm.cdf(alpha), norm.cdf(-alpha), norm.pdf(alpha)
    mu_z = muX * cdf_p + muY * cdf_m + a * pdf
    ez2 = (sigmaX ** 2 + muX ** 2) * cdf_p + (sigmaY ** 2 + muY ** 2) * cdf_m + (muX + muY) * a * pdf
    return float(mu_z), float(ez2), float(ez2 - mu_z ** 2)


def mc_max_moments(muX: float, muY: float, sigmaX: float, sigmaY: float, rho: float,
                   draws: int, seed: SeedLike) -> dict:
    """Sample moments of ``max(X, Y)`` with their standard errors."""
    rng = as_generator(seed)
    u = rng.standard_normal(draws)
    v = rng.standard_normal(draws)
    X = muX + sigmaX * u
    Y = muY + sigmaY * (rho * u + math.sqrt(max(0.0, 1 - rho ** 2)) * v)
    Z = np.maximum(X, Y)
    Z2 = Z * Z
    root = math.sqrt(draws)
    return {"mean": float(Z.mean()), "mean_se": float(Z.std(ddof=1) / root),
            "ez2": float(Z2.mean()), "ez2_se": float(Z2.std(ddof=1) / root)}


def chi2_tail_upper(k: int, epsilon: float) -> float:
    """Bound on ``P(X/k >= 1+eps)`` for ``X ~ chi^2_k``: ``exp(-k eps^2 / 8)``."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    _check_eps(epsilon)
    return min(1.0, math.exp(-k * epsilon ** 2 / 8))


def chi2_tail_lower(k: int, epsilon: float) -> float:
    """Bound on ``P(X/k < 1+eps)``: ``1 - e^{-eps k/2} (1+eps)^{(k-2)/2} / (2 sqrt(k))``."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    _check_eps(epsilon)
    log_term = -epsilon * k / 2 + (k - 2) / 2 * math.log1p(epsilon) - 0.5 * math.log(k)
    return min(1.0, max(0.0, 1.0 - 0.5 * math.exp(log_term)))


def empirical_chi2_tails(k: int, epsilon: float, draws: int, seed: SeedLike) -> tuple[float, float]:
    """Observed ``P(X/k >= 1+eps)`` and ``P(X/k < 1+eps)``."""
    X = as_generator(seed).chisquare(k, size=draws) / k
    upper = float(np.mean(X >= 1 + epsilon))
    return upper, 1.0 - upper


def dkw_bound(nsamples: int, gamma: float) -> float:
    """``P(sup |F_hat - F| > gamma) <= 2 exp(-2 n gamma^2)``, clamped to [0, 1]."""
    return min(1.0, 2.0 * math.exp(-2.0 * nsamples * gamma ** 2))


def _ks_statistic_uniform(u: np.ndarray) -> np.ndarray:
    """Sup-distance between each row's empirical CDF and the uniform CDF."""
    u = np.sort(u, axis=-1)
    n = u.shape[-1]
    i = np.arange(1, n + 1)
    return np.maximum(np.max(i / n - u, axis=-1), np.max(u - (i - 1) / n, axis=-1))


def dkw_violation_rate(nsamples: int, gamma: float, resamples: int, seed: SeedLike) -> float:
    rng = as_generator(seed)
    stats = _ks_statistic_uniform(rng.random((resamples, nsamples)))
    return float(np.mean(stats > gamma))


def theorem2_sample_sizes(N: int, eps0: float, eps1: float, eps2: float, delta1: float,
                          delta2: float, C1: float | None = None, C2: float = 18.0,
                          s: float = 1.1) -> tuple[int, int, int]:
    """Smallest ``(n, m, |G|)`` meeting the uniform-approximation sample sizes.

    n >= 1/eps0, m >= C1/eps1^2 log(N/delta1), |G| >= C2/eps2^2 log(N m/delta2).
    ``C1`` defaults to ``8 s^2``.
    """
    for name, v in (("eps0", eps0), ("eps1", eps1), ("eps2", eps2),
                    ("delta1", delta1), ("delta2", delta2)):
        if not 0 < v < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {v}")
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    C1 = 8 * s ** 2 if C1 is None else C1

    def ceil(v: float) -> int:
        return int(math.ceil(v - 1e-9))

    n = ceil(1 / eps0)
    m = max(1, ceil(C1 / eps1 ** 2 * math.log(N / delta1)))
    G = max(1, ceil(C2 / eps2 ** 2 * math.log(N * m / delta2)))
    return n, m, G


def theorem3_terms(N: int, m: int, nG: int, n: int, L: float, C: float, V0: float,
                   s: float, delta: float) -> dict:
    for name, v in (("N", N), ("m", m), ("nG", nG), ("n", n), ("L", L), ("C", C), ("s", s)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if V0 < 0:
        raise ValueError(f"V0 must be non-negative, got {V0}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log1 = math.log(1 / delta)
    return {
        "statistical": 2 / math.sqrt(N) * (4 * L * s * C + 2 * V0 + L * C * math.sqrt(0.5 * log1)),
        "templates": 2 * s * L * C / math.sqrt(m) * (1 + math.sqrt(2 * log1)),
        "group": L * 2 * s * C / math.sqrt(nG) * (1 + math.sqrt(2 * math.log(m / delta))),
        "binning": L * 2 * s * C / n,
    }


def theorem3_bound(N: int, m: int, nG: int, n: int, L: float, C: float, V0: float,
                   s: float, delta: float) -> float:
    """Excess-risk bound of the linear model on invariant features over the best in F_p."""
    return float(sum(theorem3_terms(N, m, nG, n, L, C, V0, s, delta).values()))


def measure_concentration(pairs: Sequence[tuple[np.ndarray, np.ndarray]], bank: TemplateBank,
                          elements: Sequence[GroupElement], action: GroupAction, n: int,
                          reference: int | TemplateBank = 4096, delta: float = 0.05,
                          reference_seed: int = 2**31 - 1,
                          reference_values: Sequence[float] | None = None) -> list[BoundReport]:
    """Split the feature-kernel error into its binning, group and template parts.

    With ``D = <Phi(x), Phi(z)>``, ``K_tab`` the exact-in-tau kernel on the
    same samples, ``K_full`` the same templates over the whole group and
    ``K_ref`` a high-``m`` full-group estimate of the expected kernel, the
    reported maxima over pairs are ``|D - K_tab|``, ``|K_tab - K_full|`` and
    ``|K_full - K_ref|``.  Bounds follow the union-bound argument with
    confidence ``1 - delta``.  ``reference_values`` skips recomputing
    ``K_ref`` when the same pairs are measured repeatedly.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    if reference_values is not None and len(reference_values) != len(pairs):
        raise ValueError("need one reference value per pair")
    s = bank.s
    table = build_projection_table(bank, elements, action)
    full = build_projection_table(bank, action.elements, action)
    if isinstance(reference, TemplateBank):
        ref_bank, m_ref = reference, reference.m
    else:
        ref_bank, m_ref = None, int(reference)
        if reference_values is None:
            ref_bank = make_bank(bank.d, m_ref, bank.epsilon, bank.kind, reference_seed, bank.radius)

    binning = group = templates = 0.0
    for p, (x, z) in enumerate(pairs):
        F = feature_matrix(np.stack([x, z]), table, n, s)
        dot = float(F[0] @ F[1])
        k_tab = sampled_ks(x, z, table)
        k_full = sampled_ks(x, z, full)
        if reference_values is None:
            k_ref = chunked_sampled_ks(x, z, ref_bank, action.elements, action)
        else:
            k_ref = float(reference_values[p])
        binning = max(binning, abs(dot - k_tab))
        group = max(group, abs(k_tab - k_full))
        templates = max(templates, abs(k_full - k_ref))

    P = len(pairs)
    G, m = len(elements), bank.m
    gamma = math.sqrt(math.log(4 * m * P / delta) / (2 * G))
    eps_t = s * math.sqrt(2 * math.log(2 * P / delta) / m)
    inputs = {"pairs": P, "m": m, "nG": G, "n": n, "s": s, "delta": delta}
    return [
        BoundReport("binning", dict(inputs), s / n, binning, binning <= s / n + 1e-9),
        BoundReport("group", dict(inputs), 6 * s * gamma, group, group <= 6 * s * gamma),
        BoundReport("templates", dict(inputs, m_ref=m_ref), eps_t, templates, templates <= eps_t),
    ]


def chunked_sampled_ks(x, z, bank: TemplateBank, elements: Sequence[GroupElement],
                       action: GroupAction, chunk: int = 1024, per_template: bool = False):
    """:func:`sampled_ks` over a large bank, building the table chunk by chunk."""
    parts = []
    for lo in range(0, bank.m, chunk):
        sub = bank.subset(slice(lo, lo + chunk))
        parts.append(sampled_ks_per_template(x, z, build_projection_table(sub, elements, action)))
    values = np.concatenate(parts)
    return values if per_template else float(values.mean())


def chunked_sampled_ks_pairs(pairs: Sequence[tuple[np.ndarray, np.ndarray]], bank: TemplateBank,
                             elements: Sequence[GroupElement], action: GroupAction,
                             chunk: int = 1024) -> np.ndarray:
    """:func:`chunked_sampled_ks` for many pairs, building each chunk's table once."""
    totals = np.zeros(len(pairs))
    for lo in range(0, bank.m, chunk):
        table = build_projection_table(bank.subset(slice(lo, lo + chunk)), elements, action)
        for p, (x, z) in enumerate(pairs):
            totals[p] += sampled_ks_per_template(x, z, table).sum()
    return totals / bank.m


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
