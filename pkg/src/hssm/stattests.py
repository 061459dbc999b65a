"""Goodness-of-fit tests used by the verification experiments."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateBins, EmptySample, InvalidParams, TooSmall
from .exact_oracle import Pmf

DEFAULT_LEVEL = 0.01
KOLMOGOROV_TERMS = 100


@dataclass
class TestReport:
    """Outcome of one test; ``passed`` is ``p_value >= level``."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    p_value: float
    n: int
    m: int | None = None
    level: float = DEFAULT_LEVEL
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.p_value >= self.level

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # theta-function form converges fast for small lam
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * lam * lam))
                for k in range(1, KOLMOGOROV_TERMS + 1))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    s = sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam)
            for k in range(1, KOLMOGOROV_TERMS + 1))
    return min(1.0, max(0.0, 2.0 * s))


def kolmogorov_isf(p: float) -> float:
    """lam with kolmogorov_sf(lam) = p."""
    if not 0 < p < 1:
        raise InvalidParams("p must lie in (0, 1)")
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kolmogorov_sf(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ks_critical(level: float, n_eff: float) -> float:
    """Asymptotic critical KS distance at ``level`` for effective size ``n_eff``."""
    return kolmogorov_isf(level) / math.sqrt(n_eff)


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a: Sequence[float], b: Sequence[float], level: float = DEFAULT_LEVEL,
                  name: str = "ks_two_sample") -> TestReport:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    d = ks_statistic(a, b)
    ne = a.size * b.size / (a.size + b.size)
    return TestReport(name, d, kolmogorov_sf(math.sqrt(ne) * d), int(a.size), int(b.size), level)


def ks_one_sample(a: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray],
                  level: float = DEFAULT_LEVEL, name: str = "ks_one_sample") -> TestReport:
    """Sup distance between the empirical CDF of ``a`` and a continuous ``cdf``."""
    x = np.sort(np.asarray(a, dtype=float))
    if x.size == 0:
        raise EmptySample("sample must be nonempty")
    f = cdf(x)
    n = x.size
    d = float(max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n)))
    return TestReport(name, d, kolmogorov_sf(math.sqrt(n) * d), int(n), None, level)


def _merge_bins(values: np.ndarray, expected: np.ndarray, observed: np.ndarray, min_bin: float):
    """Merge consecutive cells (in value order) until every bin expects >= min_bin."""
    bins_e, bins_o, bins_v = [], [], []
    e = o = 0.0
    members: list[int] = []
    for v, ev, ov in zip(values, expected, observed):
        e += ev
        o += ov
        members.append(int(v))
        if e >= min_bin:
            bins_e.append(e)
            bins_o.append(o)
            bins_v.append(members)
            e = o = 0.0
            members = []
    if members:
        if bins_e:
            bins_e[-1] += e
            bins_o[-1] += o
            bins_v[-1].extend(members)
        else:
            bins_e.append(e)
            bins_o.append(o)
            bins_v.append(members)
    return np.array(bins_e), np.array(bins_o), bins_v


def chi_square_gof(counts: Mapping[int, int], pmf: Pmf, min_bin: float = 5,
                   level: float = DEFAULT_LEVEL, name: str = "chi_square_gof") -> TestReport:
    """Pearson chi-square of observed counts against a pmf.

    Cells are taken in ascending value order (the union of the pmf support and
    the observed values) and neighbors are merged until each bin expects at
    least ``min_bin`` counts.  Observed values outside the support join the
    adjacent bin.  Degrees of freedom are bins - 1.
    """
    total = float(sum(counts.values()))
    if total <= 0:
        raise EmptySample("no observations")
    vals = np.union1d(pmf.support, np.fromiter(counts.keys(), dtype=np.int64))
    expected = np.array([total * pmf[v] for v in vals])
    observed = np.array([float(counts.get(int(v), 0)) for v in vals])
    e, o, members = _merge_bins(vals, expected, observed, min_bin)
    if e.size < 2:
        raise DegenerateBins(f"only {e.size} bin(s) after merging")
    if np.any(e <= 0):
        raise DegenerateBins("a bin with observations has zero expected mass")
    chi2 = float(np.sum((o - e) ** 2 / e))
    df = e.size - 1
    return TestReport(name, chi2, float(stats.chi2.sf(chi2, df)), int(total), None, level,
                      {"df": df, "bins": int(e.size)})


def counts_of(sample: Sequence[int]) -> dict[int, int]:
    vals, cnt = np.unique(np.asarray(sample, dtype=np.int64), return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, cnt)}


def chi_square_cells(observed: Mapping, probs: Mapping, min_bin: float = 5,
                     level: float = DEFAULT_LEVEL, name: str = "chi_square_cells") -> TestReport:
    """Chi-square over arbitrary hashable cells (e.g. joint (K, M_1, M_2) tuples).

    Cells are sorted by key and merged like ``chi_square_gof``.
    """
    keys = sorted(set(probs) | set(observed))
    total = float(sum(observed.values()))
    if total <= 0:
        raise EmptySample("no observations")
    exp = np.array([total * probs.get(k, 0.0) for k in keys])
    obs = np.array([float(observed.get(k, 0)) for k in keys])
    e, o, _ = _merge_bins(np.arange(len(keys)), exp, obs, min_bin)
    if e.size < 2:
        raise DegenerateBins(f"only {e.size} bin(s) after merging")
    chi2 = float(np.sum((o - e) ** 2 / e))
    df = e.size - 1
    return TestReport(name, chi2, float(stats.chi2.sf(chi2, df)), int(total), None, level,
                      {"df": df, "bins": int(e.size)})


def tv_distance(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def tv_poisson(counts: Mapping[int, int], mean: float) -> float:
    """Total variation between the empirical law of ``counts`` and Poisson(mean).

    Poisson mass beyond the largest observed value is lumped into one cell.
    """
    total = float(sum(counts.values()))
    if total <= 0:
        raise EmptySample("no observations")
    if not mean > 0:
        raise InvalidParams("mean must be positive")
    kmax = max(counts)
    ks = np.arange(0, kmax + 1)
    pois = stats.poisson.pmf(ks, mean)
    emp = np.array([counts.get(int(k), 0) / total for k in ks])
    tail = float(stats.poisson.sf(kmax, mean))
    return float(min(1.0, 0.5 * (np.abs(emp - pois).sum() + tail)))


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float


def moment_summary(sample: Sequence[float]) -> MomentSummary:
    """Mean, unbiased variance and standardized third and fourth central moments."""
    x = np.asarray(sample, dtype=float)
    if x.size < 4:
        raise TooSmall("moment summary needs at least 4 values")
    mu = float(x.mean())
    dev = x - mu
    m2 = float(np.mean(dev ** 2))
    var = float(dev @ dev / (x.size - 1))
    if m2 == 0.0:
        return MomentSummary(int(x.size), mu, 0.0, 0.0, 0.0)
    skew = float(np.mean(dev ** 3) / m2 ** 1.5)
    kurt = float(np.mean(dev ** 4) / m2 ** 2 - 3.0)
    return MomentSummary(int(x.size), mu, var, skew, kurt)


@dataclass(frozen=True)
class CovarianceCheck:
    cov: float
    stderr: float
    sigmas: float = 3.0

    @property
    def passed(self) -> bool:
        return abs(self.cov) <= self.sigmas * self.stderr


def covariance_check(x: Sequence[float], y: Sequence[float], sigmas: float = 3.0) -> CovarianceCheck:
    """Sample covariance with the plug-in standard error of the mean of centered products."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise TooSmall("need paired samples of size >= 2")
    prod = (x - x.mean()) * (y - y.mean())
    cov = float(prod.sum() / (x.size - 1))
    se = float(prod.std(ddof=1) / math.sqrt(x.size))
    return CovarianceCheck(cov, se, sigmas)


def bonferroni(level: float, m: int) -> float:
    return level / max(1, m)
