"""Exact finite-sample laws used as ground truth for the samplers.

The K_n recursion runs in log space so that tails far below the smallest
double (for instance P(K_n = n) at n in the thousands) stay finite.  Linear
probabilities are produced from the log values at the end, with entries below
``FLUSH`` set to zero and the rest renormalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .epm_core import EpmParams, PartitionStats, validate_params
from .errors import CapExceeded, InvalidBlocks, InvalidParams

DEFAULT_CAP = 10_000
ENUM_CAP = 10
FLUSH = 1e-300
NEG_INF = -np.inf


@dataclass(frozen=True)
class Pmf:
    """Finite pmf on strictly ascending integer support."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        p = np.asarray(self.probs, dtype=float)
        if s.shape != p.shape or s.ndim != 1:
            raise InvalidParams("support and probs must be 1-d of equal length")
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise InvalidParams("support must be strictly ascending")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
            raise InvalidParams("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_dense(cls, probs: np.ndarray, offset: int = 0) -> "Pmf":
        """Pmf of value ``offset + i`` with probability ``probs[i]``, zeros dropped."""
        probs = np.where(probs < FLUSH, 0.0, probs)
        probs = probs / probs.sum()
        nz = np.flatnonzero(probs)
        return cls(nz + offset, probs[nz])

    @classmethod
    def from_log(cls, logp: np.ndarray, offset: int = 0) -> "Pmf":
        return cls.from_dense(np.exp(logp - _logsumexp(logp)), offset)

    @classmethod
    def from_mapping(cls, m: Mapping[int, float]) -> "Pmf":
        keys = sorted(m)
        return cls(np.array(keys, dtype=np.int64), np.array([m[k] for k in keys], dtype=float))

    def __getitem__(self, k: int) -> float:
        i = np.searchsorted(self.support, k)
        if i < self.support.size and self.support[i] == k:
            return float(self.probs[i])
        return 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.support, self.probs)}

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def var(self) -> float:
        mu = self.mean()
        return float(np.dot((self.support - mu) ** 2, self.probs))

    def sf(self, x: float) -> float:
        """P(X >= x)."""
        return float(self.probs[self.support >= x].sum())

    def to_json(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    def rows(self) -> list[tuple[int, float]]:
        return [(int(k), float(p)) for k, p in zip(self.support, self.probs)]


@dataclass(frozen=True)
class JointLaw:
    """Law of the (K, spectrum) configuration of a random partition."""

    n: int
    table: Mapping[tuple[tuple[int, int], ...], float]

    def total(self) -> float:
        return math.fsum(self.table.values())

    def stats(self):
        for key, prob in self.table.items():
            yield PartitionStats(self.n, sum(m for _, m in key), dict(key)), prob

    def marginal_K(self) -> Pmf:
        acc: dict[int, float] = {}
        for st, pr in self.stats():
            acc[st.K] = acc.get(st.K, 0.0) + pr
        return Pmf.from_mapping(acc)

    def marginal_M(self, r: int) -> Pmf:
        acc: dict[int, float] = {}
        for st, pr in self.stats():
            m = st.M(r)
            acc[m] = acc.get(m, 0.0) + pr
        return Pmf.from_mapping(acc)


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


def eppf_epm(block_sizes: Sequence[int], p: EpmParams) -> float:
    """Probability of one specific set partition with the given block sizes."""
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise InvalidBlocks(f"block sizes must be >= 1, got {block_sizes}")
    validate_params(p)
    a, t = p.alpha, p.theta
    k, n = len(sizes), sum(sizes)
    val = 1.0
    for i in range(1, k):
        val *= t + i * a
    for s in sizes:
        for j in range(1, s):
            val *= j - a
    for j in range(1, n):
        val /= t + j
    return val


@njit(cache=True)
def _lae(x, y):
    if x == -np.inf:
        return y
    if y == -np.inf:
        return x
    if x > y:
        return x + np.log1p(np.exp(y - x))
    return y + np.log1p(np.exp(x - y))


@njit(cache=True)
def _k_recursion(nmax, alpha, theta, mix_logw, out):
    """Log-space K_n recursion up to ``nmax``.

    ``out[k]`` receives log of sum_m w_m P(K_m = k), where
    ``log w_m = mix_logw[m]`` (use -inf to skip a row).  With a single
    finite weight at ``nmax`` this is just the log pmf of K_nmax.
    """
    row = np.full(nmax + 2, -np.inf)
    nxt = np.full(nmax + 2, -np.inf)
    for k in range(out.shape[0]):
        out[k] = -np.inf
    row[1] = 0.0
    if mix_logw[1] > -np.inf:
        out[1] = _lae(out[1], mix_logw[1])
    for m in range(1, nmax):
        lden = np.log(theta + m)
        for k in range(m + 2):
            nxt[k] = -np.inf
        for k in range(1, m + 1):
            lp = row[k]
            if lp == -np.inf:
                continue
            stay = m - k * alpha
            if stay > 0:
                nxt[k] = _lae(nxt[k], lp + np.log(stay) - lden)
            grow = theta + k * alpha
            if grow > 0:
                nxt[k + 1] = _lae(nxt[k + 1], lp + np.log(grow) - lden)
        for k in range(m + 2):
            row[k] = nxt[k]
        w = mix_logw[m + 1]
        if w > -np.inf:
            for k in range(1, m + 2):
                if row[k] > -np.inf:
                    out[k] = _lae(out[k], w + row[k])


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise CapExceeded(f"size {n} exceeds oracle cap {cap}")


def exact_K_logpmf(n: int, p: EpmParams, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Array ``L`` with ``L[k] = log P(K_n = k)`` for k = 0..n (``-inf`` where zero)."""
    if n < 1:
        raise InvalidParams(f"n must be >= 1, got {n}")
    _check_cap(n, cap)
    validate_params(p)
    w = np.full(n + 1, NEG_INF)
    w[n] = 0.0
    out = np.empty(n + 1)
    _k_recursion(n, float(p.alpha), float(p.theta), w, out)
    return out


def exact_K_pmf(n: int, p: EpmParams, cap: int = DEFAULT_CAP) -> Pmf:
    return Pmf.from_log(exact_K_logpmf(n, p, cap))


def exact_K_mean(n: int, p: EpmParams) -> float:
    """E[K_n] propagated by E[K_{i+1}] = E[K_i] + (theta + alpha E[K_i]) / (theta + i)."""
    validate_params(p)
    ek = 1.0
    for i in range(1, n):
        ek += (p.theta + p.alpha * ek) / (p.theta + i)
    return ek


def _set_partitions_block_sizes(n: int):
    """Yield block-size tuples of every set partition of [n].

    Walks restricted-growth strings: element i joins one of the k blocks
    opened so far or opens block k.  Only block sizes are tracked.
    """
    sizes = [0] * (n + 1)

    def rec(i, k):
        if i == n:
            yield tuple(sizes[:k])
            return
        for v in range(k + 1):
            sizes[v] += 1
            yield from rec(i + 1, max(k, v + 1))
            sizes[v] -= 1

    if n == 0:
        return
    sizes[0] = 1
    yield from rec(1, 1)


def enumerate_joint(n: int, p: EpmParams, cap: int = ENUM_CAP) -> JointLaw:
    """Exact law of (K, spectrum) by summing the EPPF over all set partitions."""
    if n < 1:
        raise InvalidParams(f"n must be >= 1, got {n}")
    _check_cap(n, cap)
    validate_params(p)

    @lru_cache(maxsize=None)
    def q(sorted_sizes):
        return eppf_epm(sorted_sizes, p)

    acc: dict[tuple[tuple[int, int], ...], list[float]] = {}
    for sizes in _set_partitions_block_sizes(n):
        key_sizes = tuple(sorted(sizes))
        spec: dict[int, int] = {}
        for s in key_sizes:
            spec[s] = spec.get(s, 0) + 1
        key = tuple(sorted(spec.items()))
        acc.setdefault(key, []).append(q(key_sizes))
    return JointLaw(n, {k: math.fsum(v) for k, v in acc.items()})


def _log_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.full(a.size + b.size - 1, NEG_INF)
    ia = np.flatnonzero(np.isfinite(a))
    for i in ia:
        seg = a[i] + b
        out[i:i + b.size] = np.logaddexp(out[i:i + b.size], seg)
    return out


def exact_xi_logpmf(sizes: Sequence[int], p_bottom: EpmParams, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``L[m] = log P(xi = m)`` for m = 0..sum(sizes), xi the sum of independent group K's."""
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise InvalidParams("group sizes must be >= 1")
    _check_cap(sum(sizes), cap)
    acc = np.array([0.0])
    for s in sizes:
        acc = _log_convolve(acc, exact_K_logpmf(s, p_bottom, cap))
    return acc


def exact_xi_pmf(sizes: Sequence[int], p_bottom: EpmParams, cap: int = DEFAULT_CAP) -> Pmf:
    return Pmf.from_log(exact_xi_logpmf(sizes, p_bottom, cap))


def exact_hier_K_logpmf(sizes: Sequence[int], hp, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``L[k] = log P(K_N = k)`` where K_N is the top-level count at random size xi."""
    lx = exact_xi_logpmf(sizes, hp.bottom, cap)
    validate_params(hp.top)
    mmax = lx.size - 1
    out = np.empty(mmax + 1)
    _k_recursion(mmax, float(hp.top.alpha), float(hp.top.theta), lx, out)
    return out


def exact_hier_K_pmf(sizes: Sequence[int], hp, cap: int = DEFAULT_CAP) -> Pmf:
    return Pmf.from_log(exact_hier_K_logpmf(sizes, hp, cap))


def exact_hier_joint(sizes: Sequence[int], hp, cap: int = ENUM_CAP) -> dict:
    """Exact law of the top-level (K, spectrum) configuration, keyed like JointLaw."""
    xi = exact_xi_pmf(sizes, hp.bottom)
    if xi.support[-1] > cap:
        raise CapExceeded(f"xi support reaches {xi.support[-1]} > enumeration cap {cap}")
    acc: dict = {}
    for m, pm in xi.rows():
        for key, pr in enumerate_joint(m, hp.top, cap).table.items():
            acc[(m, key)] = acc.get((m, key), 0.0) + pm * pr
    return acc


def exact_hier_Mr_pmf(sizes: Sequence[int], hp, r: int, cap: int = ENUM_CAP) -> Pmf:
    """Exact law of the top-level M_r at random size xi (xi support must fit ``cap``)."""
    if r < 1:
        raise InvalidParams(f"r must be >= 1, got {r}")
    acc: dict[int, float] = {}
    for (_, key), pr in exact_hier_joint(sizes, hp, cap).items():
        m = dict(key).get(r, 0)
        acc[m] = acc.get(m, 0.0) + pr
    return Pmf.from_mapping(acc)


def exact_hier_KM_pmf(sizes: Sequence[int], hp, rs: Sequence[int] = (1, 2),
                      cap: int = ENUM_CAP) -> dict[tuple[int, ...], float]:
    """Exact law of (K, M_r for r in ``rs``) of the top level."""
    acc: dict[tuple[int, ...], float] = {}
    for (_, key), pr in exact_hier_joint(sizes, hp, cap).items():
        spec = dict(key)
        cell = (sum(spec.values()),) + tuple(spec.get(r, 0) for r in rs)
        acc[cell] = acc.get(cell, 0.0) + pr
    return acc


@njit(cache=True)
def _bernoulli_sum(n, theta, floor):
    # K_n under Ewens(theta) is a sum of independent Bernoulli(theta / (theta + i))
    p = np.zeros(n + 2)
    p[1] = 1.0
    hi = 1
    for i in range(1, n):
        q = theta / (theta + i)
        top = min(hi + 1, n)
        for k in range(top, 0, -1):
            p[k] = p[k] * (1.0 - q) + p[k - 1] * q
        hi = top
        while hi > 1 and p[hi] < floor:
            p[hi] = 0.0
            hi -= 1
    return p[: hi + 1]


def ewens_K_pmf(n: int, theta: float) -> Pmf:
    """Pmf of K_n for alpha = 0 by Bernoulli convolution, O(n * support).

    An independent route to ``exact_K_pmf`` at alpha = 0 that also reaches n
    far above the quadratic recursion cap.
    """
    if n < 1:
        raise InvalidParams(f"n must be >= 1, got {n}")
    validate_params(EpmParams(0.0, theta))
    return Pmf.from_dense(_bernoulli_sum(int(n), float(theta), FLUSH))
