"""Ewens-Pitman partitions: parameters, summary statistics and samplers."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _seating
from .errors import (
    EmptyCheckpoints,
    InvalidConcentration,
    InvalidDiscount,
    InvalidParams,
    InvalidR,
)
from .rng import RngSpec, Stream, as_u64

DEFAULT_RMAX = 50
NEAR_ONE = 1.0 - 1e-6


@dataclass(frozen=True)
class EpmParams:
    """Discount ``alpha`` and concentration ``theta`` of EPM(alpha, theta)."""

    alpha: float
    theta: float

    @property
    def m(self) -> int | None:
        """Eventual number of clusters when ``alpha < 0``."""
        if self.alpha < 0:
            return int(round(-self.theta / self.alpha))
        return None


def validate_params(p: EpmParams) -> EpmParams:
    a, t = float(p.alpha), float(p.theta)
    if not (math.isfinite(a) and math.isfinite(t)):
        raise InvalidParams(f"non-finite parameters {p}")
    if a >= 1.0:
        raise InvalidDiscount(f"alpha must be < 1, got {a}")
    if a >= 0.0:
        if not t > -a:
            raise InvalidConcentration(f"need theta > -alpha, got theta={t}, alpha={a}")
        if a > NEAR_ONE:
            warnings.warn(f"alpha={a} is numerically close to 1", RuntimeWarning, stacklevel=2)
        return p
    m = -t / a
    if round(m) < 1 or abs(m - round(m)) > 1e-9:
        raise InvalidConcentration(
            f"alpha < 0 needs theta = -m*alpha for a positive integer m, got theta={t}, alpha={a}")
    return p


@dataclass(frozen=True)
class PartitionStats:
    """Sample size, number of clusters and sparse frequency spectrum."""

    n: int
    K: int
    spectrum: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "spectrum", {int(r): int(m) for r, m in sorted(self.spectrum.items()) if m})

    @classmethod
    def from_dense(cls, n: int, K: int, dense: np.ndarray) -> "PartitionStats":
        nz = np.flatnonzero(dense)
        return cls(int(n), int(K), {int(r): int(dense[r]) for r in nz})

    @classmethod
    def from_block_sizes(cls, sizes: Iterable[int]) -> "PartitionStats":
        sizes = list(sizes)
        spec: dict[int, int] = {}
        for s in sizes:
            spec[s] = spec.get(s, 0) + 1
        return cls(sum(sizes), len(sizes), spec)

    def M(self, r: int) -> int:
        return self.spectrum.get(r, 0)

    def check(self) -> None:
        assert sum(self.spectrum.values()) == self.K
        assert sum(r * m for r, m in self.spectrum.items()) == self.n
        if self.n >= 1:
            assert 1 <= self.K <= self.n

    def to_json(self) -> dict:
        return {"n": self.n, "K": self.K,
                "spectrum": [[r, m] for r, m in self.spectrum.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PartitionStats":
        return cls(int(obj["n"]), int(obj["K"]), {int(r): int(m) for r, m in obj["spectrum"]})

    def csv_row(self, r_max: int = DEFAULT_RMAX) -> list[int]:
        row = [self.n, self.K] + [self.M(r) for r in range(1, r_max + 1)]
        row.append(sum(m for r, m in self.spectrum.items() if r > r_max))
        return row

    @staticmethod
    def csv_header(r_max: int = DEFAULT_RMAX) -> list[str]:
        return ["n", "K"] + [f"M_{r}" for r in range(1, r_max + 1)] + ["overflow"]


class SeatingState:
    """Table occupancies, Fenwick weight index and running statistics.

    The index stores integer occupancies; the seating weight of table j is
    ``n_j - alpha`` and is recovered on the fly.
    """

    def __init__(self, record_labels: int = 0):
        self.counts, self.tree, self.spec = _seating.new_state()
        self.n = 0
        self.K = 0
        self.labels = np.full(record_labels, -1, dtype=np.int64)

    def occupancies(self) -> np.ndarray:
        return self.counts[: self.K].copy()

    def total_weight(self, alpha: float) -> float:
        return float(self.counts[: self.K].sum()) - alpha * self.K

    def stats(self) -> PartitionStats:
        return PartitionStats.from_dense(self.n, self.K, self.spec)

    def advance(self, target: int, p: EpmParams, stream: Stream) -> "SeatingState":
        self.counts, self.tree, self.spec, self.n, self.K = _seating.advance(
            self.counts, self.tree, self.spec, self.n, self.K, int(target),
            float(p.alpha), float(p.theta), stream.state, self.labels)
        return self


def seat_next(state: SeatingState, p: EpmParams, rng: Stream) -> SeatingState:
    """Seat one more customer (in place) and return the state."""
    return state.advance(state.n + 1, p, rng)


def sample_partition(n: int, p: EpmParams, rng: RngSpec) -> PartitionStats:
    if n < 1:
        raise InvalidParams(f"n must be >= 1, got {n}")
    validate_params(p)
    st = SeatingState().advance(n, p, rng.stream_obj())
    return st.stats()


def sample_trajectory(checkpoints: Sequence[int], p: EpmParams, rng: RngSpec) -> list[PartitionStats]:
    cps = [int(c) for c in checkpoints]
    if not cps:
        raise EmptyCheckpoints("need at least one checkpoint")
    if cps[0] < 1 or any(b < a for a, b in zip(cps, cps[1:])):
        raise InvalidParams("checkpoints must be ascending and >= 1")
    validate_params(p)
    st = SeatingState()
    stream = rng.stream_obj()
    out = []
    for c in cps:
        st.advance(c, p, stream)
        out.append(st.stats())
    return out


def sample_k_path(checkpoints: Sequence[int], p: EpmParams, rng: RngSpec) -> np.ndarray:
    """K at each checkpoint of one path, using the (n, K) chain only."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0:
        raise EmptyCheckpoints("need at least one checkpoint")
    validate_params(p)
    s = rng.state()
    out = np.empty(cps.size, dtype=np.int64)
    n = k = 0
    for i, c in enumerate(cps):
        k = _seating.kchain(n, k, int(c), float(p.alpha), float(p.theta), s)
        n = int(c)
        out[i] = k
    return out


def p_alpha_r(alpha: float, r: int) -> float:
    """Limiting share of clusters of size r: alpha (1-alpha)^(r-1) / r!."""
    if r < 1:
        raise InvalidR(f"r must be >= 1, got {r}")
    if r > 64:
        return alpha * math.exp(math.lgamma(r - alpha) - math.lgamma(1 - alpha) - math.lgamma(r + 1))
    # rising factorial and r! accumulated as one running ratio
    val = alpha
    for i in range(1, r):
        val *= (i - alpha) / (i + 1)
    return val


def expected_K(n: int, p: EpmParams) -> float:
    """E[K_n] in closed form.

    alpha > 0: Gamma(theta+1) Gamma(theta+alpha+n) / (alpha Gamma(theta+alpha) Gamma(theta+n)) - theta/alpha.
    alpha = 0: theta (digamma(theta+n) - digamma(theta)).
    """
    validate_params(p)
    a, t = p.alpha, p.theta
    if a == 0:
        from scipy.special import digamma

        return float(t * (digamma(t + n) - digamma(t)))
    lg = math.lgamma
    return (math.exp(lg(t + 1) + lg(t + a + n) - lg(t + a) - lg(t + n)) - t) / a


def estimate_alpha(s: PartitionStats) -> float:
    """Singleton share M_1 / K."""
    if s.K < 1:
        raise InvalidParams("estimate needs K >= 1")
    return s.M(1) / s.K


def _batch_bounds(R: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, R))
    edges = np.linspace(0, R, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_chunks(fn, R: int, workers: int) -> None:
    """Call ``fn(lo, hi)`` over a partition of ``range(R)``, possibly threaded.

    ``fn`` must write replicate results into preallocated arrays indexed by
    replicate, so output never depends on scheduling.
    """
    bounds = _batch_bounds(R, workers)
    if len(bounds) <= 1:
        for lo, hi in bounds:
            fn(lo, hi)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=len(bounds)) as ex:
        for f in [ex.submit(fn, lo, hi) for lo, hi in bounds]:
            f.result()


def sample_k_batch(checkpoints: Sequence[int], p: EpmParams, R: int, rng: RngSpec, *,
                   full: bool = False, r_max: int = DEFAULT_RMAX, workers: int = 1):
    """Replicates ``rng.stream + 0..R-1`` along ``checkpoints``.

    Returns ``K`` of shape (R, C) and, if ``full``, spectra of shape
    (R, C, r_max + 1) whose last column is the overflow count.  With
    ``full=False`` the (n, K) chain is used and no spectrum is produced.
    """
    validate_params(p)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0:
        raise EmptyCheckpoints("need at least one checkpoint")
    out_k = np.zeros((R, cps.size), dtype=np.int64)
    out_m = np.zeros((R if full else 0, cps.size, r_max + 1), dtype=np.int64)
    seed, stream0 = as_u64(rng.seed), as_u64(rng.stream)

    def work(lo, hi):
        _seating.single_path_batch(cps, float(p.alpha), float(p.theta), seed, stream0,
                                   lo, hi, full, r_max, out_k, out_m)

    run_chunks(work, R, workers)
    return (out_k, out_m) if full else out_k
