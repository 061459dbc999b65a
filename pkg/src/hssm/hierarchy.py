"""Two-level partitions through the random-index representation.

Each group i seats its N_i observations in an EPM(beta, theta) partition
with K_i tables.  Those xi = sum_i K_i tables are then seated as customers in
a single top-level EPM(alpha, theta0) partition whose table count is the
hierarchical cluster count K_N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _seating
from .epm_core import (
    DEFAULT_RMAX,
    EpmParams,
    PartitionStats,
    SeatingState,
    run_chunks,
    validate_params,
)
from .errors import DomainTooSmall, InvalidParams, TooSmall, WrongCase
from .rng import RngSpec, as_u64

CASES = ("HDP", "HDPYP", "HPYDP", "HPYP")


@dataclass(frozen=True)
class HierParams:
    """Top-level EPM(alpha, theta0), group-level EPM(beta, theta) and group count d."""

    top: EpmParams
    bottom: EpmParams
    d: int

    @classmethod
    def make(cls, alpha: float, theta0: float, beta: float, theta: float, d: int) -> "HierParams":
        return cls(EpmParams(alpha, theta0), EpmParams(beta, theta), d)

    @property
    def alpha(self) -> float:
        return self.top.alpha

    @property
    def beta(self) -> float:
        return self.bottom.alpha

    @property
    def case(self) -> str:
        """One of HDP, HDPYP, HPYDP, HPYP for nonnegative discounts."""
        if self.alpha < 0 or self.beta < 0:
            raise WrongCase("named cases need nonnegative discounts")
        return CASES[2 * (self.alpha > 0) + (self.beta > 0)]

    def validate(self) -> "HierParams":
        validate_params(self.top)
        validate_params(self.bottom)
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParams(f"d must be a positive integer, got {self.d}")
        return self


@dataclass(frozen=True)
class GroupDesign:
    """Group weights w_i > 0 summing to one; sizes follow by apportionment."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w or any(not (x > 0) for x in w):
            raise InvalidParams("weights must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise InvalidParams(f"weights must sum to 1, got {math.fsum(w)}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, d: int) -> "GroupDesign":
        return cls(tuple([1.0 / d] * d))

    @property
    def d(self) -> int:
        return len(self.weights)

    def sizes(self, N: int) -> list[int]:
        return resolve_sizes(self, N)


@dataclass(frozen=True)
class HierStats:
    """Group partitions, their pooled table count xi and the top partition.

    ``obs_spectrum`` is the observation-level frequency spectrum (how many
    top-level clusters hold r observations); it is filled only when the
    sampler tracked labels.
    """

    groups: tuple[PartitionStats, ...]
    xi: int
    top: PartitionStats
    labels: tuple[np.ndarray, ...] | None = field(default=None, compare=False, repr=False)
    obs_spectrum: dict | None = field(default=None, compare=False)

    @property
    def K(self) -> int:
        return self.top.K

    @property
    def spectrum(self):
        return self.top.spectrum

    def M(self, r: int) -> int:
        return self.top.M(r)

    def check(self) -> None:
        assert self.xi == sum(g.K for g in self.groups)
        assert self.top.n == self.xi
        assert self.top.K <= self.xi <= sum(g.n for g in self.groups)
        self.top.check()
        for g in self.groups:
            g.check()

    def to_json(self) -> dict:
        return {"groups": [g.to_json() for g in self.groups], "xi": self.xi,
                "top": self.top.to_json()}


@dataclass(frozen=True)
class ScalingLaw:
    """Normalizing sequence gamma(N).

    kinds: ``loglog`` c log log N, ``clog`` c log N, ``logpow`` c (log N)^a,
    ``pow`` c N^a, ``identity`` N.
    """

    kind: str
    exponent: float = 1.0
    multiplier: float = 1.0

    KINDS = ("loglog", "clog", "logpow", "pow", "identity")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParams(f"unknown scaling kind {self.kind!r}")
        if not self.multiplier > 0:
            raise InvalidParams("multiplier must be positive")

    def __call__(self, N) -> float:
        return scaling_eval(self, N)


def scaling_eval(law: ScalingLaw, N) -> float:
    if N < 3:
        raise DomainTooSmall(f"scaling needs N >= 3, got {N}")
    c = law.multiplier
    if law.kind == "loglog":
        return c * math.log(math.log(N))
    if law.kind == "clog":
        return c * math.log(N)
    if law.kind == "logpow":
        return c * math.log(N) ** law.exponent
    if law.kind == "pow":
        return c * float(N) ** law.exponent
    return float(N)


def case_scaling(hp: HierParams) -> ScalingLaw:
    """Growth rate of K_N for each hierarchical case."""
    a, b = hp.alpha, hp.beta
    return {
        "HDP": ScalingLaw("loglog"),
        "HDPYP": ScalingLaw("clog", multiplier=b if b > 0 else 1.0),
        "HPYDP": ScalingLaw("logpow", exponent=a),
        "HPYP": ScalingLaw("pow", exponent=a * b),
    }[hp.case]


def single_scaling(p: EpmParams) -> ScalingLaw:
    if p.alpha > 0:
        return ScalingLaw("pow", exponent=p.alpha)
    return ScalingLaw("clog")


def resolve_sizes(design: GroupDesign, N: int) -> list[int]:
    """Largest-remainder apportionment of N over the weights.

    Remainder ties go to the lower index.  A group that would receive zero
    takes one unit from the currently largest group.
    """
    d = design.d
    if N < d:
        raise TooSmall(f"N={N} is smaller than d={d}")
    quotas = [w * N for w in design.weights]
    base = [int(math.floor(q)) for q in quotas]
    short = N - sum(base)
    # remainders are rounded so that float noise cannot break a nominal tie
    order = sorted(range(d), key=lambda i: (-round(quotas[i] - base[i], 9), i))
    for i in order[:short]:
        base[i] += 1
    for i in range(d):
        if base[i] == 0:
            j = max(range(d), key=lambda k: (base[k], -k))
            base[j] -= 1
            base[i] = 1
    return base


def _group_spec(rng: RngSpec, i: int) -> RngSpec:
    return RngSpec(rng.seed, rng.stream, i + 1)


def sample_hier(sizes_or_design, N: int | None, hp: HierParams, rng: RngSpec, *,
                emit_labels: bool = False) -> HierStats:
    """One hierarchical sample.

    ``sizes_or_design`` is either a GroupDesign (then ``N`` is apportioned) or
    an explicit list of group sizes (then ``N`` may be None).  Group i uses
    sub-stream i + 1 and the top level uses sub-stream 0.
    """
    hp.validate()
    if isinstance(sizes_or_design, GroupDesign):
        if sizes_or_design.d != hp.d:
            raise InvalidParams("design and params disagree on d")
        sizes = resolve_sizes(sizes_or_design, int(N))
    else:
        sizes = [int(s) for s in sizes_or_design]
        if len(sizes) != hp.d or any(s < 1 for s in sizes):
            raise InvalidParams("need d group sizes, each >= 1")
    groups, states = [], []
    for i, n in enumerate(sizes):
        st = SeatingState(record_labels=n if emit_labels else 0)
        st.advance(n, hp.bottom, _group_spec(rng, i).stream_obj())
        states.append(st)
        groups.append(st.stats())
    xi = sum(g.K for g in groups)
    top = SeatingState(record_labels=xi if emit_labels else 0)
    top.advance(xi, hp.top, rng.child(0).stream_obj())
    labels = obs_spec = None
    if emit_labels:
        # tables are handed to the top level group by group, in opening order
        offsets = np.cumsum([0] + [g.K for g in groups])
        labels = tuple(top.labels[offsets[i] + st.labels] for i, st in enumerate(states))
        sizes_per_cluster = np.bincount(np.concatenate(labels), minlength=top.K)
        obs_spec = PartitionStats.from_block_sizes(sizes_per_cluster.tolist()).spectrum
    return HierStats(tuple(groups), xi, top.stats(), labels, obs_spec)


@dataclass
class HierBatch:
    """Replicate arrays from ``hier_batch``; the checkpoint axis is axis 1."""

    sizes: np.ndarray  # (C, d)
    group_K: np.ndarray  # (R, C, d)
    xi: np.ndarray  # (R, C)
    K: np.ndarray  # (R, C)
    spectrum: np.ndarray  # (R, C, r_max + 1) or empty

    @property
    def N(self) -> np.ndarray:
        return self.sizes.sum(axis=1)


def hier_batch(sizes: np.ndarray, hp: HierParams, R: int, rng: RngSpec, *,
               group_full: bool = False, top_full: bool = False,
               r_max: int = DEFAULT_RMAX, workers: int = 1) -> HierBatch:
    """R coupled hierarchical paths through the rows of ``sizes`` (C x d).

    Replicate r uses stream ``rng.stream + r``.  With ``*_full`` unset the
    (n, K) chain replaces full seating, which yields the same law of K but
    no spectrum.  Group-level K agrees with ``sample_hier`` only when
    ``group_full`` is set, since the two samplers consume randomness
    differently.
    """
    hp.validate()
    sizes = np.atleast_2d(np.asarray(sizes, dtype=np.int64))
    if sizes.shape[1] != hp.d:
        raise InvalidParams("sizes must have d columns")
    if np.any(sizes < 1) or np.any(np.diff(sizes, axis=0) < 0):
        raise InvalidParams("group sizes must be >= 1 and nondecreasing across checkpoints")
    if R < 1:
        raise InvalidParams("need at least one replicate")
    C, d = sizes.shape
    gk = np.zeros((R, C, d), dtype=np.int64)
    xi = np.zeros((R, C), dtype=np.int64)
    K = np.zeros((R, C), dtype=np.int64)
    M = np.zeros((R if top_full else 0, C, r_max + 1), dtype=np.int64)
    seed, s0 = as_u64(rng.seed), as_u64(rng.stream)
    a, t0, b, t = (float(hp.top.alpha), float(hp.top.theta),
                   float(hp.bottom.alpha), float(hp.bottom.theta))

    def work(lo, hi):
        _seating.hier_path_batch(sizes, a, t0, b, t, seed, s0, lo, hi, group_full, top_full,
                                 r_max, gk, xi, K, M)

    run_chunks(work, R, workers)
    return HierBatch(sizes, gk, xi, K, M)


def design_grid(design: GroupDesign, checkpoints: Sequence[int]) -> np.ndarray:
    """Resolved sizes per checkpoint; rejects grids whose group sizes shrink."""
    cps = [int(c) for c in checkpoints]
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])):
        raise InvalidParams("checkpoints must be strictly ascending")
    grid = np.array([resolve_sizes(design, c) for c in cps], dtype=np.int64)
    if np.any(np.diff(grid, axis=0) < 0):
        raise InvalidParams("apportionment is not monotone on this grid; choose other checkpoints")
    return grid


@dataclass(frozen=True)
class DiversityEstimate:
    """Coupled surrogates for the a.s. limits at the last checkpoint.

    ``S_hat = K_{xi(cN)} / xi(cN)^alpha`` estimates the top-level diversity
    and ``eta_hat = sum_i w_i^beta K_{i,cN_i} / (cN_i)^beta`` the group-level
    mixture; with beta = 0 the group term is ``sum_i K_{i,cN_i} / log(cN_i)``.
    """

    S_hat: float
    eta_hat: float
    ext_sizes: tuple[int, ...]
    ext_xi: int


def diversity_estimates(ext_sizes: np.ndarray, ext_gk: np.ndarray, ext_xi: np.ndarray,
                        ext_k: np.ndarray, hp: HierParams, weights: Sequence[float]):
    """Vectorized S_hat and eta_hat over replicates (first axis of the arrays)."""
    w = np.asarray(weights, dtype=float)
    a, b = hp.alpha, hp.beta
    ns = np.asarray(ext_sizes, dtype=float)
    if a > 0:
        S = ext_k / ext_xi.astype(float) ** a
    else:
        S = ext_k / np.log(ext_xi.astype(float))
    if b > 0:
        eta = (w ** b * ext_gk / ns ** b).sum(axis=-1)
    else:
        eta = (ext_gk / np.log(ns)).sum(axis=-1)
    return S, eta


@dataclass
class HierTrajectory:
    stats: list[HierStats]
    estimate: DiversityEstimate


def hier_trajectory(design: GroupDesign, checkpoints: Sequence[int], c: float, hp: HierParams,
                    rng: RngSpec) -> HierTrajectory:
    """One coupled path with snapshots at each N and extension to c times the last N.

    Uses full seating on the same sub-streams as ``sample_hier`` and
    ``hier_batch(..., group_full=True, top_full=True)``.
    """
    if not c > 1:
        raise InvalidParams("extension factor c must exceed 1")
    hp.validate()
    cps = [int(x) for x in checkpoints]
    ext = int(round(c * cps[-1]))
    grid = design_grid(design, cps + [ext])
    gstates = [SeatingState() for _ in range(hp.d)]
    gstreams = [_group_spec(rng, i).stream_obj() for i in range(hp.d)]
    gk = np.zeros(grid.shape, dtype=np.int64)
    gstats = []
    for j in range(grid.shape[0]):
        row = []
        for i in range(hp.d):
            gstates[i].advance(int(grid[j, i]), hp.bottom, gstreams[i])
            gk[j, i] = gstates[i].K
            row.append(gstates[i].stats())
        gstats.append(tuple(row))
    top = SeatingState()
    tstream = rng.child(0).stream_obj()
    stats = []
    for j in range(grid.shape[0]):
        top.advance(int(gk[j].sum()), hp.top, tstream)
        stats.append(HierStats(gstats[j], int(gk[j].sum()), top.stats()))
    last = stats[-1]
    S, eta = diversity_estimates(grid[-1], gk[-1], np.int64(last.xi), np.int64(last.K),
                                 hp, design.weights)
    est = DiversityEstimate(float(S), float(eta), tuple(int(x) for x in grid[-1]), last.xi)
    return HierTrajectory(stats[:-1], est)


@dataclass(frozen=True)
class ConditionRow:
    N: int
    sizes: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def worst(self) -> float:
        return max(abs(v) for v in self.values)


def clt_condition_trace(design: GroupDesign, case: str, grid: Sequence[int],
                        beta: float = 0.5) -> tuple[list[ConditionRow], bool]:
    """Deterministic side conditions of the hierarchical CLT on resolved sizes.

    Log-type cases (HDP, HPYDP) evaluate sqrt(log N) (log N_i / log N - 1);
    power-type cases (HDPYP, HPYP) evaluate sqrt(N^beta) ((N_i / (N w_i))^beta - 1).
    The flag is True when the worst |value| is nonincreasing over the grid
    tail (its second half).
    """
    if case not in CASES:
        raise WrongCase(f"unknown case {case!r}")
    rows = []
    for N in grid:
        sizes = resolve_sizes(design, int(N))
        if case in ("HDP", "HPYDP"):
            vals = tuple(math.sqrt(math.log(N)) * (math.log(n) / math.log(N) - 1.0)
                         for n in sizes)
        else:
            vals = tuple(math.sqrt(N ** beta) * ((n / (N * w)) ** beta - 1.0)
                         for n, w in zip(sizes, design.weights))
        rows.append(ConditionRow(int(N), tuple(sizes), vals))
    worst = [r.worst for r in rows]
    tail = worst[len(worst) // 2:]
    ok = all(b <= a + 1e-15 for a, b in zip(tail, tail[1:]))
    return rows, ok


def stochastic_condition(xi: np.ndarray, N: int, case: str, beta: float = 0.5) -> np.ndarray:
    """Per-replicate values of the random-index side condition for HDP / HDPYP.

    HDP: sqrt(log N) (log xi / log log N - 1).
    HDPYP: sqrt(N^beta) (log xi / (beta log N) - 1).
    """
    lx = np.log(np.asarray(xi, dtype=float))
    if case == "HDP":
        return math.sqrt(math.log(N)) * (lx / math.log(math.log(N)) - 1.0)
    if case == "HDPYP":
        return math.sqrt(N ** beta) * (lx / (beta * math.log(N)) - 1.0)
    raise WrongCase("stochastic condition is defined for HDP and HDPYP")
