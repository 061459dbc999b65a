import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hssm.epm_core import EpmParams, PartitionStats, expected_K
from hssm.errors import DomainTooSmall, InvalidParams, TooSmall, WrongCase
from hssm.hierarchy import (
    GroupDesign,
    HierParams,
    ScalingLaw,
    case_scaling,
    clt_condition_trace,
    design_grid,
    diversity_estimates,
    hier_batch,
    hier_trajectory,
    resolve_sizes,
    sample_hier,
    scaling_eval,
    single_scaling,
    stochastic_condition,
)
from hssm.rng import RngSpec

discount = st.sampled_from([0.0, 0.25, 0.5, 0.75])


@pytest.mark.parametrize("alpha,beta,case", [(0, 0, "HDP"), (0, 0.5, "HDPYP"),
                                             (0.5, 0, "HPYDP"), (0.5, 0.5, "HPYP")])
def test_case_names(alpha, beta, case):
    assert HierParams.make(alpha, 1.0, beta, 1.0, 2).case == case


def test_params_validation():
    with pytest.raises(InvalidParams):
        HierParams.make(0.5, 1.0, 0.5, 1.0, 0).validate()
    with pytest.raises(InvalidParams):
        HierParams.make(0.5, -0.6, 0.5, 1.0, 2).validate()
    with pytest.raises(WrongCase):
        HierParams.make(-0.5, 1.5, 0.5, 1.0, 2).case


def test_design_validation():
    with pytest.raises(InvalidParams):
        GroupDesign((0.5, 0.4))
    with pytest.raises(InvalidParams):
        GroupDesign((1.0, 0.0))
    assert GroupDesign.equal(4).d == 4


# ------------------------------------------------------------- apportionment


@pytest.mark.parametrize("weights,N,expected", [
    ((0.5, 0.5), 11, [6, 5]),
    ((1 / 3, 1 / 3, 1 / 3), 10, [4, 3, 3]),
    ((0.6, 0.3, 0.1), 24, [15, 7, 2]),
    ((0.98, 0.01, 0.01), 10, [8, 1, 1]),
])
def test_resolve_sizes_examples(weights, N, expected):
    assert resolve_sizes(GroupDesign(weights), N) == expected


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6), st.integers(6, 10 ** 7))
def test_resolve_sizes_properties(raw, N):
    w = np.array(raw) / sum(raw)
    w = tuple(w / w.sum())
    design = GroupDesign(w)
    sizes = resolve_sizes(design, N)
    assert sum(sizes) == N
    assert all(s >= 1 for s in sizes)
    if min(w) * N >= 1:
        assert all(abs(s - wi * N) < 1 + 1e-9 for s, wi in zip(sizes, w))


def test_resolve_sizes_too_small():
    with pytest.raises(TooSmall):
        resolve_sizes(GroupDesign.equal(3), 2)


def test_design_grid_rejects_shrinking_group():
    # largest remainder gives (13, 8, 6) at 27 and (14, 9, 5) at 28
    design = GroupDesign((0.49, 0.31, 0.2))
    with pytest.raises(InvalidParams):
        design_grid(design, [27, 28])
    assert design_grid(design, [27, 100]).tolist() == [[13, 8, 6], [49, 31, 20]]


# ------------------------------------------------------------- scaling


def test_scaling_values():
    N = 10 ** 6
    assert scaling_eval(ScalingLaw("loglog"), N) == pytest.approx(math.log(math.log(N)))
    assert ScalingLaw("clog", multiplier=0.5)(N) == pytest.approx(0.5 * math.log(N))
    assert ScalingLaw("logpow", exponent=0.5)(N) == pytest.approx(math.log(N) ** 0.5)
    assert ScalingLaw("pow", exponent=0.25)(N) == pytest.approx(N ** 0.25)
    assert ScalingLaw("identity")(N) == N
    with pytest.raises(DomainTooSmall):
        ScalingLaw("pow", exponent=0.5)(2)
    with pytest.raises(InvalidParams):
        ScalingLaw("cubic")


@pytest.mark.parametrize("alpha,beta,kind,exponent,mult", [
    (0.0, 0.0, "loglog", 1.0, 1.0), (0.0, 0.5, "clog", 1.0, 0.5),
    (0.5, 0.0, "logpow", 0.5, 1.0), (0.6, 0.5, "pow", 0.3, 1.0)])
def test_case_scaling(alpha, beta, kind, exponent, mult):
    law = case_scaling(HierParams.make(alpha, 1.0, beta, 1.0, 2))
    assert (law.kind, law.multiplier) == (kind, mult)
    assert law.exponent == pytest.approx(exponent)


def test_single_scaling():
    assert single_scaling(EpmParams(0.5, 1.0)) == ScalingLaw("pow", exponent=0.5)
    assert single_scaling(EpmParams(0.0, 1.0)).kind == "clog"


# ------------------------------------------------------------- sampling


@given(discount, discount, st.lists(st.integers(1, 80), min_size=1, max_size=4),
       st.integers(0, 10 ** 9))
def test_sample_hier_invariants(a, b, sizes, seed):
    hp = HierParams.make(a, 1.0, b, 1.0, len(sizes))
    hs = sample_hier(sizes, None, hp, RngSpec(seed), emit_labels=True)
    hs.check()
    assert [g.n for g in hs.groups] == sizes
    # every top cluster holds at least one observation
    pooled = np.concatenate(hs.labels)
    assert len(np.unique(pooled)) == hs.K
    counts = np.bincount(pooled)
    assert PartitionStats.from_block_sizes(counts.tolist()).spectrum == hs.obs_spectrum


def test_labels_do_not_change_sample():
    hp = HierParams.make(0.5, 1.0, 0.5, 1.0, 3)
    a = sample_hier(GroupDesign.equal(3), 300, hp, RngSpec(2), emit_labels=True)
    b = sample_hier(GroupDesign.equal(3), 300, hp, RngSpec(2))
    assert a == b


def test_sample_hier_errors():
    hp = HierParams.make(0.5, 1.0, 0.5, 1.0, 2)
    with pytest.raises(InvalidParams):
        sample_hier([3], None, hp, RngSpec(1))
    with pytest.raises(InvalidParams):
        sample_hier(GroupDesign.equal(3), 30, hp, RngSpec(1))


@pytest.mark.parametrize("a,b", [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)])
def test_batch_full_matches_sample_hier(a, b):
    hp = HierParams.make(a, 1.0, b, 1.0, 2)
    rng = RngSpec(7, 3)
    bt = hier_batch([[50, 40]], hp, 3, rng, group_full=True, top_full=True, r_max=5)
    for r in range(3):
        s = sample_hier([50, 40], None, hp, rng.replicate(r))
        assert bt.K[r, 0] == s.K and bt.xi[r, 0] == s.xi
        assert bt.group_K[r, 0].tolist() == [g.K for g in s.groups]
        assert bt.spectrum[r, 0].tolist() == s.top.csv_row(5)[2:]


@pytest.mark.parametrize("group_full,top_full", [(False, False), (True, True), (False, True)])
def test_batch_worker_independent(group_full, top_full):
    hp = HierParams.make(0.5, 1.0, 0.25, 2.0, 3)
    sizes = design_grid(GroupDesign.equal(3), [300, 3000])
    a = hier_batch(sizes, hp, 23, RngSpec(4), group_full=group_full, top_full=top_full, workers=1)
    b = hier_batch(sizes, hp, 23, RngSpec(4), group_full=group_full, top_full=top_full, workers=6)
    for f in ("group_K", "xi", "K", "spectrum"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.N.tolist() == [300, 3000]


def test_batch_xi_mean():
    # xi is a sum of independent group counts, so E[xi] = sum_i E[K_{N_i}]
    hp = HierParams.make(0.5, 1.0, 0.5, 2.0, 2)
    bt = hier_batch([[1000, 500]], hp, 4000, RngSpec(8))
    target = expected_K(1000, hp.bottom) + expected_K(500, hp.bottom)
    se = bt.xi[:, 0].std(ddof=1) / math.sqrt(4000)
    assert abs(bt.xi[:, 0].mean() - target) < 4 * se


def test_batch_errors():
    hp = HierParams.make(0.5, 1.0, 0.5, 1.0, 2)
    with pytest.raises(InvalidParams):
        hier_batch([[5, 5, 5]], hp, 2, RngSpec(1))
    with pytest.raises(InvalidParams):
        hier_batch([[5, 5]], hp, 0, RngSpec(1))
    with pytest.raises(InvalidParams):
        hier_batch([[5, 5], [4, 6]], hp, 1, RngSpec(1))


# ------------------------------------------------------------- trajectories


def test_trajectory_matches_direct_samples():
    hp = HierParams.make(0.5, 1.0, 0.5, 1.0, 2)
    design, rng = GroupDesign.equal(2), RngSpec(5, 2)
    tr = hier_trajectory(design, [100, 1000], 10, hp, rng)
    assert tr.stats[0] == sample_hier(design, 100, hp, rng)
    assert tr.stats[1] == sample_hier(design, 1000, hp, rng)
    ext = sample_hier(design, 10_000, hp, rng)
    assert tr.estimate.ext_xi == ext.xi
    assert tr.estimate.S_hat == pytest.approx(ext.K / ext.xi ** 0.5)
    # eta = sum_i w_i^beta K_i / (c N_i)^beta with equal weights
    eta = sum(0.5 ** 0.5 * g.K / g.n ** 0.5 for g in ext.groups)
    assert tr.estimate.eta_hat == pytest.approx(eta)


def test_trajectory_rejects_c():
    with pytest.raises(InvalidParams):
        hier_trajectory(GroupDesign.equal(2), [100], 1.0, HierParams.make(0.5, 1, 0.5, 1, 2),
                        RngSpec(1))


def test_diversity_estimates_log_cases():
    hp = HierParams.make(0.0, 1.0, 0.0, 1.0, 2)
    S, eta = diversity_estimates(np.array([100, 200]), np.array([[4, 5]]), np.array([9]),
                                 np.array([3]), hp, (0.5, 0.5))
    assert S[0] == pytest.approx(3 / math.log(9))
    assert eta[0] == pytest.approx(4 / math.log(100) + 5 / math.log(200))


# ------------------------------------------------------------- side conditions


def test_condition_trace_equal_weights_is_zero_for_power_cases():
    rows, ok = clt_condition_trace(GroupDesign.equal(2), "HPYP", [100, 1000, 10_000])
    assert ok
    assert all(r.worst == pytest.approx(0.0, abs=1e-12) for r in rows)


def test_condition_trace_log_case_decreases():
    rows, ok = clt_condition_trace(GroupDesign.equal(2), "HDP", [10 ** k for k in range(2, 9)])
    assert ok
    N = rows[-1].N
    assert rows[-1].values[0] == pytest.approx(math.sqrt(math.log(N)) * (math.log(N / 2) / math.log(N) - 1))


def test_condition_trace_unknown_case():
    with pytest.raises(WrongCase):
        clt_condition_trace(GroupDesign.equal(2), "XYZ", [100])


def test_stochastic_condition():
    xi = np.array([10, 20])
    v = stochastic_condition(xi, 1000, "HDP")
    assert v[0] == pytest.approx(math.sqrt(math.log(1000)) * (math.log(10) / math.log(math.log(1000)) - 1))
    v = stochastic_condition(xi, 1000, "HDPYP", beta=0.5)
    assert v[1] == pytest.approx(math.sqrt(1000 ** 0.5) * (math.log(20) / (0.5 * math.log(1000)) - 1))
    with pytest.raises(WrongCase):
        stochastic_condition(xi, 1000, "HPYP")
