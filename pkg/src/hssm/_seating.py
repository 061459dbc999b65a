"""Compiled seating kernels.

Two exact samplers of the Ewens-Pitman sequential seating rule live here:

* ``advance`` seats customers one at a time.  Table occupancies sit in a
  Fenwick tree of integer counts; the weight of a prefix of ``j`` tables is
  ``prefix_count(j) - alpha * j`` so the seating weights ``n_j - alpha`` are
  never stored as floats.  Cost is O(log K) per customer.  The frequency
  spectrum is maintained incrementally.

* ``kchain`` tracks only ``(n, K)``, which is itself a Markov chain.  For a
  fixed K the new-table probability ``(theta + alpha K) / (theta + n)`` is
  decreasing in n, so the arrival of the next new table is sampled by
  thinning a geometric proposal.  Cost is O(1) per new table, independent of
  how many customers join existing tables in between.

All state arrays are int64 and grow by doubling.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import next_double, seed_state

_INIT_CAP = 16


@njit(cache=True)
def _build_tree(counts, cap):
    tree = np.zeros(cap + 1, dtype=np.int64)
    m = min(counts.shape[0], cap)
    for j in range(1, m + 1):
        tree[j] += counts[j - 1]
    for j in range(1, cap + 1):
        parent = j + (j & -j)
        if parent <= cap:
            tree[parent] += tree[j]
    return tree


@njit(cache=True, inline="always")
def _tree_add(tree, cap, idx, delta):
    j = idx + 1
    while j <= cap:
        tree[j] += delta
        j += j & -j


@njit(cache=True, inline="always")
def _tree_search(tree, cap, k, alpha, target):
    # largest pos <= k with weight(1..pos) <= target; table index pos is chosen
    pos = 0
    rem = target
    step = cap
    while step > 0:
        nxt = pos + step
        if nxt <= k:
            w = tree[nxt] - alpha * step
            if w <= rem:
                pos = nxt
                rem -= w
        step >>= 1
    if pos >= k:
        pos = k - 1
    return pos


@njit(cache=True)
def new_state():
    counts = np.zeros(_INIT_CAP, dtype=np.int64)
    tree = np.zeros(_INIT_CAP + 1, dtype=np.int64)
    spec = np.zeros(_INIT_CAP, dtype=np.int64)
    return counts, tree, spec


@njit(cache=True)
def advance(counts, tree, spec, n, k, target, alpha, theta, s, labels):
    """Seat customers until ``n == target``.

    ``labels`` receives the table index of each customer when it is long
    enough; pass an empty array to skip label recording.
    """
    cap = counts.shape[0]
    nlab = labels.shape[0]
    while n < target:
        if n == 0:
            new_table = True
            t = 0.0
        else:
            u = next_double(s) * (theta + n)
            w_new = theta + alpha * k
            new_table = u < w_new
            t = u - w_new
        if new_table:
            if k == cap:
                ncap = 2 * cap
                c2 = np.zeros(ncap, dtype=np.int64)
                c2[:cap] = counts
                counts = c2
                cap = ncap
                tree = _build_tree(counts, cap)
            counts[k] = 1
            _tree_add(tree, cap, k, 1)
            if n < nlab:
                labels[n] = k
            k += 1
            if spec.shape[0] < 2:
                sp = np.zeros(4, dtype=np.int64)
                sp[: spec.shape[0]] = spec
                spec = sp
            spec[1] += 1
        else:
            j = _tree_search(tree, cap, k, alpha, t)
            c = counts[j]
            if c + 1 >= spec.shape[0]:
                sp = np.zeros(2 * (c + 1), dtype=np.int64)
                sp[: spec.shape[0]] = spec
                spec = sp
            spec[c] -= 1
            spec[c + 1] += 1
            counts[j] = c + 1
            _tree_add(tree, cap, j, 1)
            if n < nlab:
                labels[n] = j
        n += 1
    return counts, tree, spec, n, k


@njit(cache=True)
def kchain(n, k, target, alpha, theta, s):
    """Advance the (n, K) chain to ``n == target``; returns the new K."""
    if target <= n:
        return k
    if n == 0:
        n = 1
        k = 1
    while n < target:
        a = theta + alpha * k
        if a <= 0.0:
            return k
        q = a / (theta + n)
        if q >= 1.0:
            cand = n
        else:
            u = 1.0 - next_double(s)
            f = np.floor(np.log(u) / np.log1p(-q))
            if f >= target - n:
                return k
            cand = n + np.int64(f)
        # candidate customer arrives with cand already seated
        if next_double(s) * (theta + cand) < (theta + n):
            k += 1
        n = cand + 1
    return k


@njit(cache=True)
def spectrum_row(spec, rmax, out):
    """Write M_1..M_rmax and the overflow count into ``out[0:rmax+1]``."""
    for r in range(1, rmax + 1):
        out[r - 1] = spec[r] if r < spec.shape[0] else 0
    over = 0
    for r in range(rmax + 1, spec.shape[0]):
        over += spec[r]
    out[rmax] = over


@njit(cache=True, nogil=True)
def single_path_batch(checkpoints, alpha, theta, seed, stream0, lo, hi,
                      full, rmax, out_k, out_m):
    """Single-level replicates ``lo..hi-1`` along ``checkpoints``.

    ``out_k[rep, c]`` receives K; when ``full`` is set ``out_m[rep, c, :]``
    receives the truncated spectrum.
    """
    empty = np.zeros(0, dtype=np.int64)
    nck = checkpoints.shape[0]
    for rep in range(lo, hi):
        s = seed_state(seed, stream0 + np.uint64(rep), np.uint64(0))
        n = 0
        k = 0
        if full:
            counts, tree, spec = new_state()
            for c in range(nck):
                counts, tree, spec, n, k = advance(
                    counts, tree, spec, n, k, checkpoints[c], alpha, theta, s, empty)
                out_k[rep, c] = k
                spectrum_row(spec, rmax, out_m[rep, c])
        else:
            for c in range(nck):
                k = kchain(n, k, checkpoints[c], alpha, theta, s)
                n = checkpoints[c]
                out_k[rep, c] = k


@njit(cache=True, nogil=True)
def hier_path_batch(gsizes, alpha0, theta0, beta, theta, seed, stream0, lo, hi,
                    group_full, top_full, rmax, out_gk, out_xi, out_k, out_m):
    """Hierarchical replicates ``lo..hi-1`` along rows of ``gsizes``.

    ``gsizes[c, i]`` is the size of group i at checkpoint c (nondecreasing in
    c).  Groups are seated first, then the top-level partition is grown to
    ``xi`` at every checkpoint.
    """
    empty = np.zeros(0, dtype=np.int64)
    nck = gsizes.shape[0]
    d = gsizes.shape[1]
    xi = np.zeros(nck, dtype=np.int64)
    for rep in range(lo, hi):
        stream = stream0 + np.uint64(rep)
        xi[:] = 0
        for i in range(d):
            s = seed_state(seed, stream, np.uint64(i + 1))
            n = 0
            k = 0
            if group_full:
                counts, tree, spec = new_state()
                for c in range(nck):
                    counts, tree, spec, n, k = advance(
                        counts, tree, spec, n, k, gsizes[c, i], beta, theta, s, empty)
                    out_gk[rep, c, i] = k
                    xi[c] += k
            else:
                for c in range(nck):
                    k = kchain(n, k, gsizes[c, i], beta, theta, s)
                    n = gsizes[c, i]
                    out_gk[rep, c, i] = k
                    xi[c] += k
        s = seed_state(seed, stream, np.uint64(0))
        n = 0
        k = 0
        if top_full:
            counts, tree, spec = new_state()
            for c in range(nck):
                counts, tree, spec, n, k = advance(
                    counts, tree, spec, n, k, xi[c], alpha0, theta0, s, empty)
                out_k[rep, c] = k
                out_xi[rep, c] = xi[c]
                spectrum_row(spec, rmax, out_m[rep, c])
        else:
            for c in range(nck):
                k = kchain(n, k, xi[c], alpha0, theta0, s)
                n = xi[c]
                out_k[rep, c] = k
                out_xi[rep, c] = xi[c]
