"""Reproducible random streams.

The generator is xoshiro256** (Blackman & Vigna).  A stream is addressed by a
64-bit ``seed``, an integer ``stream`` id and an integer ``sub`` id; the three
are folded through the SplitMix64 finalizer into a 64-bit key, and the
256-bit xoshiro state is then filled with four consecutive SplitMix64 outputs
seeded by that key.  Identical ``(seed, stream, sub)`` always gives the same
sequence, on any platform and under any thread schedule, because every
replicate owns its state array outright.

Replicate ``r`` of an experiment uses ``stream = base_stream + r``.  Within a
hierarchical replicate the top-level partition uses ``sub = 0`` and group
``i`` (0-based) uses ``sub = i + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_SUB_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def seed_state(seed, stream, sub):
    """Fresh xoshiro256** state for ``(seed, stream, sub)``; all args uint64."""
    key = _mix64(seed + _GOLDEN)
    key = _mix64(key ^ _mix64(stream + _STREAM_SALT))
    key = _mix64(key ^ _mix64(sub + _SUB_SALT))
    s = np.empty(4, dtype=np.uint64)
    x = key
    for i in range(4):
        x = x + _GOLDEN
        s[i] = _mix64(x)
    if s[0] == 0 and s[1] == 0 and s[2] == 0 and s[3] == 0:
        s[0] = np.uint64(1)
    return s


@njit(cache=True, inline="always")
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def next_double(s):
    """Uniform on [0, 1) with 53 random bits."""
    return np.float64(next_u64(s) >> np.uint64(11)) * _INV53


@njit(cache=True)
def fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = next_double(s)


@njit(cache=True)
def fill_normal(s, out):
    # Box-Muller, both variates used
    i = 0
    n = out.shape[0]
    while i < n:
        u1 = 1.0 - next_double(s)
        u2 = next_double(s)
        rad = np.sqrt(-2.0 * np.log(u1))
        out[i] = rad * np.cos(2.0 * np.pi * u2)
        if i + 1 < n:
            out[i + 1] = rad * np.sin(2.0 * np.pi * u2)
        i += 2


def as_u64(x: int) -> np.uint64:
    return np.uint64(int(x) & _MASK64)


@dataclass(frozen=True)
class RngSpec:
    """Address of one random stream."""

    seed: int
    stream: int = 0
    sub: int = 0

    def child(self, sub: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream, sub)

    def replicate(self, r: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream + r, self.sub)

    def state(self) -> np.ndarray:
        return seed_state(as_u64(self.seed), as_u64(self.stream), as_u64(self.sub))

    def stream_obj(self) -> "Stream":
        return Stream(self.state())


class Stream:
    """Mutable handle on one xoshiro state (used by step-wise APIs)."""

    def __init__(self, state: np.ndarray):
        self.state = state

    def random(self, size: int | None = None):
        if size is None:
            return float(next_double(self.state))
        out = np.empty(size)
        fill_uniform(self.state, out)
        return out

    def normal(self, size: int) -> np.ndarray:
        out = np.empty(size)
        fill_normal(self.state, out)
        return out
