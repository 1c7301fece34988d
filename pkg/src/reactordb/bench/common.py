"""Small helpers shared by the workloads: skewed key choice, CPU burn, TPC-C
style non-uniform randoms."""

from __future__ import annotations

import bisect
import time

import numpy as np


class Zipf:
    """Power-law choice over ``range(n)``: P(i) proportional to 1 / (i+1)**theta.

    The CDF is tabulated once, a draw is one uniform plus a binary search, so
    any exponent (0.01 ... 5.0 and beyond) works the same way.  Rank 0 is the
    hottest key.
    """

    def __init__(self, n, theta):
        if n < 1:
            raise ValueError("n must be >= 1")
        if theta < 0:
            raise ValueError("theta must be >= 0")
        self.n = n
        self.theta = theta
        weights = 1.0 / np.power(np.arange(1, n + 1, dtype=float), theta)
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        self._cdf = cdf.tolist()

    def draw(self, rng):
        return min(bisect.bisect_left(self._cdf, rng.random()), self.n - 1)


def spin_us(us, seed=0):
    """Burn CPU for ``us`` microseconds generating pseudo-random numbers;
    returns their sum so the work cannot be skipped."""
    deadline = time.perf_counter_ns() + int(us * 1000)
    gen = np.random.default_rng(seed)
    acc = 0.0
    while time.perf_counter_ns() < deadline:
        acc += float(gen.random(64).sum())
    return acc


def random_numbers(count, seed=0, chunk=65536):
    """Generate ``count`` random numbers (in chunks) and return their mean."""
    gen = np.random.default_rng(seed)
    total = 0.0
    left = count
    while left > 0:
        n = min(chunk, left)
        total += float(gen.random(n).sum())
        left -= n
    return total / count if count else 0.0


def nurand(rng, a, x, y, c=0):
    return (((rng.randint(0, a) | rng.randint(x, y)) + c) % (y - x + 1)) + x


SYLLABLES = ("BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING")


def last_name(num):
    return SYLLABLES[num // 100] + SYLLABLES[(num // 10) % 10] + SYLLABLES[num % 10]


def alnum(rng, lo, hi):
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    return "".join(rng.choice(letters) for _ in range(rng.randint(lo, hi)))
