"""Brute-force reference computations for the test suite.

These deliberately avoid the library's numeric shortcuts: binomial tails in
exact rational arithmetic, Gaussian quantiles from the standard library.
"""

from __future__ import annotations

import math
from fractions import Fraction
from statistics import NormalDist


def exact_binomial_cdf(M: int, n: int, p_num: int, p_den: int) -> Fraction:
    """P[Binomial(M, p) <= n] with p = p_num / p_den, exact."""
    p = Fraction(p_num, p_den)
    q = 1 - p
    total = Fraction(0)
    for i in range(n + 1):
        total += math.comb(M, i) * p**i * q ** (M - i)
    return total


def exact_binomial_tail(M: int, n: int, p_num: int, p_den: int) -> Fraction:
    """P[Binomial(M, p) >= n + 1], exact."""
    p = Fraction(p_num, p_den)
    q = 1 - p
    total = Fraction(0)
    for i in range(n + 1, M + 1):
        total += math.comb(M, i) * p**i * q ** (M - i)
    return total


def float_to_fraction_parts(p: float) -> tuple[int, int]:
    """Exact numerator/denominator of a float (floats are dyadic rationals)."""
    frac = Fraction(p)
    return frac.numerator, frac.denominator


def gaussian_quantile(q: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    return NormalDist(mu, sigma).inv_cdf(q)


def gaussian_cdf(x: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    return NormalDist(mu, sigma).cdf(x)
