"""Small exact integer-polynomial helpers.

Polynomials are tuples of coefficients, highest degree first, so
``(1, -3, 1)`` is x^2 - 3x + 1.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd

Poly = tuple


def trim(p) -> tuple:
    p = list(p)
    while len(p) > 1 and p[0] == 0:
        p.pop(0)
    return tuple(p)


def degree(p) -> int:
    p = trim(p)
    return -1 if p == (0,) else len(p) - 1


def divmod_poly(num, den):
    """Polynomial long division over the rationals."""
    num = [Fraction(c) for c in trim(num)]
    den = [Fraction(c) for c in trim(den)]
    if den == [0]:
        raise ZeroDivisionError("polynomial division by zero")
    if len(num) < len(den):
        return (Fraction(0),), tuple(num)
    quot = []
    rem = num[:]
    lead = den[0]
    for i in range(len(num) - len(den) + 1):
        coef = rem[i] / lead
        quot.append(coef)
        if coef:
            for j, dc in enumerate(den):
                rem[i + j] -= coef * dc
    rem = rem[len(num) - len(den) + 1:] or [Fraction(0)]
    return tuple(quot), trim(rem)


def is_zero(p) -> bool:
    return all(c == 0 for c in p)


def derivative(p) -> tuple:
    p = trim(p)
    n = len(p) - 1
    if n == 0:
        return (0,)
    return tuple(c * (n - i) for i, c in enumerate(p[:-1]))


def _primitive(p) -> tuple:
    """Scale a rational polynomial to a primitive integer one with positive lead."""
    p = trim(p)
    dens = 1
    for c in p:
        c = Fraction(c)
        dens = dens * c.denominator // gcd(dens, c.denominator)
    ints = [int(Fraction(c) * dens) for c in p]
    g = 0
    for c in ints:
        g = gcd(g, c)
    g = g or 1
    if ints[0] < 0:
        g = -g
    return tuple(c // g for c in ints)


def gcd_poly(a, b) -> tuple:
    a, b = trim(a), trim(b)
    while not is_zero(b):
        _, r = divmod_poly(a, b)
        a, b = b, r
    return _primitive(a)


def sub_poly(a, b) -> tuple:
    n = max(len(a), len(b))
    a, b = _pad(a, n), _pad(b, n)
    return trim(tuple(x - y for x, y in zip(a, b)))


def _pad(p, n) -> tuple:
    p = tuple(p)
    return (0,) * (n - len(p)) + p


def squarefree_decomposition(p) -> list[tuple[tuple, int]]:
    """Yun's algorithm; returns [(factor, multiplicity), ...] with primitive factors."""
    p = _primitive(p)
    if degree(p) < 1:
        return []
    out = []
    b = gcd_poly(p, derivative(p))
    c, _ = divmod_poly(p, b)
    dp, _ = divmod_poly(derivative(p), b)
    d = sub_poly(dp, derivative(c))
    i = 1
    while degree(c) >= 1:
        a = gcd_poly(c, d)
        if degree(a) >= 1:
            out.append((a, i))
        c, _ = divmod_poly(c, a)
        y, _ = divmod_poly(d, a)
        d = sub_poly(y, derivative(c))
        i += 1
    return out


@lru_cache(maxsize=None)
def cyclotomic(m: int) -> tuple:
    """Integer coefficients of the m-th cyclotomic polynomial."""
    num = (1,) + (0,) * (m - 1) + (-1,)
    for k in range(1, m):
        if m % k == 0:
            num, rem = divmod_poly(num, cyclotomic(k))
            assert is_zero(rem)
    return tuple(int(c) for c in num)


def euler_phi(m: int) -> int:
    result, k, x = m, 2, m
    while k * k <= x:
        if x % k == 0:
            while x % k == 0:
                x //= k
            result -= result // k
        k += 1
    if x > 1:
        result -= result // x
    return result


def divides(f, p) -> bool:
    _, r = divmod_poly(p, f)
    return is_zero(r)


def evaluate_matrix(coeffs, rows) -> list[list[int]]:
    """Horner evaluation of an integer polynomial at a square integer matrix."""
    d = len(rows)
    acc = [[0] * d for _ in range(d)]
    for c in coeffs:
        acc = [[sum(acc[i][k] * rows[k][j] for k in range(d)) for j in range(d)]
               for i in range(d)]
        for i in range(d):
            acc[i][i] += c
    return acc
