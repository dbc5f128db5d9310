import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from shrinktarget.diophantine import (QuadraticIrrational, continued_fraction, eigen_slope,
                                      lattice_count_ellipse, liouville_gap, three_distance,
                                      three_distance_scan)
from shrinktarget.errors import CapExceeded, NotIrrational, RationalEigenvalue
from shrinktarget.matrix_core import IntMatrix, matrix_power_exact, spectral_data

CAT = IntMatrix(((2, 1), (1, 1)))
GOLDEN = QuadraticIrrational(1, 1, 5, 2)
SQRT2 = QuadraticIrrational(0, 1, 2)


def test_eigen_slopes():
    assert eigen_slope(CAT) == QuadraticIrrational(-1, 1, 5, 2)
    assert eigen_slope(IntMatrix(((3, 1), (1, 1)))) == QuadraticIrrational(-1, 1, 2)
    # stable direction of a symmetric matrix is orthogonal to the unstable one
    s, u = float(eigen_slope(CAT, "stable")), float(eigen_slope(CAT))
    assert s * u == pytest.approx(-1.0, rel=1e-14)
    with pytest.raises(RationalEigenvalue):
        eigen_slope(IntMatrix.diag(2, 3))


def test_eigen_slope_is_eigenvector():
    for rows in [((2, 1), (1, 1)), ((1, 3), (2, 1)), ((5, 2), (3, 1)), ((0, 1), (1, 3))]:
        A = IntMatrix(rows)
        for which in ("stable", "unstable"):
            k = float(eigen_slope(A, which))
            v = np.array([1.0, k])
            w = A.to_numpy() @ v
            assert w[1] / w[0] == pytest.approx(k, rel=1e-10)


def test_surd_validation():
    with pytest.raises(NotIrrational):
        QuadraticIrrational(0, 1, 4)
    with pytest.raises(NotIrrational):
        QuadraticIrrational(3, 0, 5)
    # D is reduced to its squarefree part
    assert QuadraticIrrational(0, 1, 8) == QuadraticIrrational(0, 2, 2)


def test_continued_fraction_examples():
    cf = continued_fraction(GOLDEN, 10)
    assert cf.quotients == [1] * 10 and cf.period == [1] and cf.bound == 1
    cf = continued_fraction(SQRT2, 10)
    assert cf.quotients == [1] + [2] * 9 and cf.period == [2] and cf.bound == 2


def _mp_cf(x, terms):
    out = []
    with mpmath.workdps(200):
        v = x.mp(200)
        for _ in range(terms):
            a = int(mpmath.floor(v))
            out.append(a)
            v = 1 / (v - a)
    return out


@pytest.mark.parametrize("x", [QuadraticIrrational(p, q, D, r)
                               for p, q, D, r in [(0, 1, 7, 1), (3, -2, 13, 5), (-1, 1, 5, 2),
                                                  (7, 3, 19, -4), (0, 1, 94, 1), (1, 1, 61, 3)]])
def test_cf_against_float_recursion_and_period(x):
    cf = continued_fraction(x, 30)
    assert cf.quotients == _mp_cf(x, 30)
    steps = len(cf.preperiod) + len(cf.period)
    assert steps <= 100
    tail = cf.quotients[len(cf.preperiod):]
    assert all(a == cf.period[i % len(cf.period)] for i, a in enumerate(tail))


def _oracle_gaps(theta_mp, N):
    with mpmath.workdps(60):
        pts = sorted([mpmath.mpf(0), mpmath.mpf(1)] + [mpmath.frac(k * theta_mp) for k in range(1, N + 1)])
        gaps = sorted(float(b - a) for a, b in zip(pts, pts[1:]))
    return gaps


def test_three_distance_golden_small():
    rep = three_distance(GOLDEN, 5)
    with mpmath.workdps(60):
        oracle = sorted(set(round(g, 12) for g in _oracle_gaps(GOLDEN.mp(60), 5)))
    assert rep.lengths == pytest.approx(oracle, abs=1e-12)
    assert rep.lengths == pytest.approx([0.09017, 0.14590, 0.23607], abs=1e-5)
    assert rep.ratio == pytest.approx(2.618, abs=1e-3)
    assert three_distance(GOLDEN, 1).lengths == pytest.approx([0.38197, 0.61803], abs=1e-5)


def test_real_path_matches_exact_path():
    for x in (GOLDEN, SQRT2, eigen_slope(CAT)):
        a = three_distance(x, 300)
        with mpmath.workdps(80):
            b = three_distance(x.mp(80), 300)
        assert a.multiplicities == b.multiplicities
        assert a.lengths == pytest.approx(b.lengths, abs=1e-15)


def test_scan_matches_direct():
    scan = three_distance_scan(SQRT2, 200)
    for N in (1, 17, 99, 200):
        assert scan[N - 1].lengths == three_distance(SQRT2, N).lengths
        assert scan[N - 1].multiplicities == three_distance(SQRT2, N).multiplicities


def test_three_distance_property_scan():
    for x in (GOLDEN, SQRT2, eigen_slope(CAT)):
        for rep in three_distance_scan(x, 2000):
            assert len(rep.lengths) <= 3
            assert rep.total == pytest.approx(1.0, abs=1e-12)
            assert sum(rep.multiplicities) == rep.N + 1


def test_rational_theta_rejected():
    with pytest.raises(NotIrrational):
        three_distance(Fraction(1, 3), 5)


def _brute_count(A, n, r, c=(0, 0)):
    M = matrix_power_exact(A, n)
    det = M.det
    inv = [[Fraction(M[1, 1], det), Fraction(-M[0, 1], det)],
           [Fraction(-M[1, 0], det), Fraction(M[0, 0], det)]]
    w = M.apply(c)
    # |y_i - w_i| <= r |row i of M|
    R0, R1 = (float(r) * math.hypot(*row) + 1 for row in M.rows)
    total = 0
    for y0 in range(math.floor(w[0] - R0), math.ceil(w[0] + R0) + 1):
        for y1 in range(math.floor(w[1] - R1), math.ceil(w[1] + R1) + 1):
            u = (y0 - w[0], y1 - w[1])
            v = (inv[0][0] * u[0] + inv[0][1] * u[1], inv[1][0] * u[0] + inv[1][1] * u[1])
            total += v[0] ** 2 + v[1] ** 2 <= r * r
    return total


@pytest.mark.parametrize("rows,n,r,c", [(((3, 1), (1, 1)), 4, Fraction(1, 4), (0, 0)),
                                        (((3, 1), (1, 1)), 6, Fraction(3, 10), (Fraction(1, 2), 0)),
                                        (((2, 1), (1, 1)), 5, Fraction(1, 2), (Fraction(1, 3), Fraction(1, 7))),
                                        (((2, 0), (0, 3)), 3, Fraction(1, 2), (0, 0)),
                                        (((1, 2), (3, 1)), 3, Fraction(2, 5), (Fraction(1, 5), 0))])
def test_lattice_count_brute_force(rows, n, r, c):
    A = IntMatrix(rows)
    assert lattice_count_ellipse(A, n, r, c).count == _brute_count(A, n, r, c)


def test_lattice_count_examples():
    A = IntMatrix(((3, 1), (1, 1)))
    rep = lattice_count_ellipse(A, 10, 0.25)
    assert rep.expected == pytest.approx(math.pi / 16 * 1024)
    assert 0.5 <= rep.ratio <= 2
    assert lattice_count_ellipse(A, 0, 0.25).count == 1
    assert lattice_count_ellipse(A, 0, 1.0).count == 5
    with pytest.raises(CapExceeded):
        lattice_count_ellipse(A, 40, 0.3)


def test_lattice_ratio_bounded_once_large():
    A = IntMatrix(((3, 1), (1, 1)))
    ratios = [lattice_count_ellipse(A, n, r).ratio for n in range(6, 13) for r in (0.2, 0.3, 0.45)
              if math.pi * r * r * 2 ** n >= 50]
    assert max(max(ratios), 1 / min(ratios)) <= 2


def _liouville_oracle(alpha, Q):
    with mpmath.workdps(60):
        a = alpha.mp(60)
        return min(float(q * abs(q * a - mpmath.nint(q * a))) for q in range(1, Q + 1))


def test_liouville_against_oracle():
    for alpha in (GOLDEN, SQRT2):
        assert liouville_gap(alpha, 3000).value == pytest.approx(_liouville_oracle(alpha, 3000), rel=1e-12)


def test_liouville_examples():
    g = liouville_gap(GOLDEN, 10**4)
    # the minimum is attained at q = 1: |phi - 2| = 0.381966
    assert (g.q, g.p) == (1, 2)
    assert g.value == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-12)
    # beyond q = 1 the golden ratio stays above 0.4 and tends to 1/sqrt 5
    with mpmath.workdps(40):
        a = GOLDEN.mp(40)
        tail = [float(q * abs(q * a - mpmath.nint(q * a))) for q in range(2, 10**4 + 1)]
    assert min(tail) >= 0.4
    assert liouville_gap(SQRT2, 10**4).value >= 0.3
    assert liouville_gap(SQRT2, 1).value == pytest.approx(math.sqrt(2) - 1, rel=1e-12)


def test_random_contracting_matrices_have_irrational_slopes():
    rng = np.random.default_rng(7)
    seen = 0
    while seen < 200:
        A = IntMatrix(tuple(map(tuple, rng.integers(-9, 10, size=(2, 2)).tolist())))
        if A.det == 0:
            continue
        sd = spectral_data(A)
        if not (sd.moduli[0] < 1 - 1e-9 and sd.moduli[1] > 1 + 1e-9):
            continue
        if any(abs(e.imag) > 1e-12 for e in sd.eigenvalues):
            continue
        seen += 1
        eigen_slope(A, "stable")
        eigen_slope(A, "unstable")
