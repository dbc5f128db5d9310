import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinktarget.errors import DomainError, SingularMatrix
from shrinktarget.matrix_core import (IntMatrix, char_poly, log_singular_values, matrix_power_exact,
                                      parse_matrix, semiaxis_ratio_report, spectral_data)
from shrinktarget.polynomials import cyclotomic, euler_phi, evaluate_matrix

CAT = IntMatrix(((2, 1), (1, 1)))


def test_char_poly_examples():
    assert char_poly(CAT) == (1, -3, 1)
    assert char_poly(IntMatrix.identity(2)) == (1, -2, 1)
    assert char_poly(IntMatrix.diag(2, 3)) == (1, -5, 6)


def test_parse_forms_agree():
    assert parse_matrix("2,1;1,1") == CAT
    assert parse_matrix("[[2,1],[1,1]]") == CAT
    assert parse_matrix([[2, 1], [1, 1]]) == CAT
    with pytest.raises(DomainError):
        parse_matrix("1,2;3")


def test_spectral_cat():
    sd = spectral_data(CAT)
    # moduli are the roots (3 -+ sqrt 5)/2 of x^2 - 3x + 1
    lo, hi = (3 - math.sqrt(5)) / 2, (3 + math.sqrt(5)) / 2
    assert sd.moduli == pytest.approx((lo, hi), rel=1e-12)
    assert sd.exponents == pytest.approx((-math.log(hi), math.log(hi)), rel=1e-12)
    assert abs(sd.total) < 1e-15
    assert sd.is_hyperbolic and not sd.is_expanding


def test_spectral_root_of_unity_and_diagonal():
    sd = spectral_data(IntMatrix.diag(1, 2))
    assert sd.moduli == pytest.approx((1.0, 2.0))
    assert not sd.is_hyperbolic and sd.has_root_of_unity
    sd = spectral_data(IntMatrix.diag(2, 3))
    assert sd.exponents == pytest.approx((math.log(2), math.log(3)), rel=1e-14)
    assert sd.is_expanding


def test_singular_rejected():
    with pytest.raises(SingularMatrix):
        spectral_data(IntMatrix(((1, 2), (2, 4))))
    with pytest.raises(SingularMatrix):
        log_singular_values(IntMatrix(((1, 2), (2, 4))), 3)


def test_matrix_power_examples():
    assert matrix_power_exact(CAT, 2) == IntMatrix(((5, 3), (3, 2)))
    assert matrix_power_exact(IntMatrix(((3, -1), (4, 7))), 0) == IntMatrix.identity(2)
    assert matrix_power_exact(IntMatrix.diag(2, 3), 3) == IntMatrix.diag(8, 27)


def test_log_singular_diagonal():
    prof = log_singular_values(IntMatrix.diag(2, 3), 5)
    assert prof.log_sigma == pytest.approx((5 * math.log(2), 5 * math.log(3)), rel=1e-12)


def _mp_log_singular(A: IntMatrix, n: int):
    M = matrix_power_exact(A, n)
    with mpmath.workdps(80):
        s = mpmath.svd_r(mpmath.matrix(M.tolist()), compute_uv=False)
        return sorted(float(mpmath.log(v)) for v in s)


def test_log_singular_triangular_against_high_precision_svd():
    A = IntMatrix(((1, 1), (0, 2)))
    prof = log_singular_values(A, 20)
    oracle = _mp_log_singular(A, 20)
    assert prof.log_sigma == pytest.approx(oracle, rel=1e-10)
    assert abs(prof.log_sigma[1] / 20 - math.log(2)) <= 0.05
    assert sum(prof.log_sigma) == pytest.approx(20 * math.log(2), rel=1e-12)


@pytest.mark.parametrize("rows", [((3, 1), (1, 1)), ((1, 2, 0), (0, 1, 3), (1, 0, 2)),
                                  ((0, 1), (-2, 3)), ((2, 1, 1), (1, 2, 0), (0, 1, 4))])
def test_log_singular_matches_mpmath(rows):
    A = IntMatrix(rows)
    for n in (1, 7, 15):
        assert log_singular_values(A, n).log_sigma == pytest.approx(_mp_log_singular(A, n),
                                                                    rel=1e-9, abs=1e-9)


def test_symmetric_singular_equals_eigen_exponents():
    l = spectral_data(CAT).exponents
    for prof_n in (1, 10, 50, 100):
        prof = log_singular_values(CAT, prof_n)
        assert prof.log_sigma == pytest.approx([prof_n * x for x in l], abs=1e-8)


def test_semiaxis_report_examples():
    assert max(semiaxis_ratio_report(CAT, 50)) <= 1e-8
    rep = semiaxis_ratio_report(IntMatrix(((1, 1), (0, 2))), 50)
    assert rep[-1] <= 0.05
    assert rep[9] > rep[19] > rep[49]
    assert semiaxis_ratio_report(IntMatrix.diag(2, 2), 10) == pytest.approx([0.0] * 10, abs=1e-12)


small = st.integers(-5, 5)


@st.composite
def int_matrices(draw, dmin=2, dmax=4):
    d = draw(st.integers(dmin, dmax))
    return IntMatrix(tuple(tuple(draw(small) for _ in range(d)) for _ in range(d)))


@settings(max_examples=100, deadline=None)
@given(int_matrices(1, 5))
def test_cayley_hamilton(A):
    zero = evaluate_matrix(char_poly(A), A.rows)
    assert all(v == 0 for row in zero for v in row)


@settings(max_examples=60, deadline=None)
@given(int_matrices(2, 4), st.integers(1, 40))
def test_volume_conservation(A, n):
    if A.det == 0:
        return
    prof = log_singular_values(A, n)
    assert sum(prof.log_sigma) == pytest.approx(n * math.log(abs(A.det)), rel=1e-8, abs=1e-8)
    assert list(prof.log_sigma) == sorted(prof.log_sigma)


@settings(max_examples=60, deadline=None)
@given(int_matrices(2, 4))
def test_spectral_invariants(A):
    if A.det == 0:
        return
    sd = spectral_data(A)
    assert list(sd.moduli) == sorted(sd.moduli)
    assert math.exp(sd.total) == pytest.approx(abs(A.det), rel=1e-10)
    assert math.exp(sum(sd.exponents)) == pytest.approx(abs(A.det), rel=1e-10)
    if sd.is_expanding:
        assert sd.is_hyperbolic and all(x > 0 for x in sd.exponents)


def companion(coeffs):
    # monic, descending coefficients
    d = len(coeffs) - 1
    rows = [[0] * d for _ in range(d)]
    for i in range(1, d):
        rows[i][i - 1] = 1
    for i in range(d):
        rows[i][d - 1] = -coeffs[d - i]
    return IntMatrix(tuple(map(tuple, rows)))


CYCLO_ORDERS = [m for m in range(1, 31) if euler_phi(m) <= 8]


@pytest.mark.parametrize("m", CYCLO_ORDERS)
def test_cyclotomic_companion_flagged(m):
    C = companion(cyclotomic(m))
    assert char_poly(C) == tuple(cyclotomic(m))
    sd = spectral_data(C)
    assert sd.has_root_of_unity and not sd.is_hyperbolic


@pytest.mark.parametrize("coeffs", [(1, -3, 1), (1, 0, -2), (1, -1, -1, -1), (1, 0, 0, 0, -2)])
def test_non_cyclotomic_companion_clean(coeffs):
    assert not spectral_data(companion(coeffs)).has_root_of_unity


def test_cyclotomic_times_expanding_factor():
    # x^2 + 1 times x - 2: one root of unity hidden in a reducible polynomial
    C = companion((1, -2, 1, -2))
    assert spectral_data(C).has_root_of_unity
