import itertools
import math
from fractions import Fraction

import pytest

from shrinktarget.boxcount import (HEURISTIC, cover_exponent, covering_exponent_fit, covering_number,
                                   limsup_boxdim_trend, refined_cover_exponent)
from shrinktarget.errors import DomainError, NoValidIndex
from shrinktarget.matrix_core import IntMatrix, spectral_data

CAT = IntMatrix(((2, 1), (1, 1)))
TWO = IntMatrix.diag(2, 2)
LOG2 = math.log(2)
F = Fraction


def _disc_cells(centers, r, m):
    """Cells of the 1/m grid meeting some open disc B(c, r); exact rationals."""
    out = set()
    span = math.ceil(r * m) + 1
    for cx, cy in centers:
        ax, ay = math.floor(cx * m), math.floor(cy * m)
        for a, b in itertools.product(range(ax - span, ax + span + 1), range(ay - span, ay + span + 1)):
            dx = max(F(a, m) - cx, 0, cx - F(a + 1, m))
            dy = max(F(b, m) - cy, 0, cy - F(b + 1, m))
            if dx * dx + dy * dy < r * r:
                out.add((a % m, b % m))
    return len(out)


def test_scalar_two_n2_exact():
    rep = covering_number(TWO, 2, None, LOG2, 1 / 64)
    centers = [(F(i, 4), F(j, 4)) for i in range(4) for j in range(4)]
    # r = 1/4 and sigma = 4 give discs of radius 1/16
    assert rep.N_boxes == _disc_cells(centers, F(1, 16), 64) == 960


def test_single_disc_n0():
    rep = covering_number(TWO, 0, None, 1.0, 1 / 8, radius=0.25)
    assert rep.N_boxes == _disc_cells([(F(0), F(0))], F(1, 4), 8) == 16
    assert 4 <= rep.N_boxes <= 16


def test_offcenter_discs_exact():
    A = IntMatrix.diag(3, 3)
    centers = [((F(1, 5) + i) / 3, (F(1, 7) + j) / 3) for i in range(3) for j in range(3)]
    exact = _disc_cells(centers, F(1, 10), 90)
    counts = [covering_number(A, 1, "1/5,1/7", 0.0, 1 / 90, radius=0.3, subsamples=s).N_boxes
              for s in (4, 8, 16)]
    # the point net only marks cells that meet the set, so it can miss slivers but never overcounts
    assert counts == sorted(counts)
    assert counts[-1] == exact
    assert counts[0] >= 0.97 * exact


def test_coarse_delta_one_box():
    assert covering_number(CAT, 3, None, 0.5, 1.0).N_boxes == 1
    assert covering_number(CAT, 3, None, 0.5, 2.0).N_boxes == 1
    with pytest.raises(DomainError):
        covering_number(CAT, 3, None, 0.5, 0.0)


CASES = [(CAT, 3, 0.5), (CAT, 5, 0.3), (IntMatrix(((3, 1), (1, 1))), 4, 0.4), (TWO, 3, 0.5),
         (IntMatrix(((1, 1, 0), (0, 1, 1), (1, 0, 2))), 2, 0.6)]


@pytest.mark.parametrize("A,n,tau", CASES)
def test_split_bound_and_volume(A, n, tau):
    d = A.dim
    grids = (16, 32, 64) if d == 2 else (8, 16, 32)
    counts = [covering_number(A, n, None, tau, 1 / g).N_boxes for g in grids]
    for (g, c) in zip(grids, counts):
        assert 1 <= c <= g ** d
        assert c * g ** -d >= math.exp(-n * d * tau) * math.pi ** (d / 2) / math.gamma(d / 2 + 1) * 0.99
    for a, b in zip(counts, counts[1:]):
        assert b <= 2 ** d * a


def test_fit_scalar_two():
    fit = covering_exponent_fit(TWO, None, LOG2, 1, range(3, 8))
    assert fit.slope == pytest.approx(2 * LOG2, rel=0.05)
    assert fit.predicted == pytest.approx(2 * LOG2)
    assert fit.refined == pytest.approx(2 * LOG2)


def test_fit_diag_two_four_quotients():
    A = IntMatrix.diag(2, 4)
    # stages chosen so every grid stays at or below 2^12 cells per side
    q = [covering_exponent_fit(A, None, LOG2, 1, range(3, 7)).quotient,
         covering_exponent_fit(A, None, LOG2, 2, range(1, 5)).quotient]
    assert min(q) == pytest.approx(4 / 3, rel=0.10)


def test_fit_cat_upper_direction():
    fit = covering_exponent_fit(CAT, None, 0.5, 2, range(4, 8))
    l = spectral_data(CAT).exponents
    assert fit.predicted == pytest.approx(l[1] - l[0])
    assert fit.slope <= fit.predicted * 1.10
    assert fit.refined is None


def test_fit_validation():
    with pytest.raises(NoValidIndex):
        covering_exponent_fit(CAT, None, 0.5, 1, [3, 4])
    with pytest.raises(DomainError):
        covering_exponent_fit(CAT, None, 0.5, 3, [3, 4])
    with pytest.raises(DomainError):
        covering_exponent_fit(CAT, None, 0.5, 2, [3, 4], rounding="nearest")


def test_exponent_formulas():
    l = (LOG2, math.log(4))
    assert cover_exponent(l, 1) == pytest.approx(3 * LOG2)
    assert cover_exponent(l, 2) == pytest.approx(4 * LOG2)
    assert refined_cover_exponent(l, 1, LOG2) == pytest.approx(3 * LOG2)


def test_fit_csv():
    fit = covering_exponent_fit(TWO, None, LOG2, 1, [2, 3])
    rows = fit.to_csv().splitlines()
    assert rows[0] == "n,delta,N_boxes,predicted_exponent" and len(rows) == 3


def test_trend_cat_band():
    rep = limsup_boxdim_trend(CAT, 0.5, 4, 8, 2.0 ** -10)
    assert rep.label == HEURISTIC
    assert rep.counts == sorted(rep.counts)
    assert 1.2 <= rep.quotients[-1] <= 1.7


def test_trend_large_tau_collapses():
    rep = limsup_boxdim_trend(CAT, 5.0, 4, 8, 2.0 ** -10)
    assert rep.counts[-1] == 1
    assert rep.quotients[-1] < 0.3


def test_trend_coarse_saturates():
    rep = limsup_boxdim_trend(CAT, 0.5, 4, 8, 1 / 8)
    assert rep.quotients[-1] == pytest.approx(2.0, abs=1e-12)
    assert rep.to_csv().splitlines()[0] == "n_top,delta,N_boxes,quotient"
