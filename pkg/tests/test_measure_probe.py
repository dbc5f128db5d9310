import math

import mpmath
import numpy as np
import pytest

from shrinktarget.errors import DomainError, RadiusTooLarge
from shrinktarget.matrix_core import IntMatrix
from shrinktarget.measure_probe import (MuSampler, ball_grid, energy_bound_check, holder_slope,
                                        mu_n_ball, predicted_exponent, riesz_energy,
                                        weak_convergence_ratio)
from shrinktarget.preimage_geometry import Ball, TorusPoint, membership

CAT = IntMatrix(((2, 1), (1, 1)))
TWO = IntMatrix.diag(2, 2)
LOG2 = math.log(2)


def test_sampler_rejects_bad_inputs():
    with pytest.raises(DomainError):
        MuSampler(CAT, 3, 0.5, budget=100)
    with pytest.raises(DomainError):
        MuSampler(CAT, 3, 0.5, batches=3)
    with pytest.raises(RadiusTooLarge):
        MuSampler(CAT, 0, 0.5)


def test_draws_are_members():
    sm = MuSampler(IntMatrix(((3, 1), (1, 1))), 5, 0.4, z="1/3,1/2", seed=3)
    x, e = sm.draw(np.random.default_rng(0), 200)
    assert all(membership(sm.A, 5, "1/3,1/2", 0.4, p, radius=sm.r * (1 + 1e-9)) for p in x)
    assert np.all(np.linalg.norm(e, axis=1) <= sm.r * (1 + 1e-12))


def test_whole_torus_and_far_ball():
    sm = MuSampler(TWO, 1, LOG2, seed=1)
    assert mu_n_ball(sm, None).estimate == 1.0
    # the four balls sit at (i/2, j/2) with radius 1/4; (1/4, 1/4) is at distance sqrt(2)/4
    far = mu_n_ball(sm, Ball(TorusPoint.parse("1/4,1/4"), 0.05))
    assert far.estimate == 0.0


def test_disjoint_ball_mass_quarter():
    sm = MuSampler(TWO, 1, LOG2, seed=2, budget=200_000)
    rep = mu_n_ball(sm, Ball(TorusPoint.zero(2), 0.25))
    assert rep.estimate == pytest.approx(0.25, abs=4 * rep.stderr + 1e-3)
    assert len(rep.batch_means) >= 10


def test_mass_monotone_in_radius():
    fit = holder_slope(CAT, 0.5, 8, seed=4, budget=50_000, r_grid=np.geomspace(1e-3, 0.3, 10))
    assert all(a <= b for a, b in zip(fit.masses, fit.masses[1:]))


def test_seed_determinism_and_thread_independence():
    B = Ball(TorusPoint.parse("1/5,2/5"), 0.2)
    a = mu_n_ball(MuSampler(CAT, 10, 0.5, seed=9, threads=1), B)
    b = mu_n_ball(MuSampler(CAT, 10, 0.5, seed=9, threads=4), B)
    c = mu_n_ball(MuSampler(CAT, 10, 0.5, seed=10, threads=1), B)
    assert a.estimate == b.estimate and a.batch_means == b.batch_means
    assert c.estimate != a.estimate


def test_expanding_holder_slope_inside_pieces():
    # pieces are discs of radius 2^-16 around the 2^16 centers
    fit = holder_slope(TWO, LOG2, 8, r_grid=np.geomspace(1e-7, 1e-5, 6), seed=0,
                       budget=100_000, method="ball")
    assert fit.slope == pytest.approx(2.0, abs=0.02)
    # mu_8(B(c, r)) = (r / 2^-16)^2 / 2^16
    assert fit.level == pytest.approx(math.log(2.0 ** 32 / 2 ** 16), abs=0.05)
    assert fit.predicted == 2.0


def test_cat_holder_above_strip_separation():
    fit = holder_slope(CAT, 0.5, 12, r_grid=np.geomspace(0.1, 0.4, 8), seed=0, budget=10**6)
    assert fit.slope == pytest.approx(2.0, abs=0.15)
    assert fit.predicted == 2.0


def test_cat_holder_window_example():
    # r in [1e-3, 1e-2] at n = 12, target 2 l2 / (tau + l2)
    l2 = math.log((3 + math.sqrt(5)) / 2)
    fit = holder_slope(CAT, 0.5, 12, r_grid=np.geomspace(1e-3, 1e-2, 8), seed=0,
                       budget=10**6, method="ball")
    assert fit.slope == pytest.approx(2 * l2 / (0.5 + l2), abs=0.15)


def test_predicted_exponent_regimes():
    assert predicted_exponent(CAT, 0.5, 12, 1e-9, 1e-8)[0] == 2.0
    val, label = predicted_exponent(CAT, 0.5, 12, 1e-4, 1e-2)
    assert label.startswith("spanning") and val == pytest.approx(1.3162, abs=1e-4)


def test_weak_convergence_expanding():
    rep = weak_convergence_ratio(TWO, LOG2, 10, balls=ball_grid(2, 20, 0.2), seed=5)
    assert 0.9 <= rep.min <= rep.max <= 1.1


def test_weak_convergence_rejects_n0():
    with pytest.raises(DomainError):
        weak_convergence_ratio(TWO, LOG2, 0)


def test_riesz_zero_is_one():
    assert riesz_energy(MuSampler(CAT, 6, 0.5), 0.0).estimate == 1.0


def _disk_energy(R, s):
    # E |X - Y|^-s for X, Y uniform in a disc of radius R (chord-length density)
    with mpmath.workdps(30):
        R = mpmath.mpf(R)

        def f(t):
            u = t / (2 * R)
            dens = (2 * t / R ** 2) * (2 / mpmath.pi) * (mpmath.acos(u) - u * mpmath.sqrt(1 - u * u))
            return t ** (-s) * dens
        return float(mpmath.quad(f, [0, R, 2 * R]))


@pytest.mark.parametrize("s", [0.5, 1.0, 1.6])
def test_mis_energy_matches_disc_oracle(s):
    sm = MuSampler(CAT, 0, 0.0, radius=0.2, seed=11, budget=200_000)
    rep = riesz_energy(sm, s)
    oracle = _disk_energy(0.2, s)
    assert rep.estimate == pytest.approx(oracle, abs=4 * rep.stderr + 0.01 * oracle)


def test_riesz_rejects_large_s():
    with pytest.raises(DomainError):
        riesz_energy(MuSampler(CAT, 4, 0.5), 3.5)


def test_energy_bound_holds():
    sm = MuSampler(CAT, 8, 0.5, seed=3, budget=50_000)
    out = energy_bound_check(sm, 1.0)
    assert out["holds"]
    assert out["s_hat"] > 1.0


def test_mixed_method_default_window():
    l2 = math.log((3 + math.sqrt(5)) / 2)
    fit = holder_slope(CAT, 0.5, 12, seed=0, budget=10**6, method="mixed")
    assert fit.slope == pytest.approx(2 * l2 / (0.5 + l2), abs=0.15)
    assert fit.stderr < 0.02


def test_unknown_mass_method():
    with pytest.raises(DomainError):
        holder_slope(CAT, 0.5, 6, method="exact")
