"""Quadratic surds, continued fractions, three-distance gaps, ellipse lattice counts."""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import CapExceeded, DomainError, NotIrrational, RationalEigenvalue, SingularMatrix
from .matrix_core import IntMatrix, matrix_power_exact

GAP_TOL = 1e-12
FRAC_BITS = 200
LATTICE_CAP = 10**8


def _squarefree_split(D: int) -> tuple[int, int]:
    """D = f^2 * core with core squarefree."""
    f, core, k = 1, D, 2
    while k * k <= core:
        while core % (k * k) == 0:
            core //= k * k
            f *= k
        k += 1
    return f, core


def _floor_surd(p: int, q: int, D: int, r: int) -> int:
    """floor((p + q sqrt(D)) / r) for r > 0, D not a perfect square."""
    t = math.isqrt(q * q * D)
    s = t if q >= 0 else -t - 1
    return (p + s) // r


@dataclass(frozen=True)
class QuadraticIrrational:
    """The real number (p + q sqrt(D)) / r with D squarefree and r > 0."""

    p: int
    q: int
    D: int
    r: int = 1

    def __post_init__(self):
        p, q, D, r = (int(v) for v in (self.p, self.q, self.D, self.r))
        if r == 0:
            raise NotIrrational("denominator must be nonzero")
        if D <= 0:
            raise NotIrrational("D must be positive")
        if math.isqrt(D) ** 2 == D:
            raise NotIrrational(f"D = {D} is a perfect square")
        if q == 0:
            raise NotIrrational("q = 0 gives a rational number")
        f, D = _squarefree_split(D)
        q *= f
        if r < 0:
            p, q, r = -p, -q, -r
        g = math.gcd(math.gcd(p, q), r)
        for name, v in zip("pqDr", (p // g, q // g, D, r // g)):
            object.__setattr__(self, name, v)

    def floor(self) -> int:
        return _floor_surd(self.p, self.q, self.D, self.r)

    def scaled_frac(self, k: int, bits: int = FRAC_BITS) -> int:
        """floor(2^bits * frac(k * self)), exactly."""
        s = 1 << bits
        return _floor_surd(s * k * self.p, s * k * self.q, self.D, self.r) - s * _floor_surd(
            k * self.p, k * self.q, self.D, self.r)

    def nearest_int_times(self, k: int) -> int:
        """round(k * self), ties cannot occur."""
        return _floor_surd(2 * k * self.p + self.r, 2 * k * self.q, self.D, 2 * self.r)

    def mp(self, dps: int = 50):
        with mpmath.workdps(dps):
            return (mpmath.mpf(self.p) + self.q * mpmath.sqrt(self.D)) / self.r

    def __float__(self):
        return float(self.mp(30))

    def __str__(self):
        return f"({self.p}{self.q:+d}*sqrt({self.D}))/{self.r}"


def _has_rational_root(coeffs: Sequence[int]) -> bool:
    """Rational-root test for a monic integer polynomial: only integer divisors of c0 can be roots."""
    c0 = coeffs[-1]
    if c0 == 0:
        return True
    cands = set()
    k = 1
    while k * k <= abs(c0):
        if c0 % k == 0:
            cands.update({k, -k, c0 // k, -(c0 // k)})
        k += 1
    for x in cands:
        acc = 0
        for c in coeffs:
            acc = acc * x + c
        if acc == 0:
            return True
    return False


def eigen_slope(A: IntMatrix, which: str = "unstable") -> QuadraticIrrational:
    """Slope y/x of the eigendirection of the smaller (stable) or larger (unstable) eigenvalue."""
    if A.dim != 2:
        raise DomainError("eigen_slope needs a 2x2 matrix")
    if which not in ("stable", "unstable"):
        raise DomainError("which must be 'stable' or 'unstable'")
    (a, b), (c, d) = A.rows
    t, det = a + d, A.det
    if _has_rational_root((1, -t, det)):
        raise RationalEigenvalue(f"characteristic polynomial x^2 - {t}x + {det} has a rational root")
    disc = t * t - 4 * det
    if disc < 0 or t == 0:
        raise DomainError("eigenvalues have equal modulus; no stable/unstable split")
    # lambda = (t + sgn sqrt(disc)) / 2 ; |lambda| is larger for sgn = sign(t)
    sgn = (1 if t > 0 else -1) * (1 if which == "unstable" else -1)
    # (A - lambda) v = 0 with v = (b, lambda - a); b != 0 since eigenvalues are irrational
    return QuadraticIrrational(t - 2 * a, sgn, disc, 2 * b)


# ---------------------------------------------------------------- continued fractions


@dataclass
class ContinuedFraction:
    quotients: list[int]
    preperiod: list[int]
    period: list[int]

    @property
    def bound(self) -> int:
        return max(self.period)

    def as_dict(self) -> dict:
        return {"quotients": self.quotients, "preperiod": self.preperiod,
                "period": self.period, "bound": self.bound}


def continued_fraction(x: QuadraticIrrational, terms: int = 20,
                       max_steps: int = 10_000) -> ContinuedFraction:
    """Partial quotients of x by the (P + sqrt N) / Q recurrence, with the period found."""
    if terms < 1:
        raise DomainError("terms must be >= 1")
    P, N, Q = x.p, x.q * x.q * x.D, x.r
    if x.q < 0:
        P, Q = -P, -Q
    if (N - P * P) % Q:
        P, N, Q = P * abs(Q), N * Q * Q, Q * abs(Q)
    s = math.isqrt(N)
    seen: dict[tuple[int, int], int] = {}
    quot: list[int] = []
    start = None
    while len(quot) < max_steps:
        state = (P, Q)
        if start is None and state in seen:
            start = seen[state]
            if len(quot) >= terms:
                break
        if start is None:
            seen[state] = len(quot)
        elif len(quot) >= terms:
            break
        a = (P + s) // Q if Q > 0 else (P + s + 1) // Q
        quot.append(a)
        P = a * Q - P
        Q = (N - P * P) // Q
    if start is None:
        raise DomainError("no period detected within the step budget")
    plen = len(seen) - start
    period = quot[start:start + plen] if len(quot) >= start + plen else None
    if period is None:
        raise DomainError("period not fully computed")
    return ContinuedFraction(quot[:terms], quot[:start], period)


# ---------------------------------------------------------------- three distance


def _scaled_fracs_real(theta, N: int, bits: int = FRAC_BITS) -> list[int]:
    with mpmath.workprec(bits + 60 + N.bit_length()):
        th = mpmath.mpf(theta)
        s = mpmath.mpf(2) ** bits
        out = []
        for k in range(1, N + 1):
            v = k * th
            out.append(int(mpmath.floor((v - mpmath.floor(v)) * s)))
    return out


def _scaled_fracs(theta, N: int, bits: int = FRAC_BITS) -> list[int]:
    if isinstance(theta, QuadraticIrrational):
        return [theta.scaled_frac(k, bits) for k in range(1, N + 1)]
    if isinstance(theta, (int, Fraction)):
        raise NotIrrational("theta is rational")
    return _scaled_fracs_real(theta, N, bits)


def _cluster(lengths_counter: Counter, scale: int, tol: float = GAP_TOL):
    keys = sorted(lengths_counter)
    thr = tol * scale
    groups: list[list[int]] = []
    for k in keys:
        if groups and k - groups[-1][-1] <= thr:
            groups[-1].append(k)
        else:
            groups.append([k])
    lengths, mult = [], []
    for g in groups:
        c = sum(lengths_counter[k] for k in g)
        mean = sum(k * lengths_counter[k] for k in g) / c
        lengths.append(mean / scale)
        mult.append(c)
    return lengths, mult


@dataclass
class ThreeDistanceReport:
    theta: str
    N: int
    lengths: list[float]  # ascending
    multiplicities: list[int]

    @property
    def d_max(self) -> float:
        return self.lengths[-1]

    @property
    def d_min(self) -> float:
        return self.lengths[0]

    @property
    def ratio(self) -> float:
        return self.d_max / self.d_min

    @property
    def total(self) -> float:
        return sum(l * m for l, m in zip(self.lengths, self.multiplicities))

    def as_dict(self) -> dict:
        return {"theta": self.theta, "N": self.N, "lengths": self.lengths,
                "multiplicities": self.multiplicities, "d_max": self.d_max,
                "d_min": self.d_min, "ratio": self.ratio}


def three_distance(theta, N: int, bits: int = FRAC_BITS) -> ThreeDistanceReport:
    """Gap lengths of [0, 1] cut at 0, 1 and frac(k theta), 1 <= k <= N."""
    if N < 1:
        raise DomainError("N must be >= 1")
    scale = 1 << bits
    pts = sorted(_scaled_fracs(theta, N, bits))
    edges = [0] + pts + [scale]
    gaps = Counter(b - a for a, b in zip(edges, edges[1:]))
    lengths, mult = _cluster(gaps, scale)
    return ThreeDistanceReport(str(theta), N, lengths, mult)


def three_distance_scan(theta, N_max: int, bits: int = FRAC_BITS) -> list[ThreeDistanceReport]:
    """Reports for every N = 1..N_max, built by inserting one point at a time."""
    if N_max < 1:
        raise DomainError("N_max must be >= 1")
    scale = 1 << bits
    fr = _scaled_fracs(theta, N_max, bits)
    pts = [0, scale]
    gaps = Counter({scale: 1})
    out = []
    for N, x in enumerate(fr, start=1):
        i = bisect.bisect_left(pts, x)
        lo, hi = pts[i - 1], pts[i]
        gaps[hi - lo] -= 1
        if not gaps[hi - lo]:
            del gaps[hi - lo]
        gaps[x - lo] += 1
        gaps[hi - x] += 1
        pts.insert(i, x)
        lengths, mult = _cluster(gaps, scale)
        out.append(ThreeDistanceReport(str(theta), N, lengths, mult))
    return out


def three_distance_csv(reports: Sequence[ThreeDistanceReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "gap1", "gap2", "gap3", "ratio"])
    for rep in reports:
        g = [repr(v) for v in rep.lengths] + [""] * (3 - len(rep.lengths))
        w.writerow([rep.N, *g[:3], repr(rep.ratio)])
    return buf.getvalue()


# ---------------------------------------------------------------- lattice counts


def _exact_frac(v) -> Fraction:
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


@dataclass
class LatticeCount:
    count: int
    n: int
    radius: float
    expected: float  # pi r^2 |det A|^n

    @property
    def ratio(self) -> float:
        return self.count / self.expected

    def as_dict(self) -> dict:
        return {"count": self.count, "n": self.n, "radius": self.radius,
                "expected": self.expected, "ratio": self.ratio}


def lattice_count_ellipse(A: IntMatrix, n: int, radius, center=(0, 0),
                          cap: int = LATTICE_CAP) -> LatticeCount:
    """Exact number of y in Z^2 with |A^-n (y - A^n c)| <= r.

    Float radii are read as their shortest decimal form (0.2 means 1/5).
    """
    if A.dim != 2:
        raise DomainError("lattice counts are implemented for 2x2 matrices")
    if A.det == 0:
        raise SingularMatrix("matrix is singular (det A = 0)")
    r = _exact_frac(radius)
    if r <= 0:
        raise DomainError("radius must be positive")
    M = matrix_power_exact(A, n).rows
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    expected = math.pi * float(r) ** 2 * abs(det)
    if expected > cap:
        raise CapExceeded(f"expected count {expected:.3g} exceeds cap {cap}", required=int(expected))
    c = [_exact_frac(v) for v in center]
    qc = math.lcm(*(v.denominator for v in c))
    # w = M c = W / qc
    W = [sum(M[i][k] * int(c[k] * qc) for k in range(2)) for i in range(2)]
    P = [[M[1][1], -M[0][1]], [-M[1][0], M[0][0]]]  # adj(M), so A^-n = P / det
    bound = r.numerator ** 2 * det * det * qc * qc

    def inside(y0: int, y1: int) -> bool:
        u0, u1 = qc * y0 - W[0], qc * y1 - W[1]
        v0 = P[0][0] * u0 + P[0][1] * u1
        v1 = P[1][0] * u0 + P[1][1] * u1
        return r.denominator ** 2 * (v0 * v0 + v1 * v1) <= bound

    # rows along the coordinate with the shorter extent
    R = float(r) * abs(det)
    ext = [R * math.hypot(P[0][1], P[1][1]) / abs(det), R * math.hypot(P[0][0], P[1][0]) / abs(det)]
    row_axis = 0 if ext[0] <= ext[1] else 1
    col_axis = 1 - row_axis
    if 2 * ext[row_axis] + 3 > cap:
        raise CapExceeded("bounding box too tall", required=int(2 * ext[row_axis]))
    w = [W[0] / qc, W[1] / qc]
    pr = np.array([P[0][row_axis], P[1][row_axis]], dtype=float)
    pc = np.array([P[0][col_axis], P[1][col_axis]], dtype=float)
    pc2 = float(pc @ pc)
    rows = np.arange(math.floor(w[row_axis] - ext[row_axis]) - 1,
                     math.ceil(w[row_axis] + ext[row_axis]) + 2, dtype=np.int64)
    dy = rows - w[row_axis]
    disc = pc2 * R * R - (dy * det) ** 2
    ok = disc >= -1e-6 * pc2 * R * R
    rows, dy, disc = rows[ok], dy[ok], np.maximum(disc[ok], 0.0)
    mid = w[col_axis] - dy * float(pr @ pc) / pc2
    half = np.sqrt(disc) / pc2
    lo, hi = mid - half, mid + half
    # float error in the half width is ~1e-8 R/|pc| near tangent rows
    tol = 1e-6 + 1e-7 * R / math.sqrt(pc2)
    inner_lo = np.ceil(lo + tol).astype(np.int64)
    inner_hi = np.floor(hi - tol).astype(np.int64)
    total = int(np.maximum(inner_hi - inner_lo + 1, 0).sum())
    # integers within tol of an endpoint get the exact test
    edge_lo = np.ceil(lo - tol).astype(np.int64)
    edge_hi = np.floor(hi + tol).astype(np.int64)
    for y_row, a0, a1, b0, b1 in zip(rows.tolist(), edge_lo.tolist(), inner_lo.tolist(),
                                     inner_hi.tolist(), edge_hi.tolist()):
        if a1 > b0:
            cand = range(a0, b1 + 1)
        else:
            cand = list(range(a0, a1)) + list(range(b0 + 1, b1 + 1))
        for y_col in cand:
            y = (y_row, y_col) if row_axis == 0 else (y_col, y_row)
            total += inside(*y)
    return LatticeCount(total, n, float(r), expected)


# ---------------------------------------------------------------- Liouville


@dataclass
class LiouvilleGap:
    value: float
    p: int
    q: int
    Q: int

    def as_dict(self) -> dict:
        return {"value": self.value, "p": self.p, "q": self.q, "Q": self.Q}


def liouville_gap(alpha: QuadraticIrrational, Q: int) -> LiouvilleGap:
    """min over 1 <= q <= Q of q^2 |alpha - p/q| with p the nearest integer to q alpha."""
    if Q < 1:
        raise DomainError("Q must be >= 1")
    best = None
    with mpmath.workdps(40):
        a = alpha.mp(40)
        for q in range(1, Q + 1):
            p = alpha.nearest_int_times(q)
            v = q * abs(q * a - p)
            if best is None or v < best[0]:
                best = (v, p, q)
    return LiouvilleGap(float(best[0]), best[1], best[2], Q)
