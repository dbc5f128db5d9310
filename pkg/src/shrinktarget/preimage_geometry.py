"""Exact preimages of balls under x -> A^n x mod 1, their ellipsoid shape, and rasters."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import CapExceeded, DomainError, RadiusTooLarge, SingularMatrix, TooFewCenters, Unsupported
from .matrix_core import IntMatrix, log_singular_values, matrix_power_exact, spectral_data
from .snf import smith_normal_form

ENUM_CAP = 10**6
DENSE_GRID_CAP = {2: 4096, 3: 256}
SPARSE_GRID_CAP = 2**16
SET_POINT_CAP = 2 * 10**8
SPARSE_CANDIDATE_CAP = 4 * 10**7
_CHUNK = 1 << 21
_INT64_SAFE = 1 << 31


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise DomainError(f"non-finite coordinate {v}")
        return Fraction(float(v))
    return Fraction(int(v)) if isinstance(v, (int, np.integer)) else Fraction(v)


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple[Fraction, ...]

    def __post_init__(self):
        c = tuple(_frac(v) % 1 for v in self.coords)
        if not c:
            raise DomainError("a torus point needs at least one coordinate")
        object.__setattr__(self, "coords", c)

    @classmethod
    def parse(cls, text) -> "TorusPoint":
        """Accept "1/2,0", a JSON list, or any sequence of numbers/strings."""
        if isinstance(text, TorusPoint):
            return text
        if isinstance(text, str):
            s = text.strip()
            if s.startswith("["):
                return cls(tuple(json.loads(s)))
            return cls(tuple(p for p in s.split(",")))
        return cls(tuple(text))

    @classmethod
    def zero(cls, d: int) -> "TorusPoint":
        return cls((0,) * d)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords])

    def to_strings(self) -> list[str]:
        return [f"{c.numerator}/{c.denominator}" for c in self.coords]

    def common_denominator(self) -> tuple[int, list[int]]:
        q = reduce(math.lcm, (c.denominator for c in self.coords), 1)
        return q, [int(c * q) for c in self.coords]

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.coords) + ")"


@dataclass(frozen=True)
class Ball:
    center: TorusPoint
    radius: float

    def __post_init__(self):
        if not (0 < self.radius <= 0.5):
            raise RadiusTooLarge(f"radius must lie in (0, 1/2], got {self.radius}")


@dataclass(frozen=True)
class EllipsoidShape:
    n: int
    radius: float
    log_semi_axes: tuple[float, ...]
    # columns are unit axis directions, in the order of log_semi_axes
    axis_directions: np.ndarray = field(repr=False, compare=False)

    @property
    def semi_axes(self) -> np.ndarray:
        return np.exp(np.array(self.log_semi_axes))

    @property
    def dim(self) -> int:
        return len(self.log_semi_axes)

    def log_volume(self) -> float:
        d = self.dim
        return sum(self.log_semi_axes) + d / 2 * math.log(math.pi) - math.lgamma(d / 2 + 1)

    def as_dict(self) -> dict:
        return {"n": self.n, "radius": self.radius,
                "semi_axes": [float(a) for a in self.semi_axes],
                "log_semi_axes": list(self.log_semi_axes),
                "axis_directions": self.axis_directions.T.tolist()}


def ellipsoid_shape(A: IntMatrix, n: int, radius: float) -> EllipsoidShape:
    prof = log_singular_values(A, n, vectors=True)
    log_r = math.log(radius)
    return EllipsoidShape(n, radius, tuple(log_r - s for s in prof.log_sigma),
                          prof.right_vectors)


def _modmatvec(Mmod, X, D):
    """(Mmod @ X^T)^T mod D for integer arrays, without int64 overflow when D < 2^31."""
    d = Mmod.shape[0]
    out = np.zeros_like(X)
    for i in range(d):
        acc = np.zeros(X.shape[0], dtype=X.dtype)
        for k in range(d):
            acc = (acc + Mmod[i, k] * X[:, k]) % D
        out[:, i] = acc
    return out


@dataclass
class PreimageLattice:
    """All solutions of A^n x = z mod 1 as integer numerators over one denominator."""

    power: IntMatrix
    target: TorusPoint
    denominator: int
    numerators: np.ndarray  # shape (count, d); int64 or object

    @property
    def count(self) -> int:
        return self.numerators.shape[0]

    def points(self) -> list[TorusPoint]:
        D = self.denominator
        return [TorusPoint(tuple(Fraction(int(v), D) for v in row)) for row in self.numerators]

    def floats(self) -> np.ndarray:
        return self.numerators.astype(float) / self.denominator

    def verify(self) -> bool:
        """Exact forward check A^n c = z (mod 1) for every center."""
        D = self.denominator
        q, a = self.target.common_denominator()
        if D % q:
            return False
        dt = self.numerators.dtype
        Mmod = np.array([[v % D for v in r] for r in self.power.rows], dtype=dt)
        img = _modmatvec(Mmod, self.numerators, D)
        want = np.array([(ai * (D // q)) % D for ai in a], dtype=dt)
        return bool(np.all(img == want[None, :]))


class CosetSolver:
    """Solutions of A^n x = z (mod 1) indexed by j in prod [0, s_i).

    With L A^n R = diag(s) from the Smith form, x = R diag(s)^-1 (L z + j) mod 1,
    kept as integer numerators over D = q * s_d.
    """

    def __init__(self, A: IntMatrix, n: int, z):
        if A.det == 0:
            raise SingularMatrix("matrix is singular (det A = 0)")
        if n < 0:
            raise DomainError("n must be nonnegative")
        z = TorusPoint.parse(z)
        d = A.dim
        if z.dim != d:
            raise DomainError(f"target has dimension {z.dim}, matrix has {d}")
        self.d, self.target = d, z
        self.power = matrix_power_exact(A, n)
        L, s, R = smith_normal_form(self.power.rows)
        self.invariants = s
        q, a = z.common_denominator()
        La = [sum(L[i][k] * a[k] for k in range(d)) for i in range(d)]
        self.q = q
        self.D = q * s[-1]
        self.dtype = np.int64 if self.D < _INT64_SAFE else object
        self._base = [La[i] % (q * s[i]) for i in range(d)]
        self._scale = [s[-1] // s[i] for i in range(d)]
        self._Rmod = np.array([[v % self.D for v in r] for r in R], dtype=self.dtype)

    @property
    def count(self) -> int:
        return math.prod(self.invariants)

    def numerators(self, J: np.ndarray) -> np.ndarray:
        Y = np.empty(J.shape, dtype=self.dtype)
        for i in range(self.d):
            Y[:, i] = (self._base[i] + self.q * J[:, i].astype(self.dtype)) * self._scale[i]
        return _modmatvec(self._Rmod, Y, self.D)

    def all_indices(self) -> np.ndarray:
        return np.indices(self.invariants, dtype=np.int64).reshape(self.d, -1).T

    def random_indices(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return np.stack([rng.integers(si, size=k) for si in self.invariants], axis=1)

    def floats(self, J: np.ndarray) -> np.ndarray:
        return self.numerators(J).astype(float) / self.D


def preimage_lattice(A: IntMatrix, n: int, z, cap: int = ENUM_CAP) -> PreimageLattice:
    if A.det == 0:
        raise SingularMatrix("matrix is singular (det A = 0)")
    count = abs(A.det) ** n if n >= 0 else 0
    if count > cap:
        raise CapExceeded(f"|det A|^n = {count} exceeds the enumeration cap {cap}", required=count)
    sol = CosetSolver(A, n, z)
    X = sol.numerators(sol.all_indices())
    if sol.dtype is np.int64:
        X = X[np.lexsort(X.T[::-1])]
    else:
        X = np.array(sorted(map(tuple, X)), dtype=object).reshape(count, sol.d)
    return PreimageLattice(sol.power, sol.target, sol.D, X)


def preimage_points(A: IntMatrix, n: int, z, cap: int = ENUM_CAP) -> list[TorusPoint]:
    """Every x with A^n x = z (mod 1); there are exactly |det A|^n of them."""
    return preimage_lattice(A, n, z, cap).points()


@dataclass
class PreimageSet:
    matrix: IntMatrix
    n: int
    target: Ball
    lattice: PreimageLattice = field(repr=False)
    shape: EllipsoidShape

    @property
    def long_axis(self) -> bool:
        """True when some semi-axis exceeds 1/2, so pieces may wrap onto themselves."""
        return bool(max(self.shape.log_semi_axes) > math.log(0.5))

    @property
    def radius(self) -> float:
        return self.target.radius

    @cached_property
    def centers(self) -> list[TorusPoint]:
        return self.lattice.points()

    def center_floats(self) -> np.ndarray:
        return self.lattice.floats()

    def to_json(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "n": self.n,
            "target": {"center": self.target.center.to_strings(), "radius": self.radius},
            "count": self.lattice.count,
            "centers": [c.to_strings() for c in self.centers],
            "shape": self.shape.as_dict(),
            "long_axis": self.long_axis,
        }


def preimage_set(A: IntMatrix, n: int, z, tau: float, cap: int = ENUM_CAP,
                 radius: float | None = None) -> PreimageSet:
    """Centers and common shape of T^-n B(z, e^{-n tau}).

    ``radius`` overrides e^{-n tau} (useful at n = 0).
    """
    r = math.exp(-n * tau) if radius is None else float(radius)
    if r > 0.5:
        raise RadiusTooLarge(f"target radius {r:.6g} exceeds 1/2")
    z = TorusPoint.parse(z)
    ball = Ball(z, r)
    lat = preimage_lattice(A, n, z, cap)
    return PreimageSet(A, n, ball, lat, ellipsoid_shape(A, n, r))


def _nearest_offset(f: Fraction) -> Fraction:
    return f - math.floor(f + Fraction(1, 2))


def torus_distance_sq(x: Sequence[Fraction], z: Sequence[Fraction]) -> Fraction:
    return sum(_nearest_offset(a - b) ** 2 for a, b in zip(x, z))


def membership(A: IntMatrix, n: int, z, tau: float, x, radius: float | None = None) -> bool:
    """Is the torus distance from A^n x mod 1 to z at most e^{-n tau}?

    Float coordinates are taken at their exact binary value, so A^n x is
    evaluated without rounding.
    """
    z = TorusPoint.parse(z)
    pt = x if isinstance(x, TorusPoint) else TorusPoint(tuple(x))
    if pt.dim != A.dim or z.dim != A.dim:
        raise DomainError("dimension mismatch")
    r = math.exp(-n * tau) if radius is None else float(radius)
    img = matrix_power_exact(A, n).apply(pt.coords)
    return torus_distance_sq(img, z.coords) <= Fraction(r) ** 2


# ---------------------------------------------------------------- rasters


@dataclass
class Raster:
    m: int
    d: int
    subsamples: int
    cells: np.ndarray  # sorted flat indices, C order over (i_0, ..., i_{d-1})
    method: str = "dense"

    @property
    def count(self) -> int:
        return int(self.cells.size)

    def mask(self) -> np.ndarray:
        if self.m ** self.d > 1 << 28:
            raise CapExceeded("mask too large to materialise", required=self.m ** self.d)
        out = np.zeros(self.m ** self.d, dtype=bool)
        out[self.cells] = True
        return out.reshape((self.m,) * self.d)

    def cell_indices(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.cells, (self.m,) * self.d), axis=1)

    def contains_point(self, x: Sequence[float]) -> bool:
        idx = tuple(int(math.floor(float(v) % 1 * self.m)) % self.m for v in x)
        flat = np.ravel_multi_index(idx, (self.m,) * self.d)
        pos = np.searchsorted(self.cells, flat)
        return bool(pos < self.cells.size and self.cells[pos] == flat)

    def to_pgm(self) -> bytes:
        """Binary greymap; marked cells black, axis 0 runs left to right, axis 1 upward."""
        if self.d != 2:
            raise Unsupported("PGM output needs d = 2")
        img = np.full((self.m, self.m), 255, dtype=np.uint8)
        img[self.mask().T[::-1]] = 0
        return b"P5\n%d %d\n255\n" % (self.m, self.m) + img.tobytes()

    def to_json(self) -> dict:
        return {"grid": self.m, "dim": self.d, "subsamples": self.subsamples,
                "method": self.method, "count": self.count,
                "cells": self.cell_indices().tolist()}


class _Target:
    """Membership test for stratified sample points with numerators over 2ms."""

    def __init__(self, A: IntMatrix, n: int, z: TorusPoint, r: float, m: int, s: int):
        self.d = A.dim
        self.Dg = 2 * m * s
        self.q, a = z.common_denominator()
        self.Q = self.Dg * self.q
        if self.Q >= 1 << 40:
            raise CapExceeded("target denominator too large for the raster path")
        self.Mmod = matrix_power_exact(A, n).mod(self.Dg).astype(np.int64)
        self.zq = np.array([ai * self.Dg for ai in a], dtype=np.int64)  # z over Q
        self.r2 = r * r
        self.m, self.s = m, s

    def dist_sq(self, coord_terms: list[np.ndarray]) -> np.ndarray:
        """coord_terms[i] broadcasts to (A^n u)_i mod Dg for the sample grid."""
        acc = None
        for i in range(self.d):
            num = (coord_terms[i] % self.Dg) * self.q - self.zq[i]
            f = (num % self.Q) / self.Q
            f = np.minimum(f, 1.0 - f)
            acc = f * f if acc is None else acc + f * f
        return acc


def _axis_numerators(m: int, s: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
    hi = m if hi is None else hi
    u = np.arange(lo * s, hi * s, dtype=np.int64)
    return 2 * u + 1


def _dense_band(tg: _Target, lo: int, hi: int) -> np.ndarray:
    d, m, s = tg.d, tg.m, tg.s
    axes = [_axis_numerators(m, s, lo, hi)] + [_axis_numerators(m, s)] * (d - 1)
    terms = []
    for i in range(d):
        t = 0
        for k in range(d):
            shape = [1] * d
            shape[k] = -1
            t = t + ((tg.Mmod[i, k] * axes[k]) % tg.Dg).reshape(shape)
        terms.append(t)
    hit = tg.dist_sq(terms) <= tg.r2
    shape = []
    for k in range(d):
        shape += [hit.shape[k] // s, s]
    hit = hit.reshape(shape).any(axis=tuple(range(1, 2 * d, 2)))
    idx = np.flatnonzero(hit.ravel())
    return idx + lo * m ** (d - 1)


def _check_raster_args(A: IntMatrix, m: int, s: int):
    if A.dim not in (2, 3):
        raise Unsupported(f"rasterization supports d in {{2, 3}}, got d = {A.dim}")
    if m < 1 or s < 1:
        raise DomainError("grid and subsamples must be positive")


def rasterize(A: IntMatrix, n: int, z, tau: float, grid_m: int, subsamples: int = 1,
              threads: int = 1, method: str = "auto", radius: float | None = None,
              max_grid: int | None = None, sampling: str = "grid") -> Raster:
    """Mark grid cells that contain sample points of E_n.

    sampling="grid": sample k of cell i along an axis sits at
    (i*s + k + 1/2) / (m*s) and is tested for membership.  The "sparse"
    method only tests cells near the preimage ellipsoids and returns the same
    cells as the "dense" sweep.

    sampling="set": the samples are a lattice of spacing 1/(m*s) laid inside
    each ellipsoid, so every marked cell meets E_n and pieces thinner than a
    cell are never skipped.  Used for covering numbers.
    """
    _check_raster_args(A, grid_m, subsamples)
    d, m, s = A.dim, grid_m, subsamples
    z = TorusPoint.parse(z)
    r = math.exp(-n * tau) if radius is None else float(radius)
    if r <= 0:
        raise DomainError("radius must be positive")
    dense_cap = DENSE_GRID_CAP[d]
    cap = max_grid if max_grid is not None else dense_cap
    if m > cap:
        raise CapExceeded(f"grid {m} exceeds the cap {cap} for d = {d}", required=m)
    if sampling == "set":
        cells = _set_cells(A, n, z, r, m, s)
        return Raster(m, d, s, cells.astype(np.int64), "set")
    if sampling != "grid":
        raise DomainError(f"unknown sampling {sampling!r}")
    if method == "auto":
        method = "dense"
        if m > dense_cap or _sparse_estimate(A, n, r, m) < m ** d:
            method = "sparse"
    if method == "dense" and m > dense_cap:
        raise CapExceeded(f"dense raster grid {m} exceeds {dense_cap}", required=m)
    tg = _Target(A, n, z, r, m, s)
    if method == "dense":
        per_row = m ** (d - 1) * s ** d
        band = max(1, min(m, _CHUNK // per_row))
        bands = [(lo, min(m, lo + band)) for lo in range(0, m, band)]
        with ThreadPoolExecutor(max(1, threads)) as ex:
            parts = list(ex.map(lambda b: _dense_band(tg, *b), bands))
        cells = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    elif method == "sparse":
        cands = _sparse_candidates(A, n, z, r, m)
        cells = _test_cells(tg, cands, threads)
    else:
        raise DomainError(f"unknown raster method {method!r}")
    return Raster(m, d, s, np.unique(cells.astype(np.int64)), method)


def _net_extents(log_axes: Sequence[float], h: float) -> list[int]:
    return [int(math.ceil(math.exp(la) / h)) if la > math.log(h / 2) else 0 for la in log_axes]


def _sparse_estimate(A: IntMatrix, n: int, r: float, m: int, s: int = 1,
                     sampling: str = "grid") -> float:
    shape = ellipsoid_shape(A, n, r)
    if sampling == "set":
        K = _net_extents(shape.log_semi_axes, 1.0 / (m * s))
        return abs(A.det) ** n * math.prod(2 * k + 1 for k in K)
    K = _net_extents(shape.log_semi_axes, 1.0 / m)
    return abs(A.det) ** n * math.prod(2 * k + 1 for k in K) * 3 ** A.dim


def _net_offsets(shape: EllipsoidShape, h: float, strict: bool) -> np.ndarray:
    """Displacements c -> c + offset on a spacing-h lattice in the ellipsoid's axis frame.

    strict keeps lattice points in the open ellipsoid; otherwise it keeps every
    lattice point whose h-box could touch the ellipsoid.
    """
    d = shape.dim
    a = shape.semi_axes
    K = _net_extents(shape.log_semi_axes, h)
    off = (np.indices([2 * k + 1 for k in K]).reshape(d, -1).T - np.array(K)) * h
    if strict:
        t = off / a
    else:
        t = np.maximum(np.abs(off) - h / 2, 0.0) / a
    q = (t * t).sum(axis=1)
    off = off[q < 1.0 - 1e-9] if strict else off[q <= 1.0 + 1e-9]
    return off @ shape.axis_directions.T


def _cells_of_net(A: IntMatrix, n: int, z: TorusPoint, disp: np.ndarray, m: int) -> np.ndarray:
    d = A.dim
    centers = preimage_lattice(A, n, z).floats()
    out = []
    step = max(1, _CHUNK // max(1, disp.shape[0]))
    for lo in range(0, centers.shape[0], step):
        pts = centers[lo:lo + step, None, :] + disp[None, :, :]
        out.append(cells_of_points(pts.reshape(-1, d), m))
    return np.unique(np.concatenate(out))


def _sparse_candidates(A: IntMatrix, n: int, z: TorusPoint, r: float, m: int) -> np.ndarray:
    d = A.dim
    est = _sparse_estimate(A, n, r, m)
    if est > SPARSE_CANDIDATE_CAP:
        raise CapExceeded(f"sparse raster would test ~{est:.3g} cells", required=int(est))
    disp = _net_offsets(ellipsoid_shape(A, n, r), 1.0 / m, strict=False)
    base = _cells_of_net(A, n, z, disp, m)
    base_idx = np.stack(np.unravel_index(base, (m,) * d), axis=1)
    neigh = np.indices((3,) * d).reshape(d, -1).T - 1
    allc = [np.ravel_multi_index(((base_idx + nb) % m).T, (m,) * d) for nb in neigh]
    return np.unique(np.concatenate(allc))


def _set_cells(A: IntMatrix, n: int, z: TorusPoint, r: float, m: int, s: int) -> np.ndarray:
    disp = _net_offsets(ellipsoid_shape(A, n, r), 1.0 / (m * s), strict=True)
    est = abs(A.det) ** n * disp.shape[0]
    if est > SET_POINT_CAP:
        raise CapExceeded(f"set sampling would place ~{est:.3g} points", required=int(est))
    return _cells_of_net(A, n, z, disp, m)


def _test_cells_chunk(tg: _Target, flat: np.ndarray) -> np.ndarray:
    d, m, s = tg.d, tg.m, tg.s
    idx = np.stack(np.unravel_index(flat, (m,) * d), axis=1)
    sub = np.indices((s,) * d).reshape(d, -1).T
    u = 2 * (idx[:, None, :] * s + sub[None, :, :]) + 1  # (N, s^d, d)
    terms = []
    for i in range(d):
        t = 0
        for k in range(d):
            t = t + (tg.Mmod[i, k] * u[:, :, k]) % tg.Dg
        terms.append(t)
    hit = (tg.dist_sq(terms) <= tg.r2).any(axis=1)
    return flat[hit]


def _test_cells(tg: _Target, flat: np.ndarray, threads: int = 1) -> np.ndarray:
    step = max(1, _CHUNK // tg.s ** tg.d)
    chunks = [flat[i:i + step] for i in range(0, flat.size, step)]
    with ThreadPoolExecutor(max(1, threads)) as ex:
        parts = list(ex.map(lambda c: _test_cells_chunk(tg, c), chunks))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def cells_of_points(points: np.ndarray, m: int) -> np.ndarray:
    d = points.shape[1]
    idx = np.floor(np.mod(points, 1.0) * m).astype(np.int64) % m
    return np.unique(np.ravel_multi_index(idx.T, (m,) * d))


# ---------------------------------------------------------------- separations


@dataclass
class SeparationReport:
    eigenvalues: list[float]
    gaps: list[float]
    predicted: list[float] | None

    def as_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues, "gaps": self.gaps,
                "predicted": self.predicted}


def separation_report(P: PreimageSet, tol: float = 1e-12) -> SeparationReport:
    """Smallest positive gap between center coordinates along each eigendirection."""
    if P.lattice.count < 2:
        raise TooFewCenters(f"need at least 2 centers, have {P.lattice.count}")
    A = P.matrix.to_numpy()
    w, E = np.linalg.eig(A)
    if np.max(np.abs(w.imag)) > 1e-12 or np.linalg.cond(E) > 1e8:
        raise DomainError("matrix is not diagonalizable over the reals")
    w, E = w.real, E.real
    order = np.argsort(np.abs(w), kind="stable")
    w, E = w[order], E[:, order]
    E = E / np.linalg.norm(E, axis=0)
    proj = np.linalg.solve(E, P.center_floats().T).T
    gaps = []
    for j in range(proj.shape[1]):
        v = np.sort(proj[:, j])
        dv = np.diff(v)
        dv = dv[dv > tol]
        gaps.append(float(dv.min()) if dv.size else math.inf)
    sd = spectral_data(P.matrix)
    predicted = None
    if sd.is_expanding:
        predicted = [math.exp(-P.n * l) for l in sd.exponents]
    return SeparationReport([float(x) for x in w], gaps, predicted)

