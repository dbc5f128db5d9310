"""Monte Carlo probes of the normalised Lebesgue measure mu_n on E_n.

mu_n is sampled exactly: pick one of the |det A|^n pieces uniformly, then push a
uniform point u of the unit ball through x = c + V diag(a) u.  Because
A^n V diag(a) = r U, the image A^n x is z + r U u, so every draw also carries
its offset e = r U u inside the target ball.  That offset lets a nearby point
x + D be tested for membership through e + A^n D without re-reducing A^n x.
"""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dimension_formulas import INDETERMINATE, dimension_for
from .errors import CapExceeded, DomainError, InsufficientMass, RadiusTooLarge
from .matrix_core import IntMatrix, log_singular_values, matrix_power_exact, spectral_data
from .preimage_geometry import Ball, CosetSolver, TorusPoint

MIN_BUDGET = 10**4
MIN_BATCHES = 10
# positions are doubles in [0, 1); pieces thinner than this cannot be resolved
MIN_RESOLVED_AXIS = 1e-12


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def wrap(v: np.ndarray) -> np.ndarray:
    """Nearest-translate representative of a torus displacement."""
    return v - np.round(v)


def torus_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.norm(wrap(x - y), axis=-1)


def uniform_ball(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    g = rng.standard_normal((k, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(k)[:, None] ** (1.0 / d)


@dataclass
class ProbeReport:
    tag: str
    estimate: float
    stderr: float
    samples: int
    seed: int
    params: dict = field(default_factory=dict)
    batch_means: list[float] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"tag": self.tag, "estimate": self.estimate, "stderr": self.stderr,
                "samples": self.samples, "seed": self.seed, "params": self.params,
                "batch_means": self.batch_means, **self.extra}


def _mean_stderr(vals: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(vals, dtype=float)
    if v.size < 2:
        return float(v.mean()), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


class MuSampler:
    """Exact sampler of mu_n = normalised Lebesgue measure on T^-n B(z, e^{-n tau})."""

    def __init__(self, A: IntMatrix, n: int, tau: float, z=None, seed: int = 0,
                 budget: int = 10**5, batches: int = MIN_BATCHES, threads: int = 1,
                 radius: float | None = None):
        if n < 0:
            raise DomainError("n must be nonnegative")
        if budget < MIN_BUDGET:
            raise DomainError(f"sample budget must be >= {MIN_BUDGET}")
        if batches < MIN_BATCHES:
            raise DomainError(f"need at least {MIN_BATCHES} batches")
        self.A, self.n, self.tau = A, n, float(tau)
        self.d = A.dim
        self.z = TorusPoint.zero(self.d) if z is None else TorusPoint.parse(z)
        self.r = math.exp(-n * tau) if radius is None else float(radius)
        if self.r > 0.5:
            raise RadiusTooLarge(f"target radius {self.r:.6g} exceeds 1/2")
        self.seed, self.budget, self.batches, self.threads = int(seed), int(budget), int(batches), int(threads)
        self.solver = CosetSolver(A, n, self.z)
        prof = log_singular_values(A, n, vectors=True)
        self.log_axes = np.log(self.r) - np.array(prof.log_sigma)
        if self.log_axes.min() < math.log(MIN_RESOLVED_AXIS):
            raise CapExceeded("ellipsoid axes below double-precision resolution; lower n")
        self.axes = np.exp(self.log_axes)
        self.V = prof.right_vectors
        self.U = prof.left_vectors
        self.Ma = self.V * self.axes[None, :]
        self.volume = unit_ball_volume(self.d) * self.r ** self.d
        self._power = None

    @property
    def count(self) -> int:
        return self.solver.count

    def first_center(self) -> np.ndarray:
        return self.solver.floats(np.zeros((1, self.d), dtype=np.int64))[0]

    def params(self) -> dict:
        return {"matrix": self.A.tolist(), "n": self.n, "tau": self.tau,
                "z": self.z.to_strings(), "radius": self.r, "budget": self.budget,
                "batches": self.batches, "seed": self.seed}

    def draw(self, rng: np.random.Generator, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k points of mu_n and their image offsets A^n x - z (mod 1)."""
        c = self.solver.floats(self.solver.random_indices(rng, k))
        u = uniform_ball(rng, k, self.d)
        x = np.mod(c + u @ self.Ma.T, 1.0)
        return x, self.r * (u @ self.U.T)

    def power_float(self) -> np.ndarray:
        if self._power is None:
            M = matrix_power_exact(self.A, self.n)
            big = max(abs(v) for row in M.rows for v in row)
            if big * 1e-16 * self.d > 1e-4 * self.r:
                raise CapExceeded("A^n too large for float displacement tests; lower n")
            self._power = M.to_numpy().astype(float)
        return self._power

    def member_offset(self, e: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Is x + delta in E_n, given the offset e of x?"""
        img = wrap(e + delta @ self.power_float().T)
        return np.einsum("ij,ij->i", img, img) <= self.r * self.r

    def rngs(self) -> list[np.random.Generator]:
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(self.batches)]

    def map_batches(self, fn: Callable[[np.random.Generator, int], object]) -> list:
        """Run fn(rng, batch_size) per batch; results come back in batch order."""
        size = self.budget // self.batches
        with ThreadPoolExecutor(max(1, self.threads)) as ex:
            return list(ex.map(lambda g: fn(g, size), self.rngs()))


def mu_n_ball(sampler: MuSampler, B: Ball | None) -> ProbeReport:
    """Fraction of draws inside B; B = None stands for the whole torus."""
    params = {**sampler.params(), "ball": None if B is None else
              {"center": B.center.to_strings(), "radius": B.radius}}
    if B is None:
        return ProbeReport("ball-mass", 1.0, 0.0, sampler.budget, sampler.seed, params,
                           [1.0] * sampler.batches)
    c = B.center.as_float()

    def one(rng, k):
        x, _ = sampler.draw(rng, k)
        return float(np.mean(torus_dist(x, c) <= B.radius))

    means = sampler.map_batches(one)
    est, se = _mean_stderr(means)
    return ProbeReport("ball-mass", est, se, sampler.budget, sampler.seed, params, means)


# ---------------------------------------------------------------- regimes and slopes


def regime_boundaries(A: IntMatrix, tau: float, n: int) -> dict:
    """Radii where the local scaling of mu_n(B(x, r)) can change."""
    l = spectral_data(A).exponents
    out = {
        "piece_axes": [math.exp(-(tau + lj) * n) for lj in l],
        "expanding_spacing": [math.exp(-n * lj) for lj in l],
        "strip_separation": [math.exp((tau - lj) * n) for lj in l],
    }
    out["smallest_axis"] = min(out["piece_axes"])
    return out


def predicted_exponent(A: IntMatrix, tau: float, n: int, r_lo: float, r_hi: float) -> tuple[float, str]:
    """Local exponent expected over [r_lo, r_hi] and a label for the regime."""
    d = A.dim
    b = regime_boundaries(A, tau, n)
    if r_hi <= b["smallest_axis"]:
        return float(d), "inside one piece"
    sd = spectral_data(A)
    if sd.is_expanding:
        if r_lo >= max(b["expanding_spacing"]):
            return float(d), "above piece spacing"
    else:
        seps = [s for s in b["strip_separation"] if s < 1]
        if seps and r_lo >= max(seps):
            return float(d), "above strip separation"
    res = dimension_for(A, tau)
    if res.value == INDETERMINATE:
        return math.nan, "critical"
    return float(res.value), "spanning (global exponent)"


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    level: float
    predicted: float
    regime: str
    r_grid: list[float]
    masses: list[float]
    mass_stderr: list[float]
    report: ProbeReport

    def as_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "level": self.level,
                "predicted": self.predicted, "regime": self.regime, "r_grid": self.r_grid,
                "masses": self.masses, "mass_stderr": self.mass_stderr,
                "probe": self.report.as_dict()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log_r", "log_mass", "mass", "mass_stderr"])
        for r, m, s in zip(self.r_grid, self.masses, self.mass_stderr):
            w.writerow([repr(math.log(r)), repr(math.log(m)) if m > 0 else "", repr(m), repr(s)])
        return buf.getvalue()


def default_r_grid(sampler: MuSampler, points: int = 12, safety: float = 3.0) -> list[float]:
    """Log-spaced radii from safety * (smallest semi-axis) up to 1 / safety."""
    lo = safety * float(sampler.axes.min())
    hi = 1.0 / safety
    if lo >= hi:
        raise DomainError("no room between the smallest semi-axis and 1/3")
    return list(np.geomspace(lo, hi, points))


def _fit(logr: np.ndarray, logm: np.ndarray) -> tuple[float, float]:
    slope, level = np.polyfit(logr, logm, 1)
    return float(slope), float(level)


def image_offset(sampler: MuSampler, x: TorusPoint) -> np.ndarray:
    """A^n x - z reduced to the nearest translate, computed exactly then rounded."""
    img = sampler.solver.power.apply(x.coords)
    return np.array([float(v - zc - math.floor(v - zc + Fraction(1, 2)))
                     for v, zc in zip(img, sampler.z.coords)])


def holder_slope(A: IntMatrix, tau: float, n: int, x=None, r_grid: Sequence[float] | None = None,
                 z=None, seed: int = 0, budget: int = 10**5, batches: int = MIN_BATCHES,
                 threads: int = 1, method: str = "draws") -> SlopeFit:
    """Least-squares slope of log mu_n(B(x, r)) against log r.

    method "draws" counts mu_n draws within each radius (one sample set, so the
    mass curve is monotone).  Method "ball" throws uniform points into B(x, r)
    and tests membership, which resolves masses far below 1 / budget; the
    budget is then split across the radii.  Method "mixed" uses "ball" for
    radii with vol B(x, r) < vol(E_n) / len(r_grid), where it has the smaller
    relative variance, and "draws" above.  x defaults to the first preimage
    center.
    """
    sm = MuSampler(A, n, tau, z=z, seed=seed, budget=budget, batches=batches, threads=threads)
    xp = TorusPoint(tuple(Fraction(int(v), sm.solver.D) for v in
                          sm.solver.numerators(np.zeros((1, sm.d), dtype=np.int64))[0])) \
        if x is None else TorusPoint.parse(x)
    xc = xp.as_float()
    radii = np.array(sorted(r_grid) if r_grid is not None else default_r_grid(sm), dtype=float)
    if radii.size < 2 or radii[0] <= 0:
        raise DomainError("need at least two positive radii")
    if method not in ("draws", "ball", "mixed"):
        raise DomainError(f"unknown mass method {method!r}")
    ball_vol = unit_ball_volume(sm.d) * radii ** sm.d
    if method == "draws":
        use_ball = np.zeros(radii.size, dtype=bool)
    elif method == "ball":
        use_ball = np.ones(radii.size, dtype=bool)
    else:
        use_ball = ball_vol < sm.volume / radii.size
    ex = image_offset(sm, xp) if use_ball.any() else None
    dens = ball_vol / sm.volume

    def one(rng, k):
        out = np.empty(radii.size)
        if not use_ball.all():
            pts, _ = sm.draw(rng, k)
            dist = np.sort(torus_dist(pts, xc))
            out[~use_ball] = np.searchsorted(dist, radii[~use_ball], side="right") / k
        per = max(1, k // int(use_ball.sum() or 1))
        for i in np.flatnonzero(use_ball):
            delta = uniform_ball(rng, per, sm.d) * radii[i]
            e = np.broadcast_to(ex, delta.shape)
            out[i] = sm.member_offset(e, delta).mean() * dens[i]
        return out

    bm = np.array(sm.map_batches(one), dtype=float)  # (batches, radii)
    masses = bm.mean(axis=0)
    mass_se = bm.std(axis=0, ddof=1) / math.sqrt(sm.batches)
    ok = masses > 0
    if (~ok).sum() * 2 > radii.size:
        raise InsufficientMass(f"{int((~ok).sum())} of {radii.size} radii caught no samples")
    lr, lm = np.log(radii[ok]), np.log(masses[ok])
    slope, level = _fit(lr, lm)
    # leave-one-batch-out jackknife for the slope error
    jk = []
    for b in range(sm.batches):
        c = np.delete(bm, b, axis=0).mean(axis=0)[ok]
        if np.all(c > 0):
            jk.append(_fit(lr, np.log(c))[0])
    se = math.sqrt((len(jk) - 1) / len(jk) * np.sum((np.array(jk) - np.mean(jk)) ** 2)) \
        if len(jk) > 1 else math.nan
    pred, regime = predicted_exponent(A, tau, n, float(radii[0]), float(radii[-1]))
    rep = ProbeReport("slope", slope, se, sm.budget, sm.seed,
                      {**sm.params(), "x": xp.to_strings(), "r_grid": radii.tolist(),
                       "method": method})
    return SlopeFit(slope, se, level, pred, regime, radii.tolist(), masses.tolist(),
                    mass_se.tolist(), rep)


# ---------------------------------------------------------------- weak convergence


def ball_grid(d: int, count: int, radius: float) -> list[Ball]:
    """Deterministic ball centers from the Kronecker sequence k * (sqrt 2, sqrt 3, sqrt 5, ...)."""
    gens = np.sqrt(np.array([2, 3, 5, 7, 11, 13, 17, 19][:d], dtype=float))
    out = []
    for k in range(1, count + 1):
        c = np.mod(k * gens, 1.0)
        out.append(Ball(TorusPoint(tuple(float(v) for v in c)), radius))
    return out


@dataclass
class RatioReport:
    ratios: list[float]
    stderrs: list[float]
    report: ProbeReport

    @property
    def min(self) -> float:
        return min(self.ratios)

    @property
    def max(self) -> float:
        return max(self.ratios)

    def as_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "ratios": self.ratios,
                "stderrs": self.stderrs, "probe": self.report.as_dict()}


def weak_convergence_ratio(A: IntMatrix, tau: float, n: int, balls: Sequence[Ball] | None = None,
                           z=None, seed: int = 0, budget: int = 10**5,
                           batches: int = MIN_BATCHES, threads: int = 1) -> RatioReport:
    """mu_n(B) / Leb(B) over a set of macroscopic balls, all counted on the same draws."""
    if n < 1:
        raise DomainError("n must be >= 1 (mu_0 is not a shrinking-target measure)")
    balls = list(balls) if balls is not None else ball_grid(A.dim, 20, 0.2)
    if any(b.radius < 0.05 for b in balls):
        raise DomainError("weak-convergence balls need radius >= 0.05")
    sm = MuSampler(A, n, tau, z=z, seed=seed, budget=budget, batches=batches, threads=threads)
    cs = np.array([b.center.as_float() for b in balls])
    rs = np.array([b.radius for b in balls])
    leb = unit_ball_volume(A.dim) * rs ** A.dim

    def one(rng, k):
        x, _ = sm.draw(rng, k)
        dist = np.linalg.norm(wrap(x[:, None, :] - cs[None, :, :]), axis=2)
        return (dist <= rs[None, :]).mean(axis=0)

    bm = np.array(sm.map_batches(one)) / leb[None, :]
    ratios = bm.mean(axis=0)
    se = bm.std(axis=0, ddof=1) / math.sqrt(sm.batches)
    worst = int(np.argmax(np.abs(ratios - 1)))
    rep = ProbeReport("ratio", float(ratios[worst]), float(se[worst]), sm.budget, sm.seed,
                      {**sm.params(), "balls": len(balls), "radii": sorted(set(rs.tolist()))},
                      bm[:, worst].tolist())
    return RatioReport(ratios.tolist(), se.tolist(), rep)


# ---------------------------------------------------------------- Riesz energy


class _NearProposal:
    """Displacements D = t * theta around a point.

    t: 0.9 log-uniform on [t_lo, t_hi] + 0.1 power law t^(beta-1) on (0, t_lo];
    theta: half isotropic, half angular central Gaussian aligned with the pieces.
    """

    W_LOG = 0.9

    def __init__(self, sm: MuSampler, s: float, t_hi: float = 0.25):
        self.d = sm.d
        self.t_hi = t_hi
        self.t_lo = min(1e-3 * float(sm.axes.min()), t_hi / 10)
        self.log_span = math.log(self.t_hi / self.t_lo)
        self.beta = min(0.5, self.d - s)
        self.Ma = sm.Ma
        self.inv_axes2 = 1.0 / sm.axes ** 2
        self.V = sm.V
        self.log_det = float(sm.log_axes.sum())
        self.log_area = math.log(sphere_area(self.d))

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        d = self.d
        use_log = rng.random(k) < self.W_LOG
        u = rng.random(k)
        t = np.where(use_log, self.t_lo * np.exp(u * self.log_span),
                     self.t_lo * u ** (1.0 / self.beta))
        g = rng.standard_normal((k, d))
        aligned = rng.random(k) < 0.5
        g[aligned] = g[aligned] @ self.Ma.T
        theta = g / np.linalg.norm(g, axis=1, keepdims=True)
        return theta * t[:, None]

    def log_density(self, delta: np.ndarray) -> np.ndarray:
        """Log density in R^d of the displacement delta (-inf outside the support)."""
        d = self.d
        t = np.linalg.norm(delta, axis=1)
        out = np.full(t.shape, -np.inf)
        ok = (t > 0) & (t <= self.t_hi)
        t_ok = t[ok]
        theta = delta[ok] / t_ok[:, None]
        rad = np.where(t_ok >= self.t_lo, self.W_LOG / (t_ok * self.log_span),
                       (1 - self.W_LOG) * self.beta * t_ok ** (self.beta - 1) / self.t_lo ** self.beta)
        q = (theta @ self.V) ** 2 @ self.inv_axes2
        log_acg = -self.log_det - d / 2 * np.log(q) - self.log_area
        log_iso = -self.log_area
        ang = np.logaddexp(log_acg, log_iso) - math.log(2)
        out[ok] = np.log(rad) + ang - (d - 1) * np.log(t_ok)
        return out


def riesz_energy(sampler: MuSampler, s: float, method: str = "mis") -> ProbeReport:
    """Estimate of the s-energy of mu_n with the torus metric.

    "pairs" averages dist^-s over independent pairs; it misses the small-scale
    part of the integral when the pieces are thin.  "mis" draws the partner of
    each point from (mu_n + local proposal) / 2 and reweights, which resolves
    distances down to a fraction of the thinnest semi-axis.
    """
    d = sampler.d
    if not (0 <= s < d + 1):
        raise DomainError(f"need 0 <= s < d + 1, got s = {s}")
    params = {**sampler.params(), "s": s, "method": method}
    if s == 0:
        return ProbeReport("riesz", 1.0, 0.0, sampler.budget, sampler.seed, params)
    if s >= d:
        # mu_n has a bounded density, so the integral diverges at the diagonal
        return ProbeReport("riesz", math.inf, 0.0, sampler.budget, sampler.seed, params,
                           extra={"note": "s >= d: energy of an absolutely continuous measure is infinite"})
    if method == "pairs":
        def one(rng, k):
            x, _ = sampler.draw(rng, k)
            y, _ = sampler.draw(rng, k)
            return float(np.mean(torus_dist(x, y) ** -s))
    elif method == "mis":
        near = _NearProposal(sampler, s)
        log_rho = -math.log(sampler.volume)

        def one(rng, k):
            x, e = sampler.draw(rng, k)
            from_mu = rng.random(k) < 0.5
            delta = np.empty_like(x)
            inside = np.ones(k, dtype=bool)
            m = int(from_mu.sum())
            y, _ = sampler.draw(rng, m)
            delta[from_mu] = wrap(y - x[from_mu])
            delta[~from_mu] = near.sample(rng, k - m)
            inside[~from_mu] = sampler.member_offset(e[~from_mu], delta[~from_mu])
            t = np.linalg.norm(delta, axis=1)
            log_q = np.logaddexp(log_rho, near.log_density(delta)) - math.log(2)
            w = np.zeros(k)
            hit = inside & (t > 0)
            w[hit] = np.exp(-s * np.log(t[hit]) + log_rho - log_q[hit])
            return float(w.mean())
    else:
        raise DomainError(f"unknown energy method {method!r}")
    means = sampler.map_batches(one)
    est, se = _mean_stderr(means)
    return ProbeReport("riesz", est, se, sampler.budget, sampler.seed, params, means)


def energy_bound_check(sampler: MuSampler, t: float, r_grid: Sequence[float] | None = None,
                       centers: int = 20) -> dict:
    """Compare the t-energy with 1 + 2 C t / (s - t), C and s read off ball masses.

    s is the least-squares exponent of the mean ball mass over r_grid and C is
    the largest mu_n(B(x, r)) / r^s seen over `centers` sampled points x.
    """
    radii = np.array(sorted(r_grid) if r_grid is not None else default_r_grid(sampler), dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(sampler.seed).spawn(sampler.batches + 1)[-1])
    xs, _ = sampler.draw(rng, centers)

    def one(g, k):
        pts, _ = sampler.draw(g, k)
        out = np.empty((centers, radii.size))
        for i, xc in enumerate(xs):
            dist = np.sort(torus_dist(pts, xc))
            out[i] = np.searchsorted(dist, radii, side="right") / k
        return out

    mass = np.mean(sampler.map_batches(one), axis=0)  # (centers, radii)
    mean_mass = mass.mean(axis=0)
    ok = mean_mass > 0
    s_hat, _ = _fit(np.log(radii[ok]), np.log(mean_mass[ok]))
    C_hat = float(np.max(mass / radii[None, :] ** s_hat))
    energy = riesz_energy(sampler, t)
    bound = 1 + 2 * C_hat * t / (s_hat - t) if s_hat > t else math.inf
    return {"t": t, "s_hat": s_hat, "C_hat": C_hat, "energy": energy.estimate,
            "energy_stderr": energy.stderr, "bound": bound,
            "holds": bool(energy.estimate <= bound + 3 * energy.stderr)}
