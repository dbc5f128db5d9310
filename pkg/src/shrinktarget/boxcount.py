"""Grid covering numbers of E_n and of finite unions of E_n."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, NoValidIndex
from .matrix_core import IntMatrix, spectral_data
from .preimage_geometry import SPARSE_GRID_CAP, TorusPoint, rasterize

HEURISTIC = ("HEURISTIC: box counts of finite unions; box dimension can exceed "
             "Hausdorff dimension for limsup sets")


@dataclass
class CoverReport:
    n: int
    delta: float
    grid: int
    N_boxes: int
    predicted_exponent: float | None = None
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "grid": self.grid, "N_boxes": self.N_boxes,
                "predicted_exponent": self.predicted_exponent, "params": self.params}


def grid_for_delta(delta: float) -> int:
    if delta <= 0:
        raise DomainError("delta must be positive")
    return max(1, int(round(1.0 / delta)))


def covering_number(A: IntMatrix, n: int, z, tau: float, delta: float, subsamples: int = 4,
                    threads: int = 1, radius: float | None = None,
                    max_grid: int = SPARSE_GRID_CAP) -> CoverReport:
    """Number of delta-grid boxes meeting E_n.

    Boxes are found from a lattice of points inside each ellipsoid at spacing
    delta / subsamples.  A grid cover is within a factor 2^d 3^d of the
    optimal cover count.
    """
    z = TorusPoint.zero(A.dim) if z is None else TorusPoint.parse(z)
    m = grid_for_delta(delta)
    params = {"matrix": A.tolist(), "tau": tau, "z": z.to_strings(), "subsamples": subsamples,
              "radius": radius}
    if m == 1:
        return CoverReport(n, 1.0, 1, 1, params=params)
    ras = rasterize(A, n, z, tau, m, subsamples, threads=threads, radius=radius,
                    max_grid=max_grid, sampling="set")
    params["method"] = ras.method
    return CoverReport(n, 1.0 / m, m, ras.count, params=params)


def cover_exponent(l: Sequence[float], k: int) -> float:
    """log-growth rate of the cover count at scale e^{-(l_k + tau) n}: L + (k-1) l_k - sum_{j<k} l_j."""
    return sum(l) + (k - 1) * l[k - 1] - sum(l[:k - 1])


def refined_cover_exponent(l: Sequence[float], k: int, tau: float) -> float:
    """k l_k + sum_{j>k} l_j - sum_j (l_j - l_k - tau)_+, the expanding-case count rate."""
    lk = l[k - 1]
    return k * lk + sum(l[k:]) - sum(max(0.0, lj - lk - tau) for lj in l)


@dataclass
class CoverFit:
    k: int
    ns: list[int]
    deltas: list[float]
    counts: list[int]
    slope: float
    predicted: float
    refined: float | None
    scale_rate: float  # tau + l_k

    @property
    def quotient(self) -> float:
        """Fitted slope over tau + l_k: the dimension value this cover suggests."""
        return self.slope / self.scale_rate

    def as_dict(self) -> dict:
        return {"k": self.k, "n": self.ns, "delta": self.deltas, "N_boxes": self.counts,
                "slope": self.slope, "predicted": self.predicted, "refined": self.refined,
                "quotient": self.quotient}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "delta", "N_boxes", "predicted_exponent"])
        for n, dl, c in zip(self.ns, self.deltas, self.counts):
            w.writerow([n, repr(dl), c, repr(self.predicted)])
        return buf.getvalue()


def covering_exponent_fit(A: IntMatrix, z, tau: float, k: int, n_list: Sequence[int],
                          subsamples: int = 4, threads: int = 1,
                          max_grid: int = SPARSE_GRID_CAP, rounding: str = "grid") -> CoverFit:
    """Slope of log N(E_n, delta_n) against n with delta_n = e^{-(l_k + tau) n}.

    rounding="grid" uses round(1/delta_n) cells per side.  rounding="pow2"
    first rounds delta_n to the nearest power of 2 so grids nest; the rounding
    error then varies with n by up to a factor sqrt 2 and biases short fits.
    """
    if rounding not in ("grid", "pow2"):
        raise DomainError("rounding must be 'grid' or 'pow2'")
    sd = spectral_data(A)
    l = sd.exponents
    if not 1 <= k <= len(l):
        raise DomainError(f"k must lie in 1..{len(l)}")
    rate = tau + l[k - 1]
    if rate <= 0:
        raise NoValidIndex(f"tau + l_{k} = {rate:.6g} is not positive")
    ns, deltas, counts = [], [], []
    for n in n_list:
        delta = math.exp(-rate * n)
        if rounding == "pow2":
            delta = 2.0 ** -max(0, round(-math.log2(delta)))
        rep = covering_number(A, n, z, tau, delta, subsamples, threads=threads, max_grid=max_grid)
        ns.append(n)
        deltas.append(rep.delta)
        counts.append(rep.N_boxes)
    if len(ns) < 2:
        raise DomainError("need at least two values of n")
    slope = float(np.polyfit(ns, np.log(counts), 1)[0])
    refined = refined_cover_exponent(l, k, tau) if sd.is_expanding else None
    return CoverFit(k, ns, deltas, counts, slope, cover_exponent(l, k), refined, rate)


@dataclass
class TrendReport:
    delta: float
    grid: int
    n_start: int
    n_tops: list[int]
    counts: list[int]
    label: str = HEURISTIC

    @property
    def quotients(self) -> list[float]:
        return [math.log(c) / math.log(self.grid) if c > 0 and self.grid > 1 else 0.0
                for c in self.counts]

    def as_dict(self) -> dict:
        return {"label": self.label, "delta": self.delta, "grid": self.grid,
                "n_start": self.n_start, "n_top": self.n_tops, "N_boxes": self.counts,
                "quotient": self.quotients}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n_top", "delta", "N_boxes", "quotient"])
        for n, c, q in zip(self.n_tops, self.counts, self.quotients):
            w.writerow([n, repr(self.delta), c, repr(q)])
        return buf.getvalue()


def limsup_boxdim_trend(A: IntMatrix, tau: float, m: int, n_max: int, delta: float,
                        z=None, subsamples: int = 4, threads: int = 1) -> TrendReport:
    """Box counts of the unions E_m, E_m u E_{m+1}, ..., up to E_{n_max}, all with z_n = z."""
    if m < 0 or n_max < m:
        raise DomainError("need 0 <= m <= n_max")
    z = TorusPoint.zero(A.dim) if z is None else TorusPoint.parse(z)
    g = grid_for_delta(delta)
    union = np.zeros(0, dtype=np.int64)
    tops, counts = [], []
    for n in range(m, n_max + 1):
        if g == 1:
            cells = np.zeros(1, dtype=np.int64)
        else:
            cells = rasterize(A, n, z, tau, g, subsamples, threads=threads,
                              radius=min(0.5, math.exp(-n * tau)), max_grid=SPARSE_GRID_CAP,
                              sampling="set").cells
        union = np.union1d(union, cells)
        tops.append(n)
        counts.append(int(union.size))
    return TrendReport(1.0 / g, g, m, tops, counts)
