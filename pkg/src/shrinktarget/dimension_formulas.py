"""Closed-form dimension values for shrinking-target sets of toral endomorphisms.

All minima are taken by full enumeration; ties go to the smallest index
(or smallest candidate t), which is what ``attaining_index`` records.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DomainError, NoValidIndex, Unsupported
from .matrix_core import IntMatrix, spectral_data

INDETERMINATE = "Indeterminate"
CRITICAL_TOL = 1e-12
UNIMODULAR_TOL = 1e-9

HYPERBOLIC_LOW = "hyperbolic-low-tau"
HYPERBOLIC_HIGH = "hyperbolic-high-tau"
CRITICAL = "critical"
EXPANDING = "expanding"
UPPER_BOUND = "upper-bound"


@dataclass(frozen=True)
class DimensionQuery:
    exponents: tuple[float, ...]
    tau: float

    def __post_init__(self):
        l = tuple(float(x) for x in self.exponents)
        if not l:
            raise DomainError("exponent list must be nonempty")
        if any(b < a for a, b in zip(l, l[1:])):
            raise DomainError("exponents must be sorted ascending")
        if self.tau < 0:
            raise DomainError("tau must be >= 0")
        object.__setattr__(self, "exponents", l)


@dataclass(frozen=True)
class DimensionResult:
    value: float | str
    attaining_index: int | float | None
    branch: str
    notes: str = ""

    @property
    def indeterminate(self) -> bool:
        return self.value == INDETERMINATE

    def as_dict(self) -> dict:
        return {"value": self.value, "attaining_index": self.attaining_index,
                "branch": self.branch, "notes": self.notes}


@dataclass(frozen=True)
class PartitionK:
    t: float
    K1: frozenset[int]
    K2: frozenset[int]
    K3: frozenset[int]

    @classmethod
    def build(cls, l: Sequence[float], tau: float, t: float) -> "PartitionK":
        idx = range(1, len(l) + 1)
        K1 = frozenset(j for j in idx if l[j - 1] >= t)
        K2 = frozenset(j for j in idx if l[j - 1] + tau <= t) - K1
        K3 = frozenset(idx) - K1 - K2
        return cls(t, K1, K2, K3)


def hyperbolic_2d_dimension(l1: float, l2: float, tau: float,
                            unimodular: bool | None = None) -> DimensionResult:
    """Dimension of W_tau for a 2x2 matrix with |lambda_1| < 1 < |lambda_2|.

    ``unimodular`` says whether |det A| = 1; when omitted it is inferred from
    |l1 + l2| < 1e-9.
    """
    if not (l1 < 0 < l2):
        raise DomainError(f"need l1 < 0 < l2, got l1={l1}, l2={l2}")
    if tau < 0:
        raise DomainError("tau must be >= 0")
    if unimodular is None:
        unimodular = abs(l1 + l2) < UNIMODULAR_TOL
    low = 2 * l2 / (tau + l2)
    if abs(tau + l1) <= CRITICAL_TOL * max(1.0, abs(l1)):
        if unimodular:
            return DimensionResult(
                INDETERMINATE, None, CRITICAL,
                "critical tau = -l1 with |det A| = 1: depends on the choice of z_n "
                "(value 1 and value 0 are both attainable)")
        return DimensionResult(2 * l2 / (l2 - l1), 2, CRITICAL,
                               "continuity value at tau = -l1 (|det A| > 1)")
    if tau < -l1:
        return DimensionResult(low, 2, HYPERBOLIC_LOW)
    high = (0.0 if unimodular else l1 + l2) / (tau + l1)
    if high <= low:
        return DimensionResult(high, 1, HYPERBOLIC_HIGH)
    return DimensionResult(low, 2, HYPERBOLIC_HIGH)


def upper_bound_dimension(l: Sequence[float], tau: float) -> DimensionResult:
    """min over k with tau + l_k > 0 of (k l_k + sum_{j>k} l_j) / (tau + l_k)."""
    q = DimensionQuery(tuple(l), tau)
    l = q.exponents
    best, arg = math.inf, None
    for k in range(1, len(l) + 1):
        denom = tau + l[k - 1]
        if denom <= 0:
            continue
        val = (k * l[k - 1] + sum(l[k:])) / denom
        if val < best:
            best, arg = val, k
    if arg is None:
        raise NoValidIndex("no index k with tau + l_k > 0")
    return DimensionResult(best, arg, UPPER_BOUND, "upper bound only")


def _pos(x: float) -> float:
    return x if x > 0 else 0.0


def expanding_dimension(l: Sequence[float], tau: float) -> DimensionResult:
    q = DimensionQuery(tuple(l), tau)
    l = q.exponents
    if any(x <= 0 for x in l):
        raise DomainError("expanding formula needs every l_j > 0")
    best, arg = math.inf, None
    for k in range(1, len(l) + 1):
        lk = l[k - 1]
        # k l_k + sum_{j>k} l_j - sum_j (l_j - l_k - tau)_+ = k l_k + sum_{j>k} min(l_j, l_k + tau);
        # summing per-index ratios makes tau = 0 give exactly d
        den = tau + lk
        val = math.fsum([lk / den] * k + [min(lj, lk + tau) / den for lj in l[k:]])
        if val < best:
            best, arg = val, k
    return DimensionResult(best, arg, EXPANDING)


def partition_dimension(l: Sequence[float], tau: float) -> DimensionResult:
    """Same value as ``expanding_dimension`` via the K1/K2/K3 partition form."""
    q = DimensionQuery(tuple(l), tau)
    l = q.exponents
    if any(x <= 0 for x in l):
        raise DomainError("partition formula needs every l_j > 0")
    candidates = sorted(set(l) | {x + tau for x in l})
    best, arg = math.inf, None
    for t in candidates:
        P = PartitionK.build(l, tau, t)
        val = (len(P.K1) + len(P.K2)
               + (sum(l[j - 1] for j in P.K3) - len(P.K2) * tau) / t)
        if val < best:
            best, arg = val, t
    return DimensionResult(best, arg, EXPANDING, "partition form")


@dataclass
class ProfilePoint:
    tau: float
    result: DimensionResult


@dataclass
class DimensionProfile:
    matrix: IntMatrix
    kind: str
    points: list[ProfilePoint] = field(default_factory=list)
    discontinuity: float | None = None

    def rows(self) -> list[dict]:
        return [{"tau": p.tau, "value": p.result.value, "branch": p.result.branch,
                 "attaining_index": p.result.attaining_index} for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "value", "branch", "attaining_index"])
        for r in self.rows():
            idx = "" if r["attaining_index"] is None else r["attaining_index"]
            w.writerow([repr(r["tau"]), r["value"] if isinstance(r["value"], str)
                        else repr(r["value"]), r["branch"], idx])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "kind": self.kind,
                "discontinuity": self.discontinuity, "points": self.rows()}


def classify(A: IntMatrix) -> str:
    sd = spectral_data(A)
    l = sd.exponents
    if sd.is_expanding:
        return "expanding"
    if A.dim == 2 and l[0] < 0 < l[1] and sd.is_hyperbolic:
        return "hyperbolic-2d"
    if sd.is_hyperbolic:
        return "hyperbolic"
    return "unsupported"


def dimension_for(A: IntMatrix, tau: float, upper_only: bool = False) -> DimensionResult:
    return dimension_profile(A, [tau], upper_only=upper_only).points[0].result


def dimension_profile(A: IntMatrix, tau_grid: Iterable[float],
                      upper_only: bool = False) -> DimensionProfile:
    sd = spectral_data(A)
    l = sd.exponents
    kind = classify(A)
    if upper_only:
        kind = "upper-bound"
    elif kind == "unsupported":
        raise Unsupported(
            "matrix has eigenvalue on the unit circle; only upper bound available "
            "via `dim --upper-only`")
    prof = DimensionProfile(A, kind)
    unimodular = abs(sd.det) == 1
    if kind == "hyperbolic-2d" and unimodular:
        prof.discontinuity = -l[0]
    for tau in tau_grid:
        tau = float(tau)
        if kind == "expanding":
            res = expanding_dimension(l, tau)
        elif kind == "hyperbolic-2d":
            res = hyperbolic_2d_dimension(l[0], l[1], tau, unimodular=unimodular)
        else:
            res = upper_bound_dimension(l, tau)
        prof.points.append(ProfilePoint(tau, res))
    return prof
