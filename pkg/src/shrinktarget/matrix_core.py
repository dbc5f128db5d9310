"""Exact integer matrices and the spectral / singular-value data of A and A^n."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import DomainError, SingularMatrix
from .polynomials import cyclotomic, divides, euler_phi, squarefree_decomposition

MAX_DIM = 8
UNIT_CIRCLE_TOL = 1e-9
ROOT_DPS = 40  # ~133-bit mantissa for root finding


@dataclass(frozen=True)
class IntMatrix:
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in r) for r in self.rows)
        d = len(rows)
        if d < 1 or d > MAX_DIM:
            raise DomainError(f"dimension must be in 1..{MAX_DIM}, got {d}")
        if any(len(r) != d for r in rows):
            raise DomainError("matrix must be square")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def identity(cls, d: int) -> "IntMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))

    @classmethod
    def diag(cls, *entries: int) -> "IntMatrix":
        d = len(entries)
        return cls(tuple(tuple(entries[i] if i == j else 0 for j in range(d))
                         for i in range(d)))

    @classmethod
    def block_diag(cls, *blocks: "IntMatrix") -> "IntMatrix":
        d = sum(b.dim for b in blocks)
        rows = [[0] * d for _ in range(d)]
        off = 0
        for b in blocks:
            for i in range(b.dim):
                for j in range(b.dim):
                    rows[off + i][off + j] = b.rows[i][j]
            off += b.dim
        return cls(tuple(map(tuple, rows)))

    @property
    def dim(self) -> int:
        return len(self.rows)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        d = self.dim
        b = other.rows
        return IntMatrix(tuple(
            tuple(sum(r[k] * b[k][j] for k in range(d)) for j in range(d))
            for r in self.rows))

    def apply(self, vec: Sequence) -> tuple:
        """Exact matrix-vector product (ints or Fractions)."""
        return tuple(sum(a * v for a, v in zip(r, vec)) for r in self.rows)

    def transpose(self) -> "IntMatrix":
        return IntMatrix(tuple(zip(*self.rows)))

    def is_symmetric(self) -> bool:
        return self.rows == self.transpose().rows

    def mod(self, m: int) -> np.ndarray:
        """Entries reduced mod m as an int64 array (m must fit comfortably in int64)."""
        return np.array([[v % m for v in r] for r in self.rows], dtype=np.int64)

    def to_numpy(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def tolist(self) -> list[list[int]]:
        return [list(r) for r in self.rows]

    @property
    def det(self) -> int:
        return _bareiss_det(self.rows)

    def __str__(self):
        return ";".join(",".join(str(v) for v in r) for r in self.rows)


def _bareiss_det(rows) -> int:
    m = [list(r) for r in rows]
    d = len(m)
    sign, prev = 1, 1
    for k in range(d - 1):
        if m[k][k] == 0:
            for i in range(k + 1, d):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, d):
            for j in range(k + 1, d):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[d - 1][d - 1]


def parse_matrix(value) -> IntMatrix:
    """Accept ``"2,1;1,1"``, a JSON string ``"[[2,1],[1,1]]"``, or nested lists."""
    if isinstance(value, IntMatrix):
        return value
    if isinstance(value, str):
        s = value.strip()
        if s.startswith("["):
            value = json.loads(s)
        else:
            try:
                value = [[int(v) for v in row.split(",")] for row in s.split(";")]
            except ValueError as exc:
                raise DomainError(f"cannot parse matrix {value!r}") from exc
    try:
        return IntMatrix(tuple(tuple(int(v) for v in r) for r in value))
    except TypeError as exc:
        raise DomainError(f"cannot parse matrix {value!r}") from exc


def char_poly(A: IntMatrix) -> tuple[int, ...]:
    """det(xI - A), highest degree first, by Faddeev-LeVerrier over the integers."""
    d = A.dim
    coeffs = [1]
    M = [[0] * d for _ in range(d)]
    c = 1
    for k in range(1, d + 1):
        # M_k = A M_{k-1} + c_{d-k+1} I
        M = [[sum(A.rows[i][t] * M[t][j] for t in range(d)) for j in range(d)]
             for i in range(d)]
        for i in range(d):
            M[i][i] += c
        AM = [[sum(A.rows[i][t] * M[t][j] for t in range(d)) for j in range(d)]
              for i in range(d)]
        tr = sum(AM[i][i] for i in range(d))
        assert tr % k == 0
        c = -tr // k
        coeffs.append(c)
    return tuple(coeffs)


def matrix_power_exact(A: IntMatrix, n: int) -> IntMatrix:
    if n < 0:
        raise DomainError("n must be nonnegative")
    result = IntMatrix.identity(A.dim)
    base = A
    while n:
        if n & 1:
            result = result @ base
        base = base @ base
        n >>= 1
    return result


def has_root_of_unity_eigenvalue(coeffs: Sequence[int]) -> bool:
    """Exact test: some cyclotomic polynomial of degree <= deg divides coeffs."""
    d = len(coeffs) - 1
    # phi(m) >= sqrt(m/2) bounds the search
    for m in range(1, 2 * d * d + 3):
        if euler_phi(m) <= d and divides(cyclotomic(m), coeffs):
            return True
    return False


@dataclass(frozen=True)
class SpectralData:
    moduli: tuple[float, ...]
    exponents: tuple[float, ...]
    total: float
    is_expanding: bool
    is_hyperbolic: bool
    has_root_of_unity: bool
    char_poly: tuple[int, ...]
    eigenvalues: tuple[complex, ...] = field(repr=False, default=())
    det: int = 0

    @property
    def dim(self) -> int:
        return len(self.moduli)

    def as_dict(self) -> dict:
        return {
            "moduli": list(self.moduli),
            "exponents": list(self.exponents),
            "total": self.total,
            "is_expanding": self.is_expanding,
            "is_hyperbolic": self.is_hyperbolic,
            "has_root_of_unity": self.has_root_of_unity,
            "char_poly": list(self.char_poly),
            "det": self.det,
        }


def _roots_with_multiplicity(coeffs) -> list:
    roots = []
    with mpmath.workdps(ROOT_DPS):
        for factor, mult in squarefree_decomposition(coeffs):
            if len(factor) == 2:
                rs = [mpmath.mpf(-factor[1]) / factor[0]]
            else:
                rs = mpmath.polyroots(list(factor), maxsteps=400, extraprec=200)
            roots.extend(r for r in rs for _ in range(mult))
    return roots


def spectral_data(A: IntMatrix, tol: float = UNIT_CIRCLE_TOL) -> SpectralData:
    det = A.det
    if det == 0:
        raise SingularMatrix("matrix is singular (det A = 0)")
    coeffs = char_poly(A)
    roots = _roots_with_multiplicity(coeffs)
    with mpmath.workdps(ROOT_DPS):
        pairs = sorted(((abs(r), r) for r in roots), key=lambda t: t[0])
        moduli = tuple(float(m) for m, _ in pairs)
        exponents = tuple(float(mpmath.log(m)) for m, _ in pairs)
        eig = tuple(complex(r) for _, r in pairs)
    total = math.log(abs(det))
    return SpectralData(
        moduli=moduli,
        exponents=exponents,
        total=total,
        is_expanding=all(l > tol for l in exponents),
        is_hyperbolic=all(abs(l) >= tol for l in exponents),
        has_root_of_unity=has_root_of_unity_eigenvalue(coeffs),
        char_poly=coeffs,
        eigenvalues=eig,
        det=det,
    )


@dataclass(frozen=True)
class SingularProfile:
    n: int
    log_sigma: tuple[float, ...]
    # columns are right / left singular vectors, ordered like log_sigma
    right_vectors: np.ndarray | None = field(default=None, repr=False, compare=False)
    left_vectors: np.ndarray | None = field(default=None, repr=False, compare=False)


class _GradedProduct:
    """Running factorisation A^k = Q diag(exp(g)) T kept in log scale.

    Each step multiplies by A, pre-pivots columns by their log norm, and
    re-orthogonalises with a Householder QR.  T stays bounded because the
    column grading is kept (nearly) descending.
    """

    def __init__(self, A: IntMatrix):
        self.A = A.to_numpy()
        d = A.dim
        self.Q = np.eye(d)
        self.g = np.zeros(d)
        self.T = np.eye(d)
        self.k = 0

    def step(self):
        C = self.A @ self.Q
        norms = np.linalg.norm(C, axis=0)
        key = np.log(norms) + self.g
        perm = np.argsort(-key, kind="stable")
        Cp = C[:, perm]
        gp = self.g[perm]
        Q, R = np.linalg.qr(Cp)
        s = np.sign(np.diag(R))
        s[s == 0] = 1.0
        Q = Q * s
        R = s[:, None] * R
        diag = np.diag(R)
        expo = gp[None, :] - gp[:, None]
        F = np.triu(R / diag[:, None] * np.exp(np.minimum(expo, 700.0)))
        self.Q = Q
        self.g = np.log(diag) + gp
        self.T = F @ self.T[perm, :]
        self.k += 1

    def singular(self, want_vectors: bool = False):
        g, T = self.g, self.T
        spread = float(g.max() - g.min()) if g.size else 0.0
        dps = int(spread / math.log(10)) + 30
        with mpmath.workdps(dps):
            G = mpmath.matrix(T.shape[0], T.shape[1])
            for i in range(T.shape[0]):
                scale = mpmath.exp(mpmath.mpf(float(g[i])))
                for j in range(T.shape[1]):
                    G[i, j] = scale * mpmath.mpf(float(T[i, j]))
            if want_vectors:
                Ug, S, Vh = mpmath.svd_r(G, compute_uv=True)
            else:
                S = mpmath.svd_r(G, compute_uv=False)
                Vh = None
            logs = [float(mpmath.log(S[i])) for i in range(len(S))]
            order = np.argsort(logs, kind="stable")
            log_sigma = tuple(logs[i] for i in order)
            vecs = None
            if Vh is not None:
                V = np.array([[float(Vh[i, j]) for j in range(Vh.cols)]
                              for i in range(Vh.rows)])
                Ul = np.array([[float(Ug[i, j]) for j in range(Ug.cols)]
                               for i in range(Ug.rows)])
                vecs = (V[order, :].T, self.Q @ Ul[:, order])
        return log_sigma, vecs


def _check_invertible(A: IntMatrix):
    if A.det == 0:
        raise SingularMatrix("matrix is singular (det A = 0)")


def log_singular_values(A: IntMatrix, n: int, vectors: bool = False) -> SingularProfile:
    """Logs of the singular values of A^n, ascending, without forming A^n in floats."""
    _check_invertible(A)
    if n < 0:
        raise DomainError("n must be nonnegative")
    gp = _GradedProduct(A)
    for _ in range(n):
        gp.step()
    logs, vecs = gp.singular(want_vectors=vectors)
    right, left = vecs if vecs is not None else (None, None)
    return SingularProfile(n=n, log_sigma=logs, right_vectors=right, left_vectors=left)


def log_singular_series(A: IntMatrix, n_max: int) -> list[SingularProfile]:
    _check_invertible(A)
    gp = _GradedProduct(A)
    out = []
    for n in range(1, n_max + 1):
        gp.step()
        logs, _ = gp.singular()
        out.append(SingularProfile(n=n, log_sigma=logs))
    return out


def semiaxis_ratio_report(A: IntMatrix, n_max: int) -> list[float]:
    """max_k |log sigma_{n,k} - n l_k| / n for n = 1..n_max."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    _check_invertible(A)
    l = spectral_data(A).exponents
    report = []
    for prof in log_singular_series(A, n_max):
        n = prof.n
        report.append(max(abs(s - n * lk) for s, lk in zip(prof.log_sigma, l)) / n)
    return report


def inverse_rational(A: IntMatrix) -> list[list[Fraction]]:
    """Exact inverse by Gauss-Jordan over the rationals."""
    d = A.dim
    m = [[Fraction(v) for v in r] + [Fraction(int(i == j)) for j in range(d)]
         for i, r in enumerate(A.rows)]
    for col in range(d):
        piv = next((r for r in range(col, d) if m[r][col] != 0), None)
        if piv is None:
            raise SingularMatrix("matrix is singular (det A = 0)")
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        for r in range(d):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return [row[d:] for row in m]
