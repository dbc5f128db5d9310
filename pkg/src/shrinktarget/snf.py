"""Smith normal form of a square integer matrix with unimodular transforms."""

from __future__ import annotations


def _swap_rows(m, i, j):
    m[i], m[j] = m[j], m[i]


def _swap_cols(m, i, j):
    for row in m:
        row[i], row[j] = row[j], row[i]


def _add_row(m, src, dst, f):
    # row_dst += f * row_src
    if f:
        m[dst] = [a + f * b for a, b in zip(m[dst], m[src])]


def _add_col(m, src, dst, f):
    if f:
        for row in m:
            row[dst] += f * row[src]


def smith_normal_form(rows):
    """Return (L, S, R) with L @ M @ R == S diagonal, L and R unimodular.

    S = diag(s_1, ..., s_d) with s_i | s_{i+1} and s_i >= 0.  Equivalently
    M = U S V with U = L^-1, V = R^-1.
    """
    d = len(rows)
    S = [list(r) for r in rows]
    L = [[int(i == j) for j in range(d)] for i in range(d)]
    R = [[int(i == j) for j in range(d)] for i in range(d)]

    for t in range(d):
        while True:
            nz = [(abs(S[i][j]), i, j) for i in range(t, d) for j in range(t, d) if S[i][j]]
            if not nz:
                break
            _, pi, pj = min(nz)
            if pi != t:
                _swap_rows(S, t, pi)
                _swap_rows(L, t, pi)
            if pj != t:
                _swap_cols(S, t, pj)
                _swap_cols(R, t, pj)
            p = S[t][t]
            dirty = False
            for i in range(t + 1, d):
                if S[i][t]:
                    q = S[i][t] // p
                    _add_row(S, t, i, -q)
                    _add_row(L, t, i, -q)
                    dirty |= S[i][t] != 0
            for j in range(t + 1, d):
                if S[t][j]:
                    q = S[t][j] // p
                    _add_col(S, t, j, -q)
                    _add_col(R, t, j, -q)
                    dirty |= S[t][j] != 0
            if dirty:
                continue
            bad = next(((i, j) for i in range(t + 1, d) for j in range(t + 1, d)
                        if S[i][j] % p), None)
            if bad is None:
                break
            _add_row(S, bad[0], t, 1)
            _add_row(L, bad[0], t, 1)
        if S[t][t] < 0:
            S[t] = [-v for v in S[t]]
            L[t] = [-v for v in L[t]]
    return L, [S[i][i] for i in range(d)], R
