# Compiled dynamic-programming kernels.  Sequences are int64 letter codes,
# ``K`` is the score matrix and ``g`` a gap table g[0..L] with g[0] = 0 and
# length >= max(m, n).  Unreachable cells hold -inf; g may hold +inf.

import numpy as np
from numba import njit

NEG = -np.inf


@njit(cache=True, nogil=True)
def prune_window(g, runmax):
    """Number of gap lengths worth trying: smallest L with g[L] >= runmax.

    Any predecessor whose gap is at least L contributes a non-positive
    amount and can never beat a fresh start.
    """
    n = g.size
    if not runmax > 0.0:
        return 0
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if g[mid] >= runmax:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, nogil=True)
def local_fill(x, y, K, g, M, Q, Marg, Qarg, trace, prune):
    """Fill the local-alignment tables; returns nothing, tables are written in place.

    M[i, j]: best score of an alignment ending with the match (i, j).
    Q[i, j]: max over j' < j of M[i, j'] - g(j - j' - 1) (argmax in Qarg).
    Marg[i, j]: predecessor row i' or -1 for a fresh start.
    Ties prefer a fresh start, then the smallest i', then the smallest j'.
    """
    m, n = x.size, y.size
    for i in range(m + 1):
        for j in range(n + 1):
            M[i, j] = NEG
            Q[i, j] = NEG
    full = max(m, n) + 1
    runmax = NEG
    for i in range(1, m + 1):
        L = prune_window(g, runmax) if prune else full
        xi = x[i - 1]
        for j in range(1, n + 1):
            best = 0.0
            arg = -1
            lo = i - L
            if lo < 1:
                lo = 1
            for ip in range(lo, i):
                v = Q[ip, j] - g[i - ip - 1]
                if v > best:
                    best = v
                    arg = ip
            M[i, j] = K[xi, y[j - 1]] + best
            if trace:
                Marg[i, j] = arg
        for j in range(1, n + 1):
            if M[i, j] > runmax:
                runmax = M[i, j]
        Lq = prune_window(g, runmax) if prune else full
        for j in range(2, n + 1):
            lo = j - Lq
            if lo < 1:
                lo = 1
            bq = NEG
            aq = -1
            for jp in range(lo, j):
                v = M[i, jp] - g[j - jp - 1]
                if v > bq:
                    bq = v
                    aq = jp
            Q[i, j] = bq
            if trace:
                Qarg[i, j] = aq


@njit(cache=True, nogil=True)
def argmax_corner(M, m, n):
    """Lexicographically smallest (i, j) maximizing M over 1..m x 1..n."""
    best = NEG
    bi, bj = 1, 1
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if M[i, j] > best:
                best = M[i, j]
                bi, bj = i, j
    return best, bi, bj


@njit(cache=True, nogil=True)
def traceback(Marg, Qarg, i, j):
    out = np.empty((min(i, j), 2), np.int64)
    u = 0
    while True:
        out[u, 0] = i
        out[u, 1] = j
        u += 1
        ip = Marg[i, j]
        if ip < 0:
            break
        jp = Qarg[ip, j]
        i, j = ip, jp
    return out[:u][::-1].copy()


@njit(cache=True, nogil=True)
def local_score(x, y, K, g):
    m, n = x.size, y.size
    M = np.empty((m + 1, n + 1))
    Q = np.empty((m + 1, n + 1))
    dummy = np.empty((1, 1), np.int32)
    local_fill(x, y, K, g, M, Q, dummy, dummy, False, True)
    best, _, _ = argmax_corner(M, m, n)
    return best


@njit(cache=True, nogil=True)
def local_scores_batch(X, Y, K, g):
    N, m = X.shape
    n = Y.shape[1]
    out = np.empty(N)
    M = np.empty((m + 1, n + 1))
    Q = np.empty((m + 1, n + 1))
    dummy = np.empty((1, 1), np.int32)
    for r in range(N):
        local_fill(X[r], Y[r], K, g, M, Q, dummy, dummy, False, True)
        best, _, _ = argmax_corner(M, m, n)
        out[r] = best
    return out


@njit(cache=True, nogil=True)
def global_fill(x, y, K, g, M, Q):
    """M[i, j]: best restricted score prefix ending at match (i, j), leading flanks charged."""
    m, n = x.size, y.size
    for i in range(m + 1):
        for j in range(n + 1):
            M[i, j] = NEG
            Q[i, j] = NEG
    for i in range(1, m + 1):
        xi = x[i - 1]
        for j in range(1, n + 1):
            best = -g[i - 1] - g[j - 1]
            for ip in range(1, i):
                v = Q[ip, j] - g[i - ip - 1]
                if v > best:
                    best = v
            M[i, j] = K[xi, y[j - 1]] + best
        for j in range(2, n + 1):
            bq = NEG
            for jp in range(1, j):
                v = M[i, jp] - g[j - jp - 1]
                if v > bq:
                    bq = v
            Q[i, j] = bq


@njit(cache=True, nogil=True)
def finalize(M, g, m, n):
    """max_{i<=m, j<=n} M[i, j] - g(m - i) - g(n - j)."""
    best = NEG
    for i in range(1, m + 1):
        gi = g[m - i]
        for j in range(1, n + 1):
            v = M[i, j] - gi - g[n - j]
            if v > best:
                best = v
    return best


@njit(cache=True, nogil=True)
def finalize_all(M, g, lo, hi, out):
    """out[m - lo, n - lo] = finalize(M, g, m, n) for all lo <= m, n <= hi, in O(hi^3)."""
    F = np.empty((hi + 1, hi + 1))  # F[i, n] = max_{j<=n} M[i, j] - g(n - j)
    for i in range(1, hi + 1):
        for nn in range(1, hi + 1):
            b = NEG
            for j in range(1, nn + 1):
                v = M[i, j] - g[nn - j]
                if v > b:
                    b = v
            F[i, nn] = b
    for mm in range(lo, hi + 1):
        for nn in range(lo, hi + 1):
            b = NEG
            for i in range(1, mm + 1):
                v = F[i, nn] - g[mm - i]
                if v > b:
                    b = v
            out[mm - lo, nn - lo] = b


@njit(cache=True, nogil=True)
def finalize_diag(M, g, lo, hi, out):
    for r in range(lo, hi + 1):
        out[r - lo] = finalize(M, g, r, r)


@njit(cache=True, nogil=True)
def fixed_fill(x, y, K, g, kappa, A, B, Q):
    """Layered DP for exactly ``kappa`` matches with the first one at (1, 1).

    Returns the table (A or B) holding the final layer.
    """
    m, n = x.size, y.size
    for i in range(m + 1):
        for j in range(n + 1):
            A[i, j] = NEG
    A[1, 1] = K[x[0], y[0]]
    prev, cur = A, B
    for t in range(2, kappa + 1):
        for i in range(m + 1):
            for j in range(n + 1):
                Q[i, j] = NEG
                cur[i, j] = NEG
        for ip in range(t - 1, m + 1):
            for j in range(t, n + 1):
                bq = NEG
                for jp in range(t - 1, j):
                    v = prev[ip, jp] - g[j - jp - 1]
                    if v > bq:
                        bq = v
                Q[ip, j] = bq
        for i in range(t, m + 1):
            xi = x[i - 1]
            for j in range(t, n + 1):
                b = NEG
                for ip in range(t - 1, i):
                    v = Q[ip, j] - g[i - ip - 1]
                    if v > b:
                        b = v
                cur[i, j] = K[xi, y[j - 1]] + b
        prev, cur = cur, prev
    return prev


@njit(cache=True, nogil=True)
def fixed_score(x, y, K, g, kappa):
    m, n = x.size, y.size
    A = np.empty((m + 1, n + 1))
    B = np.empty((m + 1, n + 1))
    Q = np.empty((m + 1, n + 1))
    L = fixed_fill(x, y, K, g, kappa, A, B, Q)
    return finalize(L, g, m, n)


@njit(cache=True, nogil=True)
def _decode(idx, base, L, out):
    for p in range(L):
        out[p] = idx % base
        idx //= base


@njit(cache=True, nogil=True)
def fixed_cells_batch(X, Y, K, g, kappa, lo, hi, diag_only, out):
    """G_kappa of every prefix pair (m, n) in [lo, hi]^2 for each sampled full-length pair.

    ``out`` has shape (N, ncells) with cells in row-major (m, n) order, or
    (N, hi - lo + 1) over r for ``diag_only``.
    """
    N = X.shape[0]
    M = hi
    A = np.empty((M + 1, M + 1))
    B = np.empty((M + 1, M + 1))
    Q = np.empty((M + 1, M + 1))
    w = hi - lo + 1
    cell = np.empty((w, w))
    dcell = np.empty(w)
    for r in range(N):
        L = fixed_fill(X[r], Y[r], K, g, kappa, A, B, Q)
        if diag_only:
            finalize_diag(L, g, lo, hi, dcell)
            for c in range(w):
                out[r, c] = dcell[c]
        else:
            finalize_all(L, g, lo, hi, cell)
            for a in range(w):
                for b in range(w):
                    out[r, a * w + b] = cell[a, b]


@njit(cache=True, nogil=True)
def fixed_cells_enum(start, stop, base, logp, K, g, kappa, lo, hi, diag_only, out, logw):
    """Exact enumeration counterpart of ``fixed_cells_batch`` over pair indices [start, stop).

    Pair index encodes x in its low ``hi`` base-|A| digits and y in the high ones.
    ``logw`` receives the log-probability of each enumerated pair.
    """
    M = hi
    x = np.empty(M, np.int64)
    y = np.empty(M, np.int64)
    A = np.empty((M + 1, M + 1))
    B = np.empty((M + 1, M + 1))
    Q = np.empty((M + 1, M + 1))
    w = hi - lo + 1
    cell = np.empty((w, w))
    dcell = np.empty(w)
    span = 1
    for _ in range(M):
        span *= base
    for r in range(stop - start):
        idx = start + r
        _decode(idx % span, base, M, x)
        _decode(idx // span, base, M, y)
        lw = 0.0
        for p in range(M):
            lw += logp[x[p]] + logp[y[p]]
        logw[r] = lw
        L = fixed_fill(x, y, K, g, kappa, A, B, Q)
        if diag_only:
            finalize_diag(L, g, lo, hi, dcell)
            for c in range(w):
                out[r, c] = dcell[c]
        else:
            finalize_all(L, g, lo, hi, cell)
            for a in range(w):
                for b in range(w):
                    out[r, a * w + b] = cell[a, b]


@njit(cache=True, nogil=True)
def gapless_score(x, y, K):
    """Best nonempty contiguous diagonal run score."""
    m, n = x.size, y.size
    best = NEG
    for d in range(-(m - 1), n):
        i = 0 if d >= 0 else -d
        j = d if d >= 0 else 0
        cur = NEG
        while i < m and j < n:
            s = K[x[i], y[j]]
            cur = s if cur < 0.0 else cur + s
            if cur > best:
                best = cur
            i += 1
            j += 1
    return best


@njit(cache=True, nogil=True)
def gapless_scores_batch(X, Y, K):
    N = X.shape[0]
    out = np.empty(N)
    for r in range(N):
        out[r] = gapless_score(X[r], Y[r], K)
    return out


@njit(cache=True, nogil=True)
def global_scores_batch(X, Y, K, g):
    N, m = X.shape
    n = Y.shape[1]
    M = np.empty((m + 1, n + 1))
    Q = np.empty((m + 1, n + 1))
    out = np.empty(N)
    for r in range(N):
        global_fill(X[r], Y[r], K, g, M, Q)
        out[r] = finalize(M, g, m, n)
    return out
