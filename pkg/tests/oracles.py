"""Slow, obviously-correct reference implementations used only by the tests.

Everything here works on plain Python lists and scalar loops (or mpmath for
the high-precision regression) and shares no code with the package.
"""

import mpmath


def relative_holdings_loop(H):
    F, C = len(H), len(H[0])
    total = 0.0
    for i in range(F):
        for j in range(C):
            total += H[i][j]
    out = [[0.0] * C for _ in range(F)]
    for i in range(F):
        row = 0.0
        for j in range(C):
            row += H[i][j]
        for j in range(C):
            col = 0.0
            for k in range(F):
                col += H[k][j]
            out[i][j] = (H[i][j] / row) / (col / total)
    return out


def reflections_loop(M, n_max):
    """k_F[i][n], k_C[j][n] by the textbook recursion, isolated nodes left at 0."""
    F, C = len(M), len(M[0])
    kf = [[0.0] * (n_max + 1) for _ in range(F)]
    kc = [[0.0] * (n_max + 1) for _ in range(C)]
    for i in range(F):
        kf[i][0] = float(sum(1 for j in range(C) if M[i][j]))
    for j in range(C):
        kc[j][0] = float(sum(1 for i in range(F) if M[i][j]))
    for n in range(1, n_max + 1):
        for i in range(F):
            if kf[i][0] > 0:
                s = 0.0
                for j in range(C):
                    if M[i][j]:
                        s += kc[j][n - 1]
                kf[i][n] = s / kf[i][0]
        for j in range(C):
            if kc[j][0] > 0:
                s = 0.0
                for i in range(F):
                    if M[i][j]:
                        s += kf[i][n - 1]
                kc[j][n] = s / kc[j][0]
    return kf, kc


def cohen_delta_loop(H, alpha):
    F, C = len(H), len(H[0])
    rows = [sum(H[i]) for i in range(F)]
    cols = [sum(H[i][j] for i in range(F)) for j in range(C)]
    out = []
    for i in range(F):
        d = 0.0
        for j in range(C):
            if H[i][j] == 0:
                continue
            w = H[i][j] / rows[i]
            inner = 0.0
            for k in range(F):
                inner += H[k][j] / cols[j] * alpha[k]
            d += w * inner
        out.append(d)
    return out


def ols_mp(X, y, dps=60):
    """Intercept-inclusive OLS coefficients via normal equations in mpmath."""
    mpmath.mp.dps = dps
    n, k = len(X), len(X[0])
    A = mpmath.matrix(k, k)
    b = mpmath.matrix(k, 1)
    for r in range(n):
        for p in range(k):
            b[p] += mpmath.mpf(X[r][p]) * mpmath.mpf(y[r])
            for q in range(k):
                A[p, q] += mpmath.mpf(X[r][p]) * mpmath.mpf(X[r][q])
    sol = mpmath.lu_solve(A, b)
    return [float(sol[p]) for p in range(k)]
