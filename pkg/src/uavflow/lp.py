"""Dense phase-one simplex for small linear feasibility problems."""

from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-12


def phase_one(A, b, tol: float = 1e-9, max_iter: int = 10_000):
    """Look for ``x >= 0`` with ``A @ x <= b``.

    Returns ``(x, infeasibility)`` where ``infeasibility`` is the optimal sum
    of artificial variables; ``x`` is None when that sum exceeds ``tol``.
    Bland's rule keeps the tableau from cycling.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    need_art = b < 0
    sign = np.where(need_art, -1.0, 1.0)
    art_rows = np.flatnonzero(need_art)
    k = art_rows.size
    ncols = n + m + k
    T = np.zeros((m, ncols + 1))
    T[:, :n] = A * sign[:, None]
    T[:, n:n + m] = np.diag(sign)
    T[art_rows, n + m + np.arange(k)] = 1.0
    T[:, -1] = b * sign
    basis = np.arange(n, n + m)
    basis[art_rows] = n + m + np.arange(k)

    z = np.zeros(ncols + 1)
    z[n + m:ncols] = 1.0
    z -= T[art_rows].sum(axis=0)

    for _ in range(max_iter):
        entering = np.flatnonzero(z[:ncols] < -tol)
        if entering.size == 0:
            break
        j = entering[0]
        col = T[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            # unbounded direction cannot occur: the objective is bounded below by 0
            break
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-15 * max(1.0, abs(best))]
        r = ties[np.argmin(basis[ties])]
        T[r] /= T[r, j]
        for i in range(m):
            if i != r and T[i, j] != 0.0:
                T[i] -= T[i, j] * T[r]
        z -= z[j] * T[r]
        basis[r] = j
    else:
        raise RuntimeError("phase-one simplex did not terminate")

    infeasibility = max(-z[-1], 0.0)
    if infeasibility > tol:
        return None, infeasibility
    x = np.zeros(ncols)
    x[basis] = T[:, -1]
    return np.clip(x[:n], 0.0, None), infeasibility
