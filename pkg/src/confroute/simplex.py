"""Dense two-phase revised simplex for small LPs.

Solves ``min c@x  s.t.  A_ub@x <= b_ub, A_eq@x == b_eq, 0 <= x <= ub``. It
keeps an explicit basis inverse and prices with Bland's rule, so it is slow
but terminates; use it for desk-scale models and tests, not production runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "Optimal", "Infeasible", "Unbounded", "IterationLimit"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int


def _to_standard(c, A_ub, b_ub, A_eq, b_eq, ub):
    n = len(c)
    rows, rhs = [], []
    kinds = []  # True where a slack column is appended
    for a, b in zip(A_ub, b_ub):
        rows.append(a)
        rhs.append(b)
        kinds.append(True)
    for j in range(n):
        if np.isfinite(ub[j]):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            rhs.append(ub[j])
            kinds.append(True)
    for a, b in zip(A_eq, b_eq):
        rows.append(a)
        rhs.append(b)
        kinds.append(False)
    m = len(rows)
    n_slack = sum(kinds)
    A = np.zeros((m, n + n_slack))
    k = n
    for i, (row, has_slack) in enumerate(zip(rows, kinds)):
        A[i, :n] = row
        if has_slack:
            A[i, k] = 1.0
            k += 1
    b = np.asarray(rhs, dtype=float)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(n_slack)])
    return A, b, cost


def _iterate(A, b, cost, basis, allowed, tol, max_iter):
    """Primal simplex from a feasible basis. Returns (status, basis, iters)."""
    m = A.shape[0]
    it = 0
    while it < max_iter:
        B = A[:, basis]
        Binv = np.linalg.inv(B)
        xb = Binv @ b
        duals = cost[basis] @ Binv
        reduced = cost - duals @ A
        entering = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] < -tol and j not in basis:
                entering = j
                break
        if entering < 0:
            return OPTIMAL, basis, it
        d = Binv @ A[:, entering]
        ratios = np.full(m, np.inf)
        pos = d > tol
        ratios[pos] = xb[pos] / d[pos]
        if not np.any(pos):
            return UNBOUNDED, basis, it
        best = ratios.min()
        # Bland: among ties, leave the lowest-index basic variable
        ties = [i for i in range(m) if pos[i] and ratios[i] <= best + tol]
        leave = min(ties, key=lambda i: basis[i])
        basis = basis.copy()
        basis[leave] = entering
        it += 1
    return ITERATION_LIMIT, basis, it


def solve_dense(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, ub=None, tol=1e-9, max_iter=50_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    A, b, cost = _to_standard(c, A_ub, b_ub, A_eq, b_eq, ub)
    m, N = A.shape
    if m == 0:
        if np.any(c < -tol):
            return SimplexResult(UNBOUNDED, None, None, 0)
        return SimplexResult(OPTIMAL, np.zeros(n), 0.0, 0)

    # phase 1: one artificial per row
    A1 = np.hstack([A, np.eye(m)])
    cost1 = np.concatenate([np.zeros(N), np.ones(m)])
    basis = np.arange(N, N + m)
    allowed = np.ones(N + m, dtype=bool)
    status, basis, it1 = _iterate(A1, b, cost1, basis, allowed, tol, max_iter)
    if status != OPTIMAL:
        return SimplexResult(status, None, None, it1)
    xb = np.linalg.solve(A1[:, basis], b)
    scale = max(1.0, float(np.abs(b).max()))
    if cost1[basis] @ xb > 1e-7 * scale:
        return SimplexResult(INFEASIBLE, None, None, it1)

    # drive remaining (zero-level) artificials out; drop redundant rows
    keep_rows = list(range(m))
    basis = list(basis)
    for pos in range(m):
        if basis[pos] < N:
            continue
        Binv = np.linalg.inv(A1[:, basis])
        row = Binv[pos] @ A
        candidates = [j for j in range(N) if abs(row[j]) > 1e-9 and j not in basis]
        if candidates:
            basis[pos] = candidates[0]
        else:
            keep_rows.remove(pos)
    basis = np.array([basis[i] for i in keep_rows])
    A2, b2 = A[keep_rows], b[keep_rows]
    allowed2 = np.ones(N, dtype=bool)
    status, basis, it2 = _iterate(A2, b2, cost, basis, allowed2, tol, max_iter)
    if status != OPTIMAL:
        return SimplexResult(status, None, None, it1 + it2)
    x = np.zeros(N)
    x[basis] = np.linalg.solve(A2[:, basis], b2)
    x = np.where(np.abs(x) < 1e-12, 0.0, x)
    return SimplexResult(OPTIMAL, x[:n], float(c @ x[:n]), it1 + it2)
