"""Independent reference solvers used by the tests."""

import itertools

import numpy as np


def box_qp_active_set(H, g, lo, hi):
    """Minimise 0.5 x^T H x - g^T x over lo <= x <= hi by enumerating every
    lower/upper/free assignment and keeping the one that satisfies KKT."""
    p = len(g)
    lo = np.broadcast_to(np.asarray(lo, float), (p,))
    hi = np.broadcast_to(np.asarray(hi, float), (p,))
    best = None
    for pattern in itertools.product((-1, 0, 1), repeat=p):
        x = np.zeros(p)
        fixed = [j for j in range(p) if pattern[j] != 0]
        free = [j for j in range(p) if pattern[j] == 0]
        for j in fixed:
            x[j] = lo[j] if pattern[j] < 0 else hi[j]
        if free:
            rhs = g[free] - H[np.ix_(free, fixed)] @ x[fixed]
            x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        grad = H @ x - g
        ok = all(
            (pattern[j] == 0 and abs(grad[j]) <= 1e-9)
            or (pattern[j] < 0 and grad[j] >= -1e-9)
            or (pattern[j] > 0 and grad[j] <= 1e-9)
            for j in range(p)
        )
        if ok:
            val = 0.5 * x @ H @ x - g @ x
            if best is None or val < best[0]:
                best = (val, x)
    if best is None:
        raise AssertionError("no KKT point found")
    return best[1]


def pooled_quadratic(oracle):
    """Hessian and linear term of the pooled least-squares objective."""
    a = np.concatenate(oracle.features)
    b = np.concatenate(oracle.targets)
    return a.T @ a / b.size, a.T @ b / b.size
