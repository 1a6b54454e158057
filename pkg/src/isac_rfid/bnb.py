"""Binary linear programs by depth-first branch-and-bound.

Problem form::

    min  c_y' y + c_w' w
    s.t. A_y y + A_w w <= b
         y in {0, 1}^n,  w_lo <= w <= w_hi

LP relaxations are solved with HiGHS through ``scipy.optimize.linprog``;
branching is deterministic (lowest-index most-fractional variable, 0-branch
explored first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .conic import Status

INT_TOL = 1e-9
PRUNE_TOL = 1e-9


class UnboundedMasterError(RuntimeError):
    """The LP relaxation is unbounded (e.g. a master with no optimality cut)."""


@dataclass
class BinaryLpResult:
    status: Status
    y: np.ndarray | None
    w: np.ndarray | None
    objective: float
    nodes: int = 0


def _relax(c, A, b, bounds):
    if A.shape[0] == 0:
        A, b = None, None
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    return res


def solve_binary_lp(c_y, c_w, A_y, A_w, b, w_bounds=None, max_nodes: int = 200_000
                    ) -> BinaryLpResult:
    """Exact optimum of a binary LP with a few continuous variables.

    Raises
    ------
    UnboundedMasterError
        If the root relaxation is unbounded.
    """
    c_y = np.asarray(c_y, dtype=float).ravel()
    c_w = np.asarray(c_w, dtype=float).ravel()
    n, k = c_y.size, c_w.size
    A_y = np.asarray(A_y, dtype=float).reshape(-1, n)
    A_w = np.asarray(A_w, dtype=float).reshape(A_y.shape[0], k)
    b = np.asarray(b, dtype=float).ravel()
    if not (A_y.shape[0] == A_w.shape[0] == b.size):
        raise ValueError("row counts of A_y, A_w and b differ")
    if w_bounds is None:
        w_bounds = [(None, None)] * k
    c = np.concatenate([c_y, c_w])
    A = np.hstack([A_y, A_w])

    best_obj, best = np.inf, None
    # each node is a tuple of (lo, hi) bound arrays on y
    stack = [(np.zeros(n), np.ones(n))]
    nodes = 0
    root = True
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise RuntimeError(f"branch-and-bound exceeded {max_nodes} nodes")
        bounds = list(zip(lo, hi)) + list(w_bounds)
        res = _relax(c, A, b, bounds)
        if res.status == 3 or (root and res.status == 4 and "unbounded" in res.message.lower()):
            raise UnboundedMasterError("LP relaxation of the binary program is unbounded")
        root = False
        if res.status != 0:
            continue    # infeasible node
        if res.fun >= best_obj - PRUNE_TOL:
            continue
        y = res.x[:n]
        frac = np.minimum(y - np.floor(y), np.ceil(y) - y)
        if np.all(frac <= INT_TOL):
            yi = np.round(y)
            fixed = _relax(c, A, b, list(zip(yi, yi)) + list(w_bounds))
            if fixed.status == 0 and fixed.fun < best_obj - PRUNE_TOL:
                best_obj = float(fixed.fun)
                best = (yi.astype(int), fixed.x[n:].copy())
            continue
        j = int(np.argmax(frac))            # first index among ties
        lo1, hi0 = lo.copy(), hi.copy()
        lo1[j] = 1.0
        hi0[j] = 0.0
        stack.append((lo1, hi))             # explored second
        stack.append((lo, hi0))             # explored first
    if best is None:
        return BinaryLpResult(Status.INFEASIBLE, None, None, np.inf, nodes)
    return BinaryLpResult(Status.OPTIMAL, best[0], best[1], best_obj, nodes)


def enumerate_binary_lp(c_y, c_w, A_y, A_w, b, w_bounds=None) -> BinaryLpResult:
    """Brute-force oracle over all 2^n binary vectors (small n only)."""
    c_y = np.asarray(c_y, dtype=float).ravel()
    n = c_y.size
    if n > 16:
        raise ValueError("enumeration limited to n <= 16")
    c_w = np.asarray(c_w, dtype=float).ravel()
    k = c_w.size
    A_y = np.asarray(A_y, dtype=float).reshape(-1, n)
    A_w = np.asarray(A_w, dtype=float).reshape(A_y.shape[0], k)
    b = np.asarray(b, dtype=float).ravel()
    if w_bounds is None:
        w_bounds = [(None, None)] * k
    best_obj, best = np.inf, None
    for code in range(2 ** n):
        y = np.array([(code >> i) & 1 for i in range(n)], dtype=float)
        rhs = b - A_y @ y
        if k == 0:
            if np.all(rhs >= -1e-12):
                obj = float(c_y @ y)
                w = np.zeros(0)
            else:
                continue
        else:
            res = _relax(c_w, A_w, rhs, list(w_bounds))
            if res.status == 3:
                raise UnboundedMasterError("unbounded for some binary assignment")
            if res.status != 0:
                continue
            obj, w = float(c_y @ y + res.fun), res.x
        if obj < best_obj - PRUNE_TOL:
            best_obj, best = obj, (y.astype(int), w)
    if best is None:
        return BinaryLpResult(Status.INFEASIBLE, None, None, np.inf, 2 ** n)
    return BinaryLpResult(Status.OPTIMAL, best[0], best[1], best_obj, 2 ** n)


def tighten_row(a, e, b, w_lo, w_hi, max_rounds: int = 10):
    """Coefficient tightening of ``a'y + e*w <= b`` over binary y, w in [w_lo, w_hi].

    The returned row has the same binary-feasible set but a tighter LP
    relaxation; coefficients whose magnitude exceeds what can ever matter are
    clipped.
    """
    a = np.array(a, dtype=float)
    b = float(b)
    w_max = max(e * w_lo, e * w_hi)
    for _ in range(max_rounds):
        changed = False
        maxact = float(np.sum(np.maximum(a, 0.0))) + w_max
        if maxact <= b:
            break       # redundant row, nothing to gain
        for j in range(a.size):
            if a[j] > 0 and maxact - a[j] < b:
                d = b - (maxact - a[j])
                a[j] -= d
                b -= d
                maxact -= d
                changed = True
            elif a[j] < 0 and maxact + a[j] < b:
                a[j] = b - maxact
                changed = True
        if not changed:
            break
    return a, b
