"""Generalized Benders decomposition for one sector.

The mixed problem maximizes the number of covered grid points ``sum(y)``
subject to the SDR constraints of every covered point, the user constraints
at every point, and the budget. For fixed ``y`` the continuous part is a
slack-minimizing SDP (the primal); its multipliers yield linear cuts in
``y`` for a binary master solved by branch-and-bound.

Tag/reader rows are written ``d_k(F) - M_k (1 - y_i) <= alpha_k`` with
``M_k`` an upper bound of ``d_k`` under the budget, so ``c`` is affine and
separable in (F, y) and the Lagrangian at the primal solution is a valid
cut for every ``y``. Rows with ``y_i = 0`` are slack by construction and are
left out of the SDP (their multipliers are zero).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..bnb import solve_binary_lp, tighten_row
from ..conic import (ConicProblem, SolverError, Status, _badness, add_hermitian_psd, herm_from_params,
                     herm_to_params, solve_conic)
from ..model import Scenario
from .grid import SectorGrid
from .sdr import SdrForms, sdr_sinr_forms

log = logging.getLogger(__name__)

FEAS_RTOL = 1e-6      # feasible iff sum(alpha) <= FEAS_RTOL * D
SUPPORT_TOL = 1e-6    # multipliers below this are treated as zero when refining cuts
NEAR_CERTIFIED = 10.0  # accepted residual excess over the certification thresholds
CLEAR_MARGIN = 100.0   # violation this far above the feasibility limit needs no re-solve


@dataclass
class PrimalResult:
    y: np.ndarray
    feasible: bool
    sum_alpha: float        # verified violation at the returned covariances
    alpha: np.ndarray       # (D,) max(d_k, 0), zero on rows left out
    lam: np.ndarray         # (D,), zero on rows left out; all zero if ``usable`` is False
    deficits: np.ndarray    # (D,) d_k at the (PSD-projected) covariances
    x: np.ndarray | None
    Fs: np.ndarray | None
    Fu: np.ndarray | None
    residuals: dict = field(default_factory=dict)
    certified: bool = True  # engine answer passed the KKT check
    usable: bool = True     # multipliers good enough for a Lagrangian cut
    bound: float = 0.0      # engine objective (min sum alpha) used as the cut constant
    hint: np.ndarray | None = None  # (D,) raw multipliers, even when not usable


def _primal_problem(forms: SdrForms, rows: np.ndarray):
    nv, K = forms.num_vars, rows.size
    prob = ConicProblem(nv + K)
    prob.c[nv:] = 1.0
    A = sp.hstack([sp.csr_matrix(forms.coef[rows]), -sp.identity(K)]).tocsr()
    prob.add_inequality(A, -forms.const[rows], "deficit")
    prob.add_inequality(sp.hstack([sp.csr_matrix((K, nv)), -sp.identity(K)]).tocsr(),
                        np.zeros(K), "alpha")
    M = forms.num_antennas
    for k in range(forms.num_users + 1):
        add_hermitian_psd(prob, k * forms.block, M, f"psd{k}")
    return prob


def project_psd(x: np.ndarray, forms: SdrForms) -> np.ndarray:
    """Clip negative eigenvalues of every block (round-off from the engine)."""
    n, M = forms.block, forms.num_antennas
    out = x.copy()
    for k in range(forms.num_users + 1):
        X = herm_from_params(x[k * n:(k + 1) * n], M)
        w, V = np.linalg.eigh(X)
        out[k * n:(k + 1) * n] = herm_to_params((V * np.maximum(w, 0.0)) @ V.conj().T)
    return out


def solve_primal(y, forms: SdrForms) -> PrimalResult:
    """Minimize the total constraint violation for a fixed coverage pattern.

    Feasibility is decided on the returned covariances themselves (after PSD
    projection): the violation ``sum(alpha)`` is recomputed from the deficits.
    Near the user direction barely infeasible patterns make this SDP
    degenerate; engine answers within ``NEAR_CERTIFIED`` times the thresholds
    still give multipliers, worse ones only a verdict (the caller then relies
    on support cuts).

    Raises
    ------
    SolverError
        If the engine returns no iterate at all.
    """
    y = np.asarray(y).astype(int)
    rows = forms.active_rows(y)
    prob = _primal_problem(forms, rows)
    nv, D = forms.num_vars, forms.num_rows

    def clearly_infeasible(r):
        d = forms.deficits(project_psd(r.x[:nv], forms))[rows]
        return float(np.maximum(d, 0.0).sum()) > CLEAR_MARGIN * FEAS_RTOL * D

    res = solve_conic(prob, settle=clearly_infeasible)
    if res.x is None:
        raise SolverError(f"GBD primal failed ({res.status.value}, {res.engine_status})")
    usable = res.optimal or (res.residuals is not None
                             and _badness(res.residuals) <= NEAR_CERTIFIED)
    x = project_psd(res.x[:nv], forms)
    d = forms.deficits(x)
    alpha = np.zeros(D)
    alpha[rows] = np.maximum(d[rows], 0.0)
    sum_alpha = float(alpha.sum())
    feasible = sum_alpha <= FEAS_RTOL * D
    lam = np.zeros(D)
    hint = np.zeros(D)
    hint[rows] = np.maximum(res.duals["deficit"], 0.0)
    if usable:
        lam[rows] = hint[rows]
    elif not feasible:
        log.info("GBD primal not certified (%s); multipliers discarded", res.residuals)
    Fs, Fu = forms.unstack(x)
    return PrimalResult(y, feasible, sum_alpha, alpha, lam, d, x, Fs, Fu,
                        res.residuals.as_dict() if res.residuals else {}, res.optimal, usable,
                        max(float(res.objective), 0.0), hint)


# ---------------------------------------------------------------------------
# cuts
# ---------------------------------------------------------------------------

@dataclass
class Cut:
    """Lagrangian cut anchored at ``y_anchor``.

    value(y) = base - sum_{i in support} weight_i (1 - y_i)

    Optimality cuts read ``omega >= -sum(y) + value(y)``, feasibility cuts
    ``0 >= value(y)``. ``row`` is the tightened master row (a_y, e, b) for
    ``a_y . y + e * omega <= b``.
    """

    kind: str
    y_anchor: np.ndarray
    base: float
    weight: np.ndarray      # (N,) lambda_k M_k summed over each point's y rows
    row: tuple = None

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return self.base - float(self.weight @ (1.0 - y))

    def satisfied(self, y, omega=None, tol=1e-9) -> bool:
        v = self.value(y)
        if self.kind == "feasibility":
            return v <= tol
        return omega >= -float(np.sum(y)) + v - tol


def point_weights(pr: PrimalResult, forms: SdrForms) -> np.ndarray:
    """Per-point coefficient of y_i in the Lagrangian: sum of lambda_k M_k."""
    w = np.zeros(forms.num_points)
    yr = forms.y_rows()
    np.add.at(w, forms.point[yr], pr.lam[yr] * forms.big_m[yr])
    return w


def point_multipliers(pr: PrimalResult, forms: SdrForms, raw: bool = False) -> np.ndarray:
    lam = np.zeros(forms.num_points)
    yr = forms.y_rows()
    src = pr.hint if raw and pr.hint is not None else pr.lam
    np.maximum.at(lam, forms.point[yr], src[yr])
    return lam


def master_row(cut: Cut, n: int):
    """Tightened master inequality for a cut, built in complemented variables.

    On the support S the row is written in z_i = 1 - y_i so that the huge
    big-M weights never meet the O(1) right-hand side; exact coefficient
    tightening then clips them before mapping back to y.
    """
    S = cut.weight > 0
    if cut.kind == "optimality":
        c = np.where(S, 1.0 - cut.weight, -1.0)
        e = -1.0
        b = float(S.sum()) - cut.base
    else:
        c = np.where(S, -cut.weight, 0.0)
        e = 0.0
        b = -cut.base
    c, b = tighten_row(c, e, b, -float(n), np.inf)
    a_y = np.where(S, -c, c)
    b = b - float(c[S].sum())
    return a_y, e, b


def lagrange_cut(pr: PrimalResult, forms: SdrForms) -> Cut:
    kind = "optimality" if pr.feasible else "feasibility"
    base = min(pr.bound, pr.sum_alpha)
    cut = Cut(kind, pr.y.copy(), base, point_weights(pr, forms))
    cut.row = master_row(cut, forms.num_points)
    return cut


def outer_points(y, grid: SectorGrid) -> np.ndarray:
    """Mask of the outermost covered point on every ray."""
    y = np.asarray(y) > 0
    out = np.zeros(y.size, dtype=bool)
    for r in np.unique(grid.ray[y]):
        idx = np.flatnonzero(y & (grid.ray == r))
        out[idx[np.argmax(grid.step[idx])]] = True
    return out


def support_cut(y, grid: SectorGrid | None = None) -> Cut:
    """Excludes every superset of an infeasible pattern.

    Removing covered points only drops constraints, so any pattern covering
    all of ``supp(y)`` is infeasible as well. With ``grid`` the support is
    reduced to the outermost point of each ray: a feasible pattern stays
    feasible when closed inward (see :func:`ray_order_rows`), so covering
    those points alone already implies infeasibility.
    """
    y = np.asarray(y).astype(int)
    on = outer_points(y, grid) if grid is not None else y > 0
    cut = Cut("feasibility", y.copy(), 1.0, on.astype(float))
    cut.row = master_row(cut, y.size)
    return cut


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

@dataclass
class GbdIteration:
    v: int
    y: np.ndarray
    feasible: bool
    sum_alpha: float
    ubd: float
    lbd: float
    master_nodes: int
    probes: int


@dataclass
class GbdState:
    ubd: float
    lbd: float
    epsilon: float
    cuts: list = field(default_factory=list)
    log: list = field(default_factory=list)
    incumbent: PrimalResult | None = None
    converged: bool = False
    primal_solves: int = 0
    shortcuts: int = 0

    @property
    def optimality_cuts(self):
        return [c for c in self.cuts if c.kind == "optimality"]

    @property
    def feasibility_cuts(self):
        return [c for c in self.cuts if c.kind == "feasibility"]

    @property
    def gap(self) -> float:
        return self.ubd - self.lbd


def ray_order_rows(grid: SectorGrid):
    """y_{m+1} <= y_m along every ray.

    Nearer points on a ray see the same beam with a larger gain, so any
    covered pattern can be closed inward without losing feasibility; the
    optimal count is unchanged.
    """
    rows = []
    n = grid.size
    for r in np.unique(grid.ray):
        idx = np.flatnonzero(grid.ray == r)
        idx = idx[np.argsort(grid.step[idx])]
        for a, b in zip(idx[:-1], idx[1:]):
            row = np.zeros(n)
            row[b], row[a] = 1.0, -1.0
            rows.append((row, 0.0))
    return rows


def _solve_master(cuts, extra_rows, n):
    """Extra rows are ``(a, rhs)`` pairs for ``a . y <= rhs``."""
    A_y = [c.row[0] for c in cuts] + [r[0] for r in extra_rows]
    A_w = [[c.row[1]] for c in cuts] + [[0.0]] * len(extra_rows)
    b = [c.row[2] for c in cuts] + [r[1] for r in extra_rows]
    return solve_binary_lp(np.zeros(n), [1.0], np.array(A_y), np.array(A_w), np.array(b),
                           w_bounds=[(-float(n), None)])


class _Oracle:
    """Pattern feasibility with memoization and monotone shortcuts.

    A pattern is known feasible if a stored feasible covariance already meets
    its rows, and known infeasible if it covers the (outer) support of a
    pattern proven infeasible. Every actual solve is recorded in the state:
    feasible ones may improve the incumbent, infeasible ones add a support
    cut.
    """

    def __init__(self, forms: SdrForms, grid: SectorGrid, st: GbdState, ray_order: bool):
        self.forms, self.grid, self.st, self.ray_order = forms, grid, st, ray_order
        self.feasible: list[PrimalResult] = []
        self.infeasible: list[np.ndarray] = []   # masks that imply infeasibility
        self.verdicts: dict[bytes, bool] = {}

    def _record(self, pr: PrimalResult):
        st = self.st
        self.verdicts[pr.y.tobytes()] = pr.feasible
        if pr.feasible:
            self.feasible.append(pr)
            self._improve(pr)
            st.cuts.append(lagrange_cut(pr, self.forms))
        else:
            cut = support_cut(pr.y, self.grid if self.ray_order else None)
            self.infeasible.append(cut.weight > 0)
            st.cuts.append(cut)

    def _improve(self, pr: PrimalResult):
        if -float(pr.y.sum()) < self.st.ubd:
            self.st.ubd = -float(pr.y.sum())
            self.st.incumbent = pr

    def solve(self, y) -> PrimalResult:
        pr = solve_primal(y, self.forms)
        self.st.primal_solves += 1
        self._record(pr)
        return pr

    def verdict(self, y) -> tuple[bool, bool]:
        """(feasible, solved) for pattern y."""
        y = np.asarray(y).astype(int)
        key = y.tobytes()
        if key in self.verdicts:
            return self.verdicts[key], False
        on = y > 0
        if any(np.all(on[m]) for m in self.infeasible):
            self.verdicts[key] = False
            self.st.shortcuts += 1
            return False, False
        rows = self.forms.active_rows(y)
        limit = FEAS_RTOL * self.forms.num_rows
        for known in self.feasible:
            viol = float(np.maximum(known.deficits[rows], 0.0).sum())
            if viol <= limit:
                self.verdicts[key] = True
                self.st.shortcuts += 1
                if -float(y.sum()) < self.st.ubd:
                    self._improve(_reuse(known, y, rows, self.forms))
                return True, False
        return self.solve(y).feasible, True


def _reuse(known: PrimalResult, y, rows, forms: SdrForms) -> PrimalResult:
    """Feasible result for pattern y built from covariances proven for another."""
    alpha = np.zeros(forms.num_rows)
    alpha[rows] = np.maximum(known.deficits[rows], 0.0)
    return PrimalResult(np.asarray(y).astype(int), True, float(alpha.sum()), alpha,
                        np.zeros(forms.num_rows), known.deficits, known.x, known.Fs, known.Fu,
                        known.residuals, known.certified, False, 0.0, None)


MAX_PROBES = 40


def _depths(y, grid: SectorGrid) -> dict:
    y = np.asarray(y) > 0
    return {int(r): int(grid.step[y & (grid.ray == r)].max()) for r in np.unique(grid.ray[y])}


def _pattern(depths: dict, grid: SectorGrid) -> np.ndarray:
    out = np.zeros(grid.size, dtype=int)
    for r, d in depths.items():
        if d > 0:
            out[(grid.ray == r) & (grid.step <= d)] = 1
    return out


def _shrink_core(pr: PrimalResult, oracle: _Oracle) -> int:
    """Search a minimal infeasible pattern inside ``pr.y``; returns solves used.

    Works on ray depths (patterns closed inward): a deletion filter first
    drops every ray not needed for infeasibility, then each remaining depth
    is bisected down to the smallest one that keeps the pattern infeasible.
    Each infeasible verdict contributes its support cut through the oracle.
    Without ray ordering only the multiplier support is tried.
    """
    forms, grid = oracle.forms, oracle.grid
    solves = 0

    def infeasible(y):
        nonlocal solves
        ok, solved = oracle.verdict(y)
        solves += solved
        return not ok

    lam = point_multipliers(pr, forms, raw=True)
    if not oracle.ray_order:
        keep = (pr.y > 0) & (lam >= SUPPORT_TOL * max(lam.max(), 0.0))
        if keep.any() and keep.sum() < (pr.y > 0).sum():
            infeasible(keep.astype(int))
        return solves

    depths = _depths(pr.y, grid)
    if not infeasible(_pattern(depths, grid)):
        return solves
    # deletion filter over rays, weakest multiplier first
    for r in sorted(depths, key=lambda r: lam[grid.ray == r].max()):
        if len(depths) == 1 or solves >= MAX_PROBES:
            break
        trial = {k: v for k, v in depths.items() if k != r}
        if infeasible(_pattern(trial, grid)):
            depths = trial
    # depth bisection on the remaining rays (depth 0 means the ray is dropped,
    # which the filter showed to be feasible unless only one ray is left)
    for r in sorted(depths):
        lo, hi = 0, depths[r]
        while hi - lo > 1 and solves < MAX_PROBES:
            mid = (lo + hi) // 2
            trial = dict(depths)
            trial[r] = mid
            if infeasible(_pattern(trial, grid)):
                hi = mid
            else:
                lo = mid
        depths[r] = hi
    return solves


def gbd_sector(grid: SectorGrid, scenario: Scenario, epsilon: float = 0.5,
               max_iter: int = 200, ray_order: bool = True, refine: bool = True,
               forms: SdrForms | None = None) -> GbdState:
    """Maximize the number of covered grid points of one sector.

    Starts from the empty pattern (always a candidate), alternates primal
    SDPs and master programs until ``UBD - LBD <= epsilon``. Bounds are on
    the minimization form ``-sum(y)``. Infeasible patterns are reduced to a
    small infeasible core whose support cut joins the Lagrangian cut.
    """
    if forms is None:
        forms = sdr_sinr_forms(grid, scenario.user_channels(), scenario.params)
    n = grid.size
    st = GbdState(ubd=np.inf, lbd=-float(n), epsilon=epsilon)
    oracle = _Oracle(forms, grid, st, ray_order)
    extra = ray_order_rows(grid) if ray_order else []
    y = np.zeros(n, dtype=int)
    visited = set()

    for v in range(max_iter):
        visited.add(y.tobytes())
        pr = oracle.solve(y)
        probes = 0
        if not pr.feasible:
            if pr.usable:
                c = lagrange_cut(pr, forms)
                if not c.satisfied(pr.y):
                    st.cuts.append(c)
            if refine:
                probes = _shrink_core(pr, oracle)

        m = _solve_master(st.cuts, extra, n)
        if m.status is not Status.OPTIMAL:
            # every pattern is cut off: nothing (not even y = 0) is feasible
            st.log.append(GbdIteration(v, y.copy(), pr.feasible, pr.sum_alpha, st.ubd, st.lbd,
                                       m.nodes, probes))
            st.converged = st.incumbent is not None
            break
        st.lbd = max(st.lbd, min(float(m.objective), st.ubd))
        st.log.append(GbdIteration(v, y.copy(), pr.feasible, pr.sum_alpha, st.ubd, st.lbd,
                                   m.nodes, probes))
        if st.ubd - st.lbd <= epsilon:
            st.converged = True
            break
        y_next = m.y.astype(int)
        if y_next.tobytes() in visited:
            # cannot happen with exact cuts; guard against round-off by
            # excluding every visited pattern (their values are known)
            log.warning("GBD master repeated a visited pattern; adding no-good rows")
            m = _solve_master(st.cuts, extra + _nogood_rows(visited, n), n)
            if m.status is not Status.OPTIMAL:
                st.lbd = st.ubd
                st.converged = True
                break
            st.lbd = max(st.lbd, min(float(m.objective), st.ubd))
            if st.ubd - st.lbd <= epsilon:
                st.converged = True
                break
            y_next = m.y.astype(int)
        y = y_next
    return st


def _nogood_rows(visited, n):
    """Rows (a, b) excluding each visited pattern: sum_{on} y - sum_{off} y <= |on| - 1."""
    rows = []
    for key in sorted(visited):
        yv = np.frombuffer(key, dtype=int)
        rows.append((np.where(yv > 0, 1.0, -1.0), float(yv.sum()) - 1.0))
    return rows
