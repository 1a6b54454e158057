"""Conic programs in the form ``min c'x  s.t.  b - A x in K``.

``K`` is a product of zero, nonnegative, second-order and PSD cones. The
numerical engine is Clarabel; this module owns the modelling helpers
(Hermitian blocks through their real embedding), status mapping and an
independent KKT check of whatever the engine returns.
"""

from __future__ import annotations

import enum
import functools
import json
import logging
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
GAP_TOL = 1e-6

_SQRT2 = np.sqrt(2.0)


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class SolverError(RuntimeError):
    """The engine failed; ``residuals`` carries the KKT report."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass
class ConeBlock:
    kind: str           # "zero" | "nonneg" | "soc" | "psd"
    A: sp.csr_matrix
    b: np.ndarray
    label: str
    size: int           # matrix order for psd, row count otherwise

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass
class Residuals:
    primal: float
    dual: float
    gap: float
    complementarity: float
    cone: float

    def as_dict(self):
        return dict(primal=self.primal, dual=self.dual, gap=self.gap,
                    complementarity=self.complementarity, cone=self.cone)

    def certified(self) -> bool:
        return (self.primal <= FEAS_TOL and self.dual <= FEAS_TOL and self.gap <= GAP_TOL
                and self.cone <= FEAS_TOL)


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None
    objective: float
    duals: dict[str, np.ndarray] = field(default_factory=dict)
    slacks: dict[str, np.ndarray] = field(default_factory=dict)
    residuals: Residuals | None = None
    engine_status: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _as_rows(A, ncols: int) -> sp.csr_matrix:
    if sp.issparse(A):
        A = A.tocsr()
    else:
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
    if A.shape[1] != ncols:
        raise ValueError(f"constraint has {A.shape[1]} columns, problem has {ncols} variables")
    return A


class ConicProblem:
    """Linear objective over a real vector, conic constraints on affine maps.

    Constraints are stored in the engine's native orientation ``b - A x in K``;
    the ``add_*`` helpers accept the more readable forms below.
    """

    def __init__(self, num_vars: int):
        self.num_vars = int(num_vars)
        self.c = np.zeros(self.num_vars)
        self.blocks: list[ConeBlock] = []

    # -- constraint helpers -------------------------------------------------

    def _add(self, kind, A, b, label, size=None):
        A = _as_rows(A, self.num_vars)
        b = np.asarray(b, dtype=float).ravel()
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"{label}: A has {A.shape[0]} rows, b has {b.shape[0]}")
        if any(blk.label == label for blk in self.blocks):
            raise ValueError(f"duplicate constraint label {label!r}")
        blk = ConeBlock(kind, A, b, label, A.shape[0] if size is None else size)
        self.blocks.append(blk)
        return blk

    def add_equality(self, A, b, label):
        """A x = b."""
        return self._add("zero", A, b, label)

    def add_inequality(self, A, b, label):
        """A x <= b; the dual is the usual nonnegative Lagrange multiplier."""
        return self._add("nonneg", A, b, label)

    def add_soc(self, A, b, label):
        """(b - A x)[0] >= ||(b - A x)[1:]||."""
        return self._add("soc", A, b, label)

    def add_psd(self, A, b, order, label):
        """smat(b - A x) is PSD; rows follow the scaled upper-triangle order."""
        if A.shape[0] != order * (order + 1) // 2:
            raise ValueError("psd block row count does not match its order")
        return self._add("psd", A, b, label, size=order)

    def block(self, label) -> ConeBlock:
        for blk in self.blocks:
            if blk.label == label:
                return blk
        raise KeyError(label)

    # -- assembly -----------------------------------------------------------

    def standard_form(self):
        if not self.blocks:
            raise ValueError("problem has no constraints")
        A = sp.vstack([blk.A for blk in self.blocks], format="csc")
        b = np.concatenate([blk.b for blk in self.blocks])
        cones = []
        for blk in self.blocks:
            if blk.kind == "zero":
                cones.append(clarabel.ZeroConeT(blk.rows))
            elif blk.kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(blk.rows))
            elif blk.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(blk.rows))
            elif blk.kind == "psd":
                cones.append(clarabel.PSDTriangleConeT(blk.size))
        return A, b, cones

    def dump(self, path) -> None:
        """Write a self-describing JSON copy of the problem (for debugging)."""
        doc = {"format": "isac-rfid-conic", "version": 1, "num_vars": self.num_vars,
               "c": self.c.tolist(), "blocks": []}
        for blk in self.blocks:
            coo = blk.A.tocoo()
            doc["blocks"].append({
                "label": blk.label, "kind": blk.kind, "size": blk.size,
                "A": {"shape": list(coo.shape), "row": coo.row.tolist(),
                      "col": coo.col.tolist(), "data": coo.data.tolist()},
                "b": blk.b.tolist()})
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "ConicProblem":
        with open(path) as fh:
            doc = json.load(fh)
        prob = cls(doc["num_vars"])
        prob.c = np.asarray(doc["c"], dtype=float)
        for spec in doc["blocks"]:
            a = spec["A"]
            A = sp.coo_matrix((a["data"], (a["row"], a["col"])), shape=tuple(a["shape"]))
            prob._add(spec["kind"], A, spec["b"], spec["label"], size=spec["size"])
        return prob


# ---------------------------------------------------------------------------
# symmetric / Hermitian helpers
# ---------------------------------------------------------------------------

def svec_indices(n: int):
    """(row, col) pairs of the upper triangle in column-major order."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def svec(S: np.ndarray) -> np.ndarray:
    r, c = svec_indices(S.shape[0])
    return np.where(r == c, 1.0, _SQRT2) * S[r, c]


def smat(v: np.ndarray, n: int) -> np.ndarray:
    r, c = svec_indices(n)
    vals = np.where(r == c, 1.0, 1.0 / _SQRT2) * v
    S = np.zeros((n, n))
    S[r, c] = vals
    S[c, r] = vals
    return S


def hermitian_dim(n: int) -> int:
    return n * n


def _herm_layout(n: int):
    iu, ju = np.triu_indices(n, 1)
    return iu, ju


def herm_from_params(p: np.ndarray, n: int) -> np.ndarray:
    """Hermitian matrix from its n^2 real parameters.

    Layout: n diagonal entries, then (Re, Im) of each strictly-upper entry in
    ``np.triu_indices`` order.
    """
    p = np.asarray(p, dtype=float)
    iu, ju = _herm_layout(n)
    F = np.zeros((n, n), dtype=complex)
    F[np.arange(n), np.arange(n)] = p[:n]
    off = p[n:].reshape(-1, 2)
    F[iu, ju] = off[:, 0] + 1j * off[:, 1]
    F[ju, iu] = off[:, 0] - 1j * off[:, 1]
    return F


def herm_to_params(F: np.ndarray) -> np.ndarray:
    n = F.shape[0]
    iu, ju = _herm_layout(n)
    off = np.stack([F[iu, ju].real, F[iu, ju].imag], axis=1).ravel()
    return np.concatenate([np.real(np.diag(F)), off])


def quadform_coeffs(vectors: np.ndarray) -> np.ndarray:
    """Rows ``r_k`` with ``r_k . params(F) = v_k^H F v_k`` for Hermitian F.

    ``vectors`` has shape (K, n); the result has shape (K, n^2).
    """
    V = np.atleast_2d(vectors)
    n = V.shape[1]
    iu, ju = _herm_layout(n)
    diag = np.abs(V) ** 2
    cross = V[:, iu].conj() * V[:, ju]
    off = np.empty((V.shape[0], cross.shape[1] * 2))
    off[:, 0::2] = 2 * cross.real
    off[:, 1::2] = -2 * cross.imag
    return np.concatenate([diag, off], axis=1)


def trace_coeffs(n: int) -> np.ndarray:
    row = np.zeros(n * n)
    row[:n] = 1.0
    return row


def embed(F: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re F, -Im F], [Im F, Re F]]."""
    return np.block([[F.real, -F.imag], [F.imag, F.real]])


@functools.lru_cache(maxsize=None)
def hermitian_embedding_map(n: int) -> sp.csr_matrix:
    """Linear map T with svec(embed(F)) = T params(F) (cached; do not mutate)."""
    cols = []
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        cols.append(svec(embed(herm_from_params(e, n))))
    T = np.stack(cols, axis=1)
    T[np.abs(T) < 1e-15] = 0.0
    return sp.csr_matrix(T)


def hermitian_dual(z: np.ndarray, n: int) -> np.ndarray:
    """Hermitian W with <embed(F), smat(z)> = Re tr(F W) for Hermitian F."""
    Z = smat(z, 2 * n)
    Z11, Z12, Z21, Z22 = Z[:n, :n], Z[:n, n:], Z[n:, :n], Z[n:, n:]
    return (Z11 + Z22) + 1j * (Z21 - Z12)


def add_hermitian_psd(prob: ConicProblem, offset: int, n: int, label: str):
    """Constrain the Hermitian block stored at ``x[offset:offset+n^2]`` to be PSD."""
    T = hermitian_embedding_map(n)
    A = sp.lil_matrix((T.shape[0], prob.num_vars))
    A[:, offset:offset + n * n] = -T
    return prob.add_psd(A.tocsr(), np.zeros(T.shape[0]), 2 * n, label)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

# settings profiles tried in order until the KKT check certifies a result
_PROFILES = (
    dict(),
    dict(iterative_refinement_reltol=1e-14, iterative_refinement_abstol=1e-14,
         iterative_refinement_max_iter=50),
    dict(iterative_refinement_reltol=1e-14, iterative_refinement_abstol=1e-14,
         iterative_refinement_max_iter=50, max_step_fraction=0.9, max_iter=400),
    dict(tol_feas=1e-11, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_infeas_abs=1e-11,
         tol_infeas_rel=1e-11, max_iter=400),
)


def _settings(profile: dict):
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_threads = 1
    st.presolve_enable = False
    st.max_iter = 200
    st.tol_feas = 1e-9
    st.tol_gap_abs = 1e-9
    st.tol_gap_rel = 1e-9
    for key, val in profile.items():
        setattr(st, key, val)
    return st


def cone_violation(blk: ConeBlock, v: np.ndarray) -> float:
    """Distance-like violation of membership ``v in K`` (0 when inside)."""
    if blk.kind == "zero":
        return float(np.max(np.abs(v), initial=0.0))
    if blk.kind == "nonneg":
        return float(max(0.0, -np.min(v, initial=0.0)))
    if blk.kind == "soc":
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    lam = np.linalg.eigvalsh(smat(v, blk.size))
    return float(max(0.0, -lam[0]))


def dual_cone_violation(blk: ConeBlock, z: np.ndarray) -> float:
    if blk.kind == "zero":
        return 0.0
    return cone_violation(blk, z)


def kkt_residuals(prob: ConicProblem, x: np.ndarray, s: np.ndarray, z: np.ndarray) -> Residuals:
    """Relative KKT residuals, computed from scratch out of (x, s, z)."""
    A, b, _ = prob.standard_form()
    Ax = A @ x
    r_p = Ax + s - b
    primal = np.max(np.abs(r_p)) / (1.0 + max(np.max(np.abs(b)), np.max(np.abs(Ax)),
                                              np.max(np.abs(s))))
    ATz = A.T @ z
    r_d = ATz + prob.c
    dual = np.max(np.abs(r_d), initial=0.0) / (
        1.0 + max(np.max(np.abs(prob.c), initial=0.0), np.max(np.abs(ATz), initial=0.0)))
    pobj = float(prob.c @ x)
    dobj = float(-b @ z)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    comp = abs(float(s @ z)) / (1.0 + abs(pobj) + abs(dobj))
    cone = 0.0
    ofs = 0
    for blk in prob.blocks:
        sl = slice(ofs, ofs + blk.rows)
        scale = 1.0 + max(np.max(np.abs(s[sl])), np.max(np.abs(z[sl])))
        cone = max(cone, cone_violation(blk, s[sl]) / scale,
                   dual_cone_violation(blk, z[sl]) / scale)
        ofs += blk.rows
    return Residuals(float(primal), float(dual), float(gap), float(comp), float(cone))


def _run(prob, profile):
    A, b, cones = prob.standard_form()
    P = sp.csc_matrix((prob.num_vars, prob.num_vars))
    solver = clarabel.DefaultSolver(P, prob.c, A, b, cones, _settings(profile))
    return solver.solve()


_INFEASIBLE = {"PrimalInfeasible": Status.INFEASIBLE, "DualInfeasible": Status.UNBOUNDED}


def solve_conic(prob: ConicProblem, settle=None) -> SolveResult:
    """Solve and certify.

    The engine's answer is accepted only if the independently computed KKT
    residuals pass; otherwise the next settings profile is tried. Infeasibility
    is taken from a clean engine certificate; an "almost infeasible" verdict is
    confirmed by a re-solve before it is reported.

    ``settle(result) -> bool`` may stop the profile sequence early on an
    uncertified answer the caller can already use; the result then keeps the
    ``NUMERICAL_FAILURE`` status.
    """

    def split(v):
        out, ofs = {}, 0
        for blk in prob.blocks:
            out[blk.label] = v[ofs:ofs + blk.rows].copy()
            ofs += blk.rows
        return out

    best = None
    almost_infeasible = None
    for profile in _PROFILES:
        sol = _run(prob, profile)
        status = str(sol.status)
        if status in _INFEASIBLE:
            st = _INFEASIBLE[status]
            return SolveResult(st, None, np.inf if st is Status.INFEASIBLE else -np.inf,
                               duals=split(np.asarray(sol.z, dtype=float)),
                               engine_status=status, iterations=sol.iterations)
        if status.startswith("Almost") and "Infeasible" in status:
            if almost_infeasible == status:
                st = Status.INFEASIBLE if "Primal" in status else Status.UNBOUNDED
                return SolveResult(st, None, np.inf if st is Status.INFEASIBLE else -np.inf,
                                   engine_status=status, iterations=sol.iterations)
            almost_infeasible = status
            continue
        x, s_, z = (np.asarray(v, dtype=float) for v in (sol.x, sol.s, sol.z))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            continue
        res = kkt_residuals(prob, x, s_, z)
        cand = SolveResult(Status.OPTIMAL, x, float(prob.c @ x), duals=split(z),
                           slacks=split(s_), residuals=res, engine_status=status,
                           iterations=sol.iterations)
        if res.certified():
            return cand
        if settle is not None and settle(cand):
            cand.status = Status.NUMERICAL_FAILURE
            return cand
        log.debug("profile %s not certified (%s): %s", profile, status, res)
        if best is None or _badness(res) < _badness(best.residuals):
            best = cand
    if best is None:
        return SolveResult(Status.NUMERICAL_FAILURE, None, np.nan, engine_status="no finite iterate")
    best.status = Status.NUMERICAL_FAILURE
    return best


def _badness(res: Residuals) -> float:
    return max(res.primal / FEAS_TOL, res.dual / FEAS_TOL, res.gap / GAP_TOL, res.cone / FEAS_TOL)
