"""Semidefinite-relaxed SINR constraints over a sector grid.

With F = f f^H every quadratic |a^H f|^2 becomes the linear form Tr(a a^H F).
All constraints are stored as normalized deficits

    d_k(X) = coef_k . x + const_k      (satisfied iff d_k <= 0)

over the stacked Hermitian parameters x of X_s, X_1..X_U where F_k = s_k X_k.
The block scales s_k keep both beams at unit order. Activating the tag needs
the communication beams to leave almost nothing toward the grid, and serving
a user needs the sensing beam to leave almost nothing toward that user; the
two null depths trade off through the power split, and balancing them puts
the communication blocks at ``P sqrt(gamma_u / gamma_t)``. Each block is then
expressed in a basis that magnifies the directions it must avoid (see
:func:`shrink_basis`), so that the leakages are of unit order too.
Rows are ordered: tag rows (one per point), reader rows (one per point),
user rows (point-major, then user), and finally the power row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conic import herm_from_params, herm_to_params, quadform_coeffs
from ..model import SystemParams
from .grid import SectorGrid

TAG, READER, USER, POWER = 0, 1, 2, 3


@dataclass
class SdrForms:
    num_antennas: int
    num_users: int
    num_points: int
    coef: np.ndarray      # (D, (U+1) M^2)
    const: np.ndarray     # (D,)
    big_m: np.ndarray     # (D,) upper bound of d_k under the budget (y rows only)
    kind: np.ndarray      # (D,) TAG / READER / USER / POWER
    point: np.ndarray     # (D,) grid index, -1 for the power row
    user: np.ndarray      # (D,) user index, -1 otherwise
    total_power: float
    scales: np.ndarray    # (U+1,) watts per unit of each block
    bases: np.ndarray     # (U+1, M, M) congruences T_k with F_k = s_k T_k X_k T_k^H
    implied: np.ndarray | None = None  # (D,) rows implied by another row for every F

    @property
    def num_rows(self) -> int:
        return self.const.size

    @property
    def block(self) -> int:
        return self.num_antennas ** 2

    @property
    def num_vars(self) -> int:
        return (self.num_users + 1) * self.block

    def y_rows(self) -> np.ndarray:
        return np.flatnonzero((self.kind == TAG) | (self.kind == READER))

    def active_rows(self, y, drop_implied: bool = True) -> np.ndarray:
        """Rows enforced for indicator vector y (tag/reader rows only where y_i = 1).

        Rows implied by another active row are left out unless
        ``drop_implied`` is False; the feasible set is the same either way.
        """
        y = np.asarray(y)
        on = np.ones(self.num_rows, dtype=bool)
        yr = self.y_rows()
        on[yr] = y[self.point[yr]] > 0.5
        if drop_implied and self.implied is not None:
            on &= ~self.implied
        return np.flatnonzero(on)

    def deficits(self, x: np.ndarray) -> np.ndarray:
        return self.coef @ x + self.const

    def stack(self, Fs: np.ndarray, Fu: np.ndarray) -> np.ndarray:
        """Scaled parameters x of (Fs, Fu)."""
        parts = []
        for k, F in enumerate([Fs, *Fu]):
            Ti = np.linalg.inv(self.bases[k])
            parts.append(herm_to_params(Ti @ F @ Ti.conj().T / self.scales[k]))
        return np.concatenate(parts)

    def unstack(self, x: np.ndarray):
        n, M = self.block, self.num_antennas
        Fk = []
        for k in range(self.num_users + 1):
            T = self.bases[k]
            X = herm_from_params(x[k * n:(k + 1) * n], M)
            Fk.append(self.scales[k] * (T @ X @ T.conj().T))
        return Fk[0], np.array(Fk[1:]).reshape(self.num_users, M, M)


SPAN_RTOL = 1e-2   # singular values kept when spanning the grid channels


def comm_scale(user_channels: np.ndarray, params: SystemParams) -> np.ndarray:
    """Per-user power scale balancing the tag-side and user-side null depths.

    Clipped below by what a lone user needs and above by the budget.
    """
    Hu = np.asarray(user_channels, dtype=complex)
    P = params.total_power
    need = params.gamma_user * params.sigma2_user / np.sum(np.abs(Hu) ** 2, axis=1)
    balanced = P * np.sqrt(params.gamma_user / params.gamma_tag)
    return np.clip(np.maximum(need, balanced), 0.0, P)


def shrink_basis(directions: np.ndarray, shrink: float, rtol: float = 0.0) -> np.ndarray:
    """T = (I - Q Q^H) + shrink * Q Q^H with Q spanning the given rows.

    A covariance that must leave almost no power along Q has, in the
    coordinates X = T^{-1} F T^{-H}, a leakage of unit order. Singular
    directions below ``rtol`` times the largest are left out of Q.
    """
    A = np.asarray(directions, dtype=complex)
    M = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(M, dtype=complex)
    U_, sv, _ = np.linalg.svd(A.T, full_matrices=False)
    Q = U_[:, sv > rtol * sv[0]] if sv[0] > 0 else U_[:, :0]
    Pq = Q @ Q.conj().T
    return np.eye(M) - Pq + shrink * Pq


def _trace_coeffs(T: np.ndarray) -> np.ndarray:
    """Coefficients of Tr(T X T^H) = Tr(T^H T X) on the parameters of X."""
    lam, V = np.linalg.eigh(T.conj().T @ T)
    return lam @ quadform_coeffs(V.T)


def sdr_sinr_forms(grid: SectorGrid, user_channels: np.ndarray, params: SystemParams,
                   scales=None, shrink=None, comm_shrink=None) -> SdrForms:
    """Normalized linear deficit rows for every grid point, user and the budget.

    ``scales``, ``shrink`` and ``comm_shrink`` override the conditioning
    defaults; they change the coordinates only, never the feasible set.
    """
    G = grid.channels
    N, M = G.shape
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, M)
    U = Hu.shape[0]
    n = M * M
    P = params.total_power
    eta = params.backscatter_efficiency
    s2t, s2r, s2u = params.sigma2_tag, params.sigma2_reader, params.sigma2_user
    gt, gr, gu = params.gamma_tag, params.gamma_reader, params.gamma_user

    if scales is None:
        scales = np.concatenate([[P], comm_scale(Hu, params)]) if U else np.array([P])
    scales = np.asarray(scales, dtype=float)
    su = scales[1:].min() if U else P
    if shrink is None:
        shrink = np.sqrt(min(1.0, su / (gu * P))) if U else 1.0
    if comm_shrink is None:
        comm_shrink = np.sqrt(min(1.0, P / (gt * su)))
    bases = np.array([shrink_basis(Hu, shrink)]
                     + [shrink_basis(G, comm_shrink, SPAN_RTOL)] * U)

    # per-block quadratic forms Tr(a a^H F_k) = s_k Tr((T^H a)(T^H a)^H X_k)
    qg = [scales[k] * quadform_coeffs(G @ bases[k].conj()) for k in range(U + 1)]
    qh = [scales[k] * quadform_coeffs(Hu @ bases[k].conj()) if U else None
          for k in range(U + 1)]
    tr = [scales[k] * _trace_coeffs(bases[k]) for k in range(U + 1)]
    a = np.sum(np.abs(G) ** 2, axis=1)       # |w^H g|^2 with the matched combiner

    D = 2 * N + U * N + 1
    implied = np.zeros(D, dtype=bool)
    coef = np.zeros((D, (U + 1) * n))
    const = np.ones(D)
    big_m = np.zeros(D)
    kind = np.empty(D, dtype=int)
    point = np.full(D, -1)
    user = np.full(D, -1)

    def blk(k):
        return slice(k * n, (k + 1) * n)

    # tag activation
    for i in range(N):
        r = i
        coef[r, blk(0)] = -qg[0][i] / (gt * s2t)
        for u in range(U):
            coef[r, blk(1 + u)] = qg[1 + u][i] / s2t
        big_m[r] = 1.0 + a[i] * P / s2t
        kind[r], point[r] = TAG, i
    # reader detection
    for i in range(N):
        r = N + i
        nr = gr * (eta * s2t * a[i] + s2r)
        coef[r, blk(0)] = -eta * a[i] * qg[0][i] / nr
        for u in range(U):
            coef[r, blk(1 + u)] = gr * eta * a[i] * qg[1 + u][i] / nr
        big_m[r] = 1.0 + gr * eta * a[i] * a[i] * P / nr
        kind[r], point[r] = READER, i
        # inside the downlink-dominated range the tag row implies this one
        implied[r] = (gt - gr) * s2t >= gr * s2r / (eta * a[i])
    # users, with the backscatter of grid point i
    for i in range(N):
        for u in range(U):
            r = 2 * N + i * U + u
            bs = eta * abs(grid.tag_user[i, u]) ** 2
            nu = gu * (bs * s2t + s2u)
            for k in range(U + 1):
                coef[r, blk(k)] = gu * (qh[k][u] + bs * qg[k][i]) / nu
            coef[r, blk(1 + u)] = (gu * bs * qg[1 + u][i] - qh[1 + u][u]) / nu
            kind[r], point[r], user[r] = USER, i, u
    # budget
    for k in range(U + 1):
        coef[D - 1, blk(k)] = tr[k] / P
    const[D - 1] = -1.0
    kind[D - 1] = POWER
    return SdrForms(M, U, N, coef, const, big_m, kind, point, user, P, scales, bases, implied)


def sdr_sinrs(Fs, Fu, g, user_channels, h_tu, params: SystemParams):
    """(tag, reader, users) SINRs written with traces of the covariances."""
    G = np.outer(g, g.conj())
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, g.size)
    eta = params.backscatter_efficiency
    s2t = params.sigma2_tag
    tr = lambda A, F: float(np.real(np.trace(A @ F)))  # noqa: E731
    S = tr(G, Fs)
    I = sum(tr(G, F) for F in Fu)
    a = float(np.vdot(g, g).real)
    tag = S / (I + s2t)
    reader = eta * a * S / (eta * a * I + eta * s2t * a + params.sigma2_reader)
    users = []
    for u in range(Hu.shape[0]):
        H = np.outer(Hu[u], Hu[u].conj())
        inter = sum(tr(H, Fu[l]) for l in range(len(Fu)) if l != u) + tr(H, Fs)
        bs = eta * abs(h_tu[u]) ** 2 * (S + I + s2t)
        users.append(tr(H, Fu[u]) / (inter + bs + params.sigma2_user))
    return tag, reader, tuple(users)
