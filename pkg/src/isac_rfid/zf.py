"""Zero-forcing single-tag design with closed-form power allocation.

Directions come from the channel pseudo-inverse, so the sensing beam is
invisible to every user and each communication beam is invisible to the tag
and to the other users. Powers then follow from the active SINR constraints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .conic import ConicProblem, Status, solve_conic
from .model import (BeamformingSolution, GeometryError, PolarPosition, SystemParams,
                    los_channel, matched_combiner, realized_sinrs, tag_user_channel)

RANK_TOL = 1e-9


class DegenerateGeometryError(GeometryError):
    """Tag and user channels are (numerically) linearly dependent."""


class UnreachableTagError(ValueError):
    """The sensing direction has no gain toward the tag."""


@dataclass
class ZfDirections:
    sensing: np.ndarray          # unit M-vector
    comm: np.ndarray             # (U, M), unit rows
    tag_gain: float              # |g^H fs|^2
    user_gains: np.ndarray       # |h_u^H fu|^2


class Dominant(enum.Enum):
    TAG_ACTIVATION = "tag"
    READER_DETECTION = "reader"


@dataclass
class DominantConstraint:
    which: Dominant
    required_sensing_power: float
    tag_bound: float
    reader_bound: float


@dataclass
class PowerAllocation:
    """Powers for fixed beam directions. ``status`` is Optimal or Infeasible."""

    status: Status
    sensing: float = np.nan
    comm: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def total(self) -> float:
        return float(self.sensing + np.sum(self.comm)) if self.feasible else np.nan


def zf_directions(g: np.ndarray, user_channels: np.ndarray) -> ZfDirections:
    """Normalized columns of H (H^H H)^{-1} for H = [g, h_1, ..., h_U]."""
    g = np.asarray(g, dtype=complex)
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, g.size)
    H = np.column_stack([g, Hu.T])
    M, K = H.shape
    if K > M:
        raise DegenerateGeometryError(f"{K} channels cannot be separated with {M} antennas")
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise DegenerateGeometryError("tag and user channels are collinear")
    cols = H @ np.linalg.inv(H.conj().T @ H)
    # project each column once more onto the complement of the other channels
    # so the nulls sit at round-off level regardless of conditioning
    for j in range(K):
        others = np.delete(H, j, axis=1)
        if others.shape[1]:
            Q, _ = np.linalg.qr(others)
            cols[:, j] -= Q @ (Q.conj().T @ cols[:, j])
        cols[:, j] /= np.linalg.norm(cols[:, j])
    fs, fu = cols[:, 0], cols[:, 1:].T.copy()
    return ZfDirections(
        sensing=fs,
        comm=fu,
        tag_gain=float(abs(np.vdot(g, fs)) ** 2),
        user_gains=np.array([abs(np.vdot(Hu[u], fu[u])) ** 2 for u in range(Hu.shape[0])]),
    )


def dominant_constraint(g, sensing_dir, combiner, params: SystemParams) -> DominantConstraint:
    """Larger of the two sensing-power floors (tag activation, reader detection)."""
    a = abs(np.vdot(g, sensing_dir)) ** 2
    if a == 0.0:
        raise UnreachableTagError("sensing direction is orthogonal to the tag channel")
    wg = abs(np.vdot(combiner, g)) ** 2
    eta, s2t, s2r = params.backscatter_efficiency, params.sigma2_tag, params.sigma2_reader
    tag_bound = params.gamma_tag * s2t / a
    reader_bound = params.gamma_reader * (eta * s2t * wg + s2r) / (eta * wg * a)
    if tag_bound >= reader_bound:
        return DominantConstraint(Dominant.TAG_ACTIVATION, tag_bound, tag_bound, reader_bound)
    return DominantConstraint(Dominant.READER_DETECTION, reader_bound, tag_bound, reader_bound)


def closed_form_power(dirs: ZfDirections, g, h_tu, params: SystemParams) -> PowerAllocation:
    """Minimum powers when tag activation dominates and the ZF nulls hold."""
    eta, s2t = params.backscatter_efficiency, params.sigma2_tag
    gt, gu = params.gamma_tag, params.gamma_user
    Ps = gt * s2t / dirs.tag_gain
    h_tu = np.atleast_1d(np.asarray(h_tu, dtype=complex))
    Pu = gu * (eta * np.abs(h_tu) ** 2 * s2t * (gt + 1.0) + params.sigma2_user) / dirs.user_gains
    if Ps + Pu.sum() > params.total_power:
        return PowerAllocation(Status.INFEASIBLE)
    return PowerAllocation(Status.OPTIMAL, float(Ps), Pu)


def comm_powers_for_sensing(Ps, dirs: ZfDirections, g, user_channels, h_tu,
                            params: SystemParams) -> np.ndarray:
    """Comm powers making every user constraint active for a given P_s.

    Solves the U x U linear system of the active user constraints; under exact
    ZF nulls it is diagonal.
    """
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, g.size)
    U = Hu.shape[0]
    eta, gu = params.backscatter_efficiency, params.gamma_user
    h_tu = np.atleast_1d(np.asarray(h_tu, dtype=complex))
    cross = np.abs(Hu.conj() @ dirs.comm.T) ** 2        # [u, l] = |h_u^H f_l|^2
    at_tag = np.abs(dirs.comm.conj() @ g) ** 2          # |g^H f_l|^2
    A = np.zeros((U, U))
    rhs = np.zeros(U)
    for u in range(U):
        bs = eta * abs(h_tu[u]) ** 2
        A[u] = -gu * (cross[u] + bs * at_tag)
        A[u, u] = cross[u, u] - gu * bs * at_tag[u]
        rhs[u] = gu * (Ps * abs(np.vdot(Hu[u], dirs.sensing)) ** 2
                       + bs * (Ps * dirs.tag_gain + params.sigma2_tag) + params.sigma2_user)
    return np.linalg.solve(A, rhs)


def power_allocation_lp(dirs: ZfDirections, g, user_channels, h_tu, combiner,
                        params: SystemParams) -> PowerAllocation:
    """Minimum total power for fixed unit directions, as a linear program."""
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, g.size)
    U = Hu.shape[0]
    eta = params.backscatter_efficiency
    s2t, s2r, s2u = params.sigma2_tag, params.sigma2_reader, params.sigma2_user
    gt, gr, gu = params.gamma_tag, params.gamma_reader, params.gamma_user
    P = params.total_power
    h_tu = np.atleast_1d(np.asarray(h_tu, dtype=complex))
    a_s = abs(np.vdot(g, dirs.sensing)) ** 2
    a_u = np.abs(dirs.comm.conj() @ g) ** 2
    wg = abs(np.vdot(combiner, g)) ** 2
    cross = np.abs(Hu.conj() @ dirs.comm.T) ** 2
    leak_s = np.abs(Hu.conj() @ dirs.sensing) ** 2

    # variables p = powers / P; each row divided by its noise constant
    prob = ConicProblem(1 + U)
    prob.c[:] = 1.0
    rows, rhs = [], []
    rows.append(np.concatenate([[-a_s], gt * a_u]) * P / (gt * s2t))
    rhs.append(-1.0)
    rd = gr * (eta * s2t * wg + s2r)
    rows.append(np.concatenate([[-eta * wg * a_s], gr * eta * wg * a_u]) * P / rd)
    rhs.append(-1.0)
    for u in range(U):
        bs = eta * abs(h_tu[u]) ** 2
        noise = gu * (bs * s2t + s2u)
        row = np.concatenate([[gu * (leak_s[u] + bs * a_s)], gu * (cross[u] + bs * a_u)])
        row[1 + u] = gu * bs * a_u[u] - cross[u, u]
        rows.append(row * P / noise)
        rhs.append(-1.0)
    rows.append(np.ones(1 + U))
    rhs.append(1.0)
    prob.add_inequality(np.array(rows), rhs, "sinr_and_budget")
    prob.add_inequality(-np.eye(1 + U), np.zeros(1 + U), "nonneg")
    res = solve_conic(prob)
    if res.status is Status.INFEASIBLE:
        return PowerAllocation(Status.INFEASIBLE)
    if not res.optimal:
        from .conic import SolverError
        raise SolverError("power allocation LP failed",
                          res.residuals.as_dict() if res.residuals else None)
    p = np.maximum(res.x, 0.0) * P
    return PowerAllocation(Status.OPTIMAL, float(p[0]), p[1:])


def zf_beams(g, user_channels, h_tu, params: SystemParams):
    """ZF directions and minimum powers; returns ``(solution or None, dominant)``."""
    Hu = np.asarray(user_channels, dtype=complex).reshape(-1, np.size(g))
    dirs = zf_directions(g, Hu)
    w = matched_combiner(g)
    dom = dominant_constraint(g, dirs.sensing, w, params)
    if dom.which is Dominant.TAG_ACTIVATION:
        alloc = closed_form_power(dirs, g, h_tu, params)
        Ps, Pu = alloc.sensing, alloc.comm
        if not alloc.feasible:
            return None, dom
    else:
        Ps = dom.required_sensing_power
        Pu = comm_powers_for_sensing(Ps, dirs, g, Hu, h_tu, params)
        if np.any(Pu < 0) or Ps + Pu.sum() > params.total_power:
            return None, dom
    sol = BeamformingSolution(np.sqrt(Ps) * dirs.sensing,
                              np.sqrt(Pu)[:, None] * dirs.comm, w)
    sol.sinrs = realized_sinrs(sol, g, Hu, h_tu, params)
    return sol, dom


def zf_solution(tag_pos: PolarPosition, user_positions, params: SystemParams):
    """End-to-end ZF design for one tag; ``None`` when the budget is exceeded.

    Raises
    ------
    DegenerateGeometryError
        If the tag lies on a user's ray (collinear channels).
    """
    g = los_channel(params, tag_pos)
    Hu = np.array([los_channel(params, u) for u in user_positions]).reshape(-1, g.size)
    h_tu = np.array([tag_user_channel(tag_pos, u, params.wavelength) for u in user_positions])
    sol, _ = zf_beams(g, Hu, h_tu, params)
    return sol
