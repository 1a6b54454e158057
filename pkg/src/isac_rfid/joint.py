"""Joint single-tag beamforming by transmit power minimization (SOCP).

Each SINR constraint becomes a second-order cone once the phase of the useful
inner product is rotated to be real and nonnegative. Decision variables are
the real and imaginary parts of all beams scaled by 1/sqrt(P), so the power
budget is a unit ball.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import ConicProblem, SolverError, Status, solve_conic
from .model import (BeamformingSolution, GeometryError, PolarPosition, Scenario,
                    SystemParams, los_channel, matched_combiner, realized_sinrs)


@dataclass
class SocpInstance:
    g: np.ndarray
    user_channels: np.ndarray     # (U, M)
    h_tu: np.ndarray              # (U,)
    params: SystemParams
    combiner: np.ndarray | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=complex)
        self.user_channels = np.asarray(self.user_channels, dtype=complex).reshape(-1, self.g.size)
        self.h_tu = np.atleast_1d(np.asarray(self.h_tu, dtype=complex))
        if self.h_tu.size != self.user_channels.shape[0]:
            raise ValueError("one tag-user channel per user is required")
        if self.combiner is None:
            self.combiner = matched_combiner(self.g)

    @property
    def num_users(self) -> int:
        return self.user_channels.shape[0]

    @classmethod
    def at(cls, tag: PolarPosition, scenario: Scenario) -> "SocpInstance":
        p = scenario.params
        return cls(los_channel(p, tag), scenario.user_channels(),
                   scenario.tag_user_channels(tag), p)


def _re_row(a: np.ndarray) -> np.ndarray:
    """Coefficients of Re(a^H f) on [Re f, Im f]."""
    return np.concatenate([a.real, a.imag])


def _im_row(a: np.ndarray) -> np.ndarray:
    """Coefficients of Im(a^H f) on [Re f, Im f]."""
    return np.concatenate([-a.imag, a.real])


class _Layout:
    """Column offsets: beam k occupies [2Mk, 2M(k+1)); t is last."""

    def __init__(self, M: int, U: int):
        self.M, self.U = M, U
        self.n = 2 * M * (U + 1) + 1
        self.t = self.n - 1

    def beam(self, k: int) -> slice:
        return slice(2 * self.M * k, 2 * self.M * (k + 1))

    def row(self, k: int, coeffs: np.ndarray) -> np.ndarray:
        r = np.zeros(self.n)
        r[self.beam(k)] = coeffs
        return r


def build_socp(inst: SocpInstance) -> tuple[ConicProblem, _Layout]:
    p = inst.params
    M, U = inst.g.size, inst.num_users
    L = _Layout(M, U)
    sqP = math.sqrt(p.total_power)
    eta = p.backscatter_efficiency
    s2t, s2r, s2u = p.sigma2_tag, p.sigma2_reader, p.sigma2_user
    g, H, w = inst.g, inst.user_channels, inst.combiner

    prob = ConicProblem(L.n)
    prob.c[L.t] = 1.0

    # phase rotations: g^H f_s and h_u^H f_u real
    eq = [L.row(0, _im_row(g))] + [L.row(1 + u, _im_row(H[u])) for u in range(U)]
    prob.add_equality(np.array(eq) * sqP, np.zeros(len(eq)), "rotation")

    # epigraph and budget: ||x|| <= t, ||x|| <= 1
    A = sp.vstack([sp.csr_matrix(([-1.0], ([0], [L.t])), shape=(1, L.n)),
                   sp.hstack([-sp.identity(L.n - 1), sp.csr_matrix((L.n - 1, 1))])]).tocsr()
    prob.add_soc(A, np.zeros(L.n), "epigraph")
    prob.add_soc(sp.vstack([sp.csr_matrix((1, L.n)), A[1:]]),
                 np.concatenate([[1.0], np.zeros(L.n - 1)]), "budget")

    def cone(label, lead_row, entries, const, scale):
        """scale * lead(x) >= || [scale_i * entries_i(x), const] ||, all normalized."""
        rows = [lead_row * scale]
        for r in entries:
            rows.append(r * scale)
        A = -np.array(rows)
        b = np.zeros(len(rows) + 1)
        b[-1] = const
        A = np.vstack([A, np.zeros(L.n)])
        prob.add_soc(A, b, label)

    def pair(k, a):
        return [L.row(k, _re_row(a)), L.row(k, _im_row(a))]

    # tag activation: Re(g^H fs) >= sqrt(gt) || [g^H fu..., sigma_t] ||
    lead = L.row(0, _re_row(g)) / math.sqrt(p.gamma_tag)
    ent = [r for u in range(U) for r in pair(1 + u, g)]
    cone("tag", lead, ent, 1.0, sqP / math.sqrt(s2t))

    # reader detection: Re(g^H fs) >= sqrt(gr) || [g^H fu..., n_r] ||
    wg = abs(np.vdot(w, g)) ** 2
    n_r = math.sqrt((eta * s2t * wg + s2r) / (eta * wg))
    lead = L.row(0, _re_row(g)) / math.sqrt(p.gamma_reader)
    ent = [r for u in range(U) for r in pair(1 + u, g)]
    cone("reader", lead, ent, 1.0, sqP / n_r)

    # users: Re(h_u^H fu) >= sqrt(gu) || interference..., n_u ||
    for u in range(U):
        h = H[u]
        bs = math.sqrt(eta) * abs(inst.h_tu[u])
        n_u = math.sqrt(eta * abs(inst.h_tu[u]) ** 2 * s2t + s2u)
        lead = L.row(1 + u, _re_row(h)) / math.sqrt(p.gamma_user)
        ent = [r for l in range(U) if l != u for r in pair(1 + l, h)]
        ent += pair(0, h)
        ent += [r * bs for k in range(U + 1) for r in pair(k, g)]
        cone(f"user{u}", lead, ent, 1.0, sqP / n_u)
    return prob, L


def _beams(x: np.ndarray, L: _Layout, P: float) -> tuple[np.ndarray, np.ndarray]:
    sqP = math.sqrt(P)
    M, U = L.M, L.U
    beams = []
    for k in range(U + 1):
        v = x[L.beam(k)]
        beams.append(sqP * (v[:M] + 1j * v[M:]))
    return beams[0], np.array(beams[1:]).reshape(U, M)


def joint_min_power(inst: SocpInstance) -> BeamformingSolution | None:
    """Minimum-power beams meeting every SINR target; ``None`` if infeasible.

    Raises
    ------
    SolverError
        When the conic engine neither certifies a solution nor infeasibility.
    """
    prob, L = build_socp(inst)
    res = solve_conic(prob)
    if res.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return None
    if not res.optimal:
        raise SolverError("joint SOCP failed", res.residuals.as_dict() if res.residuals else None)
    fs, fu = _beams(res.x, L, inst.params.total_power)
    sol = BeamformingSolution(fs, fu, inst.combiner)
    sol.sinrs = realized_sinrs(sol, inst.g, inst.user_channels, inst.h_tu, inst.params)
    return sol


def check_feasibility(inst: SocpInstance) -> bool:
    """True iff a beam set meeting all SINR targets fits in the budget."""
    sol = joint_min_power(inst)
    return sol is not None and sol.total_power <= inst.params.total_power * (1 + 1e-6)


# ---------------------------------------------------------------------------
# distance sweep
# ---------------------------------------------------------------------------

class Designer(enum.Enum):
    ZF = "zf"
    JOINT = "joint"


@dataclass
class MaxDistance:
    distance: float
    feasible_at_min: bool
    evaluations: int = 0
    trace: list = field(default_factory=list, repr=False)


def design_single(tag: PolarPosition, scenario: Scenario, designer: Designer):
    """Single-tag design; degenerate geometry counts as infeasible (``None``)."""
    from .zf import zf_beams
    try:
        inst = SocpInstance.at(tag, scenario)
        if designer is Designer.JOINT:
            return joint_min_power(inst)
        sol, _ = zf_beams(inst.g, inst.user_channels, inst.h_tu, scenario.params)
        return sol
    except GeometryError:
        return None


def max_interrogation_distance(angle: float, scenario: Scenario,
                               designer: Designer = Designer.JOINT, step: float = 0.25,
                               max_distance: float = 1000.0) -> MaxDistance:
    """Largest feasible tag distance along one ray.

    Steps outward by ``step`` until the design becomes infeasible, then bisects
    the last interval down to ``step / 8``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    n_eval = 0

    def ok(d):
        nonlocal n_eval
        n_eval += 1
        return design_single(PolarPosition(d, angle), scenario, designer) is not None

    if not ok(step):
        return MaxDistance(0.0, False, n_eval)
    lo = step
    while lo + step <= max_distance and ok(lo + step):
        lo += step
    hi = lo + step
    if hi > max_distance:
        return MaxDistance(lo, True, n_eval)
    while hi - lo > step / 8 + 1e-12:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return MaxDistance(lo, True, n_eval)
