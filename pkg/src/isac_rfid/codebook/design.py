"""Codebook assembly, rank-1 extraction and coverage evaluation.

A sector codeword is the GBD incumbent of that sector turned into beam
vectors. Extraction can break constraints the covariances met, so every
codeword is re-verified with the exact SINRs on its own grid; when a user
constraint fails the communication beams are scaled up within the remaining
budget, and a codeword that still fails is flagged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..conic import SolverError
from ..joint import Designer, SocpInstance, check_feasibility, design_single
from ..model import (GeometryError, PolarPosition, Scenario, SystemParams, los_channels,
                     tag_user_channels)
from .gbd import gbd_sector
from .grid import EmptyGridError, RadiusProfile, SectorGrid, build_grid

log = logging.getLogger(__name__)

PSD_TOL = 1e-8


def rank1_extract(F: np.ndarray) -> np.ndarray:
    """Dominant-eigenvector beam ``sqrt(Tr F) u_1`` with ``|f|^2 = Tr F``.

    The global phase is fixed so that the largest entry is real positive.
    A zero matrix gives a zero vector.

    Raises
    ------
    ValueError
        If F is not Hermitian or has an eigenvalue below ``-1e-8``.
    """
    F = np.asarray(F, dtype=complex)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("F must be a square matrix")
    if not np.allclose(F, F.conj().T, atol=1e-12 * max(1.0, np.abs(F).max())):
        raise ValueError("F must be Hermitian")
    F = 0.5 * (F + F.conj().T)
    w, V = np.linalg.eigh(F)
    if w[0] < -PSD_TOL:
        raise ValueError(f"F is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    tr = float(np.trace(F).real)
    if tr <= 0.0:
        return np.zeros(F.shape[0], dtype=complex)
    u = V[:, -1]
    k = int(np.argmax(np.abs(u)))
    u = u * np.exp(-1j * np.angle(u[k]))
    return math.sqrt(tr) * u


# ---------------------------------------------------------------------------
# codewords
# ---------------------------------------------------------------------------

@dataclass
class Codeword:
    theta_min: float
    theta_max: float
    sensing: np.ndarray                 # (M,)
    comm: np.ndarray                    # (U, M)
    grid_ranges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grid_angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_sdr: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    y_realized: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    users_ok: bool = True
    comm_scale: float = 1.0
    flagged: bool = False
    converged: bool = True
    iterations: int = 0
    bounds: tuple = (np.nan, np.nan)    # final (UBD, LBD)
    error: str | None = None

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.sensing) ** 2) + np.sum(np.abs(self.comm) ** 2))

    @property
    def claimed(self) -> int:
        return int(np.sum(self.y_sdr))

    @property
    def realized(self) -> int:
        return int(np.sum(self.y_realized))


def empty_codeword(theta_min, theta_max, M, U, error=None) -> Codeword:
    return Codeword(float(theta_min), float(theta_max), np.zeros(M, dtype=complex),
                    np.zeros((U, M), dtype=complex), error=error, converged=error is None)


@dataclass
class Codebook:
    kind: str                   # "sector" or "benchmark"
    theta_step: float
    num_antennas: int
    total_power: float
    codewords: list

    def __len__(self):
        return len(self.codewords)

    def beams(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (K, M) sensing and (K, U, M) communication beams."""
        fs = np.array([c.sensing for c in self.codewords])
        fu = np.array([c.comm for c in self.codewords])
        return fs, fu

    @property
    def flagged(self) -> list[int]:
        return [k for k, c in enumerate(self.codewords) if c.flagged]

    @property
    def failed(self) -> list[int]:
        return [k for k, c in enumerate(self.codewords) if c.error]


# ---------------------------------------------------------------------------
# exact link checks for many tags and codewords
# ---------------------------------------------------------------------------

@dataclass
class LinkChecks:
    tag: np.ndarray      # (T, K) tag activation met
    reader: np.ndarray   # (T, K) reader detection met
    users: np.ndarray    # (T, K) every user met under that tag's backscatter

    @property
    def interrogated(self) -> np.ndarray:
        return self.tag & self.reader

    @property
    def success(self) -> np.ndarray:
        return self.tag & self.reader & self.users


def link_checks(fs: np.ndarray, fu: np.ndarray, ranges, angles, scenario: Scenario,
                rtol: float = 1e-6) -> LinkChecks:
    """Exact SINR indicators for T tag positions against K beam sets.

    ``fs`` is (K, M) and ``fu`` (K, U, M). The reader combines with the
    matched filter of each tag.
    """
    p = scenario.params
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    T = ranges.size
    fs = np.asarray(fs, dtype=complex).reshape(-1, p.num_antennas)
    K = fs.shape[0]
    U = len(scenario.users)
    fu = np.asarray(fu, dtype=complex).reshape(K, U, p.num_antennas)
    if T == 0:
        z = np.zeros((0, K), dtype=bool)
        return LinkChecks(z, z, z)
    eta, s2t, s2r, s2u = (p.backscatter_efficiency, p.sigma2_tag, p.sigma2_reader,
                          p.sigma2_user)
    G = los_channels(p, ranges, angles)                        # (T, M)
    a = np.sum(np.abs(G) ** 2, axis=1)[:, None]                # |w^H g|^2, matched w
    S = np.abs(G.conj() @ fs.T) ** 2                           # (T, K)
    I = np.sum(np.abs(np.einsum("tm,kum->tku", G.conj(), fu)) ** 2, axis=2)
    tag = S / (I + s2t)
    reader = eta * a * S / (eta * a * I + eta * s2t * a + s2r)
    ok_t = tag >= p.gamma_tag * (1 - rtol)
    ok_r = reader >= p.gamma_reader * (1 - rtol)
    ok_u = np.ones((T, K), dtype=bool)
    if U:
        H = scenario.user_channels()                           # (U, M)
        through = np.abs(np.einsum("um,klm->kul", H.conj(), fu)) ** 2   # [k, u, l]
        signal = np.einsum("kuu->ku", through)
        inter = through.sum(axis=2) - signal
        leak = np.abs(fs.conj() @ H.T) ** 2                    # (K, U)
        Htu = np.stack([tag_user_channels(p, ranges, angles, u) for u in scenario.users],
                       axis=1)                                 # (T, U)
        bs = eta * np.abs(Htu) ** 2
        back = bs[:, None, :] * (S + I + s2t)[:, :, None]      # (T, K, U)
        user = signal[None] / (inter[None] + leak[None] + back + s2u)
        ok_u = np.all(user >= p.gamma_user * (1 - rtol), axis=2)
    return LinkChecks(ok_t, ok_r, ok_u)


def _verify(sensing, comm, grid: SectorGrid, scenario: Scenario):
    chk = link_checks(sensing[None], comm[None], grid.ranges, grid.angles, scenario)
    return chk.interrogated[:, 0].astype(int), bool(np.all(chk.users[:, 0]))


def restore_users(sensing, comm, grid: SectorGrid, scenario: Scenario):
    """Smallest scale (>= 1) of the comm beams meeting every per-point user row.

    User SINRs grow with the scale, so bisection finds the smallest one that
    fits in the remaining budget. Returns ``(scale, ok)``; scale is 1 when no
    admissible scale helps.
    """
    P = scenario.params.total_power
    pu = float(np.sum(np.abs(comm) ** 2))
    if pu <= 0:
        return 1.0, False
    top = math.sqrt(max((P - float(np.sum(np.abs(sensing) ** 2))) / pu, 1.0))
    if not _verify(sensing, comm * top, grid, scenario)[1]:
        return 1.0, False
    lo, hi = 1.0, top
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _verify(sensing, comm * mid, grid, scenario)[1]:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * hi:
            break
    return hi, True


def finalize_codeword(cw: Codeword, Fs, Fu, grid: SectorGrid, scenario: Scenario) -> Codeword:
    """Extract beams, re-verify on the grid and restore user constraints if needed."""
    cw.sensing = rank1_extract(Fs)
    cw.comm = np.array([rank1_extract(F) for F in Fu]).reshape(len(scenario.users), -1)
    P = scenario.params.total_power
    if cw.total_power > P:                      # round-off from the solver only
        s = math.sqrt(P / cw.total_power)
        cw.sensing, cw.comm = cw.sensing * s, cw.comm * s
    y, users_ok = _verify(cw.sensing, cw.comm, grid, scenario)
    if not users_ok and scenario.users:
        scale, ok = restore_users(cw.sensing, cw.comm, grid, scenario)
        if ok:
            cw.comm = cw.comm * scale
            cw.comm_scale = scale
            y, users_ok = _verify(cw.sensing, cw.comm, grid, scenario)
    cw.y_realized = y
    cw.users_ok = users_ok
    cw.flagged = not users_ok
    return cw


# ---------------------------------------------------------------------------
# designers
# ---------------------------------------------------------------------------

def sector_bounds(theta_step: float) -> list[tuple[float, float]]:
    """[k step, (k+1) step] for k = 0..ceil(180/step)-1, the last one truncated at 180."""
    if not theta_step > 0:
        raise ValueError("theta_step must be positive")
    K = int(math.ceil(180.0 / theta_step - 1e-9))
    return [(round(k * theta_step, 9), round(min((k + 1) * theta_step, 180.0), 9))
            for k in range(K)]


def design_sector(theta_min: float, theta_max: float, scenario: Scenario, radius_fn,
                  epsilon: float = 0.5, n_radial: int = 10, dtheta: float | None = None,
                  max_iter: int = 200) -> Codeword:
    """One codeword: grid, GBD, rank-1 extraction, re-verification."""
    M, U = scenario.num_antennas, len(scenario.users)
    grid = build_grid(theta_min, theta_max, scenario, radius_fn, dtheta, n_radial)
    st = gbd_sector(grid, scenario, epsilon=epsilon, max_iter=max_iter)
    cw = empty_codeword(theta_min, theta_max, M, U)
    cw.grid_ranges, cw.grid_angles = grid.ranges, grid.angles
    cw.converged, cw.iterations, cw.bounds = st.converged, len(st.log), (st.ubd, st.lbd)
    inc = st.incumbent
    if inc is None:
        cw.y_sdr = np.zeros(grid.size, dtype=int)
        cw.y_realized = np.zeros(grid.size, dtype=int)
        cw.error = "no feasible pattern"
        return cw
    cw.y_sdr = inc.y.astype(int)
    return finalize_codeword(cw, inc.Fs, inc.Fu, grid, scenario)


def design_codebook(scenario: Scenario, theta_step: float, epsilon: float = 0.5,
                    radius_fn=None, n_radial: int = 10, max_iter: int = 200,
                    progress=None) -> Codebook:
    """Sector codebook with ``ceil(180 / theta_step)`` codewords.

    Sector failures are recorded on the codeword (zero beams, ``error`` set)
    and the design continues.
    """
    if radius_fn is None:
        radius_fn = RadiusProfile(scenario)
    M, U = scenario.num_antennas, len(scenario.users)
    words = []
    for k, (lo, hi) in enumerate(sector_bounds(theta_step)):
        try:
            cw = design_sector(lo, hi, scenario, radius_fn, epsilon, n_radial,
                               max_iter=max_iter)
        except (EmptyGridError, SolverError, GeometryError) as exc:
            log.warning("sector [%g, %g] failed: %s", lo, hi, exc)
            cw = empty_codeword(lo, hi, M, U, error=f"{type(exc).__name__}: {exc}")
        words.append(cw)
        if progress is not None:
            progress(k, cw)
    return Codebook("sector", float(theta_step), M, scenario.params.total_power, words)


def benchmark_codebook(scenario: Scenario, radius_fn=None, step: float = 1.0) -> Codebook:
    """Point-targeting baseline: the single-tag joint design at (R_theta, theta).

    One codeword per swept angle from 0 to 180 degrees; angles without a
    feasible distance get an empty codeword.
    """
    if radius_fn is None:
        radius_fn = RadiusProfile(scenario)
    M, U = scenario.num_antennas, len(scenario.users)
    words = []
    n = int(round(180.0 / step))
    for th in np.round(np.linspace(0.0, 180.0, n + 1), 9):
        th = float(th)
        R = float(radius_fn(th))
        sol = design_single(PolarPosition(R, th), scenario, Designer.JOINT) if R > 0 else None
        if sol is None:
            words.append(empty_codeword(th, th, M, U, error="no feasible point"))
            continue
        cw = empty_codeword(th, th, M, U)
        cw.sensing, cw.comm = sol.sensing, sol.comm.reshape(U, M)
        cw.grid_ranges, cw.grid_angles = np.array([R]), np.array([th])
        cw.y_sdr = np.ones(1, dtype=int)
        chk = link_checks(cw.sensing[None], cw.comm[None], [R], [th], scenario)
        cw.y_realized = chk.interrogated[:, 0].astype(int)
        cw.users_ok = bool(chk.users[0, 0])
        words.append(cw)
    return Codebook("benchmark", float(step), M, scenario.params.total_power, words)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class Coverage:
    covered: np.ndarray      # (T,) bool
    empty: bool = False

    @property
    def rate(self) -> float:
        return 1.0 if self.covered.size == 0 else float(np.mean(self.covered))


def evaluate_codebook(codebook: Codebook, ranges, angles, scenario: Scenario,
                      rtol: float = 1e-6) -> Coverage:
    """A tag counts if some codeword interrogates it while serving every user.

    With no tags the rate is reported as 1.0 and ``empty`` is set.
    """
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    if ranges.size == 0:
        return Coverage(np.zeros(0, dtype=bool), empty=True)
    fs, fu = codebook.beams()
    chk = link_checks(fs, fu, ranges, angles, scenario, rtol)
    return Coverage(np.any(chk.success, axis=1))


def upper_bound(ranges, angles, scenario: Scenario) -> Coverage:
    """Per-tag joint design with known channels: covered iff that design is feasible."""
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if ranges.size == 0:
        return Coverage(np.zeros(0, dtype=bool), empty=True)
    out = np.zeros(ranges.size, dtype=bool)
    for t, (r, th) in enumerate(zip(ranges, angles)):
        try:
            out[t] = check_feasibility(SocpInstance.at(PolarPosition(float(r), float(th)),
                                                       scenario))
        except GeometryError:
            out[t] = False
    return Coverage(out)


def params_summary(p: SystemParams) -> dict:
    return {"num_antennas": p.num_antennas, "total_power_w": p.total_power,
            "num_users": p.num_users}
