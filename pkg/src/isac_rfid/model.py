"""Physical-layer model for an access point interrogating backscatter tags.

Geometry: a uniform linear array sits along the y-axis at the origin with
boresight along +x. Angles are measured from the +y axis, so boresight is
90 degrees and the half plane in front of the array is [0, 180].

All internal quantities are linear (watts, power ratios). dB only appears in
the conversion helpers and at file boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23


class GeometryError(ValueError):
    """Raised for invalid positions (out-of-range angles, zero distances)."""


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------

def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def noise_power(bandwidth: float, temperature: float, noise_figure_db: float = 0.0) -> float:
    """Thermal noise power k*T*B scaled by the receiver noise figure (watts)."""
    if bandwidth <= 0 or temperature <= 0:
        raise ValueError("bandwidth and temperature must be positive")
    return BOLTZMANN * temperature * bandwidth * float(db_to_linear(noise_figure_db))


# ---------------------------------------------------------------------------
# parameters and geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Link-budget constants for one scenario, in SI units.

    Noise figures are kept in dB because that is how receivers are specified;
    everything else is linear.
    """

    num_antennas: int
    wavelength: float
    total_power: float
    num_users: int = 1
    backscatter_efficiency: float = 0.16
    noise_bandwidth: float = 10e6
    noise_temperature: float = 270.0
    noise_figure_reader: float = 7.0
    noise_figure_user: float = 7.0
    noise_figure_tag: float = 0.0
    tag_sensitivity: float = float(dbm_to_watts(-25.5))
    reader_sensitivity: float = float(dbm_to_watts(-94.0))
    user_sinr_threshold: float = 10.0
    element_spacing: float | None = None

    def __post_init__(self):
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2)
        if self.num_antennas < 1 or self.num_users < 0:
            raise ValueError("num_antennas must be >= 1 and num_users >= 0")
        if self.num_antennas < self.num_users + 1:
            raise ValueError(
                f"need M >= U + 1 antennas, got M={self.num_antennas}, U={self.num_users}")
        for name in ("wavelength", "total_power", "noise_bandwidth", "noise_temperature",
                     "tag_sensitivity", "reader_sensitivity", "user_sinr_threshold",
                     "element_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backscatter_efficiency <= 1:
            raise ValueError("backscatter_efficiency must lie in (0, 1]")

    @property
    def spacing_ratio(self) -> float:
        return self.element_spacing / self.wavelength

    @property
    def sigma2_tag(self) -> float:
        return noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_tag)

    @property
    def sigma2_reader(self) -> float:
        return noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_reader)

    @property
    def sigma2_user(self) -> float:
        return noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_user)

    @property
    def gamma_tag(self) -> float:
        """Tag activation threshold: sensitivity normalized by tag noise."""
        return self.tag_sensitivity / self.sigma2_tag

    @property
    def gamma_reader(self) -> float:
        return self.reader_sensitivity / self.sigma2_reader

    @property
    def gamma_user(self) -> float:
        return self.user_sinr_threshold

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)


def default_params(num_antennas: int = 4, user_sinr_db: float = 10.0,
                   num_users: int = 1) -> SystemParams:
    """Reference parameter set: 2.4 GHz, 30 dBm, 10 MHz at 270 K."""
    return SystemParams(
        num_antennas=num_antennas,
        wavelength=SPEED_OF_LIGHT / 2.4e9,
        total_power=float(dbm_to_watts(30.0)),
        num_users=num_users,
        user_sinr_threshold=float(db_to_linear(user_sinr_db)),
    )


@dataclass(frozen=True)
class PolarPosition:
    """Point in the half plane: range in meters, angle in degrees from +y."""

    range: float
    angle: float

    def __post_init__(self):
        if not math.isfinite(self.range) or self.range < 0:
            raise GeometryError(f"range must be finite and >= 0, got {self.range}")
        if not 0.0 <= self.angle <= 180.0:
            raise GeometryError(f"angle must lie in [0, 180] degrees, got {self.angle}")

    def cartesian(self) -> np.ndarray:
        th = math.radians(self.angle)
        return np.array([self.range * math.sin(th), self.range * math.cos(th)])


@dataclass(frozen=True)
class Scenario:
    """System parameters plus the fixed communication users."""

    params: SystemParams
    users: tuple[PolarPosition, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(self.users) != self.params.num_users:
            raise ValueError(
                f"params.num_users={self.params.num_users} but {len(self.users)} user positions given")

    @property
    def num_antennas(self) -> int:
        return self.params.num_antennas

    def user_channels(self) -> np.ndarray:
        """(U, M) array of access-point-to-user channels."""
        M = self.params.num_antennas
        if not self.users:
            return np.zeros((0, M), dtype=complex)
        return np.stack([los_channel(self.params, p) for p in self.users])

    def tag_user_channels(self, tag: PolarPosition) -> np.ndarray:
        return np.array([tag_user_channel(tag, u, self.params.wavelength) for u in self.users],
                        dtype=complex)

    def with_params(self, **changes) -> "Scenario":
        return Scenario(self.params.replace(**changes), self.users)


def reference_scenario(num_antennas: int = 4, user_sinr_db: float = 10.0) -> Scenario:
    """One user 5 m away at 135 degrees, reference link budget."""
    return Scenario(default_params(num_antennas, user_sinr_db), (PolarPosition(5.0, 135.0),))


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def steering_vector(num_antennas: int, angle_deg, spacing_ratio: float = 0.5) -> np.ndarray:
    """Array response exp(j 2 pi (d/lambda) m cos(theta)), m = 0..M-1.

    ``angle_deg`` may be an array, in which case the result has shape
    ``angle.shape + (M,)``.
    """
    angle = np.asarray(angle_deg, dtype=float)
    if np.any(angle < 0) or np.any(angle > 180) or np.any(~np.isfinite(angle)):
        raise GeometryError("steering angle must lie in [0, 180] degrees")
    m = np.arange(num_antennas)
    phase = 2 * np.pi * spacing_ratio * np.cos(np.deg2rad(angle))[..., None] * m
    return np.exp(1j * phase)


def friis_amplitude(distance, wavelength: float):
    return wavelength / (4 * np.pi * np.asarray(distance, dtype=float))


def los_channel(params: SystemParams, pos: PolarPosition) -> np.ndarray:
    """Free-space line-of-sight channel from the array to ``pos``."""
    if pos.range <= 0:
        raise GeometryError("line-of-sight channel is singular at zero range")
    lam = params.wavelength
    a = steering_vector(params.num_antennas, pos.angle, params.spacing_ratio)
    return friis_amplitude(pos.range, lam) * a * np.exp(-2j * np.pi * pos.range / lam)


def los_channels(params: SystemParams, ranges, angles) -> np.ndarray:
    """Vectorized :func:`los_channel` for arrays of ranges/angles -> (N, M)."""
    r = np.asarray(ranges, dtype=float).ravel()
    th = np.asarray(angles, dtype=float).ravel()
    if np.any(r <= 0):
        raise GeometryError("line-of-sight channel is singular at zero range")
    lam = params.wavelength
    a = steering_vector(params.num_antennas, th, params.spacing_ratio)
    return (friis_amplitude(r, lam) * np.exp(-2j * np.pi * r / lam))[:, None] * a


def tag_user_channel(tag: PolarPosition, user: PolarPosition, wavelength: float) -> complex:
    """Scalar free-space channel between two points of the plane."""
    d = float(np.linalg.norm(tag.cartesian() - user.cartesian()))
    if d <= 0:
        raise GeometryError("tag and user coincide")
    return complex(friis_amplitude(d, wavelength) * np.exp(-2j * np.pi * d / wavelength))


def tag_user_channels(params: SystemParams, ranges, angles, user: PolarPosition) -> np.ndarray:
    r = np.asarray(ranges, dtype=float).ravel()
    th = np.deg2rad(np.asarray(angles, dtype=float).ravel())
    pts = np.stack([r * np.sin(th), r * np.cos(th)], axis=1)
    d = np.linalg.norm(pts - user.cartesian(), axis=1)
    if np.any(d <= 0):
        raise GeometryError("tag and user coincide")
    lam = params.wavelength
    return friis_amplitude(d, lam) * np.exp(-2j * np.pi * d / lam)


# ---------------------------------------------------------------------------
# beams and SINRs
# ---------------------------------------------------------------------------

class SinrReport(NamedTuple):
    tag: float
    reader: float
    users: tuple[float, ...]


@dataclass
class BeamformingSolution:
    """One sensing beam, U communication beams and the receive combiner."""

    sensing: np.ndarray
    comm: np.ndarray
    combiner: np.ndarray
    sinrs: SinrReport | None = None

    def __post_init__(self):
        self.sensing = np.asarray(self.sensing, dtype=complex)
        M = self.sensing.shape[0]
        self.comm = np.asarray(self.comm, dtype=complex).reshape(-1, M)
        self.combiner = np.asarray(self.combiner, dtype=complex)
        nw = np.linalg.norm(self.combiner)
        if abs(nw - 1.0) > 1e-12:
            raise ValueError(f"combiner must have unit norm, got {nw}")

    @property
    def num_antennas(self) -> int:
        return self.sensing.shape[0]

    @property
    def sensing_power(self) -> float:
        return float(np.vdot(self.sensing, self.sensing).real)

    @property
    def comm_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.comm) ** 2, axis=1)

    @property
    def total_power(self) -> float:
        return self.sensing_power + float(self.comm_powers.sum())

    def rotated(self, phase: float) -> "BeamformingSolution":
        rot = np.exp(1j * phase)
        return BeamformingSolution(self.sensing * rot, self.comm * rot, self.combiner, self.sinrs)


def matched_combiner(g: np.ndarray) -> np.ndarray:
    return g / np.linalg.norm(g)


def _gain(ch: np.ndarray, beam: np.ndarray) -> float:
    return float(abs(np.vdot(ch, beam)) ** 2)


def sinr_tag(sol: BeamformingSolution, g: np.ndarray, sigma2_tag: float) -> float:
    signal = _gain(g, sol.sensing)
    interference = float(np.sum(np.abs(sol.comm.conj() @ g) ** 2))
    return signal / (interference + sigma2_tag)


def sinr_reader(sol: BeamformingSolution, g: np.ndarray, eta: float,
                sigma2_tag: float, sigma2_reader: float) -> float:
    wg = abs(np.vdot(sol.combiner, g)) ** 2
    signal = eta * wg * _gain(g, sol.sensing)
    interference = eta * wg * float(np.sum(np.abs(sol.comm.conj() @ g) ** 2))
    return signal / (interference + eta * sigma2_tag * wg + sigma2_reader)


def sinr_user(sol: BeamformingSolution, h_u: np.ndarray, g: np.ndarray, h_tu: complex,
              sigma2_user: float, eta: float, sigma2_tag: float, user: int = 0) -> float:
    """SINR of communication user ``user`` including the tag's backscatter."""
    through = np.abs(sol.comm.conj() @ h_u) ** 2
    signal = float(through[user])
    inter_user = float(through.sum() - through[user])
    at_tag = _gain(g, sol.sensing) + float(np.sum(np.abs(sol.comm.conj() @ g) ** 2))
    backscatter = eta * abs(h_tu) ** 2 * (at_tag + sigma2_tag)
    return signal / (inter_user + _gain(h_u, sol.sensing) + backscatter + sigma2_user)


def realized_sinrs(sol: BeamformingSolution, g: np.ndarray, user_channels: np.ndarray,
                   h_tu: Sequence[complex], params: SystemParams) -> SinrReport:
    eta = params.backscatter_efficiency
    users = tuple(
        sinr_user(sol, user_channels[u], g, h_tu[u], params.sigma2_user, eta,
                  params.sigma2_tag, user=u)
        for u in range(len(user_channels)))
    return SinrReport(
        sinr_tag(sol, g, params.sigma2_tag),
        sinr_reader(sol, g, eta, params.sigma2_tag, params.sigma2_reader),
        users)


def meets(value: float, threshold: float, rtol: float = 1e-6) -> bool:
    """Threshold test with a relative allowance for solver round-off."""
    return value >= threshold * (1.0 - rtol)


def interrogation_success(sol: BeamformingSolution, g: np.ndarray, params: SystemParams,
                          rtol: float = 1e-6) -> tuple[bool, bool]:
    """(tag activated, backscatter detected); both must hold to interrogate."""
    tag_ok = meets(sinr_tag(sol, g, params.sigma2_tag), params.gamma_tag, rtol)
    reader_ok = meets(
        sinr_reader(sol, g, params.backscatter_efficiency, params.sigma2_tag,
                    params.sigma2_reader),
        params.gamma_reader, rtol)
    return tag_ok, reader_ok
