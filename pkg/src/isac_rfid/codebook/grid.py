"""Polar grids of reference tag positions inside one angular sector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..joint import Designer, max_interrogation_distance
from ..model import Scenario, los_channels, tag_user_channels


class EmptyGridError(ValueError):
    """No grid point survives (every angle has zero admissible radius)."""


@dataclass
class SectorGrid:
    theta_min: float
    theta_max: float
    dtheta: float
    ranges: np.ndarray        # (N,)
    angles: np.ndarray        # (N,)
    channels: np.ndarray      # (N, M) tag channels g_i
    tag_user: np.ndarray      # (N, U) scalars h_{i,u}
    radius: dict              # angle -> R_theta
    ray: np.ndarray           # (N,) index of the angle each point sits on
    step: np.ndarray          # (N,) radial index m (1-based)

    @property
    def size(self) -> int:
        return self.ranges.size

    def __len__(self):
        return self.size

    def subset(self, idx) -> "SectorGrid":
        idx = np.asarray(idx)
        return SectorGrid(self.theta_min, self.theta_max, self.dtheta, self.ranges[idx],
                          self.angles[idx], self.channels[idx], self.tag_user[idx],
                          self.radius, self.ray[idx], self.step[idx])


def default_dtheta(sector_width: float) -> float:
    """1 degree sub-steps, refined to 0.5 degree for 1-degree sectors."""
    return 0.5 if sector_width <= 1.0 + 1e-12 else 1.0


def sector_angles(theta_min: float, theta_max: float, dtheta: float) -> np.ndarray:
    n = int(math.floor((theta_max - theta_min) / dtheta + 1e-9))
    return np.round(theta_min + dtheta * np.arange(n + 1), 9)


def build_grid(theta_min: float, theta_max: float, scenario: Scenario, radius_fn,
               dtheta: float | None = None, n_radial: int = 10) -> SectorGrid:
    """Grid r_m = m R_theta / n_radial (m = 1..n_radial) on each sub-step angle.

    Angles whose admissible radius is zero are skipped.

    Raises
    ------
    EmptyGridError
        If no point remains.
    """
    if not theta_min < theta_max:
        raise ValueError("theta_min must be below theta_max")
    if dtheta is None:
        dtheta = default_dtheta(theta_max - theta_min)
    angles = sector_angles(theta_min, theta_max, dtheta)
    rs, ths, rays, steps, radius = [], [], [], [], {}
    for k, th in enumerate(angles):
        R = float(radius_fn(float(th)))
        radius[float(th)] = R
        if R <= 0:
            continue
        m = np.arange(1, n_radial + 1)
        rs.append(m * R / n_radial)
        ths.append(np.full(n_radial, th))
        rays.append(np.full(n_radial, k))
        steps.append(m)
    if not rs:
        raise EmptyGridError(f"sector [{theta_min}, {theta_max}] has no admissible grid point")
    ranges, angs = np.concatenate(rs), np.concatenate(ths)
    p = scenario.params
    G = los_channels(p, ranges, angs)
    if scenario.users:
        Htu = np.stack([tag_user_channels(p, ranges, angs, u) for u in scenario.users], axis=1)
    else:
        Htu = np.zeros((ranges.size, 0), dtype=complex)
    return SectorGrid(theta_min, theta_max, dtheta, ranges, angs, G, Htu, radius,
                      np.concatenate(rays), np.concatenate(steps))


class RadiusProfile:
    """Cached single-tag maximum distance per angle (Joint designer)."""

    def __init__(self, scenario: Scenario, step: float = 0.25,
                 designer: Designer = Designer.JOINT, table: dict | None = None):
        self.scenario = scenario
        self.step = step
        self.designer = designer
        self.table = dict(table or {})

    def __call__(self, angle: float) -> float:
        key = round(float(angle), 6)
        if key not in self.table:
            self.table[key] = max_interrogation_distance(
                key, self.scenario, self.designer, self.step).distance
        return self.table[key]

    def to_dict(self) -> dict:
        return {f"{k:.6f}": v for k, v in sorted(self.table.items())}

    @classmethod
    def from_dict(cls, scenario, data, step=0.25):
        return cls(scenario, step, table={float(k): float(v) for k, v in data.items()})


class ConstantRadius:
    def __init__(self, radius: float):
        self.radius = radius

    def __call__(self, angle: float) -> float:
        return self.radius
