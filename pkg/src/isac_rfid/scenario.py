"""Scenario files: JSON with unit-suffixed keys.

Example::

    {"num_antennas": 8, "frequency_hz": 2.4e9, "total_power_dbm": 30,
     "user_sinr_db": 10, "users": [{"range_m": 5, "angle_deg": 135}]}

Missing keys take the reference values.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .model import (SPEED_OF_LIGHT, PolarPosition, Scenario, SystemParams, db_to_linear,
                    dbm_to_watts, watts_to_dbm)

DEFAULTS = {
    "num_antennas": 4,
    "frequency_hz": 2.4e9,
    "total_power_dbm": 30.0,
    "user_sinr_db": 10.0,
    "backscatter_efficiency": 0.16,
    "bandwidth_hz": 10e6,
    "temperature_k": 270.0,
    "noise_figure_reader_db": 7.0,
    "noise_figure_user_db": 7.0,
    "noise_figure_tag_db": 0.0,
    "tag_sensitivity_dbm": -25.5,
    "reader_sensitivity_dbm": -94.0,
    "element_spacing_wavelengths": 0.5,
    "users": [{"range_m": 5.0, "angle_deg": 135.0}],
}


class ScenarioError(ValueError):
    pass


def scenario_dict(overrides: dict | None = None) -> dict:
    d = json.loads(json.dumps(DEFAULTS))
    unknown = set(overrides or {}) - set(DEFAULTS)
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    d.update(overrides or {})
    return d


def build_scenario(d: dict) -> Scenario:
    d = scenario_dict(d)
    wavelength = SPEED_OF_LIGHT / float(d["frequency_hz"])
    try:
        users = tuple(PolarPosition(float(u["range_m"]), float(u["angle_deg"]))
                      for u in d["users"])
        params = SystemParams(
            num_antennas=int(d["num_antennas"]),
            wavelength=wavelength,
            total_power=float(dbm_to_watts(d["total_power_dbm"])),
            num_users=len(users),
            backscatter_efficiency=float(d["backscatter_efficiency"]),
            noise_bandwidth=float(d["bandwidth_hz"]),
            noise_temperature=float(d["temperature_k"]),
            noise_figure_reader=float(d["noise_figure_reader_db"]),
            noise_figure_user=float(d["noise_figure_user_db"]),
            noise_figure_tag=float(d["noise_figure_tag_db"]),
            tag_sensitivity=float(dbm_to_watts(d["tag_sensitivity_dbm"])),
            reader_sensitivity=float(dbm_to_watts(d["reader_sensitivity_dbm"])),
            user_sinr_threshold=float(db_to_linear(d["user_sinr_db"])),
            element_spacing=wavelength * float(d["element_spacing_wavelengths"]),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    return Scenario(params, users)


def load_scenario(path=None, **overrides) -> tuple[Scenario, dict]:
    """Scenario and the fully resolved dictionary it was built from."""
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ScenarioError("scenario file must hold a JSON object")
    d.update({k: v for k, v in overrides.items() if v is not None})
    d = scenario_dict(d)
    return build_scenario(d), d


def with_antennas(d: dict, M: int) -> dict:
    return {**d, "num_antennas": int(M)}


def with_user_sinr(d: dict, db: float) -> dict:
    return {**d, "user_sinr_db": float(db)}


def config_hash(obj) -> str:
    """Short SHA-256 of the canonical JSON form."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def total_power_dbm(watts: float) -> float:
    return float(watts_to_dbm(watts))
