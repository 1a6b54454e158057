"""Versioned JSON codebook files.

Complex entries are stored as ``[re, im]`` pairs. Floats go through ``repr``
so a save/load round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .design import Codebook, Codeword

FORMAT = "isac-rfid-codebook"
VERSION = 1


class CodebookFormatError(ValueError):
    pass


def _cplx(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _uncplx(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _num(x):
    x = float(x)
    return None if not np.isfinite(x) else x


def codeword_to_dict(cw: Codeword) -> dict:
    return {
        "sector_deg": [cw.theta_min, cw.theta_max],
        "sensing": _cplx(cw.sensing),
        "comm": _cplx(cw.comm),
        "power_w": cw.total_power,
        "grid": {"range_m": np.asarray(cw.grid_ranges, float).tolist(),
                 "angle_deg": np.asarray(cw.grid_angles, float).tolist()},
        "y_sdr": np.asarray(cw.y_sdr, int).tolist(),
        "y_realized": np.asarray(cw.y_realized, int).tolist(),
        "users_ok": bool(cw.users_ok),
        "comm_scale": cw.comm_scale,
        "flagged": bool(cw.flagged),
        "converged": bool(cw.converged),
        "iterations": int(cw.iterations),
        "bounds": [_num(b) for b in cw.bounds],
        "error": cw.error,
    }


def codeword_from_dict(d: dict, M: int, U: int) -> Codeword:
    comm = _uncplx(d["comm"]) if d["comm"] else np.zeros((U, M), dtype=complex)
    b = [np.nan if v is None else v for v in d.get("bounds", [None, None])]
    return Codeword(
        float(d["sector_deg"][0]), float(d["sector_deg"][1]),
        _uncplx(d["sensing"]).reshape(M), comm.reshape(U, M),
        np.asarray(d["grid"]["range_m"], float), np.asarray(d["grid"]["angle_deg"], float),
        np.asarray(d["y_sdr"], int), np.asarray(d["y_realized"], int),
        bool(d["users_ok"]), float(d["comm_scale"]), bool(d["flagged"]),
        bool(d["converged"]), int(d["iterations"]), tuple(b), d.get("error"))


def codebook_to_dict(cb: Codebook, meta: dict | None = None) -> dict:
    U = cb.codewords[0].comm.shape[0] if cb.codewords else 0
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": cb.kind,
        "theta_step_deg": cb.theta_step,
        "num_antennas": cb.num_antennas,
        "num_users": U,
        "total_power_w": cb.total_power,
        "meta": meta or {},
        "codewords": [codeword_to_dict(c) for c in cb.codewords],
    }


def codebook_from_dict(d: dict) -> Codebook:
    if d.get("format") != FORMAT:
        raise CodebookFormatError(f"not a codebook file (format={d.get('format')!r})")
    if d.get("version") != VERSION:
        raise CodebookFormatError(f"unsupported codebook version {d.get('version')!r}")
    M, U = int(d["num_antennas"]), int(d["num_users"])
    words = [codeword_from_dict(c, M, U) for c in d["codewords"]]
    return Codebook(d["kind"], float(d["theta_step_deg"]), M, float(d["total_power_w"]), words)


def save_codebook(cb: Codebook, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(codebook_to_dict(cb, meta), indent=1, sort_keys=True) + "\n")
    return path


def load_codebook(path) -> Codebook:
    return codebook_from_dict(json.loads(Path(path).read_text()))


def load_meta(path) -> dict:
    return json.loads(Path(path).read_text()).get("meta", {})
