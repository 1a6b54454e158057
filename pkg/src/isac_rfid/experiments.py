"""Experiment protocols producing result tables.

Each function only calls the designers and evaluators of the package; the
tables are plain rows so they can be written to CSV and re-derived.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .codebook.design import Codebook, evaluate_codebook, upper_bound
from .joint import Designer, design_single, max_interrogation_distance
from .model import (PolarPosition, Scenario, los_channel, matched_combiner, steering_vector,
                    watts_to_dbm)
from .scenario import build_scenario, config_hash, with_antennas, with_user_sinr
from .zf import Dominant, dominant_constraint

PERCENTILES = (5, 25, 50, 75, 95)


@dataclass
class ResultTable:
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def sort(self, *keys):
        idx = [self.columns.index(k) for k in keys]
        self.rows.sort(key=lambda r: tuple(r[i] for i in idx))
        return self

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}: {self.meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return v


def provenance(kind: str, config: dict, seed=None) -> dict:
    meta = {"experiment": kind, "config_hash": config_hash(config), "tool": f"isac-rfid {__version__}"}
    if seed is not None:
        meta["seed"] = seed
    return meta


def angle_grid(start: float = 0.0, stop: float = 180.0, step: float = 1.0) -> np.ndarray:
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 9)


# ---------------------------------------------------------------------------
# single-tag protocols
# ---------------------------------------------------------------------------

def run_max_distance_sweep(scenario_cfg: dict, angles, antennas=(4, 8),
                           designers=(Designer.ZF, Designer.JOINT), user_sinr_db=(0.0, 10.0),
                           step: float = 0.25) -> ResultTable:
    """Largest feasible distance per (angle, M, designer, user SINR target)."""
    rows = []
    for M in antennas:
        for gdb in user_sinr_db:
            sc = build_scenario(with_user_sinr(with_antennas(scenario_cfg, M), gdb))
            for d in designers:
                for th in angles:
                    r = max_interrogation_distance(float(th), sc, d, step)
                    rows.append([float(th), int(M), d.value, float(gdb), r.distance])
    cfg = {"scenario": scenario_cfg, "angles": [float(a) for a in angles],
           "antennas": list(antennas), "designers": [d.value for d in designers],
           "user_sinr_db": list(user_sinr_db), "step": step}
    t = ResultTable(["theta_deg", "M", "designer", "user_sinr_db", "distance_m"], rows,
                    provenance("max-distance", cfg))
    return t.sort("M", "designer", "user_sinr_db", "theta_deg")


def run_power_sweep(scenario_cfg: dict, angles, distance: float = 6.0,
                    designers=(Designer.ZF, Designer.JOINT), user_sinr_db=(0.0, 10.0)) -> ResultTable:
    """Total transmit power for a tag at a fixed distance.

    Infeasible rows have ``feasible = 0`` and an empty power column.
    """
    rows = []
    for gdb in user_sinr_db:
        sc = build_scenario(with_user_sinr(scenario_cfg, gdb))
        P = sc.params.total_power
        for d in designers:
            for th in angles:
                sol = design_single(PolarPosition(distance, float(th)), sc, d)
                ok = sol is not None and sol.total_power <= P * (1 + 1e-6)
                pw = float(watts_to_dbm(sol.total_power)) if ok else None
                rows.append([float(th), d.value, float(gdb), pw, int(ok)])
    cfg = {"scenario": scenario_cfg, "angles": [float(a) for a in angles],
           "distance_m": distance, "designers": [d.value for d in designers],
           "user_sinr_db": list(user_sinr_db)}
    t = ResultTable(["theta_deg", "designer", "user_sinr_db", "total_power_dbm", "feasible"],
                    rows, provenance("power-sweep", cfg))
    return t.sort("designer", "user_sinr_db", "theta_deg")


def beam_patterns(sensing, comm, scenario: Scenario, step: float = 0.1):
    """Probe angles and per-beam gains normalized to a unit peak."""
    p = scenario.params
    phi = angle_grid(0.0, 180.0, step)
    A = np.array([steering_vector(p.num_antennas, float(f), p.spacing_ratio) for f in phi])
    beams = {"sensing": np.asarray(sensing)}
    for u, f in enumerate(np.atleast_2d(comm)):
        beams[f"comm{u + 1}"] = np.asarray(f)
    out = {}
    for name, f in beams.items():
        g = np.abs(A.conj() @ f) ** 2
        out[name] = g / g.max() if g.max() > 0 else g
    return phi, out


def run_beampattern(sensing, comm, scenario: Scenario, step: float = 0.1,
                    config: dict | None = None) -> ResultTable:
    phi, pats = beam_patterns(sensing, comm, scenario, step)
    rows = []
    for name, g in pats.items():
        with np.errstate(divide="ignore"):
            gdb = 10 * np.log10(g)
        for f, v, vdb in zip(phi, g, gdb):
            rows.append([float(f), name, float(v), float(vdb) if np.isfinite(vdb) else None])
    t = ResultTable(["phi_deg", "beam", "gain", "gain_db"], rows,
                    provenance("beampattern", config or {}))
    return t.sort("beam", "phi_deg")


def single_tag_beams(scenario: Scenario, distance: float, angle: float, designer: Designer):
    sol = design_single(PolarPosition(distance, angle), scenario, designer)
    if sol is None:
        raise ValueError(f"no feasible {designer.value} design at ({distance} m, {angle} deg)")
    return sol


def crossover_distance(scenario: Scenario, angle: float = 45.0, lo: float = 0.1,
                       hi: float = 1000.0, tol: float = 1e-6) -> float:
    """Distance where reader detection overtakes tag activation (bisection)."""
    p = scenario.params

    def reader_dominates(d):
        g = los_channel(p, PolarPosition(d, angle))
        dirs = g / np.linalg.norm(g)
        return dominant_constraint(g, dirs, matched_combiner(g), p).which is Dominant.READER_DETECTION

    if reader_dominates(lo) or not reader_dominates(hi):
        raise ValueError("no crossover inside the search interval")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if reader_dominates(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def run_table1(scenario_cfg: dict, antennas=(4, 8)) -> ResultTable:
    rows = [[int(M), crossover_distance(build_scenario(with_antennas(scenario_cfg, M)))]
            for M in antennas]
    cfg = {"scenario": scenario_cfg, "antennas": list(antennas)}
    return ResultTable(["M", "crossover_m"], rows, provenance("table1", cfg)).sort("M")


# ---------------------------------------------------------------------------
# codebook protocols
# ---------------------------------------------------------------------------

def sample_tags(rng: np.random.Generator, n: int, radius: float):
    """Uniform over the half-disc area: r = R sqrt(u), angle uniform in [0, 180]."""
    r = radius * np.sqrt(rng.random(n))
    th = 180.0 * rng.random(n)
    return r, th


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


def run_success_rate_mc(codebooks: dict, scenario: Scenario, trials: int = 100,
                        tags: int = 100, radius: float = 16.7, seed: int = 0,
                        with_upper_bound: bool = True, config: dict | None = None):
    """Per-trial success rates plus a percentile summary.

    ``codebooks`` maps a method name to a :class:`Codebook`. Returns
    ``(per_trial, summary)`` tables.
    """
    names = sorted(codebooks)
    rows = []
    for t in range(trials):
        r, th = sample_tags(trial_rng(seed, t), tags, radius)
        for name in names:
            rows.append([t, name, evaluate_codebook(codebooks[name], r, th, scenario).rate])
        if with_upper_bound:
            rows.append([t, "upper_bound", upper_bound(r, th, scenario).rate])
    cfg = {"config": config or {}, "trials": trials, "tags": tags, "radius_m": radius,
           "methods": names, "upper_bound": with_upper_bound}
    meta = provenance("success-rate", cfg, seed)
    per_trial = ResultTable(["trial", "method", "success_rate"], rows, meta).sort("method", "trial")
    summary_rows = []
    methods = names + (["upper_bound"] if with_upper_bound else [])
    for name in methods:
        v = np.array([row[2] for row in rows if row[1] == name])
        summary_rows.append([name, *[float(np.percentile(v, q)) for q in PERCENTILES],
                             float(v.mean())])
    summary = ResultTable(["method", *[f"p{q}" for q in PERCENTILES], "mean"], summary_rows,
                          dict(meta)).sort("method")
    return per_trial, summary


def run_coverage_map(codebooks: dict, scenario: Scenario, tags: int = 1000,
                     radius: float = 16.7, seed: int = 0, config: dict | None = None) -> ResultTable:
    """Tag positions with a covered flag per codebook."""
    r, th = sample_tags(trial_rng(seed, 0), tags, radius)
    x, y = r * np.sin(np.radians(th)), r * np.cos(np.radians(th))
    rows = []
    for name in sorted(codebooks):
        cov = evaluate_codebook(codebooks[name], r, th, scenario).covered
        for i in range(tags):
            rows.append([name, i, float(r[i]), float(th[i]), float(x[i]), float(y[i]),
                         int(cov[i])])
    cfg = {"config": config or {}, "tags": tags, "radius_m": radius, "methods": sorted(codebooks)}
    t = ResultTable(["method", "tag", "range_m", "angle_deg", "x_m", "y_m", "covered"], rows,
                    provenance("coverage-map", cfg, seed))
    return t.sort("method", "tag")


def median_rates(per_trial: ResultTable) -> dict:
    out = {}
    for m in set(per_trial.column("method")):
        v = [r[2] for r in per_trial.rows if r[1] == m]
        out[m] = float(np.median(v))
    return out


def codebook_summary(cb: Codebook) -> dict:
    return {"codewords": len(cb), "flagged": len(cb.flagged), "failed": len(cb.failed),
            "claimed": int(sum(c.claimed for c in cb.codewords)),
            "realized": int(sum(c.realized for c in cb.codewords))}
