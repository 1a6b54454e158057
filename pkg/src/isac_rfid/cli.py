"""Command-line entry point: ``isac-rfid <experiment> [options]``.

Tables are written as CSV into ``--out``; codebooks as versioned JSON.
Failures print a JSON object ``{"error": ..., "message": ...}`` on stderr and
exit with a nonzero status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .codebook.design import benchmark_codebook, design_codebook
from .codebook.grid import RadiusProfile
from .codebook.io import load_codebook, load_meta, save_codebook
from .experiments import (angle_grid, codebook_summary, run_beampattern, run_coverage_map,
                          run_max_distance_sweep, run_power_sweep, run_success_rate_mc,
                          run_table1, single_tag_beams)
from .joint import Designer
from .scenario import build_scenario, config_hash, load_scenario, with_antennas

log = logging.getLogger("isac_rfid")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind, message, code=1):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    sys.exit(code)


def _floats(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _ints(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _designers(s: str) -> list[Designer]:
    try:
        return [Designer(v.strip().lower()) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"designers are 'zf' and 'joint', got {s!r}")


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _common(p):
    p.add_argument("--scenario", type=Path, help="scenario JSON (unit-suffixed keys)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--antennas", type=_ints, help="comma-separated antenna counts")
    p.add_argument("--theta-step", type=float, help="angle step in degrees")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="isac-rfid", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"isac-rfid {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("max-distance", help="max interrogation distance per angle")
    _common(p)
    p.add_argument("--designers", type=_designers, default=[Designer.ZF, Designer.JOINT])
    p.add_argument("--user-sinr-db", type=_floats, default=[0.0, 10.0])
    p.add_argument("--distance-step", type=float, default=0.25)

    p = sub.add_parser("power-sweep", help="transmit power versus tag angle at fixed range")
    _common(p)
    p.add_argument("--designers", type=_designers, default=[Designer.ZF, Designer.JOINT])
    p.add_argument("--user-sinr-db", type=_floats, default=[0.0, 10.0])
    p.add_argument("--distance", type=float, default=6.0)

    p = sub.add_parser("beampattern", help="normalized beam patterns")
    _common(p)
    p.add_argument("--designer", type=lambda s: Designer(s.lower()), default=Designer.JOINT)
    p.add_argument("--tag-range", type=float, default=6.0)
    p.add_argument("--tag-angle", type=float, default=45.0)
    p.add_argument("--codebook", type=Path, help="plot a codeword of this codebook instead")
    p.add_argument("--codeword", type=int, default=0)
    p.add_argument("--step", type=float, default=0.1, help="probe-angle step in degrees")

    p = sub.add_parser("table1", help="dominant-constraint crossover distances")
    _common(p)

    p = sub.add_parser("codebook", help="design or evaluate codebooks")
    csub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    d = csub.add_parser("design", help="design a sector or benchmark codebook")
    _common(d)
    d.add_argument("--epsilon", type=float, default=0.5)
    d.add_argument("--benchmark", action="store_true", help="point-targeting baseline")
    d.add_argument("--radius-profile", type=Path,
                   help="JSON cache of per-angle radii (read if present, then updated)")
    d.add_argument("--max-iter", type=int, default=200)
    e = csub.add_parser("evaluate", help="Monte-Carlo success rates")
    _common(e)
    e.add_argument("--codebook", type=Path, nargs="+", required=True)
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--tags", type=int, default=100)
    e.add_argument("--radius", type=float, default=16.7)
    e.add_argument("--no-upper-bound", action="store_true")

    p = sub.add_parser("coverage-map", help="covered flag per random tag and codebook")
    _common(p)
    p.add_argument("--codebook", type=Path, nargs="+", required=True)
    p.add_argument("--tags", type=int, default=1000)
    p.add_argument("--radius", type=float, default=16.7)
    return ap


def _write(table, out: Path, name: str) -> Path:
    path = table.write(out / name)
    print(path)
    return path


def _codebooks(paths, cfg):
    books = {}
    for path in paths:
        meta = load_meta(path)
        sc_cfg = meta.get("scenario")
        if sc_cfg is not None and sc_cfg != cfg:
            log.warning("%s was designed for a different scenario", path)
        books[path.stem] = load_codebook(path)
    return books


def cmd_max_distance(a, cfg):
    angles = angle_grid(0, 180, a.theta_step or 1.0)
    t = run_max_distance_sweep(cfg, angles, a.antennas or [4, 8], a.designers,
                               a.user_sinr_db, a.distance_step)
    _write(t, a.out, "max_distance.csv")


def cmd_power_sweep(a, cfg):
    if a.antennas:
        cfg = with_antennas(cfg, a.antennas[0])
    angles = angle_grid(0, 180, a.theta_step or 1.0)
    t = run_power_sweep(cfg, angles, a.distance, a.designers, a.user_sinr_db)
    _write(t, a.out, "power_sweep.csv")


def cmd_beampattern(a, cfg):
    if a.antennas:
        cfg = with_antennas(cfg, a.antennas[0])
    sc = build_scenario(cfg)
    if a.codebook:
        cb = load_codebook(a.codebook)
        if not 0 <= a.codeword < len(cb):
            raise CliError(f"codeword index {a.codeword} out of range (0..{len(cb) - 1})")
        cw = cb.codewords[a.codeword]
        if cb.num_antennas != sc.num_antennas:
            sc = build_scenario(with_antennas(cfg, cb.num_antennas))
        fs, fu = cw.sensing, cw.comm
        src = {"codebook": str(a.codebook), "codeword": a.codeword}
    else:
        sol = single_tag_beams(sc, a.tag_range, a.tag_angle, a.designer)
        fs, fu = sol.sensing, sol.comm
        src = {"designer": a.designer.value, "tag_range_m": a.tag_range,
               "tag_angle_deg": a.tag_angle}
    t = run_beampattern(fs, fu, sc, a.step, {"scenario": cfg, **src})
    _write(t, a.out, "beampattern.csv")


def cmd_table1(a, cfg):
    _write(run_table1(cfg, a.antennas or [4, 8]), a.out, "table1.csv")


def cmd_codebook_design(a, cfg):
    if a.antennas:
        cfg = with_antennas(cfg, a.antennas[0])
    sc = build_scenario(cfg)
    table = {}
    if a.radius_profile and a.radius_profile.exists():
        cached = json.loads(a.radius_profile.read_text())
        if cached.get("config_hash") == config_hash(cfg):
            table = cached["radius_m"]
    prof = RadiusProfile.from_dict(sc, table)

    def progress(k, cw):
        log.info("sector %d [%g, %g]: claimed %d realized %d%s", k, cw.theta_min,
                 cw.theta_max, cw.claimed, cw.realized,
                 f" ({cw.error})" if cw.error else (" flagged" if cw.flagged else ""))

    if a.benchmark:
        cb = benchmark_codebook(sc, prof, a.theta_step or 1.0)
        name = "benchmark.json"
    else:
        step = a.theta_step or 5.0
        cb = design_codebook(sc, step, a.epsilon, prof, max_iter=a.max_iter, progress=progress)
        name = f"codebook_{step:g}deg.json"
    if a.radius_profile:
        a.radius_profile.parent.mkdir(parents=True, exist_ok=True)
        a.radius_profile.write_text(json.dumps(
            {"config_hash": config_hash(cfg), "radius_m": prof.to_dict()}, indent=1) + "\n")
    meta = {"scenario": cfg, "config_hash": config_hash(cfg), "epsilon": a.epsilon,
            "tool": f"isac-rfid {__version__}", "summary": codebook_summary(cb)}
    print(save_codebook(cb, a.out / name, meta))


def cmd_codebook_evaluate(a, cfg):
    books = _codebooks(a.codebook, cfg)
    M = {cb.num_antennas for cb in books.values()}
    if len(M) != 1:
        raise CliError("codebooks were designed for different antenna counts")
    cfg = with_antennas(cfg, M.pop())
    per_trial, summary = run_success_rate_mc(books, build_scenario(cfg), a.trials, a.tags,
                                             a.radius, a.seed, not a.no_upper_bound,
                                             {"scenario": cfg})
    _write(per_trial, a.out, "success_rate.csv")
    _write(summary, a.out, "success_summary.csv")


def cmd_coverage_map(a, cfg):
    books = _codebooks(a.codebook, cfg)
    M = {cb.num_antennas for cb in books.values()}
    if len(M) != 1:
        raise CliError("codebooks were designed for different antenna counts")
    cfg = with_antennas(cfg, M.pop())
    t = run_coverage_map(books, build_scenario(cfg), a.tags, a.radius, a.seed,
                         {"scenario": cfg})
    _write(t, a.out, "coverage_map.csv")


COMMANDS = {
    "max-distance": cmd_max_distance,
    "power-sweep": cmd_power_sweep,
    "beampattern": cmd_beampattern,
    "table1": cmd_table1,
    ("codebook", "design"): cmd_codebook_design,
    ("codebook", "evaluate"): cmd_codebook_evaluate,
    "coverage-map": cmd_coverage_map,
}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    key = (a.command, a.action) if a.command == "codebook" else a.command
    try:
        if a.theta_step is not None and not a.theta_step > 0:
            raise CliError("--theta-step must be positive")
        _, cfg = load_scenario(a.scenario)
        COMMANDS[key](a, cfg)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        _fail(type(exc).__name__, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
