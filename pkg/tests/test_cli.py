import json
import subprocess
import sys


from isac_rfid.cli import main
from isac_rfid.codebook.design import Codebook, empty_codeword
from isac_rfid.codebook.io import load_codebook, save_codebook
from isac_rfid.joint import Designer, design_single
from isac_rfid.model import PolarPosition
from isac_rfid.scenario import build_scenario, scenario_dict


def run(*args):
    return subprocess.run([sys.executable, "-m", "isac_rfid.cli", *args], capture_output=True,
                          text=True)


def test_table1_writes_csv(tmp_path, capsys):
    assert main(["table1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert "M,crossover_m" in lines
    assert capsys.readouterr().out.strip().endswith("table1.csv")


def test_bad_flag_gives_json_error():
    r = run("table1", "--seed", "-1")
    assert r.returncode != 0
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert set(err) >= {"error", "message"}


def test_bad_value_gives_json_error(tmp_path):
    r = run("max-distance", "--theta-step", "-1", "--out", str(tmp_path))
    assert r.returncode == 1
    assert "error" in json.loads(r.stderr.strip().splitlines()[-1])


def test_unknown_scenario_key(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"antenas": 8}))
    r = run("table1", "--scenario", str(path), "--out", str(tmp_path))
    assert r.returncode == 1
    assert "antenas" in json.loads(r.stderr.strip().splitlines()[-1])["message"]


def test_reproducible_bytes(tmp_path):
    args = ["power-sweep", "--theta-step", "45", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "power_sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "power_sweep.csv").read_bytes()


def small_book(tmp_path):
    sc = build_scenario(scenario_dict())
    sol = design_single(PolarPosition(3.0, 60.0), sc, Designer.JOINT)
    cw = empty_codeword(0, 180, 4, 1)
    cw.sensing, cw.comm = sol.sensing, sol.comm.reshape(1, 4)
    cb = Codebook("sector", 180.0, 4, 1.0, [cw])
    return save_codebook(cb, tmp_path / "one.json", {"scenario": scenario_dict()})


def test_evaluate_and_coverage_map(tmp_path):
    path = small_book(tmp_path)
    out = tmp_path / "out"
    assert main(["codebook", "evaluate", "--codebook", str(path), "--trials", "2", "--tags",
                 "5", "--out", str(out)]) == 0
    text = (out / "success_summary.csv").read_text()
    assert "one," in text and "upper_bound," in text
    assert main(["coverage-map", "--codebook", str(path), "--tags", "7", "--out",
                 str(out)]) == 0
    assert len((out / "coverage_map.csv").read_text().splitlines()) > 7


def test_beampattern_from_codebook(tmp_path):
    path = small_book(tmp_path)
    assert main(["beampattern", "--codebook", str(path), "--codeword", "0", "--step", "1",
                 "--out", str(tmp_path)]) == 0
    r = run("beampattern", "--codebook", str(path), "--codeword", "5", "--out", str(tmp_path))
    assert r.returncode == 1


def test_codebook_design_benchmark(tmp_path):
    prof = tmp_path / "prof.json"
    assert main(["codebook", "design", "--benchmark", "--theta-step", "90",
                 "--radius-profile", str(prof), "--out", str(tmp_path)]) == 0
    cb = load_codebook(tmp_path / "benchmark.json")
    assert len(cb) == 3 and cb.kind == "benchmark"
    cached = json.loads(prof.read_text())
    assert set(cached) == {"config_hash", "radius_m"} and len(cached["radius_m"]) == 3
