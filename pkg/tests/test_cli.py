import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from plateau.cli import main
from plateau.complexes import Complex, grid_complex, save_complex
from plateau.dyadic import Cell
from plateau.measure import load_csv, sample_segment, save_csv

CONFIGS = Path(__file__).parents[1] / "configs"


def test_validate_complex_accepts_grid(tmp_path, capsys):
    path = tmp_path / "grid.json"
    save_complex(grid_complex((0.0, 0.0), (1.0, 1.0), 1), path)
    assert main(["validate-complex", str(path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["ok"] and rep["n_cells"] == 25


def test_validate_complex_flags_overlap(tmp_path, capsys):
    bad = Complex([Cell.make((0, 0), 0b11, 0), Cell.make((0, 0), 0b11, -1)])
    path = tmp_path / "bad.json"
    save_complex(bad, path)
    assert main(["validate-complex", str(path)]) == 2
    rep = json.loads(capsys.readouterr().out)
    assert not rep["ok"] and rep["violations"]


def test_missing_file_is_input_error(capsys):
    assert main(["validate-complex", "/nonexistent/K.json"]) == 3
    assert "error:" in capsys.readouterr().err


def test_whitney_subcommand(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "whitney",
                 "--box", "0", "0", "1", "1", "--depth", "4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["ok"] and rep["n_cells"] > 0
    assert (tmp_path / "whitney.json").exists()
    assert (tmp_path / "report.json").exists()


def test_grass_selftest_passes(capsys):
    assert main(["grass-selftest", "--samples", "40", "--seed", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["ok"] and rep["failures"] == []


def test_gauge_on_unit_segment(tmp_path, capsys):
    S = sample_segment(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 0.005)
    path = tmp_path / "seg.csv"
    save_csv(S, path)
    assert main(["gauge", "--input", str(path), "--d", "1",
                 "--planes", "64", "--delta", "0.005"]) == 0
    rep = json.loads(capsys.readouterr().out)
    # averaged projected length of a segment: 2/pi, give MC 5 sigma
    assert abs(rep["zeta"] - 2.0 / math.pi) <= 5.0 * rep["std_error"] + 0.01


def test_malformed_csv_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,weight\n0.1,oops,1.0\n")
    assert main(["gauge", "--input", str(path), "--d", "1"]) == 3
    assert "line 2" in capsys.readouterr().err


def test_ffproject_subcommand(tmp_path, capsys):
    kpath = tmp_path / "grid.json"
    save_complex(grid_complex((0.0, 0.0), (1.0, 1.0), 2), kpath)
    spath = tmp_path / "diag.csv"
    save_csv(sample_segment(np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                            0.02), spath)
    out = tmp_path / "out"
    assert main(["--out-dir", str(out), "ffproject",
                 "--complex", str(kpath), "--input", str(spath),
                 "--d", "1", "--seed", "0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert all(c["ok"] for c in rep["checks"].values())
    assert (out / "final.csv").exists()
    mapped = load_csv(out / "final.csv", 1, 0.02)
    assert len(mapped) == len(load_csv(spath, 1, 0.02))


def test_minimize_subcommand_triangle(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--out-dir", str(out), "minimize",
                 "--config", str(CONFIGS / "triangle.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    target = math.sqrt(3.0)
    assert abs(rep["final_energy"] - target) <= 0.02 * target
    final = load_csv(out / "final.csv", 1, 0.02)
    anchors = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8660254037844386]])
    assert np.array_equal(final.points[:3], anchors)
    off = (out / "skeleton.off").read_text().splitlines()
    assert off[0] == "OFF"
    n_nodes, n_faces, _ = (int(v) for v in off[1].split())
    assert n_nodes >= 4 and n_faces >= 3
    assert all(line.startswith("2 ") for line in off[2 + n_nodes:])


def test_minimize_off_to_stdout(capsys):
    assert main(["--format", "off", "minimize",
                 "--config", str(CONFIGS / "segment.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OFF\n")


def test_audit_identity_and_crush(tmp_path, capsys):
    S = sample_segment(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 0.01)
    spath = tmp_path / "seg.csv"
    save_csv(S, spath)
    ipath = tmp_path / "ident.csv"
    save_csv(S, ipath)
    assert main(["audit", "--input", str(spath), "--deform", str(ipath),
                 "--ball", "0.5,0.0,0.2", "--d", "1",
                 "--delta", "0.01"]) == 0
    assert json.loads(capsys.readouterr().out)["satisfied"]

    crushed = S.points.copy()
    mask = np.linalg.norm(crushed - [0.5, 0.0], axis=1) <= 0.2
    crushed[mask] = [0.5, 0.0]
    cpath = tmp_path / "crush.csv"
    save_csv(S.with_points(crushed), cpath)
    assert main(["audit", "--input", str(spath), "--deform", str(cpath),
                 "--ball", "0.5,0.0,0.2", "--d", "1",
                 "--delta", "0.01"]) == 2
    assert not json.loads(capsys.readouterr().out)["satisfied"]


def test_bad_usage_is_input_error(capsys):
    assert main(["bogus-command"]) == 3
    assert main([]) == 3
    assert main(["audit", "--input", "x.csv", "--deform", "y.csv",
                 "--ball", "not-numbers"]) == 3


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "plateau.cli", "grass-selftest",
         "--samples", "5"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
