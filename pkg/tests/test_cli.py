import json
import subprocess
import sys

import pytest

from nodalfield.cli import main, parse_L_grid


def test_L_grid_parsing():
    assert parse_L_grid("400:25600:4") == pytest.approx([400, 1600, 6400, 25600])
    assert parse_L_grid("10,20") == [10.0, 20.0]


def test_count_writes_table_and_manifest(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["count", "--L", "100", "--seeds", "3", "--rho", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# manifest sha256=")
    assert lines[1].split(",")[:6] == ["seed", "L", "s", "n", "method", "N"]
    assert len(lines) == 5
    manifest = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    assert manifest["master_seed"] == 0
    assert manifest["manifest_digest"] == lines[0].split("=")[1]
    assert "wall_time_s" in manifest


def test_threads_do_not_change_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["scaling", "--regime", "critical", "--L-grid", "100,200", "--seeds", "4"]
    assert main([*common, "--threads", "1", "--out", str(a)]) == 0
    assert main([*common, "--threads", "8", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_json_mirrors_csv(tmp_path):
    c, j = tmp_path / "k.csv", tmp_path / "k.json"
    argv = ["kernel", "--L-grid", "100,400", "--separations", "0,0.1"]
    main([*argv, "--out", str(c)])
    main([*argv, "--format", "json", "--out", str(j)])
    doc = json.loads(j.read_text())
    lines = c.read_text().splitlines()
    assert doc["manifest_digest"] == lines[0].split("=")[1]
    assert doc["columns"] == lines[1].split(",")
    assert len(doc["rows"]) == len(lines) - 2 == 4


def test_replay_identical(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["detcheck", "--m", "3", "--samples", "20000", "--out", str(out)]) == 0
    assert main(["replay", str(out) + ".manifest.json"]) == 0
    assert "identical" in capsys.readouterr().out


def test_supercritical_rejected(capsys):
    assert main(["count", "--s", "1.5", "--L", "100"]) == 3
    assert "reason=regime" in capsys.readouterr().err


def test_resolution_error_exit_code(capsys):
    assert main(["barrier", "--L-grid", "1e4", "--rho", "0.5", "--seeds", "2", "--oversample", "2"]) == 4


def test_regime_mismatch(capsys):
    assert main(["scaling", "--regime", "subcritical", "--s", "1", "--L-grid", "100"]) == 3


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["scaling"])
    assert exc.value.code == 2


def test_fkg_subcommand(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["fkg", "--cov", "1,0.5;0.5,1", "--random", "2", "--samples", "50000", "--out", str(out)]) == 0
    assert out.read_text().count("PASS") == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nodalfield", "constants", "--n", "2", "--samples", "20000"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("# manifest sha256=")
