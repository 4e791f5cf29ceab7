import json
from pathlib import Path

import pytest

from circlekam import __version__
from circlekam.cli import main

SMALL_ZERO = """\
experiment: lyapunov_expansion
ensemble:
  alpha: [golden, 0.41421356237309515]
  zeta:
    - {}
    - {}
eps: [0.04, 0.02]
mc:
  n_steps: 200
  n_samples: 4
"""

SMALL_MATRIX = """\
experiment: matrix_expansion
ensemble:
  alpha: [golden, 0.41421356237309515]
  E:
    - [1.0, 0.5, -0.3, 0.2]
    - [-0.4, 1.0, 0.6, 0.0]
eps: [0.04, 0.02]
mc:
  n_steps: 2000
  n_samples: 6
checks:
  shrink_band: [0.0, 1.0e+9]
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_all(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("lyapunov_expansion", "stationary_density", "kam_circle", "commutator_circle",
                 "matrix_expansion", "schrodinger", "kam_matrix", "commutator_matrix"):
        assert f"{name}:" in out


def test_validate_ok_and_error(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, SMALL_ZERO)]) == 0
    bad = write(tmp_path, SMALL_ZERO + "extra: 1\n", "bad.yaml")
    assert main(["validate", "--config", bad]) == 2
    assert "bad.yaml:11: extra: unknown key" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_zero_perturbation_run(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["lyapunov_expansion", "--config", write(tmp_path, SMALL_ZERO), "--out", str(out)]) == 0
    files = read_all(out)
    assert set(files) == {"lyapunov.csv", "summary.txt", "manifest.json"}
    summary = files["summary.txt"].decode()
    assert summary.endswith("RESULT: PASS\n")
    rows = files["lyapunov.csv"].decode().splitlines()
    assert rows[0].startswith("eps,lambda2,")
    assert rows[1].split(",")[1] == "0.0" and rows[1].split(",")[5] == "0.0"


def test_manifest_contents(tmp_path):
    out = tmp_path / "out"
    main(["lyapunov_expansion", "--config", write(tmp_path, SMALL_ZERO), "--out", str(out), "--seed", "123",
          "--threads", "2"])
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 123 and m["config"]["seed"] == 123
    assert m["version"] == __version__ and m["experiment"] == "lyapunov_expansion"
    # every default that influenced the run is echoed
    assert m["config"]["mc"]["estimator"] == "conditional" and m["config"]["spectral"]["M"] == 256
    assert "threads" not in json.dumps(m) and str(tmp_path) not in json.dumps(m)
    assert set(m["files"]) == {"lyapunov.csv", "summary.txt"}


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, SMALL_MATRIX)
    main(["matrix_expansion", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["matrix_expansion", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "matrix_lyapunov.csv").read_bytes() != (tmp_path / "b" / "matrix_lyapunov.csv").read_bytes()


def test_byte_identical_across_threads(tmp_path):
    cfg = write(tmp_path, SMALL_MATRIX)
    for t in ("1", "3"):
        assert main(["matrix_expansion", "--config", cfg, "--out", str(tmp_path / t), "--threads", t]) == 0
    assert read_all(tmp_path / "1") == read_all(tmp_path / "3")


def test_subcommand_mismatch_exit(tmp_path):
    assert main(["schrodinger", "--config", write(tmp_path, SMALL_ZERO)]) == 2


def test_failed_check_exit(tmp_path):
    text = SMALL_MATRIX.replace("shrink_band: [0.0, 1.0e+9]", "shrink_band: [1.0e+8, 1.0e+9]")
    out = tmp_path / "o"
    assert main(["matrix_expansion", "--config", write(tmp_path, text), "--out", str(out)]) == 1
    assert (out / "summary.txt").read_text().endswith("RESULT: FAIL\n")


def test_schrodinger_zero_coupling(tmp_path):
    text = "experiment: schrodinger\nenergy: 1.0\npotential:\n  values: [1.0, -1.0]\ng: [0.0]\nmc:\n  n_steps: 2000\n  n_samples: 8\n"
    out = tmp_path / "o"
    assert main(["schrodinger", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    row = (out / "schrodinger.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "0.0" and row[3] == "0.0"


def test_kam_planted_converges(tmp_path):
    text = """\
experiment: kam_circle
ensemble:
  alpha: [golden, 0.41421356237309515]
  planted_h:
    sin: [1.0e-4]
    cos: [0.0, 1.0e-5]
mc:
  n_steps: 500
  n_samples: 4
"""
    out = tmp_path / "o"
    assert main(["kam_circle", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    report = (out / "kam_report.txt").read_text()
    assert "# stop_reason = converged" in report


@pytest.mark.parametrize("flag,value", [("--seed", "-1"), ("--seed", str(2 ** 64)), ("--threads", "0")])
def test_bad_flags(tmp_path, flag, value):
    with pytest.raises(SystemExit) as exc:
        main(["lyapunov_expansion", "--config", write(tmp_path, SMALL_ZERO), flag, value])
    assert exc.value.code == 2
