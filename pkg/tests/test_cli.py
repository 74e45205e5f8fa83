import subprocess
import sys

import pytest

from amplitude_spde import cli
from amplitude_spde.errors import ExperimentAborted

FAST = ["--modes", "16", "--quad", "64", "--slow-dt", "0.005", "--t0", "0.1", "--samples", "3",
        "--snapshots", "5"]


def test_coeffs(capsys):
    assert cli.main(["coeffs", "--h", "20"]) == 0
    out = capsys.readouterr().out
    for tag in ("F111", "Gc_e1_e1", "case1_second_noise", "sigma3_bar"):
        assert tag in out
    assert "closed series" in out and "tensor pseudo-inverse" in out


def test_validate(capsys):
    assert cli.main(["validate", "--model", "allen-cahn", "--h", "20"]) == 0
    assert "G_frechet_order2" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["simulate", "--case", "3"], ["coeffs"], ["convergence", "--epsilons", "a,b"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 1


def test_invalid_values_exit_1(tmp_path):
    argv = ["convergence", "--case", "1", "--epsilons", "0.05,0.1", "--out", str(tmp_path)] + FAST
    assert cli.main(argv) == 1


@pytest.mark.filterwarnings("ignore:sigma1 routes")
def test_simulate_writes_outputs(tmp_path, capsys):
    argv = ["simulate", "--case", "2", "--epsilon", "0.1", "--h", "10", "--include-k", "off",
            "--out", str(tmp_path)] + FAST
    assert cli.main(argv) == 0
    assert (tmp_path / "per_time.csv").exists() and (tmp_path / "summary.csv").exists()
    assert (tmp_path / "plot_errors.py").exists()
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(summary) == 2 and summary[1].split(",")[-3:] == ["0", "signed", "CaseII"]


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("case_tag = 1\nepsilon_list = 0.1,0.05,0.025\nn_samples = 2\nh = 5\n")
    argv = ["convergence", "--config", str(cfg), "--h", "20", "--out", str(tmp_path / "o")] + FAST
    assert cli.main(argv) == 0
    rows = (tmp_path / "o" / "summary.csv").read_text().splitlines()
    assert len(rows) == 4


def test_aborted_exit_2(monkeypatch, tmp_path):
    def boom(cfg):
        raise ExperimentAborted("too many blow-ups")

    monkeypatch.setattr(cli, "run_comparison", boom)
    assert cli.main(["simulate", "--case", "1", "--epsilon", "0.1", "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "amplitude_spde", "coeffs", "--h", "2"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    assert "sigma1" in res.stdout
