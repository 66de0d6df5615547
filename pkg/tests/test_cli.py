import csv
import io
from pathlib import Path

import pytest

from dualdescent.cli import EXIT_CONFIG, EXIT_IO, echoed_config, main
from dualdescent.config import parse_config


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(tmp_path, text, out="out", *extra):
    cfg = write(tmp_path, text)
    out_dir = tmp_path / out
    code = main([cfg, "--out", str(out_dir), "--quiet", *extra])
    return code, out_dir


def checks(out_dir):
    lines = (out_dir / "summary.txt").read_text().splitlines()
    return [l for l in lines if l.startswith("CHECK ")]


class TestCommands:
    def test_equiv(self, tmp_path):
        code, out = run_cli(tmp_path, "command=equiv\nfamily=poisson\nmu=2\nT=1000\nseed=7\n"
                                      "schedule=inv_t\nscale=1")
        assert code == 0
        rows = list(csv.reader(io.StringIO((out / "equiv.csv").read_text())))
        assert rows[0] == ["t", "theta", "mu", "g_theta", "deviation", "projected_md", "projected_ngd"]
        assert len(rows) == 1001
        (line,) = checks(out)
        assert line.startswith("CHECK equivalence: PASS max_deviation=")

    def test_identities(self, tmp_path):
        code, out = run_cli(tmp_path, "command=identities\nfamily=bernoulli\nsamples=1000\nseed=1")
        assert code == 0
        names = [l.split(":")[0] for l in checks(out)]
        assert names == ["CHECK duality_gap", "CHECK dual_duality_gap", "CHECK inverse_map",
                         "CHECK hessian_reciprocity"]
        assert (out / "identities.csv").read_text().startswith("check,max_error,tolerance,pass\n")

    def test_cross_equiv(self, tmp_path):
        code, out = run_cli(tmp_path, "command=cross-equiv\nfamily=bernoulli\nmu=0.3\n"
                                      "schedule=constant\nscale=0.1\nT=300")
        assert code == 0
        assert (out / "cross_equiv.csv").exists()

    def test_efficiency(self, tmp_path):
        code, out = run_cli(tmp_path, "command=efficiency\nfamily=gaussian\nmu=0\nT=200\nM=400\n"
                                      "seed=3\nper_replicate=true")
        assert code == 0
        text = (out / "efficiency.csv").read_text().splitlines()
        assert text[0] == "family,mu_true,T,M,entry_i,entry_j,scaled_cov,bound,ratio,se,pass"
        assert len((out / "replicates.csv").read_text().splitlines()) == 401

    def test_trajectory(self, tmp_path):
        code, out = run_cli(tmp_path, "command=trajectory\nfamily=product\nmu=0.5;2;0.3\n"
                                      "optimizer=retraction\nschedule=constant\nscale=0.1\nT=40")
        assert code == 0
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert rows[0] == "t,theta,mu,loss,cumulative_regret,projected"
        assert len(rows) == 41

    def test_non_probative_fails(self, tmp_path):
        code, out = run_cli(tmp_path, "command=equiv\nfamily=bernoulli\nmu=0.3\nT=50\n"
                                      "schedule=inv_t\nscale=1")
        assert code == 1
        assert "FAIL" in checks(out)[0]

    def test_abort_writes_partial(self, tmp_path):
        code, out = run_cli(tmp_path, "command=equiv\nfamily=poisson\ndim=2\nmu=0.02;10000\nT=20\n"
                                      "schedule=constant\nscale=2.0\ninit=fixed\ninit_value=1;10000")
        assert code == 1
        assert (out / "equiv.csv.partial").exists()
        assert not (out / "equiv.csv").exists()
        assert "aborted" in checks(out)[0]


class TestContract:
    def test_config_error_exit(self, tmp_path, capsys):
        code, out = run_cli(tmp_path, "family=gamma")
        assert code == EXIT_CONFIG
        assert "unknown family 'gamma' (line 1)" in capsys.readouterr().err
        assert not out.exists()

    def test_missing_config(self, tmp_path):
        assert main([str(tmp_path / "nope.cfg"), "--quiet"]) == EXIT_IO

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _ = run_cli(tmp_path, "command=identities\nfamily=gaussian\nsamples=10", out="file/sub")
        assert code == EXIT_IO

    def test_exit_zero_iff_all_pass(self, tmp_path):
        code, out = run_cli(tmp_path, "command=identities\nfamily=poisson\nsamples=200")
        assert (code == 0) == all(": PASS" in l for l in checks(out))

    def test_summary_round_trip(self, tmp_path):
        text = "command=equiv\nfamily=poisson\nmu=2\nT=100\nseed=7\nschedule=inv_t\nscale=1"
        _, out = run_cli(tmp_path, text)
        echoed = echoed_config((out / "summary.txt").read_text())
        assert parse_config(echoed) == parse_config(text)

    def test_deterministic_bytes(self, tmp_path):
        text = "command=trajectory\nfamily=poisson\nmu=2\noptimizer=mirror\nT=300\nseed=11"
        _, a = run_cli(tmp_path, text, "a")
        _, b = run_cli(tmp_path, text, "b")
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        assert (a / "summary.txt").read_bytes() == (b / "summary.txt").read_bytes()

    def test_stdout_summary(self, tmp_path, capsys):
        cfg = write(tmp_path, "command=identities\nfamily=gaussian\nsamples=10")
        main([cfg, "--out", str(tmp_path / "o")])
        assert "CHECK inverse_map: PASS" in capsys.readouterr().out
