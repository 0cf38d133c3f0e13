"""Command-line interface tests.

The exit codes are the machine contract: 0 success, 1 usage/parse errors,
2 solved-but-infeasible (or refused classification).  Printed output is
checked only for the stable key=value tokens.
"""

import shutil

import pytest

from mpccreg.bench import corpus_dir, parse_report_csv
from mpccreg.cli import main


def instance(name: str):
    return str(corpus_dir() / f"{name}.mpcc")


def make_corpus(tmp_path, names):
    d = tmp_path / "corpus"
    d.mkdir()
    for name in names:
        shutil.copy(instance(name), d / f"{name}.mpcc")
    return d


class TestSolve:
    def test_target_met_exit_zero(self, capsys):
        code = main(["solve", instance("example5"), "--reg", "disj"])
        out = capsys.readouterr().out
        assert code == 0
        assert "status: target-met" in out
        assert "f: 0.0" in out
        assert "maxvio: 0.0" in out

    def test_unbounded_instance_exit_two(self, capsys):
        code = main(["solve", instance("example7"), "--reg", "disj"])
        out = capsys.readouterr().out
        assert code == 2
        assert "status: subproblem-failure" in out

    def test_missing_file(self, capsys):
        code = main(["solve", "no-such-file.mpcc", "--reg", "disj"])
        assert code == 1
        assert "no-such-file.mpcc" in capsys.readouterr().err

    def test_unparsable_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.mpcc"
        bad.write_text("this is not a program\n")
        assert main(["solve", str(bad)]) == 1
        assert capsys.readouterr().err

    def test_unknown_reg(self, capsys):
        code = main(["solve", instance("example5"), "--reg", "spam"])
        assert code == 1
        assert "scholtes" in capsys.readouterr().err

    def test_invalid_param(self, capsys):
        code = main(["solve", instance("example5"), "--t0", "-1"])
        assert code == 1

    def test_trace_out(self, tmp_path, capsys):
        out_csv = tmp_path / "trace.csv"
        code = main(
            ["solve", instance("example5"), "--reg", "disj", "--out", str(out_csv)]
        )
        assert code == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "k,t,x1,x2,maxvio,status,millis"
        assert len(lines) >= 2

    def test_scholtes_run(self, capsys):
        code = main(
            ["solve", instance("example6"), "--reg", "scholtes", "--eps", "1e-6"]
        )
        assert code == 0
        assert "reg: scholtes" in capsys.readouterr().out


class TestAnalyze:
    def test_biactive_descent_tokens(self, capsys):
        code = main(["analyze", instance("example7"), "--point", "0", "0"])
        out = capsys.readouterr().out
        assert code == 0
        assert "class=C QI=0 BI=1 CI=1" in out
        assert "LICQ=true" in out

    def test_index_shift_instance(self, capsys):
        code = main(["analyze", instance("example2"), "--point", "0", "0", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "CI=0" in out
        assert "ND4=false" in out

    def test_relaxed_analysis_with_t(self, capsys):
        code = main(
            ["analyze", instance("example2"), "--t", "0.1",
             "--point", "0.05", "0.05", "1"]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "QI=1" in out
        assert "CI=1" in out

    def test_wrong_dimension(self, capsys):
        code = main(["analyze", instance("example7"), "--point", "0"])
        assert code == 1
        assert "dimension" in capsys.readouterr().err

    def test_infeasible_point_refused(self, capsys):
        code = main(["analyze", instance("example5"), "--point", "1", "1"])
        assert code == 2
        assert "refused" in capsys.readouterr().err

    def test_point_required(self, capsys):
        assert main(["analyze", instance("example5")]) == 1


class TestBench:
    def test_writes_artifacts(self, tmp_path, capsys):
        corpus = make_corpus(tmp_path, ["example5", "prototype"])
        outdir = tmp_path / "results"
        code = main(
            ["bench", str(corpus), "--regs", "disj,scholtes",
             "--time-runs", "1", "--outdir", str(outdir)]
        )
        assert code == 0
        report = parse_report_csv((outdir / "report.csv").read_text())
        assert len(report.rows) == 4  # 2 problems x 2 regs
        assert report.regs == ("disj", "scholtes")
        profile = (outdir / "profile.csv").read_text().splitlines()
        assert profile[0] == "reg,tau,fraction"
        plot = (outdir / "plot_profiles.py").read_text()
        assert "matplotlib" in plot
        assert "profile.csv" in plot

    def test_unknown_reg_lists_kinds(self, tmp_path, capsys):
        corpus = make_corpus(tmp_path, ["example5"])
        code = main(["bench", str(corpus), "--regs", "disj,spam"])
        err = capsys.readouterr().err
        assert code == 1
        for kind in ("scholtes", "ks", "disj", "qpf"):
            assert kind in err

    def test_missing_corpus_dir(self, tmp_path, capsys):
        code = main(["bench", str(tmp_path / "none"), "--regs", "disj"])
        assert code == 1

    def test_default_corpus_is_bundled(self, tmp_path, capsys, monkeypatch):
        # no directory argument: bench falls back to the packaged corpus;
        # we only check the corpus resolution path, not a full run
        monkeypatch.chdir(tmp_path)
        code = main(["bench", "--regs", "spam"])
        assert code == 1  # reg validation fires after corpus resolution


class TestProfile:
    def test_profile_from_report(self, tmp_path, capsys):
        corpus = make_corpus(tmp_path, ["example5", "prototype"])
        outdir = tmp_path / "results"
        main(
            ["bench", str(corpus), "--regs", "disj,scholtes",
             "--time-runs", "1", "--outdir", str(outdir)]
        )
        out_csv = tmp_path / "taubar.csv"
        code = main(
            ["profile", str(outdir / "report.csv"), "--metric", "taubar",
             "--out", str(out_csv)]
        )
        assert code == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "reg,tau,fraction"
        # per-reg fractions are monotone in tau
        per_reg: dict = {}
        for ln in lines[1:]:
            reg, tau, frac = ln.split(",")
            per_reg.setdefault(reg, []).append(float(frac))
        for fracs in per_reg.values():
            assert fracs == sorted(fracs)

    def test_profile_rejects_garbage(self, tmp_path, capsys):
        bad = tmp_path / "report.csv"
        bad.write_text("definitely,not,a,report\n")
        assert main(["profile", str(bad)]) == 1

    def test_profile_missing_file(self, capsys):
        assert main(["profile", "nope.csv"]) == 1


class TestMeta:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "mpccreg" in capsys.readouterr().out

    def test_help(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for sub in ("solve", "analyze", "bench", "profile"):
            assert sub in out

    def test_no_arguments(self, capsys):
        assert main([]) == 1

    def test_console_script_installed(self):
        assert shutil.which("mpccreg") is not None
