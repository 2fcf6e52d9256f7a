import subprocess
import sys

import pytest

from hurst_sense.cli import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, ConfigError,
                             emit_plotscript, main, parse_config, run)


def cfg_file(tmp_path, text, name="run.cfg"):
    f = tmp_path / name
    f.write_text(text)
    return f


def run_cmd(tmp_path, text, out="out", **over):
    f = cfg_file(tmp_path, text + f"\nout = {tmp_path / out}\n")
    return run(f, over), tmp_path / out


class TestParse:
    def test_defaults_and_aliases(self):
        c = parse_config("command = hurst\nlambda0 = 0.4\nn_paths = 77\n")
        assert c.params.x0 == 0.4 and c.n_paths == 77
        assert c.eps == (0.08, 0.04, 0.02)
        assert c.params.alpha == 1.0 and c.params.rho == 0.5 and c.params.p == -1.0

    def test_meanrev_default_ladder(self):
        assert parse_config("command = meanrev").eps == (0.4, 0.2, 0.1, 0.05)

    def test_comments_and_blank_lines(self):
        c = parse_config("# header\n\ncommand = value  # trailing\nseed = 5\n")
        assert c.seed == 5 and c.command == "value"

    def test_overrides_win(self):
        c = parse_config("command = value\npaths = 10\nseed = 1\n", {"paths": 20, "seed": None})
        assert c.n_paths == 20 and c.seed == 1

    @pytest.mark.parametrize("text,line,word", [
        ("command = value\nfoo = 1\n", 2, "unknown key"),
        ("command = value\n\nbeta = 1.5\n", 3, "beta"),
        ("command = value\nH = 1.2\n", 2, "H"),
        ("command = value\npaths = many\n", 2, "paths"),
        ("command = value\njunk line\n", 2, "key = value"),
        ("command = value\nseed = 1\nseed = 2\n", 3, "duplicate"),
        ("command = nope\n", 1, "command"),
        ("command = meanrev\neps = 0.1, -0.2\n", 2, "positive"),
        ("command = hurst\nH = 0.3\n", 2, "H = 0.5"),
        ("command = value\np = 0.5\n", 2, "negative"),
    ])
    def test_line_numbered_errors(self, text, line, word):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.line == line
        assert str(exc.value).startswith(f"line {line}:")
        assert word in str(exc.value)

    def test_missing_command(self):
        with pytest.raises(ConfigError, match="command"):
            parse_config("seed = 3\n")


class TestRun:
    def test_empty_config_prints_usage(self, tmp_path, capsys):
        assert run(cfg_file(tmp_path, "# nothing here\n\n")) == EXIT_CONFIG
        assert "usage" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run(tmp_path / "absent.cfg") == EXIT_IO

    def test_config_error_exit(self, tmp_path, capsys):
        code, _ = run_cmd(tmp_path, "command = value\nrho = 2\n")
        assert code == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        f = cfg_file(tmp_path, f"command = value\npaths = 10\nout = {blocker / 'sub'}\n")
        assert run(f) == EXIT_IO

    def test_kernel_check(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = kernel-check\nh_list = 0.3, 0.5\n"
                                      "t_list = 1.0\ndq_h_list = 0.5\n")
        assert code == EXIT_OK
        rows = (out / "kernel_check.csv").read_text().splitlines()
        assert rows[0] == "H,t,kernel_l2,normalization_residual,c_identity_residual"
        assert len(rows) == 3
        for r in rows[1:]:
            assert abs(float(r.split(",")[3])) < 1e-6
        assert (out / "kernel_dq.csv").exists()
        manifest = (out / "manifest.txt").read_text()
        assert "command = kernel-check" in manifest and "wall_time_s" in manifest
        assert manifest.count("command =") == 1

    def test_simulate(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = simulate\nn_pos = 20\npaths = 200\nn_show = 2\n")
        assert code == EXIT_OK
        lines = (out / "paths.csv").read_text().splitlines()
        assert lines[1] == "path,t,fbm,lam,dlam,R" and len(lines) == 2 + 2 * 21
        assert (out / "frechet.csv").read_text().splitlines()[1] == "eps,mean,stderr,n_paths"

    def test_value_writes_riccati(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = value\nn_pos = 20\npaths = 500\n")
        assert code == EXIT_OK
        head = (out / "value.csv").read_text().splitlines()
        assert head[1] == "strategy,mean,stderr,n_paths,reference"
        assert head[2].split(",")[3] == "500"
        assert (out / "riccati.csv").exists()

    def test_value_model2_needs_strategy(self, tmp_path):
        code, _ = run_cmd(tmp_path, "command = value\nmodel = model2\n")
        assert code == EXIT_CONFIG
        code, _ = run_cmd(tmp_path, "command = value\nmodel = model2\nstrategy = constant:0.2\n"
                                    "n_pos = 20\npaths = 100\n")
        assert code == EXIT_OK

    def test_gateaux(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = gateaux\nn_pos = 20\npaths = 500\n")
        assert code == EXIT_OK
        row = (out / "gateaux.csv").read_text().splitlines()[2].split(",")
        assert row[0] == "constant" and float(row[4]) > 0

    def test_bad_direction(self, tmp_path):
        code, _ = run_cmd(tmp_path, "command = gateaux\ndirection = sideways\npaths = 10\n")
        assert code == EXIT_CONFIG

    def test_hurst_two_sided_with_zero_row(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = hurst\nn_pos = 20\npaths = 500\n"
                                      "escalate = false\neps = 0.04, 0.02\n")
        assert code == EXIT_OK
        lines = (out / "expansion.csv").read_text().splitlines()
        eps = [float(l.split(",")[0]) for l in lines[4:]]
        assert eps == [-0.04, -0.02, 0.0, 0.02, 0.04]

    def test_meanrev(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = meanrev\nn_pos = 20\npaths = 300\n"
                                      "eps = 0.4, 0.1\n")
        assert code == EXIT_OK
        assert len((out / "meanrev.csv").read_text().splitlines()) == 4

    def test_bound(self, tmp_path):
        code, out = run_cmd(tmp_path, "command = bound\nn_pos = 20\npaths = 2000\n")
        assert code == EXIT_OK
        text = (out / "bound.csv").read_text()
        assert "label=estimated_bound" in text and "holds=True" in text

    def test_numeric_failure_exit_code(self, tmp_path, capsys, monkeypatch):
        import hurst_sense.cli as C

        def blow(*a, **k):
            raise C.RiccatiBlowUpError("Riccati solution blew up at step 3")

        monkeypatch.setattr(C, "solve_riccati", blow)
        code, _ = run_cmd(tmp_path, "command = value\nn_pos = 20\npaths = 10\n")
        assert code == EXIT_NUMERIC
        assert "numerical error" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, tmp_path):
        text = "command = value\nn_pos = 20\npaths = 5000\nseed = 4\n"
        run_cmd(tmp_path, text, out="a")
        run_cmd(tmp_path, text, out="b")
        assert (tmp_path / "a/value.csv").read_bytes() == (tmp_path / "b/value.csv").read_bytes()

    @pytest.mark.parametrize("text,name", [
        ("command = value\nn_pos = 20\npaths = 9000\nseed = 2\n", "value.csv"),
        ("command = hurst\nn_pos = 20\npaths = 9000\nseed = 2\nescalate = false\n",
         "expansion.csv"),
    ])
    def test_worker_count_does_not_change_bytes(self, tmp_path, monkeypatch, text, name):
        monkeypatch.setenv("HURST_SENSE_THREADS", "1")
        run_cmd(tmp_path, text, out="one")
        monkeypatch.setenv("HURST_SENSE_THREADS", "8")
        run_cmd(tmp_path, text, out="eight")
        a = (tmp_path / "one" / name).read_bytes()
        assert a == (tmp_path / "eight" / name).read_bytes()
        assert b"\r" not in a


class TestPlot:
    def test_expansion_script(self, tmp_path):
        run_cmd(tmp_path, "command = hurst\nn_pos = 20\npaths = 300\nescalate = false\n")
        gp = emit_plotscript(tmp_path / "out/expansion.csv")
        s = gp.read_text()
        assert "set logscale xy" in s and "residual" in s and "slope 1" in s

    def test_meanrev_script(self, tmp_path):
        run_cmd(tmp_path, "command = meanrev\nn_pos = 20\npaths = 200\neps = 0.4, 0.2\n")
        s = emit_plotscript(tmp_path / "out/meanrev.csv", tmp_path / "m.gp").read_text()
        assert "gap / eps^delta" in s

    def test_missing_column_named(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("eps,residual\n0.1,0.2\n")
        with pytest.raises(ValueError, match="residual_stderr"):
            emit_plotscript(f)


class TestMain:
    def test_flags_override(self, tmp_path):
        f = cfg_file(tmp_path, "command = value\nn_pos = 20\npaths = 10\n")
        out = tmp_path / "o"
        assert main(["value", "--config", str(f), "--out", str(out), "--paths", "33",
                     "--seed", "9"]) == EXIT_OK
        assert "paths = 33" in (out / "manifest.txt").read_text()
        assert ",33," in (out / "value.csv").read_text()

    def test_no_config_is_usage(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert "usage" in capsys.readouterr().err

    def test_plot_needs_report(self):
        assert main(["plot"]) == EXIT_CONFIG

    def test_console_entry_point(self, tmp_path):
        f = cfg_file(tmp_path, "command = kernel-check\nh_list = 0.5\nt_list = 1\n"
                               f"dq_h_list = 0.5\nout = {tmp_path / 'k'}\n")
        r = subprocess.run([sys.executable, "-m", "hurst_sense.cli", "kernel-check",
                            "--config", str(f)], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "k/kernel_check.csv").exists()
