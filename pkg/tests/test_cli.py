import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grbf import gaussian
from grbf.cli import RunConfig, build_parser, config_from_args, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_and_summary(text):
    lines = [line for line in text.strip().splitlines() if line]
    summary = json.loads(lines[-1])
    start = next(i for i, line in enumerate(lines) if "," in line and not line.startswith("{"))
    return lines[start:-1], summary


configs = st.builds(
    RunConfig,
    command=st.sampled_from(["selftest", "convergence", "solve", "train", "whitney"]),
    problem=st.integers(1, 4),
    n=st.none() | st.integers(1, 4096),
    n_min=st.none() | st.sampled_from([1, 2, 8, 64]),
    n_max=st.none() | st.sampled_from([64, 128, 2048]),
    gamma=st.none() | st.floats(0.0, 1e6, allow_nan=False),
    steps=st.none() | st.integers(1, 10_000),
    lr=st.none() | st.floats(1e-6, 1.0),
    optimizer=st.sampled_from(["adam", "lbfgs"]),
    seed=st.integers(0, 2**31),
    out=st.none() | st.sampled_from(["a.csv", "out/run.csv"]),
    full_scale=st.booleans(),
    mutate=st.booleans(),
)


class TestRunConfig:
    @settings(max_examples=100, deadline=None)
    @given(cfg=configs)
    def test_round_trip(self, cfg):
        assert RunConfig.parse(cfg.render()) == cfg

    def test_rejects_unknown_key(self):
        with pytest.raises(ValueError):
            RunConfig.parse("command=solve\nwidth=3\n")

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            RunConfig(command="solve", n_min=12)
        with pytest.raises(ValueError):
            RunConfig(command="solve", n=0)
        with pytest.raises(ValueError):
            RunConfig(command="solve", n_min=64, n_max=8)
        with pytest.raises(ValueError):
            RunConfig(command="fly")
        with pytest.raises(ValueError):
            RunConfig(command="train", optimizer="sgd")

    def test_comments_and_blank_lines(self):
        cfg = RunConfig.parse("# run\ncommand = solve\n\nn = 16  # basis size\n")
        assert cfg.n == 16 and cfg.command == "solve"

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("command=train\nproblem=2\nn=32\nlr=0.5\n")
        args = build_parser().parse_args(["solve", "--config", str(path), "--n", "8"])
        cfg = config_from_args(args)
        assert (cfg.command, cfg.problem, cfg.n, cfg.lr) == ("solve", 2, 8, 0.5)
        assert cfg.seed == 0


class TestSelftest:
    def test_passes(self, capsys):
        code, out, _ = run(capsys, "selftest")
        assert code == 0
        summary = json.loads(out.strip().splitlines()[-1])
        assert summary["failed"] == 0

    def test_mutation_is_caught(self, capsys):
        original = gaussian._term_sign
        code, out, _ = run(capsys, "selftest", "--mutate")
        assert code != 0
        assert gaussian._term_sign is original
        assert "quadrature_duality" in out


class TestConvergence:
    def test_csv(self, capsys):
        code, out, _ = run(capsys, "convergence", "--problem", "1", "--n-min", "8", "--n-max", "32")
        assert code == 0
        rows, summary = csv_and_summary(out)
        assert rows[0] == "n,rel_mse_solve,kappa"
        body = [r.split(",") for r in rows[1:]]
        assert [int(r[0]) for r in body] == [8, 16, 32]
        for r in body:
            mantissa = r[1].split("e")[0].replace("-", "").replace(".", "")
            assert len(mantissa) >= 12
        errs = [float(r[1]) for r in body]
        assert errs[0] > errs[1] > errs[2]
        assert summary["rows"] == 3

    def test_problem1_default_range_reference_values(self, capsys):
        reference = [1.3943e-1, 2.0914e-5, 1.2705e-13, 3.8740e-15, 5.9538e-14,
                     2.2211e-13, 4.0239e-13, 5.5459e-13, 6.2722e-13]
        code, out, _ = run(capsys, "convergence", "--problem", "1")
        rows, _ = csv_and_summary(out)
        errs = [float(r.split(",")[1]) for r in rows[1:]]
        assert code == 0 and len(errs) == len(reference)
        for got, ref in zip(errs, reference):
            assert ref / 10 <= got <= ref * 10

    def test_single_n(self, capsys, tmp_path):
        path = tmp_path / "c.csv"
        code, _, _ = run(capsys, "convergence", "--n-min", "16", "--n-max", "16", "--out", str(path))
        assert code == 0
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2 and lines[1].startswith("16,")

    def test_rejects_mixed_problem(self, capsys):
        code, _, err = run(capsys, "convergence", "--problem", "4")
        assert code == 2 and "whitney" in err

    def test_bad_range_exit_code(self, capsys):
        code, _, err = run(capsys, "convergence", "--n-min", "12")
        assert code == 2 and "power of two" in err


class TestSolveAndTrain:
    def test_solve_problem1(self, capsys):
        code, out, _ = run(capsys, "solve", "--n", "32")
        rows, summary = csv_and_summary(out)
        assert code == 0 and rows[0] == "n,rel_mse,kappa"
        assert summary["rel_mse"] <= 1e-12

    def test_solve_problem4(self, capsys):
        code, out, _ = run(capsys, "solve", "--problem", "4", "--n", "4")
        rows, summary = csv_and_summary(out)
        assert code == 0 and rows[0] == "n,total,mse_u,mse_f,kappa"
        assert summary["total"] == pytest.approx(summary["mse_u"] + summary["mse_f"], rel=1e-14)

    def test_train_one_step(self, capsys):
        code, out, _ = run(capsys, "train", "--problem", "1", "--n", "8", "--steps", "1")
        rows, summary = csv_and_summary(out)
        assert code == 0
        assert rows[0] == "step,loss,kappa" and len(rows) == 2
        assert summary["steps"] == 1 and summary["test_rel_mse"] is not None

    def test_train_rejects_mixed(self, capsys):
        code, _, _ = run(capsys, "train", "--problem", "4")
        assert code == 2


class TestWhitney:
    def test_deterministic(self, capsys):
        _, a, _ = run(capsys, "whitney", "--n", "4", "--seed", "7")
        _, b, _ = run(capsys, "whitney", "--n", "4", "--seed", "7")
        rows_a, sa = csv_and_summary(a)
        rows_b, sb = csv_and_summary(b)
        assert rows_a == rows_b
        assert rows_a[0] == "mode,n,total,mse_u,mse_f,kappa"
        assert sa["exact_pair_mse_f"] <= 1e-8
        sa.pop("wall_time"), sb.pop("wall_time")
        assert sa == sb


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "grbf.cli", "solve", "--n", "8"],
                         capture_output=True, text=True, check=True)
    summary = json.loads(out.stdout.strip().splitlines()[-1])
    assert np.isfinite(summary["rel_mse"])


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--problem", "9"])
    assert exc.value.code == 2
