"""
Test the command-line surface: subcommands, report files and exit codes.
"""
import csv
import json
import os
import tempfile

import pytest

from dbarlab.cli import EXIT_INPUT, main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    """Isolate from DBARLAB_* variables and any .env in the working directory."""
    for name in ("DBARLAB_SEED", "DBARLAB_OUT", "DBARLAB_GRID", "DBARLAB_CUTOFF", "DBARLAB_TRACE"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_dirichlet_square():
    """dirichlet --shape square writes a CSV row with lambda near 2 pi^2."""
    with tempfile.TemporaryDirectory() as out:
        assert main(["dirichlet", "--shape", "square", "--N", "64", "--out", out]) == 0
        rows = _rows(os.path.join(out, "dirichlet.csv"))
        assert len(rows) == 1
        assert float(rows[0]["lam"]) == pytest.approx(19.7392, rel=0.01)
        grid = _rows(os.path.join(out, "dirichlet_grid.csv"))
        assert len(grid) == 63 * 63
        assert set(grid[0]) == {"x", "y", "value"}
        with open(os.path.join(out, "bundle.json")) as f:
            bundle = json.load(f)
        assert bundle["count"] == 1 and bundle["entries"][0]["experiment"] == "dirichlet"


def test_reinhardt_bidisc_model_file():
    """reinhardt --model bidisc.json --q 1 gives the non-compact verdict."""
    with tempfile.TemporaryDirectory() as tmp:
        model = os.path.join(tmp, "bidisc.json")
        with open(model, "w") as f:
            json.dump({"name": "bidisc"}, f)
        out = os.path.join(tmp, "reports")
        assert main(["reinhardt", "--model", model, "--q", "1", "--out", out]) == 0
        with open(os.path.join(out, "reinhardt.json")) as f:
            report = json.load(f)
        assert report["verdict"] == "non-compact"
        assert report["content"]["verdict"] == "non-compact"
        assert _rows(os.path.join(out, "reinhardt.csv"))[0]["verdict"] == "non-compact"


def test_empty_mask_is_usage_error(capsys):
    """An empty mask file exits with the input-error status and names the field."""
    with tempfile.TemporaryDirectory() as tmp:
        mask = os.path.join(tmp, "empty.txt")
        open(mask, "w").close()
        status = main(["dirichlet", "--mask", mask, "--out", os.path.join(tmp, "out")])
        assert status == EXIT_INPUT
        assert "mask" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    """Missing required flags are argparse usage errors."""
    with pytest.raises(SystemExit) as exc:
        main(["pq-check"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["dirichlet", "--shape", "square", "--mask", "W.txt"])
    assert exc.value.code == 2


def test_invalid_numbers_exit_2(capsys):
    """Non-positive numeric parameters are rejected before anything runs."""
    assert main(["wedge", "--m", "0"]) == EXIT_INPUT
    assert "m" in capsys.readouterr().err


def test_unknown_model_exit_2():
    """A model that is neither a file nor a built-in is an input error."""
    with tempfile.TemporaryDirectory() as out:
        assert main(["commutator", "--model", "no-such-model", "--out", out]) == EXIT_INPUT


def test_commutator_singular_values(capsys):
    """commutator writes the sorted singular values and the decay profile."""
    with tempfile.TemporaryDirectory() as out:
        assert main(["commutator", "--model", "ball", "--j", "1", "--cutoff", "12", "--out", out]) == 0
        sigma = [float(r["sigma"]) for r in _rows(os.path.join(out, "singular_values.csv"))]
        assert sigma == sorted(sigma, reverse=True)
        assert sigma[0] == pytest.approx(3 ** -0.5, abs=1e-10)
        assert "decaying" in capsys.readouterr().out


def test_wedge_with_trace_and_trace_summary(capsys):
    """--trace writes a JSONL trace that the trace subcommand summarises."""
    with tempfile.TemporaryDirectory() as tmp:
        pattern = os.path.join(tmp, "run_{run_id}.jsonl")
        out = os.path.join(tmp, "out")
        assert main(["wedge", "--m", "6", "--out", out, "--trace", pattern]) == 0
        rows = _rows(os.path.join(out, "wedge.csv"))
        assert [int(r["j"]) for r in rows] == list(range(1, 7))
        traces = [f for f in os.listdir(tmp) if f.endswith(".jsonl")]
        assert len(traces) == 1
        capsys.readouterr()
        assert main(["trace", os.path.join(tmp, traces[0])]) == 0
        text = capsys.readouterr().out
        assert "experiment_start" in text
        assert "1 experiments" in text


def test_trace_missing_file():
    """Summarising a missing trace is an input error."""
    assert main(["trace", "does-not-exist.jsonl"]) == EXIT_INPUT


def test_no_command_prints_help(capsys):
    """Without a subcommand the help is printed."""
    assert main([]) == EXIT_INPUT
    assert "usage" in capsys.readouterr().out


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
