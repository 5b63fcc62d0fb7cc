"""
Test the experiment registry: discovery, notice capture, error kinds, tracing
and the report writers.
"""
import csv
import json
import math
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pytest

from dbarlab.errors import ConsistencyError, DbarLabNotice, InvalidInputError
from dbarlab.experiments import (
    DbarExperiments,
    ExperimentKit,
    ExperimentOutput,
    _plain,
    breach,
    experiment,
    write_result,
)
from dbarlab.observability import TracingKit


class Toy:
    tracing = None

    @experiment(tag="T1")
    def noisy(self, x: int = 1):
        """Emits a notice and a breach."""
        warnings.warn("grid is coarse", DbarLabNotice)
        warnings.warn("grid is coarse", DbarLabNotice)
        return ExperimentOutput(report={"x": x, "value": 1 / 3}, verdict="done",
                                breaches=[breach("residual", 2e-3, 1e-3, "k=1")],
                                tables={"toy": [{"x": x}]})

    @experiment(name="bad-input", tag="T2")
    def bad_input(self):
        """Rejects its input."""
        raise InvalidInputError("no such thing", field="model")

    @experiment(name="bad-check")
    def bad_check(self):
        raise ConsistencyError("quadrature disagrees")

    @experiment(name="crash")
    def crash(self):
        raise RuntimeError("unexpected")

    @experiment(name="numeric")
    def numeric(self):
        np.ones(3) + np.ones(4)

    @experiment(name="plain")
    def plain(self):
        return [1, 2]

    def not_an_experiment(self):
        return None


def test_discovery_and_listing():
    """Marked methods are discovered under their names with tags and summaries."""
    kit = ExperimentKit(Toy())
    names = set(kit.get_experiments())
    assert names == {"noisy", "bad-input", "bad-check", "crash", "numeric", "plain"}
    listing = {e["name"]: e for e in kit.list_experiments()}
    assert listing["noisy"]["tag"] == "T1"
    assert listing["noisy"]["summary"] == "Emits a notice and a breach."
    assert listing["bad-check"]["summary"] == ""


def test_execute_collects_notices_and_breaches():
    """Notices are deduplicated; breaches and tables pass through; floats are rounded."""
    kit = ExperimentKit(Toy())
    result = kit.execute("noisy", x=4)
    assert result.success
    assert result.tag == "T1"
    assert result.verdict == "done"
    assert result.notices == ["grid is coarse"]
    assert result.breaches[0]["quantity"] == "residual"
    assert result.content == {"x": 4, "value": 0.333333333333}
    assert result.tables == {"toy": [{"x": 4}]}
    assert result.metadata["arguments"] == {"x": 4}


def test_error_kinds():
    """Input, consistency and other failures map to their kinds."""
    kit = ExperimentKit(Toy())
    assert kit.execute("bad-input").error_kind == "input"
    assert "model" in kit.execute("bad-input").error
    assert kit.execute("bad-input").tag == "T2"
    assert kit.execute("bad-check").error_kind == "consistency"
    crashed = kit.execute("crash")
    assert crashed.error_kind == "internal" and "RuntimeError" in crashed.error
    numeric = kit.execute("numeric")
    assert numeric.error_kind == "internal" and "ValueError" in numeric.error
    missing = kit.execute("nope")
    assert not missing.success and missing.error_kind == "input"


def test_non_output_return_is_wrapped():
    """Plain return values become the content with an empty verdict."""
    result = ExperimentKit(Toy()).execute("plain")
    assert result.content == [1, 2] and result.verdict == ""


def test_tracing_receives_events():
    """Experiment boundaries, notices, breaches and errors reach the tracer."""
    tracing = TracingKit()
    tracing.start_run()
    kit = ExperimentKit(Toy(), tracing=tracing)
    kit.execute("noisy")
    kit.execute("bad-check")
    kinds = [e.event_type for e in tracing.events]
    assert kinds == ["experiment_start", "notice", "tolerance_breach", "experiment_end",
                     "experiment_start", "error", "experiment_end"]
    summary = tracing.get_summary()
    assert summary["failed_experiments"] == 1
    assert summary["breaches"] == 1


def test_plain_conversion():
    """Rounding to 12 significant digits; numpy, tuples, paths and non-finite values."""
    data = _plain({"a": 0.1 + 0.2, "b": (np.float64(1.0) / 3, np.int64(2)), "c": math.inf,
                   "d": np.array([1.5, math.nan]), "e": Path("x/y"), "f": True})
    assert data == {"a": 0.3, "b": [0.333333333333, 2], "c": "inf", "d": [1.5, "nan"], "e": "x/y", "f": True}
    assert json.loads(json.dumps(data)) == data


def test_write_result():
    """The JSON report and one CSV per table land in the output directory."""
    result = ExperimentKit(Toy()).execute("noisy", x=2)
    with tempfile.TemporaryDirectory() as tmp:
        written = write_result(result, Path(tmp))
        assert {p.name for p in written} == {"noisy.json", "toy.csv"}
        with open(os.path.join(tmp, "noisy.json")) as f:
            assert json.load(f)["verdict"] == "done"
        with open(os.path.join(tmp, "toy.csv")) as f:
            assert list(csv.DictReader(f)) == [{"x": "2"}]


def test_lemma5_experiment():
    """Random matrices pass the frame-sum criterion for every q."""
    result = ExperimentKit(DbarExperiments(seed=1)).execute("lemma5", count=5, frames=500)
    assert result.success and result.verdict == "passed"
    assert result.tag == "Lemma5"
    assert len(result.tables["lemma5"]) == 15
    assert result.content["min_margin"] >= -1e-9
    assert result.content["max_equality_gap"] <= 1e-9


def test_eq3_sanity_experiment():
    """Product-example forms have no diameter-bound violations."""
    result = ExperimentKit(DbarExperiments()).execute("eq3-sanity", m_max=5)
    assert result.tag == "Eq3-sanity"
    assert result.verdict == "0 violations"
    assert result.content["forms"] == 12
    assert not result.breaches


def test_reinhardt_experiments():
    """Single verdicts carry their own tag; the matrix matches every known case."""
    kit = ExperimentKit(DbarExperiments())
    single = kit.execute("reinhardt", model="bidisc", q=1)
    assert single.verdict == "non-compact"
    assert single.tag == "Rmk10"
    matrix = kit.execute("reinhardt-matrix")
    assert matrix.tag == "Rmk10"
    assert matrix.verdict == "6/6 verdicts as expected"
    assert not matrix.breaches


def test_commutator_experiment():
    """The bidisc commutator stays bounded below; the ball's decays."""
    kit = ExperimentKit(DbarExperiments())
    bidisc = kit.execute("commutator", model="bidisc", j=2, cutoff=16)
    assert bidisc.tag == "Prop4"
    assert bidisc.verdict == "bounded below"
    assert bidisc.content["canonical"]["conclusion"] == "non-compact"
    assert len(bidisc.tables["singular_values"]) == 17 * 18 // 2
    ball = kit.execute("commutator", model="ball", j=2, cutoff=16)
    assert ball.verdict == "decaying"
    assert ball.content["canonical"] is None
    assert ball.content["decay_slope"] < -0.1


def test_dirichlet_experiment_requires_one_source():
    """Shape and mask are mutually exclusive."""
    kit = ExperimentKit(DbarExperiments())
    assert kit.execute("dirichlet").error_kind == "input"
    assert kit.execute("dirichlet", shape="square", mask="W.txt").error_kind == "input"
    result = kit.execute("dirichlet", shape="square", N=32)
    assert result.success
    row = result.tables["dirichlet"][0]
    assert row["relative_error"] < 0.01
    grid = result.tables["dirichlet_grid"]
    assert len(grid) == row["nodes"] == 31 * 31
    assert sum(r["value"] ** 2 for r in grid) * (1 / 32) ** 2 == pytest.approx(1.0, rel=1e-6)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
