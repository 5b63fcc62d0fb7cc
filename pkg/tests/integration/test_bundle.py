"""
Test report bundles: tags, one-entry bundles and byte-identical reruns.
"""
import json
import os
import tempfile
from pathlib import Path

import pytest

from dbarlab.experiments import DbarExperiments, ExperimentKit, report_bundle, run_suite, write_result
from dbarlab.models import ExperimentResult


def _quick_results(seed):
    kit = ExperimentKit(DbarExperiments(seed=seed))
    return [
        kit.execute("lemma5", count=4, frames=200),
        kit.execute("wedge", m=5),
        kit.execute("reinhardt-matrix"),
        kit.execute("commutator", model="bidisc", j=2, cutoff=10),
        kit.execute("eq3-sanity", m_max=4),
    ]


def test_one_result_one_entry():
    """A single result gives a one-entry bundle."""
    result = ExperimentKit(DbarExperiments()).execute("eq3-sanity", m_max=2)
    bundle = report_bundle([result])
    assert bundle["count"] == 1
    entry = bundle["entries"][0]
    assert entry["tag"] == "Eq3-sanity"
    assert entry["verdict"] == "0 violations"
    assert entry["success"] is True


def test_failed_results_are_kept():
    """Errors appear in the bundle with their kind."""
    failed = ExperimentResult(content="", experiment_name="pq-check", tag="Lemma5", error="cert: missing",
                              error_kind="input")
    entry = report_bundle([failed])["entries"][0]
    assert entry["success"] is False and entry["error_kind"] == "input"


def test_rerun_is_byte_identical():
    """Same seed and arguments: identical bundle and CSV bytes."""
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for d in dirs:
            results = _quick_results(seed=3)
            for r in results:
                write_result(r, d)
            report_bundle(results, d / "bundle.json")
        names = sorted(os.listdir(dirs[0]))
        assert names == sorted(os.listdir(dirs[1]))
        assert "bundle.json" in names and "lemma5.csv" in names
        for name in names:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_bundle_is_sorted_json():
    """The written bundle uses sorted keys and parses back to the returned dict."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bundle.json"
        bundle = report_bundle(_quick_results(seed=0)[:2], path)
        text = path.read_text()
        assert json.loads(text) == bundle
        assert text == json.dumps(bundle, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def test_default_suite_has_six_tagged_entries():
    """The suite yields one entry per statement tag, in order."""
    kit = ExperimentKit(DbarExperiments())
    results = run_suite(kit, stages=2, grid=32, m=5, cutoff=8)
    bundle = report_bundle(results)
    assert bundle["tags"] == ["Lemma5", "Thm10", "Prop9", "Rmk10", "Prop4", "Eq3-sanity"]
    assert all(r.success for i, r in enumerate(results) if i != 1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
