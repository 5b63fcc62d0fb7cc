"""
Test TracingKit run isolation, file patterns, event classes and the trace summary.
"""
import json
import os
import tempfile

from dbarlab.observability import TraceEvent, TracingKit, format_trace, load_trace


def test_start_run_generates_run_id():
    """start_run() should generate a unique run_id."""
    kit = TracingKit()
    run_id = kit.start_run()
    assert run_id is not None
    assert len(run_id) == 12  # hex UUID prefix
    assert kit.run_id == run_id


def test_start_run_clears_previous_events():
    """start_run() should clear events from previous runs."""
    kit = TracingKit()
    kit.start_run()
    kit.start_experiment("wedge", {"m": 20})
    kit.end_experiment("wedge", "no convergent subsequence")
    assert len(kit.events) == 2

    kit.start_run()
    assert len(kit.events) == 0


def test_run_id_attached_to_events():
    """Events carry the current run_id; end_run keeps the events."""
    kit = TracingKit()
    run_id = kit.start_run(run_id="my-custom-id")
    assert run_id == "my-custom-id"
    kit.start_experiment("lemma5")
    kit.record_notice("lemma5", "something to note")
    kit.end_experiment("lemma5", "passed")
    assert all(e.run_id == run_id for e in kit.events)

    kit.end_run()
    assert kit.run_id is None
    assert len(kit.events) == 3


def test_output_file_pattern_with_run_id_and_timestamp():
    """Output file pattern resolves {run_id} and {timestamp}."""
    with tempfile.TemporaryDirectory() as tmpdir:
        kit = TracingKit(output_file=os.path.join(tmpdir, "trace_{run_id}.jsonl"))
        run_id = kit.start_run()
        assert kit.output_file == os.path.join(tmpdir, f"trace_{run_id}.jsonl")

        kit = TracingKit(output_file=os.path.join(tmpdir, "trace_{timestamp}.jsonl"))
        kit.start_run()
        assert "{timestamp}" not in kit.output_file


def test_no_pattern_means_no_file():
    """Without an output pattern nothing is written."""
    kit = TracingKit()
    kit.start_run()
    kit.start_experiment("wedge")
    assert kit.output_file is None


def test_events_are_written_as_jsonl():
    """Each event is one JSON line, written as it happens."""
    with tempfile.TemporaryDirectory() as tmpdir:
        kit = TracingKit(output_file=os.path.join(tmpdir, "run_{run_id}.jsonl"))
        kit.start_run()
        kit.start_experiment("hartogs", {"stages": 2})
        kit.start_stage("hartogs", "k=1")
        kit.end_stage("hartogs", "k=1", result={"N0": 0.5})
        kit.record_breach("hartogs", "gradient identity", 2e-4, 1e-4, stage="k=1")
        kit.end_experiment("hartogs", "falsified")

        with open(kit.output_file) as f:
            lines = [json.loads(line) for line in f]
        assert [e["event_type"] for e in lines] == [
            "experiment_start", "stage_start", "stage_end", "tolerance_breach", "experiment_end"]
        assert lines[3]["metadata"] == {"value": 2e-4, "tolerance": 1e-4}
        assert lines[2]["elapsed_time"] >= 0.0


def test_summary_counts():
    """get_summary counts every event class and failed experiments."""
    kit = TracingKit()
    kit.start_run()
    kit.start_experiment("a")
    kit.start_stage("a", "s")
    kit.end_stage("a", "s")
    kit.record_notice("a", "n")
    kit.record_breach("a", "q", 1.0, 0.5)
    kit.end_experiment("a", "ok")
    kit.start_experiment("b")
    kit.record_error("b", "boom")
    kit.end_experiment("b", success=False)

    s = kit.get_summary()
    assert s["experiments"] == 2
    assert s["stages"] == 1
    assert s["notices"] == 1
    assert s["breaches"] == 1
    assert s["errors"] == 1
    assert s["failed_experiments"] == 1
    assert s["total_events"] == len(kit.events)
    assert "experiments=2" in str(kit)


def test_load_and_format_trace():
    """A written trace loads back and formats into a timeline plus summary line."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "trace.jsonl")
        kit = TracingKit()
        kit.start_run()
        kit.start_experiment("commutator", {"model": "ball"})
        kit.record_notice("commutator", "cutoff reduced")
        kit.end_experiment("commutator", "decaying")
        kit.export_json(path)

        events = load_trace(path)
        assert len(events) == 3
        assert isinstance(events[0], TraceEvent)
        assert events[0].arguments == {"model": "ball"}
        text = format_trace(events)
        assert "cutoff reduced" in text
        assert text.splitlines()[-1].startswith("1 experiments")


def test_unserializable_result_is_stringified():
    """Non-JSON results are stored as strings."""
    event = TraceEvent(timestamp=0.0, event_type="experiment_end", experiment="x", result={1, 2})
    assert isinstance(json.loads(event.to_json())["result"], str)


if __name__ == "__main__":
    import pytest
    pytest.main([__file__, "-v"])
