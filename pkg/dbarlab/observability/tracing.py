"""
Tracing for experiment runs.

Events are written as JSON Lines, one per line, as they happen.
"""
import json
import logging
import time
import uuid
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)

EVENT_TYPES = ("experiment_start", "experiment_end", "stage_start", "stage_end", "notice",
               "tolerance_breach", "error")


@dataclass
class TraceEvent:
    """
    A single trace event.

    Attributes:
        timestamp: Unix timestamp when the event occurred
        event_type: one of ``EVENT_TYPES``
        experiment: name of the experiment
        run_id: groups the events of one run
        stage: stage label for stage events (e.g. "k=3")
        arguments: experiment arguments (start events)
        result: short verdict or value (end events)
        error: error message
        elapsed_time: seconds since the matching start event
        metadata: additional data (tags, magnitudes of tolerance breaches)
    """
    timestamp: float
    event_type: str
    experiment: str
    run_id: Optional[str] = None
    stage: Optional[str] = None
    arguments: Optional[Dict[str, Any]] = None
    result: Optional[Any] = None
    error: Optional[str] = None
    elapsed_time: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("result", "arguments"):
            if data[key] is not None:
                try:
                    json.dumps(data[key])
                except (TypeError, ValueError):
                    data[key] = str(data[key])
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TraceEvent":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class TracingKit:
    """
    Records experiment and stage boundaries, notices, tolerance breaches and errors.

    Example::

        tracing = TracingKit("traces/run_{run_id}.jsonl")
        tracing.start_run()
        tracing.start_experiment("wedge", {"m": 20})
        tracing.end_experiment("wedge", result="no convergent subsequence")
        tracing.end_run()
    """

    def __init__(self, output_file: Optional[str] = None, auto_export: bool = True):
        """
        Args:
            output_file: Optional path pattern. ``{run_id}`` and ``{timestamp}`` are replaced at
                ``start_run()``; without placeholders all runs append to one file.
            auto_export: write each event as soon as it is recorded
        """
        self.events: List[TraceEvent] = []
        self.output_file_pattern = output_file
        self.output_file: Optional[str] = None
        self.auto_export = auto_export
        self._starts: Dict[str, float] = {}
        self._run_id: Optional[str] = None

    def _add_event(self, event: TraceEvent):
        event.run_id = self._run_id
        self.events.append(event)
        if self.auto_export and self.output_file:
            self._export_event(event)

    def start_run(self, run_id: Optional[str] = None) -> str:
        """Clear previous events, pick a run id and resolve the output path."""
        self.events.clear()
        self._starts.clear()
        self._run_id = run_id or uuid.uuid4().hex[:12]
        if self.output_file_pattern:
            ts = datetime.now().strftime("%Y%m%d_%H%M%S")
            self.output_file = (
                self.output_file_pattern
                .replace("{run_id}", self._run_id)
                .replace("{timestamp}", ts)
            )
        else:
            self.output_file = None
        return self._run_id

    def end_run(self):
        self._run_id = None

    @property
    def run_id(self) -> Optional[str]:
        return self._run_id

    def _export_event(self, event: TraceEvent):
        try:
            with open(self.output_file, "a", encoding="utf-8") as f:
                f.write(event.to_json() + "\n")
        except OSError as e:
            # tracing failures never stop an experiment
            logger.warning("failed to export trace event: %s", e)

    def _elapsed(self, key: str, now: float) -> Optional[float]:
        start = self._starts.pop(key, None)
        return None if start is None else now - start

    def start_experiment(self, experiment: str, arguments: Optional[Dict[str, Any]] = None,
                         metadata: Optional[Dict] = None):
        now = time.time()
        self._starts[experiment] = now
        self._add_event(TraceEvent(timestamp=now, event_type="experiment_start", experiment=experiment,
                                   arguments=arguments or {}, metadata=metadata or {}))

    def end_experiment(self, experiment: str, result: Any = None, success: bool = True,
                       metadata: Optional[Dict] = None):
        now = time.time()
        self._add_event(TraceEvent(timestamp=now, event_type="experiment_end", experiment=experiment,
                                   result=None if result is None else str(result)[:200],
                                   elapsed_time=self._elapsed(experiment, now),
                                   metadata={**(metadata or {}), "success": success}))

    def start_stage(self, experiment: str, stage: str, metadata: Optional[Dict] = None):
        now = time.time()
        self._starts[f"{experiment}/{stage}"] = now
        self._add_event(TraceEvent(timestamp=now, event_type="stage_start", experiment=experiment, stage=stage,
                                   metadata=metadata or {}))

    def end_stage(self, experiment: str, stage: str, result: Any = None, metadata: Optional[Dict] = None):
        now = time.time()
        self._add_event(TraceEvent(timestamp=now, event_type="stage_end", experiment=experiment, stage=stage,
                                   result=None if result is None else str(result)[:200],
                                   elapsed_time=self._elapsed(f"{experiment}/{stage}", now),
                                   metadata=metadata or {}))

    def record_notice(self, experiment: str, message: str, metadata: Optional[Dict] = None):
        self._add_event(TraceEvent(timestamp=time.time(), event_type="notice", experiment=experiment,
                                   result=message, metadata=metadata or {}))

    def record_breach(self, experiment: str, quantity: str, value: float, tolerance: float,
                      stage: Optional[str] = None):
        """A tolerance breach, with its magnitude."""
        self._add_event(TraceEvent(timestamp=time.time(), event_type="tolerance_breach", experiment=experiment,
                                   stage=stage, result=quantity,
                                   metadata={"value": value, "tolerance": tolerance}))

    def record_error(self, experiment: str, error: str, metadata: Optional[Dict] = None):
        self._add_event(TraceEvent(timestamp=time.time(), event_type="error", experiment=experiment,
                                   error=error, metadata=metadata or {}))

    def get_trace(self) -> List[TraceEvent]:
        return self.events

    def get_summary(self) -> Dict[str, Any]:
        return summarize(self.events)

    def export_json(self, filepath: str):
        """Write all events to a JSON Lines file."""
        with open(filepath, "w", encoding="utf-8") as f:
            for event in self.events:
                f.write(event.to_json() + "\n")

    def clear(self):
        self.events.clear()
        self._starts.clear()

    def __str__(self) -> str:
        s = self.get_summary()
        return (f"TracingKit(events={s['total_events']}, experiments={s['experiments']}, "
                f"notices={s['notices']}, errors={s['errors']})")

    def __repr__(self) -> str:
        return f"<TracingKit: {len(self.events)} events>"


def summarize(events: List[TraceEvent]) -> Dict[str, Any]:
    """Counts per event class and the total experiment time."""
    def count(kind):
        return sum(1 for e in events if e.event_type == kind)

    ends = [e for e in events if e.event_type == "experiment_end"]
    return {
        "total_events": len(events),
        "experiments": count("experiment_start"),
        "stages": count("stage_start"),
        "notices": count("notice"),
        "breaches": count("tolerance_breach"),
        "errors": count("error"),
        "failed_experiments": sum(1 for e in ends if not e.metadata.get("success", True)),
        "total_time": sum(e.elapsed_time or 0.0 for e in ends),
    }


def load_trace(path: str) -> List[TraceEvent]:
    """Read a JSON Lines trace; blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as f:
        return [TraceEvent.from_dict(json.loads(line)) for line in f if line.strip()]


def format_trace(events: List[TraceEvent]) -> str:
    """Timeline followed by the summary, for terminal output."""
    lines = []
    t0 = events[0].timestamp if events else 0.0
    for e in events:
        label = e.experiment + (f" [{e.stage}]" if e.stage else "")
        detail = e.error or (e.result if e.result is not None else "")
        if e.event_type == "tolerance_breach":
            detail = f"{e.result}: {e.metadata.get('value')} > {e.metadata.get('tolerance')}"
        took = f" ({e.elapsed_time:.2f}s)" if e.elapsed_time is not None else ""
        lines.append(f"{e.timestamp - t0:8.2f}s  {e.event_type:<17} {label}{took}  {detail}".rstrip())
    s = summarize(events)
    lines.append("")
    lines.append(f"{s['experiments']} experiments, {s['stages']} stages, {s['notices']} notices, "
                 f"{s['breaches']} breaches, {s['errors']} errors, {s['total_time']:.2f}s total")
    return "\n".join(lines)
