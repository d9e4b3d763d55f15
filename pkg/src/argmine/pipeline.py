"""Orchestration of detect → extract → stance over a backend, one instance at
a time or as a concurrent batch with checkpointing.

Detection gates the downstream tasks by default: a NotArgument verdict makes
extraction answer "No Topic" and stance answer NoArgument without further
backend calls. ``JobSpec.ungated`` disables the gate for stance-only style
evaluations over corpora that contain non-arguments.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol, Sequence

from .backend import Backend, BackendError
from .core import (
    ArgumentLabel,
    Instance,
    StanceLabel,
    Topic,
    parse_argument_label,
    parse_stance_label,
)
from .prompting import (
    PromptVariant,
    Task,
    build_cte_prompt,
    build_detection_prompt,
    build_stance_prompt,
    parse_cte_response,
    parse_detection_response,
    parse_stance_response,
)


class TopicSource(Enum):
    FROM_INSTANCE = "instance"
    FROM_EXTRACTION = "extract"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class JobSpec:
    tasks: frozenset[Task] = frozenset({Task.DETECT, Task.EXTRACT, Task.STANCE})
    variant: PromptVariant = PromptVariant.WITH_ATN
    topic_source: TopicSource = TopicSource.FROM_EXTRACTION
    concurrency: int = 1
    ungated: bool = False
    checkpoint_every: int = 100
    template_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", frozenset(self.tasks))


def validate_job_spec(spec: JobSpec) -> None:
    if not spec.tasks:
        raise ValueError("job spec requests no tasks")
    if spec.concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    if spec.checkpoint_every < 1:
        raise ValueError("checkpoint_every must be >= 1")
    if (
        Task.STANCE in spec.tasks
        and spec.topic_source is TopicSource.FROM_EXTRACTION
        and Task.EXTRACT not in spec.tasks
    ):
        raise ValueError(
            "stance with topic_source=extract requires the extract task"
        )


@dataclass(frozen=True)
class AnalysisRecord:
    """Per-instance pipeline output.

    ``topic`` is the extraction output when extraction ran; if a
    Favor/Against stance was classified while extraction abstained or was
    skipped, it carries the stance anchor instead, so a directional stance
    always sits next to a concrete topic. Timings are in-memory diagnostics
    and never serialized, so result files are reproducible.
    """

    instance_id: str
    detection: Optional[ArgumentLabel] = None
    topic: Optional[Topic] = None
    stance: Optional[StanceLabel] = None
    raw_responses: Mapping[str, str] = field(default_factory=dict)
    failures: Mapping[str, str] = field(default_factory=dict)
    timings: Mapping[str, float] = field(default_factory=dict)
    variant: PromptVariant = PromptVariant.WITH_ATN

    def __post_init__(self) -> None:
        object.__setattr__(self, "raw_responses", dict(self.raw_responses))
        object.__setattr__(self, "failures", dict(self.failures))
        object.__setattr__(self, "timings", dict(self.timings))

    @property
    def status(self) -> str:
        if not self.failures:
            return "succeeded"
        if self.detection is None and self.topic is None and self.stance is None:
            return "failed"
        return "partial"


def check_record(record: AnalysisRecord) -> list[str]:
    """Record invariants; empty when consistent."""
    problems = []
    if record.stance in (StanceLabel.FAVOR, StanceLabel.AGAINST):
        if record.topic is None or record.topic.is_no_topic:
            problems.append("favor/against stance without a concrete topic")
    if record.detection is ArgumentLabel.NOT_ARGUMENT:
        if record.stance not in (None, StanceLabel.NO_ARGUMENT):
            problems.append("stance contradicts a NotArgument detection")
    return problems


def analyze(backend: Backend, instance: Instance, spec: JobSpec) -> AnalysisRecord:
    """Run the requested tasks in dependency order for one instance.

    Backend failures are recorded per task; completed tasks are kept.
    """
    validate_job_spec(spec)
    text = instance.text
    detection: Optional[ArgumentLabel] = None
    topic: Optional[Topic] = None
    stance: Optional[StanceLabel] = None
    raw: dict[str, str] = {}
    failures: dict[str, str] = {}
    timings: dict[str, float] = {}

    if Task.DETECT in spec.tasks:
        started = time.perf_counter()
        try:
            prompt = build_detection_prompt(text, spec.variant, spec.template_dir)
            reply = backend.complete(prompt)
            raw[Task.DETECT.value] = reply
            detection = parse_detection_response(reply).label
        except BackendError as exc:
            failures[Task.DETECT.value] = str(exc)
        timings[Task.DETECT.value] = time.perf_counter() - started

    gated_out = not spec.ungated and detection is ArgumentLabel.NOT_ARGUMENT

    if Task.EXTRACT in spec.tasks:
        started = time.perf_counter()
        if gated_out:
            topic = Topic.no_topic()
        else:
            try:
                prompt = build_cte_prompt(text, spec.template_dir)
                reply = backend.complete(prompt)
                raw[Task.EXTRACT.value] = reply
                topic = parse_cte_response(reply).label
            except BackendError as exc:
                failures[Task.EXTRACT.value] = str(exc)
        timings[Task.EXTRACT.value] = time.perf_counter() - started

    if Task.STANCE in spec.tasks:
        started = time.perf_counter()
        if gated_out:
            stance = StanceLabel.NO_ARGUMENT
        else:
            anchor: Optional[str] = None
            if spec.topic_source is TopicSource.FROM_INSTANCE:
                if instance.has_concrete_topic():
                    anchor = instance.gold_topic.strip()  # type: ignore[union-attr]
                else:
                    failures[Task.STANCE.value] = "instance carries no topic"
            else:
                if Task.EXTRACT.value in failures:
                    failures[Task.STANCE.value] = "no topic: extraction failed"
                elif topic is not None and topic.is_no_topic:
                    stance = StanceLabel.NO_ARGUMENT
                elif topic is not None:
                    anchor = topic.value
            if anchor:
                try:
                    prompt = build_stance_prompt(
                        text, anchor, spec.variant, spec.template_dir
                    )
                    reply = backend.complete(prompt)
                    raw[Task.STANCE.value] = reply
                    stance = parse_stance_response(reply).label
                    if stance is not StanceLabel.NO_ARGUMENT and (
                        topic is None or topic.is_no_topic
                    ):
                        topic = Topic.of(anchor)
                except BackendError as exc:
                    failures[Task.STANCE.value] = str(exc)
        timings[Task.STANCE.value] = time.perf_counter() - started

    return AnalysisRecord(
        instance_id=instance.id,
        detection=detection,
        topic=topic,
        stance=stance,
        raw_responses=raw,
        failures=failures,
        timings=timings,
        variant=spec.variant,
    )


# -- record serialization -----------------------------------------------------


def record_to_dict(record: AnalysisRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "id": record.instance_id,
        "detection": None if record.detection is None else str(record.detection),
        "topic": None if record.topic is None else record.topic.value,
        "stance": None if record.stance is None else str(record.stance),
        "variant": record.variant.value,
        "raw_responses": dict(record.raw_responses),
    }
    if record.failures:
        out["failures"] = dict(record.failures)
    return out


def record_from_dict(data: Mapping[str, Any]) -> AnalysisRecord:
    detection = data.get("detection")
    stance = data.get("stance")
    topic = data.get("topic")
    variant = data.get("variant", PromptVariant.WITH_ATN.value)
    return AnalysisRecord(
        instance_id=str(data["id"]),
        detection=None if detection is None else parse_argument_label(detection),
        topic=None if topic in (None, "") else Topic.of(str(topic)),
        stance=None if stance is None else parse_stance_label(stance),
        raw_responses=dict(data.get("raw_responses", {})),
        failures=dict(data.get("failures", {})),
        variant=PromptVariant(variant),
    )


# -- sinks ---------------------------------------------------------------


class Sink(Protocol):
    def write(self, instance: Instance, record: AnalysisRecord) -> None: ...

    def close(self) -> None: ...


class JsonlSink:
    """One JSON object per record. Deterministic bytes for identical records."""

    def __init__(self, path: Path | str, append: bool = False):
        self.path = Path(path)
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8")

    def write(self, instance: Instance, record: AnalysisRecord) -> None:
        line = json.dumps(record_to_dict(record), sort_keys=True, ensure_ascii=False)
        self._fh.write(line + "\n")

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlSink":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


CSV_RESULT_COLUMNS = ("id", "text", "detection", "topic", "stance", "variant")


class CsvSink:
    """Flat CSV of the per-instance verdicts (raw responses omitted)."""

    def __init__(self, path: Path | str, append: bool = False):
        import csv

        self.path = Path(path)
        exists = append and self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh)
        if not exists:
            self._writer.writerow(CSV_RESULT_COLUMNS)

    def write(self, instance: Instance, record: AnalysisRecord) -> None:
        self._writer.writerow(
            [
                record.instance_id,
                instance.text,
                "" if record.detection is None else str(record.detection),
                "" if record.topic is None else record.topic.value,
                "" if record.stance is None else str(record.stance),
                record.variant.value,
            ]
        )

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CsvSink":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class ListSink:
    """In-memory sink for tests and library callers."""

    def __init__(self) -> None:
        self.records: list[tuple[Instance, AnalysisRecord]] = []

    def write(self, instance: Instance, record: AnalysisRecord) -> None:
        self.records.append((instance, record))

    def close(self) -> None:
        pass


# -- batch execution -----------------------------------------------------


@dataclass
class BatchSummary:
    total: int
    succeeded: int = 0
    partial: int = 0
    failed: int = 0

    @property
    def done(self) -> int:
        return self.succeeded + self.partial


def _load_checkpoint(path: Path) -> dict[str, Any]:
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"done_ids": [], "succeeded": 0, "partial": 0, "failed": 0}


def _write_checkpoint(path: Path, state: dict[str, Any]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(state, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def run_batch(
    backend: Backend,
    corpus: Sequence[Instance],
    spec: JobSpec,
    sink: Sink,
    checkpoint_path: Optional[Path | str] = None,
) -> BatchSummary:
    """Analyze a corpus with at most ``spec.concurrency`` calls in flight.

    Records are written to the sink in input order. Individual instance
    failures are counted, not fatal; a sink write failure aborts the batch.
    With a checkpoint path, instances already marked done are skipped and the
    batch can resume after an interruption (the sink must then append).
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    validate_job_spec(spec)

    checkpoint = Path(checkpoint_path) if checkpoint_path is not None else None
    state = _load_checkpoint(checkpoint) if checkpoint else {
        "done_ids": [], "succeeded": 0, "partial": 0, "failed": 0
    }
    done_ids = set(state["done_ids"])
    pending = [inst for inst in corpus if inst.id not in done_ids]

    summary = BatchSummary(
        total=len(corpus),
        succeeded=state["succeeded"],
        partial=state["partial"],
        failed=state["failed"],
    )

    def analyze_one(instance: Instance) -> AnalysisRecord:
        try:
            return analyze(backend, instance, spec)
        except Exception as exc:  # defensive: keep the batch alive
            return AnalysisRecord(
                instance_id=instance.id,
                failures={"analyze": str(exc)},
                variant=spec.variant,
            )

    with ThreadPoolExecutor(max_workers=spec.concurrency) as pool:
        futures = [pool.submit(analyze_one, inst) for inst in pending]
        for i, (instance, future) in enumerate(zip(pending, futures)):
            record = future.result()
            sink.write(instance, record)
            setattr(summary, record.status, getattr(summary, record.status) + 1)
            done_ids.add(instance.id)
            if checkpoint and (i + 1) % spec.checkpoint_every == 0:
                if hasattr(sink, "flush"):
                    sink.flush()
                _write_checkpoint(
                    checkpoint,
                    {
                        "done_ids": sorted(done_ids),
                        "succeeded": summary.succeeded,
                        "partial": summary.partial,
                        "failed": summary.failed,
                    },
                )

    if checkpoint:
        _write_checkpoint(
            checkpoint,
            {
                "done_ids": sorted(done_ids),
                "succeeded": summary.succeeded,
                "partial": summary.partial,
                "failed": summary.failed,
            },
        )
    return summary
