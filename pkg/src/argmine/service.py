"""HTTP service: single-text analysis endpoints plus an upload → batch job →
download workflow.

Jobs live in an on-disk store (one directory per job holding the uploaded
input, the job state, a checkpoint, and the results file), so a restarted
service picks interrupted jobs back up from their checkpoints. A single
worker thread drains a FIFO queue; backend rate limits dominate, so one
running batch at a time is the default.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .backend import Backend, BackendError
from .core import Instance, Topic
from .data import SCHEMA_PRESETS, CorpusFile, load_corpus
from .pipeline import (
    AnalysisRecord,
    JobSpec,
    JsonlSink,
    TopicSource,
    analyze,
    record_to_dict,
    run_batch,
    validate_job_spec,
)
from .prompting import PromptVariant, Task

log = logging.getLogger(__name__)

JOB_STATES = ("Queued", "Running", "Done", "Failed")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Job:
    id: str
    state: str
    spec: JobSpec
    input_name: str
    schema: str = "canonical"
    counts: dict[str, int] = field(default_factory=lambda: {"total": 0, "done": 0, "failed": 0})
    created_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "state": self.state,
            "spec": {
                "tasks": sorted(t.value for t in self.spec.tasks),
                "variant": self.spec.variant.value,
                "topic_source": self.spec.topic_source.value,
                "concurrency": self.spec.concurrency,
                "ungated": self.spec.ungated,
            },
            "input_name": self.input_name,
            "schema": self.schema,
            "counts": dict(self.counts),
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "Job":
        spec_data = data["spec"]
        spec = JobSpec(
            tasks=frozenset(Task(t) for t in spec_data["tasks"]),
            variant=PromptVariant(spec_data["variant"]),
            topic_source=TopicSource(spec_data["topic_source"]),
            concurrency=int(spec_data.get("concurrency", 1)),
            ungated=bool(spec_data.get("ungated", False)),
        )
        return Job(
            id=data["id"],
            state=data["state"],
            spec=spec,
            input_name=data["input_name"],
            schema=data.get("schema", "canonical"),
            counts=dict(data["counts"]),
            created_at=data["created_at"],
            finished_at=data.get("finished_at"),
            error=data.get("error"),
        )


class JobStore:
    """Directory-per-job persistence. Job state transitions are
    Queued → Running → Done | Failed, nothing else."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def save(self, job: Job) -> None:
        with self._lock:
            path = self.job_dir(job.id) / "job.json"
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(job.to_dict(), indent=2), encoding="utf-8")
            tmp.replace(path)

    def load(self, job_id: str) -> Optional[Job]:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        return Job.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def create(self, spec: JobSpec, input_name: str, payload: bytes, schema: str) -> Job:
        job = Job(
            id=uuid.uuid4().hex, state="Queued", spec=spec,
            input_name=input_name, schema=schema,
        )
        directory = self.job_dir(job.id)
        directory.mkdir(parents=True)
        (directory / input_name).write_bytes(payload)
        self.save(job)
        return job

    def transition(self, job: Job, state: str) -> None:
        allowed = {"Queued": {"Running"}, "Running": {"Done", "Failed"}}
        if state not in allowed.get(job.state, set()):
            raise ValueError(f"illegal transition {job.state} -> {state}")
        job.state = state
        if state in ("Done", "Failed"):
            job.finished_at = _now()
        self.save(job)

    def unfinished(self) -> list[Job]:
        jobs = []
        for directory in sorted(self.root.iterdir()):
            if not directory.is_dir():
                continue
            job = self.load(directory.name)
            if job and job.state in ("Queued", "Running"):
                jobs.append(job)
        return jobs

    def results_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "results.jsonl"

    def checkpoint_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "checkpoint.json"


class JobRunner:
    """FIFO queue drained by one worker thread."""

    def __init__(self, store: JobStore, backend: Backend,
                 template_dir: Optional[Path], queue_size: int = 16):
        self.store = store
        self.backend = backend
        self.template_dir = template_dir
        self.queue: "queue.Queue[str]" = queue.Queue(maxsize=queue_size)
        self._worker = threading.Thread(target=self._drain, daemon=True)
        self._worker.start()

    def submit(self, job: Job) -> None:
        self.queue.put_nowait(job.id)

    def recover(self) -> None:
        for job in self.store.unfinished():
            if job.state == "Running":
                # interrupted mid-run: restart from the checkpoint
                job.state = "Queued"
                self.store.save(job)
            try:
                self.queue.put_nowait(job.id)
            except queue.Full:
                log.warning("recovery queue full; job %s left queued on disk", job.id)

    def _drain(self) -> None:
        while True:
            job_id = self.queue.get()
            try:
                self._run(job_id)
            except Exception:
                log.exception("job %s crashed", job_id)
            finally:
                self.queue.task_done()

    def _run(self, job_id: str) -> None:
        job = self.store.load(job_id)
        if job is None or job.state != "Queued":
            return
        self.store.transition(job, "Running")
        try:
            corpus_file = CorpusFile.at(
                self.store.job_dir(job.id) / job.input_name, schema=job.schema
            )
            loaded = load_corpus(corpus_file)
            if not loaded.instances:
                raise ValueError("input file contains no loadable instances")
            spec = JobSpec(
                tasks=job.spec.tasks,
                variant=job.spec.variant,
                topic_source=job.spec.topic_source,
                concurrency=job.spec.concurrency,
                ungated=job.spec.ungated,
                template_dir=self.template_dir,
            )
            checkpoint = self.store.checkpoint_path(job.id)
            resume = checkpoint.exists()
            with JsonlSink(self.store.results_path(job.id), append=resume) as sink:
                summary = run_batch(
                    self.backend, loaded.instances, spec, sink,
                    checkpoint_path=checkpoint,
                )
            job.counts = {
                "total": summary.total,
                "done": summary.done,
                "failed": summary.failed,
            }
            self.store.transition(job, "Done")
        except Exception as exc:
            job.error = str(exc)
            self.store.transition(job, "Failed")


# -- request bodies ------------------------------------------------------


class TextBody(BaseModel):
    text: str
    variant: str = PromptVariant.WITH_ATN.value


class StanceBody(BaseModel):
    text: str
    topic: str
    variant: str = PromptVariant.WITH_ATN.value


class AnalyzeBody(BaseModel):
    text: str
    topic: Optional[str] = None
    variant: str = PromptVariant.WITH_ATN.value


def _variant(value: str) -> PromptVariant:
    try:
        return PromptVariant(value)
    except ValueError:
        raise HTTPException(status_code=400, detail=f"unknown variant {value!r}")


def _require_text(value: str) -> str:
    if not value.strip():
        raise HTTPException(status_code=400, detail="text must be non-empty")
    return value


def create_app(
    backend: Backend,
    job_dir: Path | str = "jobs",
    template_dir: Optional[Path] = None,
    queue_size: int = 16,
    recover: bool = True,
) -> FastAPI:
    app = FastAPI(title="argmine")
    store = JobStore(Path(job_dir))
    runner = JobRunner(store, backend, template_dir, queue_size=queue_size)
    if recover:
        runner.recover()
    app.state.store = store
    app.state.runner = runner
    app.state.backend = backend

    @app.exception_handler(RequestValidationError)
    async def malformed_input(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(BackendError)
    async def backend_failure(request: Request, exc: BackendError):
        return JSONResponse(status_code=502, content={"detail": str(exc)})

    def _analyze_one(
        text: str, topic: Optional[str], variant: PromptVariant,
        tasks: frozenset[Task],
    ) -> AnalysisRecord:
        instance = Instance(id="adhoc", text=text, gold_topic=topic)
        spec = JobSpec(
            tasks=tasks,
            variant=variant,
            topic_source=(
                TopicSource.FROM_INSTANCE if topic else TopicSource.FROM_EXTRACTION
            ),
            template_dir=template_dir,
        )
        record = analyze(backend, instance, spec)
        for task, message in record.failures.items():
            raise BackendError(f"{task}: {message}")
        return record

    @app.post("/detect")
    def detect(body: TextBody) -> dict[str, Any]:
        record = _analyze_one(
            _require_text(body.text), None, _variant(body.variant),
            frozenset({Task.DETECT}),
        )
        return {"label": str(record.detection)}

    @app.post("/extract")
    def extract(body: TextBody) -> dict[str, Any]:
        record = _analyze_one(
            _require_text(body.text), None, _variant(body.variant),
            frozenset({Task.EXTRACT}),
        )
        topic = record.topic or Topic.no_topic()
        return {"topic": topic.value, "is_no_topic": topic.is_no_topic}

    @app.post("/stance")
    def stance(body: StanceBody) -> dict[str, Any]:
        if not body.topic.strip():
            raise HTTPException(status_code=400, detail="topic must be non-empty")
        record = _analyze_one(
            _require_text(body.text), body.topic, _variant(body.variant),
            frozenset({Task.STANCE}),
        )
        return {"stance": str(record.stance)}

    @app.post("/analyze")
    def analyze_endpoint(body: AnalyzeBody) -> dict[str, Any]:
        topic = body.topic.strip() if body.topic else None
        record = _analyze_one(
            _require_text(body.text), topic, _variant(body.variant),
            frozenset({Task.DETECT, Task.EXTRACT, Task.STANCE}),
        )
        out = record_to_dict(record)
        out["status"] = record.status
        return out

    @app.post("/jobs")
    def submit_job(
        file: UploadFile = File(...),
        tasks: str = Form("detect,extract,stance"),
        variant: str = Form(PromptVariant.WITH_ATN.value),
        topic_source: str = Form(TopicSource.FROM_EXTRACTION.value),
        concurrency: int = Form(1),
        ungated: bool = Form(False),
        schema_name: str = Form("canonical", alias="schema"),
    ) -> dict[str, str]:
        try:
            task_set = frozenset(Task(t.strip()) for t in tasks.split(",") if t.strip())
            spec = JobSpec(
                tasks=task_set,
                variant=PromptVariant(variant),
                topic_source=TopicSource(topic_source),
                concurrency=concurrency,
                ungated=ungated,
            )
            validate_job_spec(spec)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if schema_name not in SCHEMA_PRESETS:
            raise HTTPException(
                status_code=400,
                detail=f"unknown schema {schema_name!r}; known: {sorted(SCHEMA_PRESETS)}",
            )
        payload = file.file.read()
        if not payload:
            raise HTTPException(status_code=400, detail="uploaded file is empty")
        job = store.create(
            spec, input_name=Path(file.filename or "input.csv").name,
            payload=payload, schema=schema_name,
        )
        try:
            runner.submit(job)
        except queue.Full:
            raise HTTPException(status_code=503, detail="job queue is full")
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict[str, Any]:
        job = store.load(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return job.to_dict()

    @app.get("/jobs/{job_id}/results")
    def job_results(job_id: str):
        job = store.load(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        results = store.results_path(job_id)
        if job.state not in ("Done", "Failed") or not results.exists():
            raise HTTPException(status_code=404, detail="results not ready")
        return FileResponse(
            results, media_type="application/jsonl",
            filename=f"{job_id}-results.jsonl",
        )

    return app
