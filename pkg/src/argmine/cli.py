"""Command-line interface: single-text and batch analysis, evaluation with
reports and figures, annotation sampling, synthetic corpus generation, and
the HTTP service.

Exit codes: 0 success, 1 input error, 2 backend failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import click

from .atn import build_detection_atn, export_edge_table, render_pseudo_language
from .backend import BackendError, mock_embed
from .config import AppConfig, load_app_config, make_backend
from .core import Instance
from .data import (
    SCHEMA_PRESETS,
    CorpusFile,
    SynthSpec,
    generate_synthetic,
    load_corpus,
    save_corpus,
    write_reject_report,
)
from .metrics import (
    evaluate_detection,
    evaluate_extraction,
    evaluate_stance,
)
from .pipeline import (
    CsvSink,
    JobSpec,
    JsonlSink,
    TopicSource,
    analyze,
    record_from_dict,
    run_batch,
)
from .prompting import PromptVariant, Task
from .report import render_report_text, run_table, write_grid_files, write_report_files
from .sampling import (
    merge_annotations,
    read_annotations,
    read_keyfile,
    stratified_sample,
    write_sheet,
)


class InputError(click.ClickException):
    exit_code = 1


def _fail(message: str) -> "InputError":
    return InputError(message)


def _parse_variant(value: str) -> PromptVariant:
    try:
        return PromptVariant(value)
    except ValueError:
        raise _fail(f"--variant must be 'atn' or 'no-atn', got {value!r}")


def _parse_tasks(value: str) -> frozenset[Task]:
    try:
        tasks = frozenset(Task(part.strip()) for part in value.split(",") if part.strip())
    except ValueError:
        raise _fail(f"--tasks must name detect, extract, stance; got {value!r}")
    if not tasks:
        raise _fail("--tasks must not be empty")
    return tasks


def _schema(name: str):
    if name not in SCHEMA_PRESETS:
        raise _fail(f"--schema must be one of {sorted(SCHEMA_PRESETS)}, got {name!r}")
    return SCHEMA_PRESETS[name]


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON config file (endpoint, model, key env, template dir, job dir).")
@click.option("--backend", "backend_kind", type=str, default=None,
              help="Backend kind: 'mock' (offline) or 'http'. Defaults to http "
                   "when an endpoint is configured, else mock.")
@click.option("--endpoint-url", default=None, help="Chat-completions base URL.")
@click.option("--model-id", default=None, help="Model id sent to the endpoint.")
@click.option("--api-key-env", default=None, help="Env var holding the API key.")
@click.option("--template-dir", type=click.Path(path_type=Path), default=None,
              help="Directory of prompt template files.")
@click.pass_context
def cli(ctx, config_path, backend_kind, endpoint_url, model_id, api_key_env, template_dir):
    """Argument mining over pluggable chat-completion backends."""
    app = load_app_config(config_path) if config_path else AppConfig()
    overrides = {}
    if endpoint_url:
        overrides["endpoint_url"] = endpoint_url
    if model_id:
        overrides["model_id"] = model_id
    if api_key_env:
        overrides["api_key_env"] = api_key_env
    if template_dir:
        overrides["template_dir"] = template_dir
    if overrides:
        from dataclasses import replace
        app = replace(app, **overrides)
    if backend_kind is None:
        backend_kind = "http" if app.endpoint_url else "mock"
    if backend_kind not in ("mock", "http"):
        raise _fail(f"--backend must be 'mock' or 'http', got {backend_kind!r}")
    ctx.obj = {"app": app, "backend_kind": backend_kind}


def _backend(ctx) -> object:
    try:
        return make_backend(ctx.obj["app"], ctx.obj["backend_kind"])
    except ValueError as exc:
        raise _fail(str(exc))


def _load_instances(path: Path, schema_name: str) -> list[Instance]:
    corpus_file = CorpusFile.at(path, schema=_schema(schema_name))
    try:
        loaded = load_corpus(corpus_file)
    except (OSError, ValueError) as exc:
        raise _fail(f"--in: cannot load {path}: {exc}")
    if loaded.rejects:
        click.echo(f"warning: {len(loaded.rejects)} rejected rows in {path}", err=True)
        report_path = Path(f"{path}.rejects.jsonl")
        write_reject_report(loaded.rejects, report_path)
        click.echo(f"reject report written to {report_path}", err=True)
    if not loaded.instances:
        raise _fail(f"--in: {path} contains no loadable instances")
    return loaded.instances


def _single_text_record(ctx, text: str, topic: Optional[str],
                        variant: PromptVariant, tasks: frozenset[Task]):
    backend = _backend(ctx)
    instance = Instance(id="cli", text=text, gold_topic=topic)
    spec = JobSpec(
        tasks=tasks,
        variant=variant,
        topic_source=TopicSource.FROM_INSTANCE if topic else TopicSource.FROM_EXTRACTION,
        template_dir=ctx.obj["app"].template_dir,
    )
    record = analyze(backend, instance, spec)
    for task, message in record.failures.items():
        raise BackendError(f"{task}: {message}")
    return record


def _run_file_batch(ctx, in_path: Path, out_path: Path, schema_name: str,
                    tasks: frozenset[Task], variant: PromptVariant,
                    topic_source: TopicSource, concurrency: int, ungated: bool,
                    checkpoint: Optional[Path]) -> int:
    instances = _load_instances(in_path, schema_name)
    if Task.STANCE in tasks and topic_source is TopicSource.FROM_INSTANCE:
        missing = [inst.id for inst in instances if not inst.has_concrete_topic()]
        if missing:
            raise _fail(
                f"--topic-source instance requires a topic on every instance; "
                f"{len(missing)} lack one (first: {missing[0]})"
            )
    spec = JobSpec(
        tasks=tasks, variant=variant, topic_source=topic_source,
        concurrency=concurrency, ungated=ungated,
        template_dir=ctx.obj["app"].template_dir,
    )
    backend = _backend(ctx)
    resume = checkpoint is not None and checkpoint.exists()
    sink_cls = CsvSink if out_path.suffix.lower() == ".csv" else JsonlSink
    with sink_cls(out_path, append=resume) as sink:
        summary = run_batch(backend, instances, spec, sink, checkpoint_path=checkpoint)
    click.echo(
        f"{summary.total} instances: {summary.succeeded} succeeded, "
        f"{summary.partial} partial, {summary.failed} failed -> {out_path}",
        err=True,
    )
    if summary.failed == summary.total:
        raise BackendError("every instance failed")
    return 0


_COMMON_BATCH = [
    click.option("--in", "in_path", type=click.Path(path_type=Path), default=None,
                 help="Input corpus (CSV or JSONL)."),
    click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
                 help="Results file (.jsonl or .csv)."),
    click.option("--schema", default="canonical",
                 help=f"Input schema preset: {sorted(SCHEMA_PRESETS)}."),
    click.option("--variant", default="atn", help="Prompt variant: atn or no-atn."),
    click.option("--concurrency", default=1, type=int, help="Concurrent backend calls."),
    click.option("--checkpoint", type=click.Path(path_type=Path), default=None,
                 help="Checkpoint file; if it exists the run resumes from it."),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@cli.command()
@click.option("--text", default=None, help="Classify one text and print JSON.")
@_with_options(_COMMON_BATCH)
@click.pass_context
def detect(ctx, text, in_path, out_path, schema, variant, concurrency, checkpoint):
    """Argument detection: is the text an argument?"""
    v = _parse_variant(variant)
    if text is not None:
        record = _single_text_record(ctx, text, None, v, frozenset({Task.DETECT}))
        click.echo(json.dumps({"label": str(record.detection)}))
        return
    if in_path is None or out_path is None:
        raise _fail("detect needs --text, or both --in and --out")
    _run_file_batch(ctx, in_path, out_path, schema, frozenset({Task.DETECT}), v,
                    TopicSource.FROM_EXTRACTION, concurrency, False, checkpoint)


@cli.command()
@click.option("--text", default=None, help="Extract the topic of one text.")
@_with_options(_COMMON_BATCH)
@click.pass_context
def extract(ctx, text, in_path, out_path, schema, variant, concurrency, checkpoint):
    """Claim topic extraction."""
    if text is not None:
        record = _single_text_record(ctx, text, None, _parse_variant(variant),
                                     frozenset({Task.EXTRACT}))
        topic = record.topic
        click.echo(json.dumps(
            {"topic": topic.value if topic else None,
             "is_no_topic": topic.is_no_topic if topic else True}
        ))
        return
    if in_path is None or out_path is None:
        raise _fail("extract needs --text, or both --in and --out")
    _run_file_batch(ctx, in_path, out_path, schema, frozenset({Task.EXTRACT}),
                    _parse_variant(variant), TopicSource.FROM_EXTRACTION,
                    concurrency, False, checkpoint)


@cli.command()
@click.option("--text", default=None, help="Classify one text's stance.")
@click.option("--topic", default=None, help="Topic the stance is anchored to.")
@click.option("--topic-source", default="instance",
              help="Where batch stances take topics from: instance or extract.")
@click.option("--ungated", is_flag=True, default=False,
              help="Do not gate stance on a detection verdict.")
@_with_options(_COMMON_BATCH)
@click.pass_context
def stance(ctx, text, topic, topic_source, ungated, in_path, out_path, schema,
           variant, concurrency, checkpoint):
    """Argument stance classification toward a topic."""
    v = _parse_variant(variant)
    if text is not None:
        if not topic or not topic.strip():
            raise _fail("stance on a single --text requires --topic")
        record = _single_text_record(ctx, text, topic, v, frozenset({Task.STANCE}))
        click.echo(json.dumps({"stance": str(record.stance)}))
        return
    if in_path is None or out_path is None:
        raise _fail("stance needs --text, or both --in and --out")
    try:
        source = TopicSource(topic_source)
    except ValueError:
        raise _fail(f"--topic-source must be 'instance' or 'extract', got {topic_source!r}")
    tasks = {Task.STANCE}
    if source is TopicSource.FROM_EXTRACTION:
        tasks.add(Task.EXTRACT)
    _run_file_batch(ctx, in_path, out_path, schema, frozenset(tasks), v,
                    source, concurrency, ungated, checkpoint)


@cli.command("analyze")
@click.option("--tasks", default="detect,extract,stance",
              help="Comma list of tasks to run.")
@click.option("--topic-source", default="extract",
              help="Where stance takes its topic from: instance or extract.")
@click.option("--ungated", is_flag=True, default=False,
              help="Do not gate extraction/stance on the detection verdict.")
@_with_options(_COMMON_BATCH)
@click.pass_context
def analyze_cmd(ctx, tasks, topic_source, ungated, in_path, out_path, schema,
                variant, concurrency, checkpoint):
    """Run the full pipeline over a corpus file."""
    if in_path is None or out_path is None:
        raise _fail("analyze requires --in and --out")
    try:
        source = TopicSource(topic_source)
    except ValueError:
        raise _fail(f"--topic-source must be 'instance' or 'extract', got {topic_source!r}")
    task_set = _parse_tasks(tasks)
    if Task.STANCE in task_set and source is TopicSource.FROM_EXTRACTION \
            and Task.EXTRACT not in task_set:
        raise _fail("--tasks: stance with --topic-source extract needs the extract task")
    _run_file_batch(ctx, in_path, out_path, schema, task_set, _parse_variant(variant),
                    source, concurrency, ungated, checkpoint)


def _load_prediction_records(path: Path):
    if path.suffix.lower() == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        records = []
        for row in rows:
            records.append(record_from_dict({
                "id": row["id"],
                "detection": row.get("detection") or None,
                "topic": row.get("topic") or None,
                "stance": row.get("stance") or None,
                "variant": row.get("variant") or PromptVariant.WITH_ATN.value,
            }))
        return records
    with open(path, encoding="utf-8") as fh:
        return [record_from_dict(json.loads(line)) for line in fh if line.strip()]


@cli.command("eval")
@click.option("--task", "task_name", default="detect",
              help="Which task to score: detect, extract, or stance.")
@click.option("--pred", "pred_path", type=click.Path(path_type=Path), required=True,
              help="Predictions file produced by analyze (.jsonl or .csv).")
@click.option("--gold", "gold_path", type=click.Path(path_type=Path), required=True,
              help="Gold corpus file.")
@click.option("--schema", default="canonical", help="Gold corpus schema preset.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=Path("report"),
              help="Report stem; writes <out>.json/.txt/_confusion.csv and figures.")
@click.option("--figures/--no-figures", default=True,
              help="Render figure files next to the report.")
@click.option("--embedder", "embedder_kind", default=None,
              help="Embedder for extraction scoring: mock or http "
                   "(default: same as --backend).")
@click.pass_context
def eval_cmd(ctx, task_name, pred_path, gold_path, schema, out_path, figures,
             embedder_kind):
    """Score predictions against gold labels and write a report."""
    try:
        task = Task(task_name)
    except ValueError:
        raise _fail(f"--task must be detect, extract, or stance; got {task_name!r}")
    golds = _load_instances(gold_path, schema)
    try:
        records = _load_prediction_records(pred_path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise _fail(f"--pred: cannot load {pred_path}: {exc}")
    try:
        if task is Task.DETECT:
            report = evaluate_detection(golds, records)
        elif task is Task.STANCE:
            report = evaluate_stance(golds, records)
        else:
            kind = embedder_kind or ctx.obj["backend_kind"]
            if kind == "mock":
                embedder = mock_embed
            elif kind == "http":
                from .backend import HttpBackend
                try:
                    embedder = HttpBackend(ctx.obj["app"].embedding_backend_config())
                except ValueError as exc:
                    raise _fail(f"--embedder http: {exc}")
            else:
                raise _fail(f"--embedder must be 'mock' or 'http', got {kind!r}")
            report = evaluate_extraction(golds, records, embedder)
    except ValueError as exc:
        raise _fail(f"cannot score: {exc}")
    click.echo(render_report_text(report), nl=False)
    written = write_report_files(report, out_path, figures=figures)
    for kind, path in written.items():
        click.echo(f"wrote {kind}: {path}", err=True)


@cli.command()
@click.option("--in", "in_path", type=click.Path(path_type=Path), required=True)
@click.option("--schema", default="canonical")
@click.option("--n", "sample_n", type=int, required=True, help="Sample size.")
@click.option("--seed", type=int, default=0)
@click.option("--sheet", "sheet_path", type=click.Path(path_type=Path), required=True,
              help="Annotation sheet CSV (blind: no labels).")
@click.option("--keyfile", "key_path", type=click.Path(path_type=Path), required=True,
              help="Separate sheet-id to instance-id mapping.")
@click.pass_context
def sample(ctx, in_path, schema, sample_n, seed, sheet_path, key_path):
    """Draw a class-balanced sample for blind relabeling."""
    instances = _load_instances(in_path, schema)
    try:
        sheet = stratified_sample(instances, sample_n, seed)
    except ValueError as exc:
        raise _fail(f"--n: {exc}")
    write_sheet(sheet, sheet_path, key_path)
    click.echo(f"wrote {len(sheet.rows)} rows to {sheet_path} (key: {key_path})", err=True)


@cli.command()
@click.option("--in", "in_path", type=click.Path(path_type=Path), required=True)
@click.option("--schema", default="canonical")
@click.option("--keyfile", "key_path", type=click.Path(path_type=Path), required=True)
@click.option("--annotations", "ann_path", type=click.Path(path_type=Path), required=True,
              help="CSV with columns sheet_id,label.")
@click.option("--task", "task_name", default="detect",
              help="Which gold label the annotations replace: detect or stance.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.pass_context
def merge(ctx, in_path, schema, key_path, ann_path, task_name, out_path):
    """Merge blind annotations back into a relabeled corpus."""
    try:
        task = Task(task_name)
    except ValueError:
        raise _fail(f"--task must be detect or stance, got {task_name!r}")
    instances = _load_instances(in_path, schema)
    try:
        keyfile = read_keyfile(key_path)
        annotations = read_annotations(ann_path)
        merged = merge_annotations(instances, keyfile, annotations, task)
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(f"cannot merge annotations: {exc}")
    save_corpus(merged, CorpusFile.at(out_path))
    click.echo(f"wrote {len(merged)} relabeled instances to {out_path}", err=True)


@cli.command()
@click.option("--topics", default=None, help="Comma-separated topic list.")
@click.option("--topics-file", type=click.Path(path_type=Path), default=None,
              help="File with one topic per line.")
@click.option("--per-cell", default=1, type=int,
              help="Arguments per (type, style, topic) cell.")
@click.option("--types", default=",".join(("deductive", "inductive", "abductive",
                                           "analogical", "fallacious")))
@click.option("--styles", default="informal,formal")
@click.option("--non-argument-fraction", default=0.25, type=float)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.pass_context
def gen(ctx, topics, topics_file, per_cell, types, styles,
        non_argument_fraction, out_path):
    """Generate a synthetic corpus across argument types and styles."""
    topic_list: list[str] = []
    if topics:
        topic_list += [t.strip() for t in topics.split(",") if t.strip()]
    if topics_file:
        topic_list += [
            line.strip() for line in topics_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    if not topic_list:
        raise _fail("gen requires --topics or --topics-file")
    try:
        spec = SynthSpec(
            topics=tuple(topic_list),
            per_cell_count=per_cell,
            types=tuple(t.strip() for t in types.split(",") if t.strip()),
            styles=tuple(s.strip() for s in styles.split(",") if s.strip()),
            non_argument_fraction=non_argument_fraction,
        )
    except ValueError as exc:
        raise _fail(str(exc))
    report = generate_synthetic(_backend(ctx), spec)
    for cell, error in report.failures:
        click.echo(f"generation failed for {cell}: {error}", err=True)
    if not report.instances:
        raise BackendError("generation produced no instances")
    save_corpus(report.instances, CorpusFile.at(out_path))
    click.echo(f"wrote {len(report.instances)} instances to {out_path}", err=True)


@cli.command()
@click.option("--dataset", "datasets", multiple=True, required=True,
              help="Repeatable name=path pairs of gold corpora.")
@click.option("--schema", default="canonical")
@click.option("--task", "task_name", default="detect")
@click.option("--variants", default="atn,no-atn")
@click.option("--model-name", default=None, help="Row label (default: backend kind).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=Path("grid"))
@click.option("--figures/--no-figures", default=True)
@click.pass_context
def report(ctx, datasets, schema, task_name, variants, model_name, out_path, figures):
    """Run one task across datasets and variants; write the results grid."""
    try:
        task = Task(task_name)
    except ValueError:
        raise _fail(f"--task must be detect, extract, or stance; got {task_name!r}")
    corpora = {}
    for item in datasets:
        if "=" not in item:
            raise _fail(f"--dataset must look like name=path, got {item!r}")
        name, _, path = item.partition("=")
        corpora[name] = _load_instances(Path(path), schema)
    try:
        variant_list = [PromptVariant(v.strip()) for v in variants.split(",") if v.strip()]
    except ValueError:
        raise _fail(f"--variants must name atn / no-atn, got {variants!r}")
    backend = _backend(ctx)
    label = model_name or ctx.obj["backend_kind"]
    embedder = mock_embed if ctx.obj["backend_kind"] == "mock" else None
    grid = run_table([(label, backend)], corpora, task,
                     variants=variant_list, embedder=embedder)
    from .report import render_grid_text
    click.echo(render_grid_text(grid), nl=False)
    written = write_grid_files(grid, out_path, figures=figures)
    for kind, path in written.items():
        click.echo(f"wrote {kind}: {path}", err=True)


@cli.command()
@click.option("--edges", "show_edges", is_flag=True, default=False,
              help="Print the edge table instead of the rule text.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def atn(show_edges, out_path):
    """Print (or save) the detection network as rules or an edge table."""
    network = build_detection_atn()
    text = export_edge_table(network) if show_edges else render_pseudo_language(network) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8080, type=int)
@click.option("--job-dir", type=click.Path(path_type=Path), default=None)
@click.option("--queue-size", default=16, type=int)
@click.pass_context
def serve(ctx, host, port, job_dir, queue_size):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    app_config: AppConfig = ctx.obj["app"]
    backend = _backend(ctx)
    app = create_app(
        backend,
        job_dir=job_dir or app_config.job_dir,
        template_dir=app_config.template_dir,
        queue_size=queue_size,
    )
    uvicorn.run(app, host=host, port=port)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI, mapping failures onto the documented exit codes."""
    try:
        cli.main(args=list(argv) if argv is not None else None,
                 prog_name="argmine", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code if isinstance(exc, InputError) else 1
    except BackendError as exc:
        click.echo(f"backend failure: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
