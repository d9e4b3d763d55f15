"""Corpus loading, saving, and synthetic corpus generation.

Loaders apply a column schema so differently shaped dataset releases all land
on the same Instance type. Malformed rows go to a reject report instead of
aborting the load. Saving always writes the canonical schema and round-trips
through the loader.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .backend import Backend
from .core import (
    NO_TOPIC,
    ARGUMENT_TYPES,
    STYLES,
    ArgumentLabel,
    Instance,
    StanceLabel,
    parse_argument_label,
    parse_stance_label,
    validate_instance,
)
from .prompting import build_generation_prompt


class CorpusFormat(Enum):
    CSV = "csv"
    JSONL = "jsonl"


# Instance fields a schema may bind columns to.
FIELDS = ("id", "text", "topic", "argument", "stance", "argument_type", "style", "meta")


@dataclass(frozen=True)
class CorpusSchema:
    """Column-name to field-name mapping plus how to read label cells."""

    columns: Mapping[str, str]  # column -> field; must cover "text"
    derive_argument_from_stance: bool = False
    derive_argument_from_topic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", dict(self.columns))
        unknown = set(self.columns.values()) - set(FIELDS)
        if unknown:
            raise ValueError(f"schema maps to unknown fields: {sorted(unknown)}")
        if "text" not in self.columns.values():
            raise ValueError("schema must bind a text column")

    def column_for(self, field_name: str) -> Optional[str]:
        for column, bound in self.columns.items():
            if bound == field_name:
                return column
        return None


CANONICAL_COLUMNS = ("id", "text", "topic", "argument", "stance",
                     "argument_type", "style", "meta")

CANONICAL_SCHEMA = CorpusSchema(columns={c: c for c in CANONICAL_COLUMNS})

# Presets for the common dataset shapes. The benchmark corpora themselves are
# not vendored; these match the column layouts their releases use.
SCHEMA_PRESETS: dict[str, CorpusSchema] = {
    "canonical": CANONICAL_SCHEMA,
    "gpt-hq": CANONICAL_SCHEMA,
    "ukp": CorpusSchema(
        columns={"sentence": "text", "topic": "topic", "annotation": "stance"},
        derive_argument_from_stance=True,
    ),
    "ibm-arg": CorpusSchema(
        columns={"argument": "text", "topic": "topic", "stance": "stance"},
        derive_argument_from_stance=True,
    ),
    "debate": CorpusSchema(
        columns={"sentence": "text", "topic": "topic", "label": "argument"},
    ),
    "cte": CorpusSchema(
        columns={"text": "text", "topic": "topic"},
        derive_argument_from_topic=True,
    ),
}


@dataclass(frozen=True)
class CorpusFile:
    path: Path
    format: CorpusFormat
    schema: CorpusSchema = CANONICAL_SCHEMA

    @staticmethod
    def at(path: Union[Path, str], schema: Union[str, CorpusSchema, None] = None,
           format: Optional[CorpusFormat] = None) -> "CorpusFile":
        """Build a CorpusFile, inferring format from the suffix and resolving
        schema preset names."""
        p = Path(path)
        if format is None:
            format = CorpusFormat.JSONL if p.suffix.lower() in (".jsonl", ".ndjson") else CorpusFormat.CSV
        if schema is None:
            schema = CANONICAL_SCHEMA
        elif isinstance(schema, str):
            try:
                schema = SCHEMA_PRESETS[schema]
            except KeyError:
                raise ValueError(
                    f"unknown schema preset {schema!r}; "
                    f"known: {sorted(SCHEMA_PRESETS)}"
                ) from None
        return CorpusFile(path=p, format=format, schema=schema)


@dataclass(frozen=True)
class RejectedRow:
    row_number: int  # 1-based data row number
    reason: str
    raw: Mapping[str, Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "raw", dict(self.raw))


@dataclass
class LoadResult:
    instances: list[Instance]
    rejects: list[RejectedRow] = field(default_factory=list)


def _row_to_instance(
    row: Mapping[str, Any], schema: CorpusSchema, row_number: int
) -> Instance:
    values: dict[str, Any] = {}
    for column, field_name in schema.columns.items():
        if column in row and row[column] not in (None, ""):
            values[field_name] = row[column]

    text = str(values.get("text", "")).strip()
    if not text:
        raise ValueError("empty text")

    topic = values.get("topic")
    topic = str(topic).strip() if topic is not None else None

    argument = values.get("argument")
    argument = parse_argument_label(argument) if argument is not None else None
    stance = values.get("stance")
    stance = parse_stance_label(stance) if stance is not None else None

    if argument is None and schema.derive_argument_from_stance and stance is not None:
        argument = (
            ArgumentLabel.NOT_ARGUMENT
            if stance is StanceLabel.NO_ARGUMENT
            else ArgumentLabel.ARGUMENT
        )
    if argument is None and schema.derive_argument_from_topic and topic is not None:
        argument = (
            ArgumentLabel.NOT_ARGUMENT
            if topic.lower() == NO_TOPIC.lower()
            else ArgumentLabel.ARGUMENT
        )

    meta: dict[str, str] = {}
    raw_meta = values.get("meta")
    if raw_meta:
        parsed = raw_meta if isinstance(raw_meta, Mapping) else json.loads(str(raw_meta))
        meta.update({str(k): str(v) for k, v in parsed.items()})
    for key in ("argument_type", "style"):
        if key in values:
            meta[key] = str(values[key]).strip()

    instance = Instance(
        id=str(values.get("id", f"row{row_number}")),
        text=text,
        gold_topic=topic,
        gold_argument=argument,
        gold_stance=stance,
        meta=meta,
    )
    violations = validate_instance(instance)
    if violations:
        raise ValueError("; ".join(violations))
    return instance


def _iter_rows(file: CorpusFile):
    if file.format is CorpusFormat.CSV:
        with open(file.path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in file.schema.columns if c not in header]
            if missing:
                raise ValueError(f"schema columns missing from header: {missing}")
            yield from reader
    else:
        with open(file.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)


def load_corpus(file: CorpusFile) -> LoadResult:
    """Read a corpus file. Rows that fail parsing or instance validation are
    collected as rejects; accepted + rejected always equals the row count."""
    result = LoadResult(instances=[])
    for i, row in enumerate(_iter_rows(file), start=1):
        try:
            result.instances.append(_row_to_instance(row, file.schema, i))
        except (ValueError, json.JSONDecodeError) as exc:
            result.rejects.append(RejectedRow(row_number=i, reason=str(exc), raw=row))
    return result


def save_corpus(instances: Sequence[Instance], file: CorpusFile) -> None:
    """Write the canonical schema: fixed column order, UTF-8, loader-compatible."""
    if file.format is CorpusFormat.CSV:
        with open(file.path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CANONICAL_COLUMNS)
            for inst in instances:
                extra = {
                    k: v for k, v in sorted(inst.meta.items())
                    if k not in ("argument_type", "style")
                }
                writer.writerow([
                    inst.id,
                    inst.text,
                    inst.gold_topic or "",
                    "" if inst.gold_argument is None else str(inst.gold_argument),
                    "" if inst.gold_stance is None else str(inst.gold_stance),
                    inst.meta.get("argument_type", ""),
                    inst.meta.get("style", ""),
                    json.dumps(extra, sort_keys=True, ensure_ascii=False) if extra else "",
                ])
    else:
        from .core import instance_to_dict

        with open(file.path, "w", encoding="utf-8") as fh:
            for inst in instances:
                fh.write(json.dumps(instance_to_dict(inst), sort_keys=True,
                                    ensure_ascii=False) + "\n")


def write_reject_report(rejects: Sequence[RejectedRow], path: Union[Path, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for reject in rejects:
            fh.write(json.dumps(
                {"row": reject.row_number, "reason": reject.reason, "raw": dict(reject.raw)},
                sort_keys=True, ensure_ascii=False) + "\n")


# -- synthetic generation ------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    topics: tuple[str, ...]
    per_cell_count: int = 1
    types: tuple[str, ...] = ARGUMENT_TYPES
    styles: tuple[str, ...] = STYLES
    sentence_range: tuple[int, int] = (1, 3)
    non_argument_fraction: float = 0.25
    template_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "topics", tuple(self.topics))
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "styles", tuple(self.styles))
        if not self.topics:
            raise ValueError("at least one topic is required")
        if self.per_cell_count < 1:
            raise ValueError("per_cell_count must be >= 1")
        if not 0.0 <= self.non_argument_fraction:
            raise ValueError("non_argument_fraction must be >= 0")
        unknown = set(self.types) - set(ARGUMENT_TYPES)
        if unknown:
            raise ValueError(f"unknown argument types: {sorted(unknown)}")


@dataclass
class GenerationReport:
    instances: list[Instance]
    failures: list[tuple[str, str]] = field(default_factory=list)  # (cell, error)


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text.lower()).strip("-")


def generate_synthetic(backend: Backend, spec: SynthSpec) -> GenerationReport:
    """Generate one corpus cell per (type, style, topic) combination plus a
    share of non-arguments. Backend errors are itemized per cell and do not
    stop the run."""
    from .backend import BackendError

    report = GenerationReport(instances=[])
    for arg_type in spec.types:
        for style in spec.styles:
            for topic in spec.topics:
                for k in range(spec.per_cell_count):
                    cell = f"{arg_type}/{style}/{topic}"
                    system, user = build_generation_prompt(
                        topic, style, arg_type, spec.template_dir
                    )
                    try:
                        text = backend.complete_raw(system, user).strip()
                    except BackendError as exc:
                        report.failures.append((cell, str(exc)))
                        continue
                    report.instances.append(Instance(
                        id=f"gen-{arg_type}-{style}-{_slug(topic)}-{k}",
                        text=text,
                        gold_topic=topic,
                        gold_argument=ArgumentLabel.ARGUMENT,
                        meta={"argument_type": arg_type, "style": style,
                              "synthetic": "true"},
                    ))

    n_arguments = len(spec.types) * len(spec.styles) * len(spec.topics) * spec.per_cell_count
    n_non = round(spec.non_argument_fraction * n_arguments)
    for k in range(n_non):
        style = spec.styles[k % len(spec.styles)]
        topic = spec.topics[(k // len(spec.styles)) % len(spec.topics)]
        cell = f"non-argument/{style}/{topic}"
        system, user = build_generation_prompt(topic, style, None, spec.template_dir)
        try:
            text = backend.complete_raw(system, user).strip()
        except BackendError as exc:
            report.failures.append((cell, str(exc)))
            continue
        report.instances.append(Instance(
            id=f"gen-none-{style}-{_slug(topic)}-{k}",
            text=text,
            gold_topic=NO_TOPIC,
            gold_argument=ArgumentLabel.NOT_ARGUMENT,
            meta={"style": style, "synthetic": "true"},
        ))
    return report
