"""Stratified sampling for blind relabeling, and merging the annotations back.

The sheet shown to annotators carries only text (and topic, when stance is
being judged); the sheet-id to instance-id mapping lives in a separate
keyfile so labeling stays blind.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, Union

from .core import Instance, parse_argument_label, parse_stance_label
from .prompting import Task


@dataclass(frozen=True)
class SheetRow:
    sheet_id: str
    text: str
    topic: str = ""


@dataclass(frozen=True)
class AnnotationSheet:
    rows: tuple[SheetRow, ...]
    key: Mapping[str, str]  # sheet_id -> instance_id

    def __post_init__(self) -> None:
        object.__setattr__(self, "key", dict(self.key))


def default_class(instance: Instance) -> str:
    """Stratification class: stance when present, else the argument label."""
    if instance.gold_stance is not None:
        return str(instance.gold_stance)
    if instance.gold_argument is not None:
        return str(instance.gold_argument)
    return "unlabeled"


def stratified_sample(
    corpus: Sequence[Instance],
    n: int,
    seed: int,
    class_of: Callable[[Instance], str] = default_class,
) -> AnnotationSheet:
    """Draw ``n`` instances with per-class counts differing by at most one.

    Deterministic for a given seed: same corpus, same seed, same sheet. Gold
    labels are stripped from the rows; the keyfile mapping restores identity
    after annotation.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n > len(corpus):
        raise ValueError(f"n={n} exceeds corpus size {len(corpus)}")

    groups: dict[str, list[Instance]] = {}
    for instance in corpus:
        groups.setdefault(class_of(instance), []).append(instance)

    rng = random.Random(seed)
    class_names = sorted(groups)
    order = class_names[:]
    rng.shuffle(order)
    base, remainder = divmod(n, len(class_names))
    quotas = {name: base for name in class_names}
    for name in order[:remainder]:
        quotas[name] += 1

    for name in class_names:
        if quotas[name] > len(groups[name]):
            raise ValueError(
                f"class {name!r} has {len(groups[name])} instances, "
                f"needs {quotas[name]}"
            )

    chosen: list[Instance] = []
    for name in class_names:
        chosen.extend(rng.sample(groups[name], quotas[name]))
    rng.shuffle(chosen)

    include_topic = any(inst.gold_topic for inst in chosen)
    rows = []
    key = {}
    for i, instance in enumerate(chosen):
        sheet_id = f"s{i:04d}"
        rows.append(
            SheetRow(
                sheet_id=sheet_id,
                text=instance.text,
                topic=(instance.gold_topic or "") if include_topic else "",
            )
        )
        key[sheet_id] = instance.id
    return AnnotationSheet(rows=tuple(rows), key=key)


def write_sheet(sheet: AnnotationSheet, sheet_path: Union[Path, str],
                key_path: Union[Path, str]) -> None:
    with open(sheet_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sheet_id", "text", "topic"])
        for row in sheet.rows:
            writer.writerow([row.sheet_id, row.text, row.topic])
    with open(key_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sheet_id", "instance_id"])
        for row in sheet.rows:
            writer.writerow([row.sheet_id, sheet.key[row.sheet_id]])


def read_keyfile(path: Union[Path, str]) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["sheet_id"]: row["instance_id"] for row in csv.DictReader(fh)}


def read_annotations(path: Union[Path, str]) -> list[tuple[str, str]]:
    """(sheet_id, label) pairs from a CSV with columns sheet_id,label."""
    with open(path, encoding="utf-8", newline="") as fh:
        return [(row["sheet_id"], row["label"]) for row in csv.DictReader(fh)]


def merge_annotations(
    corpus: Sequence[Instance],
    keyfile: Mapping[str, str],
    annotations: Union[Iterable[tuple[str, str]], Mapping[str, str]],
    task: Task = Task.DETECT,
) -> list[Instance]:
    """Replace gold labels with fresh annotations.

    Returns only the annotated instances, in sheet order, each tagged with a
    provenance marker. Unknown or duplicate sheet ids are errors.
    """
    pairs = list(annotations.items()) if isinstance(annotations, Mapping) else list(annotations)
    seen: dict[str, str] = {}
    for sheet_id, label in pairs:
        if sheet_id in seen:
            raise ValueError(f"duplicate annotation for sheet id {sheet_id!r}")
        if sheet_id not in keyfile:
            raise ValueError(f"unknown sheet id {sheet_id!r}")
        seen[sheet_id] = label

    by_id = {inst.id: inst for inst in corpus}
    merged = []
    for sheet_id, instance_id in keyfile.items():
        if sheet_id not in seen:
            continue
        if instance_id not in by_id:
            raise ValueError(f"keyfile maps {sheet_id!r} to unknown instance {instance_id!r}")
        instance = by_id[instance_id]
        label = seen[sheet_id]
        meta = dict(instance.meta)
        meta["label_provenance"] = "relabeled"
        if task is Task.STANCE:
            updated = Instance(
                id=instance.id,
                text=instance.text,
                gold_topic=instance.gold_topic,
                gold_argument=instance.gold_argument,
                gold_stance=parse_stance_label(label),
                meta=meta,
            )
        else:
            updated = Instance(
                id=instance.id,
                text=instance.text,
                gold_topic=instance.gold_topic,
                gold_argument=parse_argument_label(label),
                gold_stance=instance.gold_stance,
                meta=meta,
            )
        merged.append(updated)
    return merged
