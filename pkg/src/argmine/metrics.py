"""Evaluation metrics: binary and macro F1, confusion matrices, the
topic-extraction similarity score, and per-group accuracy breakdowns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    ArgumentLabel,
    Instance,
    StanceLabel,
    Topic,
    is_no_topic_string,
)
from .pipeline import AnalysisRecord
from .prompting import Task

NO_TOPIC_EMBED_TEXT = "No Topic"


class EmbedderFailure(RuntimeError):
    """An embedding call inside cte_score failed; carries progress context."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold classes, columns are predictions."""

    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    @staticmethod
    def from_pairs(
        golds: Sequence[Any], preds: Sequence[Any], classes: Sequence[Any]
    ) -> "ConfusionMatrix":
        names = tuple(str(c) for c in classes)
        index = {str(c): i for i, c in enumerate(classes)}
        grid = [[0] * len(names) for _ in names]
        for g, p in zip(golds, preds):
            grid[index[str(g)]][index[str(p)]] += 1
        return ConfusionMatrix(names, tuple(tuple(row) for row in grid))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def to_dict(self) -> dict[str, Any]:
        return {"classes": list(self.classes),
                "counts": [list(row) for row in self.counts]}


@dataclass(frozen=True)
class CteResult:
    """Mean topic-similarity over a test set, with the abstention bookkeeping
    needed to interpret it."""

    score: float
    coverage: float
    zeroed_count: int
    n: int

    def __post_init__(self) -> None:
        if self.zeroed_count > self.n:
            raise ValueError("zeroed_count cannot exceed n")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must be within [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    """One evaluation run. For the extraction task ``f1`` holds the topic
    similarity score so report grids stay uniform."""

    task: Task
    f1: float
    n: int
    per_class_f1: Mapping[str, float] = field(default_factory=dict)
    confusion: Optional[ConfusionMatrix] = None
    cte: Optional[CteResult] = None
    breakdowns: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("report needs at least one evaluated instance")
        if not 0.0 <= self.f1 <= 1.0:
            raise ValueError("f1 must be within [0, 1]")


def _check_lengths(preds: Sequence[Any], golds: Sequence[Any]) -> None:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(golds)} golds")
    if not preds:
        raise ValueError("nothing to score")


def _class_f1(golds: Sequence[Any], preds: Sequence[Any], cls: Any) -> float:
    tp = sum(1 for g, p in zip(golds, preds) if g == cls and p == cls)
    fp = sum(1 for g, p in zip(golds, preds) if g != cls and p == cls)
    fn = sum(1 for g, p in zip(golds, preds) if g == cls and p != cls)
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 0.0
    return 2 * tp / denominator


def f1_binary(
    preds: Sequence[ArgumentLabel], golds: Sequence[ArgumentLabel]
) -> float:
    """F1 of the positive (Argument) class."""
    _check_lengths(preds, golds)
    return _class_f1(golds, preds, ArgumentLabel.ARGUMENT)


def f1_macro(preds: Sequence[StanceLabel], golds: Sequence[StanceLabel]) -> float:
    """Unweighted mean of per-class F1 over the three stance classes.

    A class absent from both golds and predictions is excluded from the mean;
    a class that was only predicted counts with F1 = 0.
    """
    _check_lengths(preds, golds)
    scores = []
    for cls in StanceLabel:
        if cls not in golds and cls not in preds:
            continue
        scores.append(_class_f1(golds, preds, cls))
    return sum(scores) / len(scores)


Embedder = Union[Callable[[Sequence[str]], Sequence[Any]], Any]


def _embed_batch(embedder: Embedder, texts: Sequence[str], what: str) -> list[np.ndarray]:
    fn = embedder.embed if hasattr(embedder, "embed") else embedder
    try:
        raw = fn(list(texts))
    except Exception as exc:
        raise EmbedderFailure(f"embedding the {what} batch ({len(texts)} texts) failed: {exc}") from exc
    return [np.asarray(getattr(v, "vector", v), dtype=float) for v in raw]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _topic_text(topic: Union[str, Topic, None]) -> str:
    if topic is None:
        return NO_TOPIC_EMBED_TEXT
    value = topic.value if isinstance(topic, Topic) else str(topic)
    if not value.strip() or is_no_topic_string(value):
        return NO_TOPIC_EMBED_TEXT
    return value


def _normalize_for_embedding(text: str) -> str:
    return " ".join(text.split()).lower()


def cte_score(
    gold_topics: Sequence[Union[str, Topic, None]],
    pred_topics: Sequence[Union[str, Topic, None]],
    gold_is_argument: Sequence[bool],
    embedder: Embedder,
) -> CteResult:
    """Mean cosine similarity between gold and predicted topic embeddings.

    A topic generated for a non-argument scores 0 for that instance. An
    abstaining side embeds the literal sentinel, so abstention matched with
    abstention scores 1. Instance similarities are clamped to [0, 1].
    """
    if not (len(gold_topics) == len(pred_topics) == len(gold_is_argument)):
        raise ValueError("gold_topics, pred_topics, gold_is_argument must align")
    if not gold_topics:
        raise ValueError("nothing to score")

    gold_texts = [_topic_text(t) for t in gold_topics]
    pred_texts = [_topic_text(t) for t in pred_topics]
    pred_abstains = [t == NO_TOPIC_EMBED_TEXT for t in pred_texts]

    gold_vecs = _embed_batch(
        embedder, [_normalize_for_embedding(t) for t in gold_texts], "gold"
    )
    pred_vecs = _embed_batch(
        embedder, [_normalize_for_embedding(t) for t in pred_texts], "predicted"
    )

    zeroed = 0
    sims: list[float] = []
    for is_arg, abstained, gv, pv in zip(
        gold_is_argument, pred_abstains, gold_vecs, pred_vecs
    ):
        if not is_arg and not abstained:
            zeroed += 1
            sims.append(0.0)
            continue
        sims.append(min(1.0, max(0.0, _cosine(gv, pv))))

    n = len(sims)
    coverage = sum(1 for a in pred_abstains if not a) / n
    return CteResult(score=sum(sims) / n, coverage=coverage, zeroed_count=zeroed, n=n)


def type_breakdown(
    records: Sequence[AnalysisRecord], instances: Sequence[Instance]
) -> dict[str, dict[str, float]]:
    """Detection accuracy per argument type and per style. Groups with no
    scorable instances are omitted."""
    by_id = {r.instance_id: r for r in records}
    out: dict[str, dict[str, float]] = {}
    for key in ("argument_type", "style"):
        hits: dict[str, int] = {}
        totals: dict[str, int] = {}
        for instance in instances:
            group = instance.meta.get(key)
            if group is None or instance.gold_argument is None:
                continue
            record = by_id.get(instance.id)
            if record is None:
                continue
            totals[group] = totals.get(group, 0) + 1
            if record.detection == instance.gold_argument:
                hits[group] = hits.get(group, 0) + 1
        if totals:
            out[key] = {
                group: hits.get(group, 0) / total
                for group, total in sorted(totals.items())
            }
    return out


# -- joined evaluation over instances + records -------------------------------


def _join(
    instances: Sequence[Instance], records: Sequence[AnalysisRecord]
) -> list[tuple[Instance, AnalysisRecord]]:
    by_id = {r.instance_id: r for r in records}
    joined = [(inst, by_id[inst.id]) for inst in instances if inst.id in by_id]
    if not joined:
        raise ValueError("no record ids match the gold corpus")
    return joined


def evaluate_detection(
    instances: Sequence[Instance], records: Sequence[AnalysisRecord]
) -> EvalReport:
    pairs = [
        (inst, rec)
        for inst, rec in _join(instances, records)
        if inst.gold_argument is not None and rec.detection is not None
    ]
    if not pairs:
        raise ValueError("no instances with gold argument labels and detections")
    golds = [inst.gold_argument for inst, _ in pairs]
    preds = [rec.detection for _, rec in pairs]
    score = f1_binary(preds, golds)
    classes = list(ArgumentLabel)
    return EvalReport(
        task=Task.DETECT,
        f1=score,
        n=len(pairs),
        per_class_f1={str(c): _class_f1(golds, preds, c) for c in classes},
        confusion=ConfusionMatrix.from_pairs(golds, preds, classes),
        breakdowns=type_breakdown([r for _, r in pairs], [i for i, _ in pairs]),
    )


def evaluate_stance(
    instances: Sequence[Instance], records: Sequence[AnalysisRecord]
) -> EvalReport:
    pairs = [
        (inst, rec)
        for inst, rec in _join(instances, records)
        if inst.gold_stance is not None and rec.stance is not None
    ]
    if not pairs:
        raise ValueError("no instances with gold stance labels and predictions")
    golds = [inst.gold_stance for inst, _ in pairs]
    preds = [rec.stance for _, rec in pairs]
    classes = list(StanceLabel)
    return EvalReport(
        task=Task.STANCE,
        f1=f1_macro(preds, golds),
        n=len(pairs),
        per_class_f1={str(c): _class_f1(golds, preds, c) for c in classes},
        confusion=ConfusionMatrix.from_pairs(golds, preds, classes),
    )


def _gold_is_argument(instance: Instance) -> bool:
    if instance.gold_argument is not None:
        return instance.gold_argument is ArgumentLabel.ARGUMENT
    return instance.has_concrete_topic()


def evaluate_extraction(
    instances: Sequence[Instance],
    records: Sequence[AnalysisRecord],
    embedder: Embedder,
) -> EvalReport:
    pairs = [
        (inst, rec)
        for inst, rec in _join(instances, records)
        if inst.gold_topic is not None
    ]
    if not pairs:
        raise ValueError("no instances with gold topics")
    result = cte_score(
        [inst.gold_topic for inst, _ in pairs],
        [rec.topic for _, rec in pairs],
        [_gold_is_argument(inst) for inst, _ in pairs],
        embedder,
    )
    return EvalReport(task=Task.EXTRACT, f1=result.score, n=result.n, cte=result)
