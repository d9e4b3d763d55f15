"""Shared domain types: instances, labels, token states, and topics."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

NO_TOPIC = "No Topic"

ARGUMENT_TYPES = ("deductive", "inductive", "abductive", "analogical", "fallacious")
STYLES = ("informal", "formal")

# Texts are expected to span this many sentences; longer ones are flagged,
# not rejected.
MAX_EXPECTED_SENTENCES = 3

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


class ArgumentLabel(Enum):
    """Binary verdict on whether a text is an argument."""

    NOT_ARGUMENT = 0
    ARGUMENT = 1

    def __str__(self) -> str:
        return "Argument" if self is ArgumentLabel.ARGUMENT else "NotArgument"


class StanceLabel(Enum):
    """Three-way stance of a text toward a topic. Codes are part of the
    serialization contract and must not change."""

    NO_ARGUMENT = 0
    FAVOR = 1
    AGAINST = 2

    def __str__(self) -> str:
        return {0: "NoArgument", 1: "Favor", 2: "Against"}[self.value]


class TokenState(Enum):
    """State assigned to a token span when a text is read as a token sequence."""

    CLAIM = "Claim"
    PREMISE = "Premise"
    NOT_CLAIM = "NotClaim"
    NOT_PREMISE = "NotPremise"

    def __str__(self) -> str:
        return self.value


def is_no_topic_string(value: str) -> bool:
    """True when ``value`` is the abstention sentinel, matched
    case-insensitively after trimming."""
    return value.strip().lower() == "no topic"


@dataclass(frozen=True)
class Topic:
    """An extracted (or gold) claim topic.

    ``is_no_topic`` mirrors whether the value is the abstention sentinel;
    use :meth:`of` so the two never disagree.
    """

    value: str
    is_no_topic: bool

    def __post_init__(self) -> None:
        if not self.value.strip():
            raise ValueError("topic value must be non-empty")
        if self.is_no_topic != is_no_topic_string(self.value):
            raise ValueError("is_no_topic inconsistent with value")

    @staticmethod
    def of(value: str) -> "Topic":
        trimmed = value.strip()
        if not trimmed:
            raise ValueError("topic value must be non-empty")
        return Topic(value=trimmed, is_no_topic=is_no_topic_string(trimmed))

    @staticmethod
    def no_topic() -> "Topic":
        return Topic(value=NO_TOPIC, is_no_topic=True)

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Instance:
    """One text to analyze, with whatever gold annotations the corpus carries.

    ``gold_topic`` stores the raw string; the literal "No Topic" encodes
    absence. ``meta`` holds free-form string tags such as ``argument_type``,
    ``style``, or ``synthetic``.
    """

    id: str
    text: str
    gold_topic: Optional[str] = None
    gold_argument: Optional[ArgumentLabel] = None
    gold_stance: Optional[StanceLabel] = None
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "meta", dict(self.meta))

    def has_concrete_topic(self) -> bool:
        return self.gold_topic is not None and not is_no_topic_string(self.gold_topic)


def split_sentences(text: str) -> list[str]:
    """Coarse sentence segmentation: split after terminal punctuation.

    Deliberately simple; used only for length warnings and for checking
    generated texts, never as a hard gate.
    """
    parts = [p.strip() for p in _SENTENCE_BOUNDARY.split(text.strip())]
    return [p for p in parts if p]


def validate_instance(instance: Instance) -> list[str]:
    """Return violation descriptions, empty when the instance is well formed."""
    violations: list[str] = []
    if not instance.text.strip():
        violations.append("empty text")
    if instance.gold_stance in (StanceLabel.FAVOR, StanceLabel.AGAINST):
        if not instance.has_concrete_topic():
            violations.append("stance requires topic")
    arg_type = instance.meta.get("argument_type")
    if arg_type is not None and arg_type not in ARGUMENT_TYPES:
        violations.append(f"meta.argument_type: unexpected value {arg_type!r}")
    style = instance.meta.get("style")
    if style is not None and style not in STYLES:
        violations.append(f"meta.style: unexpected value {style!r}")
    return violations


def instance_warnings(instance: Instance) -> list[str]:
    """Non-fatal warnings, currently just the sentence-count check."""
    warnings: list[str] = []
    n = len(split_sentences(instance.text))
    if n > MAX_EXPECTED_SENTENCES:
        warnings.append(
            f"text spans {n} sentences; expected 1-{MAX_EXPECTED_SENTENCES}"
        )
    return warnings


# -- label parsing ------------------------------------------------------------
# Closed normalization tables. Anything outside them is a reject, never a guess.

_ARGUMENT_ALIASES = {
    "argument": ArgumentLabel.ARGUMENT,
    "arg": ArgumentLabel.ARGUMENT,
    "1": ArgumentLabel.ARGUMENT,
    "true": ArgumentLabel.ARGUMENT,
    "yes": ArgumentLabel.ARGUMENT,
    "noargument": ArgumentLabel.NOT_ARGUMENT,
    "no argument": ArgumentLabel.NOT_ARGUMENT,
    "notargument": ArgumentLabel.NOT_ARGUMENT,
    "non-argument": ArgumentLabel.NOT_ARGUMENT,
    "not an argument": ArgumentLabel.NOT_ARGUMENT,
    "0": ArgumentLabel.NOT_ARGUMENT,
    "false": ArgumentLabel.NOT_ARGUMENT,
    "no": ArgumentLabel.NOT_ARGUMENT,
}

_STANCE_ALIASES = {
    "0": StanceLabel.NO_ARGUMENT,
    "noargument": StanceLabel.NO_ARGUMENT,
    "no argument": StanceLabel.NO_ARGUMENT,
    "none": StanceLabel.NO_ARGUMENT,
    "1": StanceLabel.FAVOR,
    "favor": StanceLabel.FAVOR,
    "in favor": StanceLabel.FAVOR,
    "argument in favor": StanceLabel.FAVOR,
    "argument_for": StanceLabel.FAVOR,
    "for": StanceLabel.FAVOR,
    "pro": StanceLabel.FAVOR,
    "2": StanceLabel.AGAINST,
    "against": StanceLabel.AGAINST,
    "argument against": StanceLabel.AGAINST,
    "argument_against": StanceLabel.AGAINST,
    "con": StanceLabel.AGAINST,
}


def parse_argument_label(raw: Any) -> ArgumentLabel:
    """Normalize a corpus cell to an ArgumentLabel. Raises ValueError on
    anything outside the alias table."""
    if isinstance(raw, ArgumentLabel):
        return raw
    if isinstance(raw, bool):
        return ArgumentLabel.ARGUMENT if raw else ArgumentLabel.NOT_ARGUMENT
    key = str(raw).strip().lower()
    try:
        return _ARGUMENT_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown argument label {raw!r}") from None


def parse_stance_label(raw: Any) -> StanceLabel:
    if isinstance(raw, StanceLabel):
        return raw
    key = str(raw).strip().lower()
    try:
        return _STANCE_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown stance label {raw!r}") from None


# -- serialization ------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict[str, Any]:
    out: dict[str, Any] = {"id": instance.id, "text": instance.text}
    if instance.gold_topic is not None:
        out["topic"] = instance.gold_topic
    if instance.gold_argument is not None:
        out["argument"] = str(instance.gold_argument)
    if instance.gold_stance is not None:
        out["stance"] = instance.gold_stance.value
    if instance.meta:
        out["meta"] = dict(instance.meta)
    return out


def instance_from_dict(data: Mapping[str, Any]) -> Instance:
    argument = data.get("argument")
    stance = data.get("stance")
    return Instance(
        id=str(data["id"]),
        text=str(data["text"]),
        gold_topic=data.get("topic"),
        gold_argument=None if argument is None else parse_argument_label(argument),
        gold_stance=None if stance is None else parse_stance_label(stance),
        meta=dict(data.get("meta", {})),
    )
